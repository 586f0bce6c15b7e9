"""Shared helpers: turn ``--field value`` pairs into dataclass overrides."""
import argparse
import dataclasses
import json
import typing


def parse_overrides(defaults):
    """Build a parser with one flag per dataclass field and return the updated instance.

    Values are read as JSON where possible, so ``--N_list [5000,20000]`` and
    ``--tl 0.1`` both work; anything else is kept as a string.
    """
    parser = argparse.ArgumentParser(description=(defaults.__doc__ or "").strip().splitlines()[0])
    for f in dataclasses.fields(defaults):
        parser.add_argument(f"--{f.name}", dest=f.name, default=None)
    args = vars(parser.parse_args())
    changes = {}
    for name, raw in args.items():
        if raw is None:
            continue
        try:
            changes[name] = json.loads(raw)
        except json.JSONDecodeError:
            changes[name] = raw
    for name, value in changes.items():
        if isinstance(value, list):
            changes[name] = tuple(value)
    return dataclasses.replace(defaults, **changes)
