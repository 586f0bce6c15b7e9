"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 failed trials or checks, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ambiguity, harness
from .ica import estimate_mixing
from .metrics import evaluate
from .recovery import RecoveredModel, RecoveryOptions, learn_causal_model
from .scm import EnvDataset, LinearScm, generate_dataset, random_intervention_model, random_model

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str):
    vals = [float(x) for x in text.split(",") if x]
    return vals[0] if len(vals) == 1 else tuple(vals)


def _ints(text: str):
    return tuple(int(float(x)) for x in text.split(",") if x)


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        print(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with BenchmarkConfig fields; flags override it")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--N", dest="N_list", type=_ints, help="comma-separated ascending sample sizes")
    p.add_argument("--tl", type=_floats, help="threshold or comma-separated grid")
    p.add_argument("--num-graphs", type=int)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--mode", choices=harness.MODES)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--trial-timeout", type=float)
    p.add_argument("--weights")
    p.add_argument("--alignment", choices=("psi", "ks"))
    p.add_argument("--labels", choices=harness.LABEL_RULES)
    p.add_argument("--raw-rows", action="store_true", help="skip unit-norm scaling of M_k rows")
    p.add_argument("--record-time", action="store_true", help="fill the seconds column")


_CONFIG_FIELDS = ("d", "n", "K", "p", "N_list", "tl", "num_graphs", "master_seed", "mode",
                  "output_dir", "workers", "trial_timeout", "weights", "alignment", "labels")


def build_config(args: argparse.Namespace, **forced) -> harness.BenchmarkConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.raw_rows:
        data["normalize_rows"] = False
    if args.record_time:
        data["record_time"] = True
    data.update(forced)
    try:
        return harness.BenchmarkConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.interventions:
        model = random_intervention_model(args.d, args.n or args.d, args.p, rng, seed=args.seed,
                                          weights=args.weights)
    else:
        model = random_model(args.d, args.n or args.d, args.K or args.d, args.p, rng, seed=args.seed,
                             weights=args.weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(model.to_json())
    if args.N:
        generate_dataset(model, args.N, args.seed).save(out / "data")
    print(f"wrote {out / 'model.json'}" + (f" and {args.N} samples per environment" if args.N else ""))
    return EXIT_OK


def cmd_recover(args) -> int:
    data = EnvDataset.load(args.data)
    est_M = estimate_mixing(data.blocks, args.d, seed=args.seed, strategy=args.alignment,
                            split_threshold=args.split_threshold)
    opts = RecoveryOptions(tl=args.tl, normalize_rows=not args.raw_rows)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = learn_causal_model(est_M, opts)
    out = rec.to_dict()
    out["mixing"] = est_M.to_dict()
    _write(args.out, json.dumps(out))
    print(f"edges: {sorted(rec.g_hat.edges)}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = LinearScm.from_json(Path(args.model).read_text())
    data = json.loads(Path(args.estimate).read_text())
    rec = RecoveredModel.from_dict(data)
    est_M = None
    labels = None
    if "mixing" in data:
        from .ica import MixingEstimate
        est_M = MixingEstimate.from_dict(data["mixing"])
        labels = harness.matched_labels(model, est_M)
    opts = RecoveryOptions(tl=data.get("diagnostics", {}).get("tl"))
    report = evaluate(model, rec, est_M=est_M, labels=labels, opts=opts)
    _write(args.out, report.to_json())
    return EXIT_OK


def _report(results, config) -> int:
    summary = harness.summarize(results)
    print(json.dumps(summary))
    return EXIT_OK if summary["failed"] == 0 else EXIT_FAILED


def cmd_oracle(args) -> int:
    config = build_config(args, mode="population")
    results = harness.run_benchmark(config)
    if args.output_dir:
        harness.emit_report(results, config)
    code = _report(results, config)
    summary = harness.summarize(results)
    return code if summary["recovered"] == summary["trials"] else EXIT_FAILED


def cmd_benchmark(args) -> int:
    config = build_config(args)
    results = harness.run_benchmark(config)
    out = harness.emit_report(results, config)
    print(f"wrote {out}", file=sys.stderr)
    return _report(results, config)


def cmd_min_samples(args) -> int:
    config = build_config(args)
    model = harness.trial_model(config, args.trial)
    n = harness.minimal_sample_size(config, model, args.step, trial_index=args.trial)
    print(json.dumps({"trial": args.trial, "graph_id": model.hash()[:12], "minimal_N": n}))
    return EXIT_OK


def cmd_ambiguity(args) -> int:
    if args.model:
        model = LinearScm.from_json(Path(args.model).read_text())
    else:
        rng = np.random.default_rng([args.seed, 0])
        model = random_intervention_model(args.d, args.d, args.p, rng, seed=args.seed)
    _, report = ambiguity.demonstrate(model, np.random.default_rng([args.seed, 1]), scale=args.scale)
    print(report.summary(), file=sys.stderr)
    print(json.dumps({"checks": report.checks}))
    return EXIT_OK if report.passed else EXIT_FAILED


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lingcrel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="draw a random model and optionally sample data")
    g.add_argument("--d", type=int, default=5)
    g.add_argument("--n", type=int)
    g.add_argument("--K", type=int)
    g.add_argument("--p", type=float, default=0.5)
    g.add_argument("--N", type=int, help="samples per environment (omit for model only)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--weights", default="gaussian_b")
    g.add_argument("--interventions", action="store_true", help="grouped single-node interventions")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("recover", help="ICA plus graph recovery on a saved dataset")
    r.add_argument("--data", required=True)
    r.add_argument("--d", type=int, required=True)
    r.add_argument("--tl", type=float)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--alignment", choices=("psi", "ks"), default="psi")
    r.add_argument("--split-threshold", type=float, default=0.02)
    r.add_argument("--raw-rows", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_recover)

    e = sub.add_parser("evaluate", help="score a recovered model against the truth")
    e.add_argument("--model", required=True)
    e.add_argument("--estimate", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    for name, func, help_ in (("oracle", cmd_oracle, "population-mode recovery on exact M_k"),
                              ("benchmark", cmd_benchmark, "seeded multi-graph experiment")):
        b = sub.add_parser(name, help=help_)
        _config_args(b)
        b.set_defaults(func=func)

    m = sub.add_parser("min-samples", help="smallest N (multiple of step) that recovers one trial's graph")
    _config_args(m)
    m.add_argument("--trial", type=int, default=0)
    m.add_argument("--step", type=int, default=500)
    m.set_defaults(func=cmd_min_samples)

    a = sub.add_parser("ambiguity", help="build and verify an indistinguishable alternative model")
    a.add_argument("--model")
    a.add_argument("--d", type=int, default=5)
    a.add_argument("--p", type=float, default=0.5)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--scale", type=float, default=0.5)
    a.set_defaults(func=cmd_ambiguity)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lingcrel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"lingcrel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"lingcrel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
