"""Seeded benchmark orchestration: model draw, sampling, ICA, recovery and scoring.

Every random quantity of trial ``t`` comes from a stream keyed on
``(master_seed, t, ...)``, so results do not depend on how trials are scheduled
across worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ica import PSI_SPLIT, MixingEstimate, estimate_mixing
from .metrics import ErrorReport, evaluate, graph_match
from .recovery import RecoveredModel, RecoveryOptions, learn_causal_model
from .scm import (
    WEIGHT_SCHEMES,
    LinearScm,
    analytic_psi,
    mixing_matrices,
    random_model,
    sample_environment,
)

MODES = ("population", "finite_sample")
LABEL_RULES = ("match", "psi")

# stream tags under (master_seed, trial)
_MODEL, _DATA, _ICA = 0, 1, 2


class TrialTimeout(RuntimeError):
    pass


@dataclass
class BenchmarkConfig:
    d: int = 5
    n: Optional[int] = None
    K: Optional[int] = None
    p: float = 0.5
    N_list: tuple[int, ...] = (20000,)
    tl: Union[float, tuple[float, ...], None] = 0.15
    num_graphs: int = 10
    master_seed: int = 0
    mode: str = "finite_sample"
    output_dir: str = "results"
    workers: int = 1
    trial_timeout: Optional[float] = None
    weights: str = "gaussian_b"
    normalize_rows: bool = True
    alignment: str = "psi"
    labels: str = "match"
    split_threshold: float = PSI_SPLIT
    spread_threshold: Optional[float] = None
    ica_restarts: int = 3
    ica_max_iter: int = 500
    record_time: bool = False

    def __post_init__(self):
        self.n = self.d if self.n is None else self.n
        self.K = self.d if self.K is None else self.K
        self.N_list = tuple(int(x) for x in np.atleast_1d(self.N_list))
        if isinstance(self.tl, (list, tuple)):
            self.tl = tuple(float(x) for x in self.tl)
        if self.d < 1 or self.n < self.d or self.K < self.d:
            raise ValueError(f"need d >= 1, n >= d, K >= d (d={self.d}, n={self.n}, K={self.K})")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.num_graphs < 1:
            raise ValueError("num_graphs must be at least 1")
        if not self.N_list or any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ValueError("N_list must be nonempty and strictly ascending")
        if self.N_list[0] <= self.d:
            raise ValueError("every sample size must exceed d")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.weights not in WEIGHT_SCHEMES:
            raise ValueError(f"weights must be one of {WEIGHT_SCHEMES}")
        if self.labels not in LABEL_RULES:
            raise ValueError(f"labels must be one of {LABEL_RULES}")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        for tl in self.tl_values:
            RecoveryOptions(tl=tl, mode=self.mode)

    @property
    def tl_values(self) -> tuple[Optional[float], ...]:
        return self.tl if isinstance(self.tl, tuple) else (self.tl,)

    def options(self, tl: Optional[float]) -> RecoveryOptions:
        if self.mode == "population":
            return RecoveryOptions(mode="population", normalize_rows=self.normalize_rows)
        return RecoveryOptions(tl=tl, mode=self.mode, normalize_rows=self.normalize_rows)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["N_list"] = list(self.N_list)
        if isinstance(self.tl, tuple):
            out["tl"] = list(self.tl)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> BenchmarkConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **kw) -> BenchmarkConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class TrialResult:
    trial: int
    N: int
    tl: Optional[float]
    graph_id: str
    status: str
    report: Optional[ErrorReport] = None
    recovered: Optional[RecoveredModel] = None
    seconds: float = 0.0
    error: Optional[str] = None
    model: Optional[LinearScm] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "N": self.N,
            "tl": self.tl,
            "graph_id": self.graph_id,
            "status": self.status,
            "error": self.error,
            "report": self.report.to_dict() if self.report else None,
            "estimate": self.recovered.to_dict() if self.recovered else None,
            "model": self.model.to_dict() if self.model else None,
        }


def trial_model(config: BenchmarkConfig, trial_index: int) -> LinearScm:
    rng = np.random.default_rng([config.master_seed, trial_index, _MODEL])
    return random_model(config.d, config.n, config.K, config.p, rng,
                        seed=config.master_seed, weights=config.weights)


def sample_blocks(config: BenchmarkConfig, model: LinearScm, trial_index: int, N: int) -> list[np.ndarray]:
    """Fresh samples for every ``N``; environment ``k`` has its own stream."""
    return [
        sample_environment(model, k, N, np.random.default_rng([config.master_seed, trial_index, _DATA, N, k]))
        for k in range(model.K)
    ]


def psi_labels(model: LinearScm) -> np.ndarray:
    """Truth node of each aligned row when rows are sorted by ascending population psi."""
    psi = [analytic_psi(b) for b in model.betas]
    return np.argsort(psi, kind="stable") + 1


def matched_labels(model: LinearScm, est: MixingEstimate) -> np.ndarray:
    """Truth node of each aligned row by maximal total ``|cos|`` to the exact ``M_k`` rows."""
    exact = mixing_matrices(model)
    unit = lambda a: a / np.linalg.norm(a, axis=2, keepdims=True)
    score = np.abs(np.einsum("kin,kjn->kij", unit(est.M), unit(exact))).sum(axis=0)
    rows, cols = linear_sum_assignment(-score)
    labels = np.empty(model.d, dtype=int)
    labels[rows] = cols + 1
    return labels


def _deadline_check(deadline: Optional[float]):
    def check(*_):
        if deadline is not None and time.monotonic() > deadline:
            raise TrialTimeout("trial exceeded its time budget")
    return check


def estimate_for(config: BenchmarkConfig, model: LinearScm, trial_index: int, N: int,
                 check=lambda *_: None) -> MixingEstimate:
    if config.mode == "population":
        return MixingEstimate.exact(mixing_matrices(model))
    blocks = sample_blocks(config, model, trial_index, N)
    check()
    return estimate_mixing(
        blocks, config.d, seed=[config.master_seed, trial_index, _ICA, N],
        max_iter=config.ica_max_iter, n_restarts=config.ica_restarts,
        split_threshold=config.split_threshold, spread_threshold=config.spread_threshold,
        strategy=config.alignment,
    )


def run_trial(config: BenchmarkConfig, trial_index: int) -> list[TrialResult]:
    """All ``(N, tl)`` settings for one random model; failures are recorded, not raised."""
    t0 = time.monotonic()
    deadline = None if config.trial_timeout is None else t0 + config.trial_timeout
    check = _deadline_check(deadline)
    out: list[TrialResult] = []
    try:
        model = trial_model(config, trial_index)
    except Exception as exc:  # noqa: BLE001 - a bad draw must not sink the batch
        return [TrialResult(trial_index, N, tl, "", "error", error=f"{type(exc).__name__}: {exc}")
                for N in config.N_list for tl in config.tl_values]
    graph_id = model.hash()[:12]
    for N in config.N_list:
        try:
            est_M = estimate_for(config, model, trial_index, N, check)
            if config.mode == "population":
                labels = np.arange(1, config.d + 1)
            elif config.labels == "psi":
                labels = psi_labels(model)
            else:
                labels = matched_labels(model, est_M)
        except Exception as exc:  # noqa: BLE001
            status = "timeout" if isinstance(exc, TrialTimeout) else "error"
            out += [TrialResult(trial_index, N, tl, graph_id, status, error=f"{type(exc).__name__}: {exc}",
                                model=model, seconds=time.monotonic() - t0) for tl in config.tl_values]
            continue
        for tl in config.tl_values:
            t1 = time.monotonic()
            opts = config.options(tl)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rec = learn_causal_model(est_M, opts, hook=check)
                report = evaluate(model, rec, est_M=est_M, labels=labels, opts=opts)
                out.append(TrialResult(trial_index, N, tl, graph_id, "ok", report, rec,
                                       time.monotonic() - t1, model=model))
            except Exception as exc:  # noqa: BLE001
                status = "timeout" if isinstance(exc, TrialTimeout) else "error"
                out.append(TrialResult(trial_index, N, tl, graph_id, status, error=f"{type(exc).__name__}: {exc}",
                                       seconds=time.monotonic() - t1, model=model))
    return out


def _run_one(args):
    return run_trial(*args)


def run_benchmark(config: BenchmarkConfig) -> list[TrialResult]:
    """Trials in parallel, merged in ``(trial, N, tl)`` order."""
    tasks = [(config, t) for t in range(config.num_graphs)]
    if config.workers == 1:
        batches = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_run_one, tasks))
    return [r for batch in batches for r in batch]


def minimal_sample_size(
    config: BenchmarkConfig, model: LinearScm, step: int = 500, *, trial_index: int = 0,
    tl: Optional[float] = None,
) -> Optional[int]:
    """Smallest multiple of ``step`` (up to ``max(N_list)``) at which the graph is recovered."""
    if step < 1:
        raise ValueError("step must be positive")
    tl = config.tl_values[0] if tl is None else tl
    opts = config.options(tl)
    if config.mode == "population":
        rec = learn_causal_model(mixing_matrices(model), opts)
        return step if graph_match(model.g, rec.g_hat) else None
    for N in range(step, config.N_list[-1] + 1, step):
        if N <= config.d:
            continue
        try:
            est_M = estimate_for(config, model, trial_index, N)
        except Exception:  # noqa: BLE001 - an unusable sample just means "not yet"
            continue
        labels = psi_labels(model) if config.labels == "psi" else matched_labels(model, est_M)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = learn_causal_model(est_M, opts)
        if graph_match(model.g, rec.g_hat.relabel(labels.tolist())):
            return N
    return None


def csv_header(d: int) -> list[str]:
    return (["trial", "graph_id", "status", "recovered"]
            + [f"eda_{i}" for i in range(1, d + 1)]
            + [f"true_{i}" for i in range(1, d + 1)]
            + ["signal_min", "noise_max", "seconds"])


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return repr(float(x))


def results_csv(results: Sequence[TrialResult], d: int, *, record_time: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(d))
    for r in results:
        if r.report is not None:
            rep = r.report
            cells = ([str(bool(rep.graph_recovered)).lower()]
                     + [_fmt(x) for x in rep.eda_errors] + [_fmt(x) for x in rep.true_errors]
                     + [_fmt(rep.signal_min), _fmt(rep.noise_max)])
        else:
            cells = [""] * (1 + 2 * d + 2)
        w.writerow([r.trial, r.graph_id, r.status, *cells, _fmt(r.seconds) if record_time else ""])
    return buf.getvalue()


def summarize(results: Sequence[TrialResult]) -> dict:
    ok = [r for r in results if r.ok]
    rec = [r for r in ok if r.report.graph_recovered]
    eda = [float(x) for r in rec for x in r.report.eda_errors]
    return {
        "trials": len(results),
        "ok": len(ok),
        "failed": len(results) - len(ok),
        "recovered": len(rec),
        "median_eda_recovered": float(np.median(eda)) if eda else None,
        "max_eda_recovered": float(np.max(eda)) if eda else None,
    }


def _setting_key(N: int, tl: Optional[float]) -> str:
    return f"N{N}_tl{'default' if tl is None else format(tl, 'g')}"


def emit_report(results: Sequence[TrialResult], config: BenchmarkConfig,
                output_dir: Optional[str] = None) -> Path:
    """Write ``results.csv``, ``summary.json`` and ``trials/*.json``.

    With a single ``(N, tl)`` setting everything goes directly into the output
    directory; with a grid each setting gets its own subdirectory and the top
    level holds a combined ``summary.json``.
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    settings = [(N, tl) for N in config.N_list for tl in config.tl_values]
    summary = {"config": config.to_dict(), "settings": {}}
    for N, tl in settings:
        subset = [r for r in results if r.N == N and r.tl == tl]
        target = out if len(settings) == 1 else out / _setting_key(N, tl)
        trials = target / "trials"
        trials.mkdir(parents=True, exist_ok=True)
        (target / "results.csv").write_text(results_csv(subset, config.d, record_time=config.record_time))
        for r in subset:
            (trials / f"trial_{r.trial:04d}.json").write_text(json.dumps(r.to_dict(), sort_keys=True))
        stats = summarize(subset)
        stats["seconds"] = float(sum(r.seconds for r in subset))
        stats["N"], stats["tl"] = N, tl
        summary["settings"][_setting_key(N, tl)] = stats
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return out
