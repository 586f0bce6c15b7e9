"""Evaluation of a recovered model against the ground truth."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .graph import Dag
from .ica import MixingEstimate
from .recovery import (
    RecoveredModel,
    RecoveryOptions,
    _as_matrices,
    normalize_rows,
    orthogonal_projections,
)
from .scm import LinearScm, mixing_matrices


@dataclass
class ErrorReport:
    graph_recovered: bool
    perm: np.ndarray
    eda_errors: np.ndarray
    true_errors: np.ndarray
    signal_min: float = float("nan")
    noise_max: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "recovered": bool(self.graph_recovered),
            "eda": [float(x) for x in self.eda_errors],
            "true": [float(x) for x in self.true_errors],
            "signal_min": _finite_or_none(self.signal_min),
            "noise_max": _finite_or_none(self.noise_max),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def _unit_rows(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"zero row(s) {np.flatnonzero(norms == 0).tolist()} in unmixing matrix")
    return H / norms[:, None]


def residual_matrix(H: np.ndarray, H_hat: np.ndarray, g: Dag) -> np.ndarray:
    """``C[i, r]``: relative residual of estimate row ``r`` off ``span{h_j : j in dom_bar(i)}``."""
    H_hat = _unit_rows(H_hat)
    d = g.d
    C = np.empty((d, H_hat.shape[0]))
    for i in g.nodes:
        basis, _ = np.linalg.qr(H[[j - 1 for j in sorted(g.dom_bar(i))]].T)
        R = H_hat - (H_hat @ basis) @ basis.T
        C[i - 1] = np.linalg.norm(R, axis=1)
    return C


def _perfect_matching(feasible: np.ndarray) -> Optional[np.ndarray]:
    match = maximum_bipartite_matching(csr_matrix(feasible.astype(np.int8)), perm_type="column")
    return None if np.any(match < 0) else match


def bottleneck_assignment(C: np.ndarray) -> np.ndarray:
    """Assignment ``perm`` (row ``i`` -> column ``perm[i]``) minimising ``max_i C[i, perm[i]]``.

    Binary search over the sorted distinct costs with a bipartite matching
    feasibility test; among bottleneck-optimal assignments the total cost is
    minimised.
    """
    values = np.unique(C)
    lo, hi = 0, len(values) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching(C <= values[mid]) is not None:
            hi = mid
        else:
            lo = mid + 1
    bound = values[lo]
    big = C.max() * C.size + 1.0
    rows, cols = linear_sum_assignment(np.where(C <= bound, C, big))
    perm = np.empty(C.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def exhaustive_signed_assignment(H: np.ndarray, H_hat: np.ndarray, g: Dag) -> tuple[float, np.ndarray]:
    """Brute force over every signed permutation; returns the optimal ``||Delta||_inf``."""
    d = g.d
    H_hat = _unit_rows(H_hat)
    bases = []
    for i in g.nodes:
        q, _ = np.linalg.qr(H[[j - 1 for j in sorted(g.dom_bar(i))]].T)
        bases.append(q)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1.0, -1.0), repeat=d):
            P = np.zeros((d, d))
            P[np.arange(d), perm] = signs
            Hh = P @ H_hat
            worst = max(np.linalg.norm(Hh[i] - bases[i] @ (bases[i].T @ Hh[i])) for i in range(d))
            if worst < best:
                best, best_perm = worst, np.array(perm)
    return best, best_perm


def eda_error(truth: LinearScm, est: RecoveredModel) -> tuple[np.ndarray, np.ndarray]:
    """Residual of each matched estimate row off the span of its closed dom set.

    Returns ``(perm, Delta)`` where truth node ``i`` is matched to estimate row
    ``perm[i-1]`` (0-based).
    """
    H_hat = est.H_hat if isinstance(est, RecoveredModel) else np.asarray(est)
    if H_hat.shape != truth.H.shape:
        raise ValueError(f"shape mismatch: {H_hat.shape} vs {truth.H.shape}")
    C = residual_matrix(truth.H, H_hat, truth.g)
    perm = bottleneck_assignment(C)
    return perm, C[np.arange(truth.d), perm]


def true_error(truth: LinearScm, est: RecoveredModel, perm: np.ndarray) -> np.ndarray:
    H_hat = est.H_hat if isinstance(est, RecoveredModel) else np.asarray(est)
    H = _unit_rows(truth.H)
    Hh = _unit_rows(H_hat)[np.asarray(perm)]
    proj = np.sum(H * Hh, axis=1)[:, None] * H
    return np.linalg.norm(Hh - proj, axis=1)


def graph_match(truth_g: Dag, est_g: Dag) -> bool:
    if truth_g.d != est_g.d:
        raise ValueError("graphs have different node counts")
    return truth_g.edges == est_g.edges


def signal_noise_diagnostics(
    truth: LinearScm,
    est_M,
    opts: RecoveryOptions = RecoveryOptions(),
    *,
    order: Optional[tuple[int, ...]] = None,
) -> tuple[float, float]:
    """Smallest rank-deciding singular value on exact ``M_k`` and largest spurious one on estimates.

    Replays the parent-identification prefixes along ``order`` (defaults to the
    truth's topological order) using the true ranks ``|pa_bar(i) - prefix|``.
    ``est_M`` must already be expressed in the truth's node labels.
    """
    exact = mixing_matrices(truth)
    noisy = _as_matrices(est_M)
    if opts.normalize_rows:
        exact, noisy = normalize_rows(exact), normalize_rows(noisy)
    g = truth.g
    order = tuple(order) if order is not None else g.topological_order
    signal, noise = np.inf, 0.0
    for pos, i in enumerate(order):
        S = list(order[:pos])
        pa_bar = g.parents(i) | {i}
        for m in range(len(S) + 1):
            r = len(pa_bar - set(S[:m]))
            sv_exact = np.linalg.svd(orthogonal_projections(S[:m], i, exact), compute_uv=False)
            sv_noisy = np.linalg.svd(orthogonal_projections(S[:m], i, noisy), compute_uv=False)
            if r >= 1:
                signal = min(signal, sv_exact[r - 1])
            if r < len(sv_noisy):
                noise = max(noise, sv_noisy[r])
    return float(signal), float(noise)


def evaluate(
    truth: LinearScm,
    est: RecoveredModel,
    *,
    est_M=None,
    labels: Optional[np.ndarray] = None,
    opts: RecoveryOptions = RecoveryOptions(),
) -> ErrorReport:
    """Full report. ``labels[r]`` is the truth node that estimate row/node ``r+1`` stands for."""
    d = truth.d
    labels = np.arange(1, d + 1) if labels is None else np.asarray(labels)
    inv = np.argsort(labels)
    g_est = est.g_hat.relabel(labels.tolist())
    H_hat = est.H_hat[inv]
    perm, eda = eda_error(truth, H_hat)
    tru = true_error(truth, H_hat, perm)
    signal, noise = float("nan"), float("nan")
    if est_M is not None:
        M = _as_matrices(est_M)[:, inv, :]
        signal, noise = signal_noise_diagnostics(truth, M, opts)
    return ErrorReport(graph_match(truth.g, g_est), perm, eda, tru, signal, noise)
