"""Per-environment linear ICA and cross-environment alignment of the recovered rows."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import ks_2samp

# E[log cosh(nu)] for a standard normal nu
_GAUSS_LOGCOSH = 0.3745672075

PSI_SPLIT = 0.02
PSI_SPREAD = 0.05


class IcaError(RuntimeError):
    pass


class ConvergenceError(IcaError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class AlignmentError(IcaError):
    pass


class PsiCollisionError(AlignmentError):
    pass


def _seed_list(seed) -> list[int]:
    if seed is None:
        return []
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def whiten(X: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centre and project onto the top ``d`` principal directions with unit variance.

    Returns ``(Z, K, mean)`` with ``Z = (X - mean) @ K.T`` and ``K`` of shape ``d x n``.
    """
    X = np.asarray(X, dtype=float)
    N, n = X.shape
    if d > n:
        raise IcaError(f"cannot extract {d} components from {n} channels")
    if N <= d:
        raise IcaError(f"need more samples than components (N={N}, d={d})")
    mean = X.mean(axis=0)
    Xc = X - mean
    # SVD rather than a covariance eigendecomposition: heavy-tailed sources can
    # spread the variances over ten orders of magnitude
    _, sv, vt = np.linalg.svd(Xc, full_matrices=False)
    sv, vt = sv[:d], vt[:d]
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise IcaError(f"data has rank below {d} (singular values {sv})")
    K = vt * (np.sqrt(N) / sv)[:, None]
    return Xc @ K.T, K, mean


def _sym_decorrelate(W: np.ndarray) -> np.ndarray:
    s, u = np.linalg.eigh(W @ W.T)
    return (u / np.sqrt(s)) @ u.T @ W


def _logcosh(y: np.ndarray) -> np.ndarray:
    return np.logaddexp(y, -y) - np.log(2.0)


def _contrast(Y: np.ndarray) -> float:
    return float(np.sum((_logcosh(Y).mean(axis=0) - _GAUSS_LOGCOSH) ** 2))


def _fixed_point(Z: np.ndarray, W: np.ndarray, max_iter: int, tol: float):
    N = Z.shape[0]
    W = _sym_decorrelate(W)
    for it in range(1, max_iter + 1):
        T = np.tanh(Z @ W.T)
        W_new = _sym_decorrelate(T.T @ Z / N - np.diag((1.0 - T**2).mean(axis=0)) @ W)
        cos = np.clip(np.abs(np.sum(W_new * W, axis=1)), 0.0, 1.0)
        W = W_new
        if np.max(np.arccos(cos)) < tol:
            return W, True, it, np.arccos(cos)
    return W, False, max_iter, np.arccos(cos)


def fast_ica(
    X: np.ndarray,
    d: Optional[int] = None,
    *,
    max_iter: int = 500,
    tol: float = 1e-6,
    n_restarts: int = 3,
    seed=None,
    strict: bool = False,
) -> np.ndarray:
    """Symmetric FastICA with the log-cosh contrast.

    Returns a ``d x n`` unmixing matrix whose rows, applied to the centred
    samples, give unit-variance components. Restart ``r`` is initialised from
    the stream ``(*seed, r)``; the converged restart with the largest
    negentropy contrast wins.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1] if d is None else d
    Z, K, _ = whiten(X, d)
    base = _seed_list(seed)
    best = None
    residuals = []
    for r in range(max(1, n_restarts)):
        rng = np.random.default_rng([*base, r]) if base else np.random.default_rng(r)
        W, converged, _, angles = _fixed_point(Z, rng.standard_normal((d, d)), max_iter, tol)
        score = _contrast(Z @ W.T)
        residuals.append(angles)
        key = (converged, score)
        if best is None or key > best[0]:
            best = (key, W)
    (converged, _), W_rot = best
    if not converged:
        msg = f"FastICA did not converge in {max_iter} iterations; row-angle residuals {residuals}"
        if strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    W = W_rot @ K
    S = (X - X.mean(axis=0)) @ W.T
    return W / S.std(axis=0)[:, None]


def amari_index(W_est: np.ndarray, W_true: np.ndarray) -> float:
    """Permutation- and scale-invariant distance between two unmixing matrices, in [0, 1]."""
    P = np.abs(np.asarray(W_est) @ np.linalg.pinv(np.asarray(W_true)))
    d = P.shape[0]
    if d == 1:
        return 0.0
    rows = (P.sum(axis=1) / P.max(axis=1) - 1.0).sum()
    cols = (P.sum(axis=0) / P.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * d * (d - 1)))


def psi_statistic(samples) -> float:
    """Fraction of entries with absolute value at most one."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("psi statistic of an empty sample")
    return float(np.mean(np.abs(s) <= 1.0))


@dataclass
class MixingEstimate:
    M: np.ndarray
    psi: np.ndarray
    perms: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def d(self) -> int:
        return self.M.shape[1]

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "psi": self.psi.tolist(), "perms": self.perms.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> MixingEstimate:
        return cls(np.array(data["M"], dtype=float), np.array(data["psi"], dtype=float),
                   np.array(data["perms"], dtype=int))

    @classmethod
    def exact(cls, M: np.ndarray) -> MixingEstimate:
        """Wrap known population matrices (no alignment needed)."""
        M = np.asarray(M, dtype=float)
        K, d = M.shape[:2]
        return cls(M, np.full((K, d), np.nan), np.tile(np.arange(d), (K, 1)))


def _components(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (X - X.mean(axis=0)) @ np.asarray(W).T


def align_environments(
    raw: Sequence[np.ndarray],
    datasets: Sequence[np.ndarray],
    *,
    split_threshold: float = PSI_SPLIT,
    spread_threshold: Optional[float] = None,
    strategy: str = "psi",
) -> MixingEstimate:
    """Reorder each environment's rows so that row ``r`` is the same noise component everywhere.

    ``strategy="psi"`` sorts rows by ascending psi. Collisions are judged on the
    psi values pooled over environments; per-position disagreement across
    environments above ``split_threshold`` is an alignment failure.
    ``strategy="ks"`` sorts environment 0 by psi and matches every other
    environment to it by min-cost assignment on the two-sample KS distance of
    the absolute components.
    """
    if len(raw) != len(datasets) or not raw:
        raise ValueError("need one unmixing matrix per dataset")
    d = raw[0].shape[0]
    if any(W.shape[0] != d for W in raw):
        raise ValueError("all unmixing matrices must have the same row count")
    comps = [_components(W, X) for W, X in zip(raw, datasets)]
    psi_raw = np.array([[psi_statistic(c[:, r]) for r in range(d)] for c in comps])

    if strategy == "psi":
        perms = np.array([np.argsort(p, kind="stable") for p in psi_raw])
    elif strategy == "ks":
        ref = np.argsort(psi_raw[0], kind="stable")
        ref_abs = [np.abs(comps[0][:, r]) for r in ref]
        perms = [ref]
        for c in comps[1:]:
            cost = np.array([[ks_2samp(a, np.abs(c[:, j])).statistic for j in range(d)] for a in ref_abs])
            _, cols = linear_sum_assignment(cost)
            perms.append(cols)
        perms = np.array(perms)
    else:
        raise ValueError(f"unknown alignment strategy {strategy!r}")

    psi = np.take_along_axis(psi_raw, perms, axis=1)
    M = np.stack([W[p] for W, p in zip(raw, perms)])
    pooled = psi.mean(axis=0)
    gaps = np.diff(np.sort(pooled))
    spread = psi.max(axis=0) - psi.min(axis=0)
    diagnostics = {"pooled_psi": pooled.tolist(), "psi_gaps": gaps.tolist(), "psi_spread": spread.tolist()}
    if strategy == "psi" and d > 1 and gaps.min() < split_threshold:
        r = int(np.argmin(gaps))
        raise PsiCollisionError(
            f"psi values at sorted positions {r} and {r + 1} differ by {gaps[r]:.4g} "
            f"< {split_threshold}; components are not distinguishable"
        )
    spread_threshold = PSI_SPREAD if spread_threshold is None else spread_threshold
    if strategy == "psi" and spread.max() > spread_threshold:
        r = int(np.argmax(spread))
        raise AlignmentError(
            f"psi at sorted position {r} disagrees across environments by {spread[r]:.4g} "
            f"> {spread_threshold}"
        )
    return MixingEstimate(M, psi, perms, diagnostics)


def estimate_mixing(
    blocks: Sequence[np.ndarray],
    d: int,
    *,
    seed=None,
    max_iter: int = 500,
    tol: float = 1e-6,
    n_restarts: int = 3,
    split_threshold: float = PSI_SPLIT,
    spread_threshold: Optional[float] = None,
    strategy: str = "psi",
) -> MixingEstimate:
    """ICA on every environment (restart streams ``(*seed, k, r)``) followed by alignment."""
    base = _seed_list(seed)
    raw = [
        fast_ica(X, d, max_iter=max_iter, tol=tol, n_restarts=n_restarts, seed=[*base, k])
        for k, X in enumerate(blocks)
    ]
    return align_environments(raw, blocks, split_threshold=split_threshold,
                              spread_threshold=spread_threshold, strategy=strategy)
