"""Graph and unmixing recovery from aligned per-environment matrices ``M_k = B_k H``.

Everything here consumes only row spans of the ``M_k``, so the results are
invariant to flipping or rescaling individual rows.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .graph import Dag
from .ica import MixingEstimate

POPULATION_TL = 1e-8
DESK_TL = 0.15
# c / sqrt(d) with c chosen so that d = 5 gives 0.15
TL_CONSTANT = DESK_TL * math.sqrt(5)
INTERSECTION_GAP = 1e-8


class RecoveryError(RuntimeError):
    pass


class RecoveryWarning(UserWarning):
    pass


def default_tl(d: int) -> float:
    return TL_CONSTANT / math.sqrt(d)


@dataclass(frozen=True)
class RecoveryOptions:
    tl: Optional[float] = None
    mode: str = "finite_sample"
    normalize_rows: bool = True
    intersection_gap: float = INTERSECTION_GAP

    def __post_init__(self):
        if self.mode not in ("population", "finite_sample"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tl is not None:
            if self.tl < 0:
                raise ValueError("tl must be non-negative")
            if self.tl == 0 and self.mode != "population":
                raise ValueError("tl = 0 is only valid in population mode")

    def threshold(self, d: int) -> float:
        if self.tl is not None:
            return self.tl
        return POPULATION_TL if self.mode == "population" else default_tl(d)


@dataclass
class RecoveredModel:
    g_hat: Dag
    H_hat: np.ndarray
    order: tuple[int, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "edges": [list(e) for e in sorted(self.g_hat.edges)],
            "H_hat": self.H_hat.tolist(),
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> RecoveredModel:
        H = np.array(data["H_hat"], dtype=float)
        g = Dag(H.shape[0], frozenset(tuple(e) for e in data["edges"]))
        diagnostics = data.get("diagnostics", {})
        return cls(g, H, tuple(diagnostics.get("order", ())), diagnostics)


def _as_matrices(M) -> np.ndarray:
    if isinstance(M, MixingEstimate):
        M = M.M
    return np.asarray(M, dtype=float)


def normalize_rows(M) -> np.ndarray:
    """Scale every row of every ``M_k`` to unit norm; spans are unchanged."""
    M = _as_matrices(M)
    return M / np.linalg.norm(M, axis=2, keepdims=True)


def _orth_basis(rows: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as columns) of the span of ``rows``, via pivoted QR."""
    if rows.shape[0] == 0:
        return np.zeros((rows.shape[1], 0))
    Q, R, _ = scipy.linalg.qr(rows.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > max(diag[0], 1e-300) * 1e-12)) if diag.size else 0
    return Q[:, :rank]


def orthogonal_projections(S: Sequence[int], i: int, M) -> np.ndarray:
    """Rows ``(M_k)_i`` projected onto the complement of ``span{(M_k)_s : s in S}``, per ``k``."""
    M = _as_matrices(M)
    if i in S:
        raise ValueError(f"node {i} is already in S")
    rows = [s - 1 for s in S]
    V = M[:, i - 1, :]
    if not rows:
        return V.copy()
    # batched QR over environments; pivoting only matters if the rows are dependent
    Q, R = np.linalg.qr(np.swapaxes(M[:, rows, :], 1, 2))
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    if np.all(diag > 1e-12 * np.maximum(diag.max(axis=1, keepdims=True), 1e-300)):
        return V - np.einsum("knm,km->kn", Q, np.einsum("knm,kn->km", Q, V))
    out = np.empty((M.shape[0], M.shape[2]))
    for k, Mk in enumerate(M):
        v = Mk[i - 1]
        Q = _orth_basis(Mk[rows])
        out[k] = v - Q @ (Q.T @ v)
    return out


def rank_of_span(vectors, tl: float) -> tuple[int, np.ndarray]:
    """Number of singular values ``>= tl`` of the stacked vectors, plus the spectrum."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        raise ValueError("rank of an empty vector list")
    sv = np.linalg.svd(V, compute_uv=False)
    return int(np.sum(sv >= tl)), sv


def identify_parents(
    S: Sequence[int],
    i: int,
    M,
    opts: RecoveryOptions = RecoveryOptions(),
    *,
    record: Optional[list] = None,
) -> frozenset[int]:
    """Parents of ``i`` among the ordered set ``S``: prefixes where the projected rank drops by one.

    ``record`` collects one entry per prefix with the rank and singular values.
    """
    M = _as_matrices(M)
    tl = opts.threshold(M.shape[1])
    parents = set()
    prev = None
    for m in range(len(S) + 1):
        r, sv = rank_of_span(orthogonal_projections(S[:m], i, M), tl)
        # row i never lies in the span of other rows of an invertible M_k
        r = max(r, 1)
        entry = {"node": i, "prefix_len": m, "rank": r, "singular_values": sv.tolist()}
        if prev is not None:
            if r == prev - 1:
                parents.add(S[m - 1])
            elif r != prev:
                entry["inconsistent"] = True
                msg = f"rank went from {prev} to {r} at prefix {m} for node {i}"
                if opts.mode == "population":
                    raise RecoveryError(msg)
                warnings.warn(msg, RecoveryWarning, stacklevel=2)
        if record is not None:
            record.append(entry)
        prev = r
    return frozenset(parents)


def _sv_ratio(sv: np.ndarray) -> float:
    if len(sv) < 2:
        return math.inf
    return sv[0] / max(sv[1], np.finfo(float).eps)


def select_next_node(
    S: Sequence[int],
    candidates: Sequence[int],
    M,
    opts: RecoveryOptions = RecoveryOptions(),
    *,
    record: Optional[list] = None,
) -> int:
    """Next node whose ancestors all lie in ``S``.

    Population mode takes the first candidate whose projected rows span one
    dimension. Finite-sample mode takes the largest ratio of the first two
    singular values, lowest label on ties.
    """
    M = _as_matrices(M)
    if not candidates:
        raise ValueError("no candidates left")
    tl = opts.threshold(M.shape[1])
    best, best_ratio = None, -1.0
    for i in sorted(candidates):
        r, sv = rank_of_span(orthogonal_projections(S, i, M), tl)
        ratio = _sv_ratio(sv)
        if record is not None:
            record.append({"node": i, "prefix_len": len(S), "ratio": ratio, "singular_values": sv.tolist()})
        if opts.mode == "population":
            if r == 1:
                return i
        elif ratio > best_ratio:
            best, best_ratio = i, ratio
    if best is None:
        raise RecoveryError(f"no candidate among {sorted(candidates)} has a rank-one projection")
    return best


def row_spans(M, ranks: Sequence[int]) -> list[np.ndarray]:
    """Orthonormal basis of ``span{(M_k)_i : k}`` truncated to ``ranks[i-1]`` dimensions."""
    M = _as_matrices(M)
    out = []
    for i, r in enumerate(ranks):
        _, _, vt = np.linalg.svd(M[:, i, :], full_matrices=False)
        out.append(vt[:r].T)
    return out


def intersect_subspaces(
    i: int,
    spans: Sequence[np.ndarray],
    g_hat: Dag,
    opts: RecoveryOptions = RecoveryOptions(),
    *,
    record: Optional[dict] = None,
) -> np.ndarray:
    """Unit vector closest to the intersection of ``E_i`` and ``E_j`` for every child ``j``.

    Smallest-eigenvalue eigenvector of ``sum_j Q_j^T Q_j`` with ``Q_j`` the
    projector onto the complement of ``E_j``. When several eigenvalues vanish the
    intersection has more than one dimension, which is the expected
    effect-domination ambiguity; the dimension is recorded, not rejected.
    """
    n = spans[0].shape[0]
    total = np.zeros((n, n))
    for j in sorted(g_hat.children(i) | {i}):
        U = spans[j - 1]
        Q = np.eye(n) - U @ U.T
        total += Q.T @ Q
    evals, evecs = np.linalg.eigh(total)
    h = evecs[:, 0]
    if record is not None:
        scale = max(1.0, float(evals[-1]))
        record["node"] = i
        record["eigenvalues"] = evals.tolist()
        record["intersection_dim"] = int(np.sum(evals <= opts.intersection_gap * scale))
    if opts.mode == "population" and evals[0] > 1e-8 * max(1.0, evals[-1]):
        raise RecoveryError(f"empty intersection for node {i} (smallest eigenvalue {evals[0]:.3g})")
    return h / np.linalg.norm(h)


def learn_causal_model(M, opts: RecoveryOptions = RecoveryOptions(), *, hook=None) -> RecoveredModel:
    """Grow an ordered ancestral set one node at a time, reading parents off rank drops.

    ``hook(S)`` is called after every iteration with the current ordered set.
    """
    M = _as_matrices(M)
    if opts.normalize_rows:
        M = normalize_rows(M)
    K, d, _ = M.shape
    S: list[int] = []
    edges: set[tuple[int, int]] = set()
    selections: list = []
    decisions: list = []
    parent_sets: dict[int, frozenset[int]] = {}
    while len(S) < d:
        candidates = [v for v in range(1, d + 1) if v not in S]
        i = select_next_node(S, candidates, M, opts, record=selections)
        pa = identify_parents(S, i, M, opts, record=decisions)
        parent_sets[i] = pa
        edges |= {(j, i) for j in pa}
        S.append(i)
        if hook is not None:
            hook(tuple(S))
    g_hat = Dag(d, frozenset(edges))
    spans = row_spans(M, [len(parent_sets[i]) + 1 for i in range(1, d + 1)])
    intersections = []
    H_hat = np.empty((d, M.shape[2]))
    for i in range(1, d + 1):
        rec: dict = {}
        H_hat[i - 1] = intersect_subspaces(i, spans, g_hat, opts, record=rec)
        intersections.append(rec)
    diagnostics = {
        "order": S,
        "tl": opts.threshold(d),
        "mode": opts.mode,
        "decisions": decisions,
        "selections": selections,
        "intersections": intersections,
    }
    return RecoveredModel(g_hat, H_hat, tuple(S), diagnostics)
