"""Observationally indistinguishable alternatives built from effect-respecting transforms.

Given a true model and an invertible ``M`` that is nonzero only on the closed
dom sets, ``v = M z`` is the latent vector of another linear model with the same
graph whose environments produce exactly the same observations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import Dag, dom_pattern, pattern_membership
from .scm import LinearScm, RANK_TOL, all_noise_mats, nondegeneracy_of

MIN_SINGULAR = 1e-6
MAX_DRAWS = 100
OBS_TOL = 1e-10
# relative cutoff below which an entry of A_hat counts as zero
SPARSITY_TOL = 1e-9


class AmbiguityError(ValueError):
    pass


@dataclass
class HypotheticalModel:
    M: np.ndarray
    A_hat: np.ndarray
    omega_hat: np.ndarray
    H_hat: np.ndarray

    def noise_mats(self) -> np.ndarray:
        """``B_hat_k = Omega_hat_k^{-1/2} (I - A_hat_k)``."""
        d = self.M.shape[0]
        return (np.eye(d)[None] - self.A_hat) / np.sqrt(self.omega_hat)[:, :, None]

    def mixing_matrices(self) -> np.ndarray:
        return self.noise_mats() @ self.H_hat

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "A_hat": self.A_hat.tolist(),
            "omega_hat": self.omega_hat.tolist(),
            "H_hat": self.H_hat.tolist(),
        }


def random_effect_respecting(
    g: Dag, scale: float = 0.5, rng: Optional[np.random.Generator] = None, *, max_draws: int = MAX_DRAWS
) -> np.ndarray:
    """Identity plus ``N(0, scale^2)`` entries on every off-diagonal closed-dom position."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng() if rng is None else rng
    mask = dom_pattern(g).mask() & ~np.eye(g.d, dtype=bool)
    for _ in range(max_draws):
        M = np.eye(g.d)
        M[mask] = scale * rng.standard_normal(int(mask.sum()))
        if np.linalg.svd(M, compute_uv=False)[-1] > MIN_SINGULAR:
            return M
    raise AmbiguityError(f"no invertible effect-respecting matrix after {max_draws} draws")


def construct_hypothetical(truth: LinearScm, M: np.ndarray) -> HypotheticalModel:
    M = np.asarray(M, dtype=float)
    if not pattern_membership(M, truth.g, "dom0"):
        raise AmbiguityError("M is not an invertible matrix supported on the closed dom sets")
    diag = np.diag(M)
    if np.any(diag <= 0):
        raise AmbiguityError("M needs a positive diagonal so that A_hat keeps a zero diagonal")
    d = truth.d
    M_inv = np.linalg.inv(M)
    omega_hat = truth.omega * diag[None, :] ** 2
    scale = np.sqrt(omega_hat / truth.omega)
    A_hat = np.empty_like(truth.A)
    for k in range(truth.K):
        A_hat[k] = np.eye(d) - scale[k][:, None] * ((np.eye(d) - truth.A[k]) @ M_inv)
        # exact zeros on the diagonal; the computed values differ from 0 only by rounding
        np.fill_diagonal(A_hat[k], 0.0)
    return HypotheticalModel(M, A_hat, omega_hat, M @ truth.H)


def _differing_rows(bs: np.ndarray, tol: float) -> dict[tuple[int, int], frozenset[int]]:
    out = {}
    K = bs.shape[0]
    for a in range(K):
        for b in range(a + 1, K):
            gap = np.abs(bs[a] - bs[b]).max(axis=1)
            scale = max(1.0, np.abs(bs[a]).max(), np.abs(bs[b]).max())
            out[(a, b)] = frozenset(int(i) + 1 for i in np.flatnonzero(gap > tol * scale))
    return out


@dataclass
class IndistinguishabilityReport:
    checks: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v is not False for v in self.checks.values())

    def to_dict(self) -> dict:
        return {"checks": self.checks, "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def summary(self) -> str:
        lines = []
        for name, ok in self.checks.items():
            label = "n/a" if ok is None else ("pass" if ok else "FAIL")
            lines.append(f"{name:24s} {label}")
        return "\n".join(lines)


def verify_indistinguishable(
    truth: LinearScm, hypo: HypotheticalModel, tol: float = OBS_TOL
) -> IndistinguishabilityReport:
    """Four checks, each ``True``/``False``; the intervention check is ``None`` for
    models without recorded intervention targets."""
    B = all_noise_mats(truth)
    B_hat = hypo.noise_mats()
    if B_hat.shape != B.shape or hypo.H_hat.shape != truth.H.shape:
        raise AmbiguityError("hypothetical model dimensions do not match the truth")

    obs_gap = float(np.abs(B_hat @ hypo.H_hat - B @ truth.H).max())

    adj = truth.g.adjacency()
    cutoff = SPARSITY_TOL * max(1.0, float(np.abs(hypo.A_hat).max()))
    sparsity = all(np.array_equal(np.abs(a) > cutoff, adj) for a in hypo.A_hat)
    zero_diag = bool(np.all(np.einsum("kii->ki", hypo.A_hat) == 0))

    nondeg, margins = nondegeneracy_of(B_hat, truth.g, RANK_TOL)

    intervention = None
    if truth.targets is not None:
        intervention = _differing_rows(B, 1e-12) == _differing_rows(B_hat, 1e-9)

    checks = {
        "obs_invariance": obs_gap <= tol,
        "sparsity": bool(sparsity and zero_diag),
        "nondegeneracy": bool(nondeg.all()),
        "intervention_structure": intervention,
    }
    details = {"obs_gap": obs_gap, "nondegeneracy_margins": margins.tolist()}
    return IndistinguishabilityReport(checks, details)


def demonstrate(
    truth: LinearScm,
    rng: np.random.Generator,
    *,
    scale: float = 0.5,
    tol: float = OBS_TOL,
    resamples: int = 1,
) -> tuple[HypotheticalModel, IndistinguishabilityReport]:
    """Draw ``M``, build the alternative model and verify it.

    A sparsity failure is a measure-zero cancellation, so ``M`` is redrawn up to
    ``resamples`` times before the failure is reported.
    """
    for attempt in range(resamples + 1):
        hypo = construct_hypothetical(truth, random_effect_respecting(truth.g, scale, rng))
        report = verify_indistinguishable(truth, hypo, tol)
        report.details["resamples"] = attempt
        if report.checks["sparsity"]:
            break
    return hypo, report
