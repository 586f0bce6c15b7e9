"""Linear SCMs over a latent DAG, observed through a linear mixing across environments.

In environment ``k`` the latents satisfy ``z = A_k z + Omega_k^{1/2} eps`` and the
observations are ``x = pinv(H) z``. ``B_k = Omega_k^{-1/2} (I - A_k)`` maps latents
back to noise, so ``eps = B_k H x``.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from .graph import Dag, random_dag

RANK_TOL = 1e-8
MAX_MODEL_RETRIES = 50
OMEGA_FLOOR = 1e-3


class ModelError(ValueError):
    pass


def paper_betas(d: int) -> np.ndarray:
    """Noise shapes ``0.2 i^2`` for ``i = 1..d``."""
    return 0.2 * np.arange(1, d + 1, dtype=float) ** 2


def gg_scale(beta: float) -> float:
    """Scale making the density ``exp(-|x/alpha|^beta)`` unit-variance."""
    return float(np.exp(0.5 * (gammaln(1.0 / beta) - gammaln(3.0 / beta))))


def analytic_psi(beta: float) -> float:
    """``P(|X| <= 1)`` for the unit-variance generalized Gaussian with shape ``beta``."""
    return float(gammainc(1.0 / beta, gg_scale(beta) ** (-beta)))


def sample_generalized_gaussian(beta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    if not beta > 0:
        raise ValueError(f"shape parameter must be positive, got {beta}")
    g = rng.gamma(1.0 / beta, 1.0, size=count)
    sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    return sign * gg_scale(beta) * g ** (1.0 / beta)


@dataclass(frozen=True, eq=False)
class LinearScm:
    g: Dag
    H: np.ndarray
    A: np.ndarray
    omega: np.ndarray
    betas: np.ndarray
    seed: Optional[int] = None
    # env k -> intervened node, for grouped single-node intervention models
    targets: Optional[tuple[int, ...]] = None
    validate: bool = field(default=True, repr=False)
    retries: int = field(default=0, repr=False)

    def __post_init__(self):
        for name in ("H", "A", "omega", "betas"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if self.validate:
            self.check()

    @property
    def d(self) -> int:
        return self.g.d

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def K(self) -> int:
        return self.A.shape[0]

    def check(self, tol: float = RANK_TOL) -> None:
        d = self.d
        if self.H.ndim != 2 or self.H.shape[0] != d or self.n < d:
            raise ModelError(f"H must be d x n with n >= d, got {self.H.shape}")
        if np.linalg.svd(self.H, compute_uv=False)[-1] <= tol:
            raise ModelError("H is not of full row rank")
        if self.A.ndim != 3 or self.A.shape[1:] != (d, d):
            raise ModelError(f"A must be K x d x d, got {self.A.shape}")
        if self.omega.shape != (self.K, d) or np.any(self.omega <= 0):
            raise ModelError("omega must be K x d and strictly positive")
        if self.betas.shape != (d,) or np.any(self.betas <= 0):
            raise ModelError("betas must be a positive length-d vector")
        if len(np.unique(self.betas)) != d:
            raise ModelError("betas must be pairwise distinct")
        adj = self.g.adjacency()
        for k in range(self.K):
            if not np.array_equal(self.A[k] != 0, adj):
                raise ModelError(f"A[{k}] sparsity does not match the graph")
        if self.targets is not None and len(self.targets) != self.K:
            raise ModelError("targets must name one node per environment")

    @property
    def G(self) -> np.ndarray:
        return np.linalg.pinv(self.H)

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "n": self.n,
            "K": self.K,
            "edges": self.g.to_dict()["edges"],
            "H": self.H.tolist(),
            "A": self.A.tolist(),
            "omega": self.omega.tolist(),
            "betas": self.betas.tolist(),
            "seed": self.seed,
        }
        if self.targets is not None:
            out["targets"] = list(self.targets)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> LinearScm:
        g = Dag(int(data["d"]), frozenset(tuple(e) for e in data["edges"]))
        targets = data.get("targets")
        return cls(
            g,
            np.array(data["H"]),
            np.array(data["A"]),
            np.array(data["omega"]),
            np.array(data["betas"]),
            seed=data.get("seed"),
            targets=tuple(targets) if targets is not None else None,
        )

    @classmethod
    def from_json(cls, text: str) -> LinearScm:
        return cls.from_dict(json.loads(text))


def noise_mat_b(model: LinearScm, k: int) -> np.ndarray:
    if not 0 <= k < model.K:
        raise IndexError(f"environment {k} out of range 0..{model.K - 1}")
    return (np.eye(model.d) - model.A[k]) / np.sqrt(model.omega[k])[:, None]


def all_noise_mats(model: LinearScm) -> np.ndarray:
    return np.stack([noise_mat_b(model, k) for k in range(model.K)])


def mixing_matrices(model: LinearScm) -> np.ndarray:
    """Exact ``M_k = B_k H``, shape ``K x d x n``."""
    return all_noise_mats(model) @ model.H


WEIGHT_SCHEMES = ("gaussian_b", "omega_sq")


def _random_weights(
    g: Dag, K: int, rng: np.random.Generator, scheme: str = "gaussian_b"
) -> tuple[np.ndarray, np.ndarray]:
    """Per-environment ``(A_k, omega_k)``.

    ``gaussian_b`` draws the nonzero entries of ``B_k`` as standard normals and
    reads off ``omega_i = B_ii^-2`` and ``A_ij = -B_ij / B_ii`` (a negative
    ``B_ii`` only flips the sign of a symmetric noise). ``omega_sq`` draws
    ``A_k`` entries as standard normals and ``omega`` as squared normals.
    """
    d = g.d
    adj = g.adjacency()
    if scheme == "gaussian_b":
        B = np.where(adj[None], rng.standard_normal((K, d, d)), 0.0)
        diag = rng.standard_normal((K, d))
        while np.any(np.abs(diag) < np.sqrt(OMEGA_FLOOR)):
            low = np.abs(diag) < np.sqrt(OMEGA_FLOOR)
            diag[low] = rng.standard_normal(int(low.sum()))
        A = -B / diag[:, :, None]
        A[adj[None] & (A == 0)] = 1.0
        return A, 1.0 / diag**2
    if scheme != "omega_sq":
        raise ValueError(f"unknown weight scheme {scheme!r}; expected one of {WEIGHT_SCHEMES}")
    A = np.where(adj[None], rng.standard_normal((K, d, d)), 0.0)
    # an exact zero on an edge would break the sparsity contract
    A[adj[None] & (A == 0)] = 1.0
    omega = rng.standard_normal((K, d)) ** 2
    low = omega < OMEGA_FLOOR
    while np.any(low):
        omega[low] = rng.standard_normal(int(low.sum())) ** 2
        low = omega < OMEGA_FLOOR
    return A, omega


def random_model(
    d: int,
    n: int,
    K: int,
    p: float,
    rng: np.random.Generator,
    *,
    seed: Optional[int] = None,
    tol: float = RANK_TOL,
    max_retries: int = MAX_MODEL_RETRIES,
    weights: str = "gaussian_b",
) -> LinearScm:
    """Random graph, Gaussian weights and unmixing, noise shapes ``0.2 i^2``.

    Draws failing the full-rank or node-level non-degeneracy checks are redrawn,
    at most ``max_retries`` times.
    """
    if d < 1 or n < d or K < d:
        raise ModelError(f"need d >= 1, n >= d and K >= d; got d={d}, n={n}, K={K}")
    g = random_dag(d, p, rng)
    for attempt in range(max_retries + 1):
        A, omega = _random_weights(g, K, rng, weights)
        H = rng.standard_normal((d, n))
        if np.linalg.svd(H, compute_uv=False)[-1] <= tol:
            continue
        model = LinearScm(g, H, A, omega, paper_betas(d), seed=seed, retries=attempt)
        if check_nondegeneracy(model, tol)[0].all():
            return model
    raise ModelError(f"no non-degenerate model after {max_retries} retries (d={d}, K={K})")


def random_intervention_model(
    d: int,
    n: int,
    p: float,
    rng: np.random.Generator,
    *,
    per_node: Optional[int] = None,
    seed: Optional[int] = None,
    tol: float = RANK_TOL,
    max_retries: int = MAX_MODEL_RETRIES,
    weights: str = "gaussian_b",
) -> LinearScm:
    """Grouped single-node soft interventions: ``per_node`` environments per node.

    Environments in group ``i`` share every mechanism with a base draw except
    node ``i``, whose incoming weights and noise scale are redrawn.
    """
    per_node = d if per_node is None else per_node
    if per_node < 1:
        raise ModelError("per_node must be positive")
    g = random_dag(d, p, rng)
    adj = g.adjacency()
    targets = tuple(i for i in g.nodes for _ in range(per_node))
    for _ in range(max_retries + 1):
        base_A, base_omega = _random_weights(g, 1, rng, weights)
        fresh_A, fresh_omega = _random_weights(g, len(targets), rng, weights)
        A = np.repeat(base_A, len(targets), axis=0)
        omega = np.repeat(base_omega, len(targets), axis=0)
        for k, i in enumerate(targets):
            A[k, i - 1] = np.where(adj[i - 1], fresh_A[k, i - 1], 0.0)
            omega[k, i - 1] = fresh_omega[k, i - 1]
        H = rng.standard_normal((d, n))
        if np.linalg.svd(H, compute_uv=False)[-1] <= tol:
            continue
        model = LinearScm(g, H, A, omega, paper_betas(d), seed=seed, targets=targets)
        if check_nondegeneracy(model, tol)[0].all():
            return model
    raise ModelError(f"no non-degenerate intervention model after {max_retries} retries")


def sample_latents(model: LinearScm, k: int, eps: np.ndarray) -> np.ndarray:
    """Forward substitution of ``z = A_k z + Omega_k^{1/2} eps`` in topological order."""
    z = np.sqrt(model.omega[k])[None, :] * eps
    A = model.A[k]
    for i in model.g.topological_order:
        pa = [j - 1 for j in model.g.parents(i)]
        if pa:
            z[:, i - 1] += z[:, pa] @ A[i - 1, pa]
    return z


def sample_noise(model: LinearScm, N: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([sample_generalized_gaussian(b, N, rng) for b in model.betas])


def sample_environment(
    model: LinearScm, k: int, N: int, rng: np.random.Generator, *, return_noise: bool = False
):
    if not 0 <= k < model.K:
        raise IndexError(f"environment {k} out of range 0..{model.K - 1}")
    if N < 1:
        raise ValueError("sample size must be positive")
    eps = sample_noise(model, N, rng)
    x = sample_latents(model, k, eps) @ model.G.T
    return (x, eps) if return_noise else x


def environment_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(k)])


def _nondegeneracy_margins(bs: np.ndarray, g: Dag) -> np.ndarray:
    margins = np.empty(g.d)
    for i in g.nodes:
        cols = sorted(g.parents(i) | {i})
        rows = bs[:, i - 1, [c - 1 for c in cols]]
        sv = np.linalg.svd(rows, compute_uv=False)
        margins[i - 1] = sv[len(cols) - 1] if len(sv) >= len(cols) else 0.0
    return margins


def nondegeneracy_of(bs: np.ndarray, g: Dag, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Node-level non-degeneracy of an arbitrary family ``bs`` (``K x d x d``)."""
    margins = _nondegeneracy_margins(np.asarray(bs, dtype=float), g)
    return margins > tol, margins


def check_nondegeneracy(model: LinearScm, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Per node: do the rows ``(B_k)_i`` on the closed parent set span ``|pa(i)| + 1`` dims?"""
    return nondegeneracy_of(all_noise_mats(model), model.g, tol)


def check_affine_nondegeneracy(model: LinearScm, tol: float = RANK_TOL) -> np.ndarray:
    """Per node: do the parent weight vectors affinely span ``R^{|pa(i)|}``?"""
    ok = np.ones(model.d, dtype=bool)
    for i in model.g.nodes:
        pa = [j - 1 for j in sorted(model.g.parents(i))]
        if not pa:
            continue
        w = model.A[:, i - 1, pa]
        w = w - w.mean(axis=0)
        sv = np.linalg.svd(w, compute_uv=False)
        ok[i - 1] = len(sv) >= len(pa) and sv[len(pa) - 1] > tol
    return ok


@dataclass
class EnvDataset:
    blocks: list[np.ndarray]
    manifest: dict

    @property
    def K(self) -> int:
        return len(self.blocks)

    def save(self, directory: str | os.PathLike) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for k, x in enumerate(self.blocks):
            header = ",".join(f"x{j + 1}" for j in range(x.shape[1]))
            np.savetxt(out / f"env_{k}.csv", x, delimiter=",", header=header, comments="", fmt="%.17g")
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        return out

    @classmethod
    def load(cls, directory: str | os.PathLike) -> EnvDataset:
        src = Path(directory)
        manifest = json.loads((src / "manifest.json").read_text())
        blocks = [
            np.loadtxt(src / f"env_{k}.csv", delimiter=",", skiprows=1, ndmin=2)
            for k in range(int(manifest["K"]))
        ]
        return cls(blocks, manifest)


def generate_dataset(model: LinearScm, N: int, seed: int) -> EnvDataset:
    """All ``K`` environments; env ``k`` uses the sub-stream ``(seed, k)``."""
    blocks = [sample_environment(model, k, N, environment_rng(seed, k)) for k in range(model.K)]
    manifest = {
        "seed": int(seed),
        "N": int(N),
        "K": model.K,
        "n": model.n,
        "model_hash": model.hash(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return EnvDataset(blocks, manifest)
