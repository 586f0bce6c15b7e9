import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import erf

from lingcrel.graph import Dag
from lingcrel.scm import (
    EnvDataset,
    LinearScm,
    ModelError,
    all_noise_mats,
    analytic_psi,
    check_affine_nondegeneracy,
    check_nondegeneracy,
    environment_rng,
    generate_dataset,
    gg_scale,
    mixing_matrices,
    noise_mat_b,
    paper_betas,
    random_intervention_model,
    random_model,
    sample_environment,
    sample_generalized_gaussian,
    sample_latents,
)

seeds = st.integers(0, 2**32 - 1)


def _model(g, A, omega, H=None, betas=None, **kw):
    d = g.d
    A = np.asarray(A, dtype=float)
    H = np.eye(d) if H is None else H
    betas = paper_betas(d) if betas is None else betas
    return LinearScm(g, H, A, omega, betas, **kw)


# B_k


def test_b_identity():
    m = _model(Dag(2), np.zeros((1, 2, 2)), np.ones((1, 2)))
    assert np.array_equal(noise_mat_b(m, 0), np.eye(2))


def test_b_chain_by_hand():
    A = np.zeros((1, 2, 2))
    A[0, 1, 0] = 0.5
    m = _model(Dag(2, {(1, 2)}), A, [[1.0, 4.0]])
    assert np.allclose(noise_mat_b(m, 0), [[1.0, 0.0], [-0.25, 0.5]])


@given(seeds)
def test_b_inverse_identity(seed):
    m = random_model(4, 4, 4, 0.6, np.random.default_rng(seed))
    for k in range(m.K):
        lhs = noise_mat_b(m, k) @ np.linalg.inv(np.eye(4) - m.A[k]) @ np.diag(np.sqrt(m.omega[k]))
        assert np.allclose(lhs, np.eye(4), atol=1e-10)
        B = noise_mat_b(m, k)
        assert np.allclose(np.diag(B), m.omega[k] ** -0.5)


def test_b_index_bounds():
    m = random_model(3, 3, 3, 0.5, np.random.default_rng(0))
    with pytest.raises(IndexError):
        noise_mat_b(m, 3)


# generalized Gaussian noise


def test_gg_scale_gaussian():
    # gennorm with beta = 2 has variance scale^2 / 2
    assert gg_scale(2.0) == pytest.approx(np.sqrt(2.0))


def test_gg_beta_two_is_standard_normal():
    x = sample_generalized_gaussian(2.0, 100_000, np.random.default_rng(1))
    assert stats.kstest(x, "norm").statistic < 0.01


@pytest.mark.parametrize("beta", [0.2, 0.8, 1.8, 3.2, 5.0])
def test_gg_ks_against_analytic_cdf(beta):
    x = sample_generalized_gaussian(beta, 100_000, np.random.default_rng([2, int(beta * 10)]))
    cdf = stats.gennorm(beta, scale=gg_scale(beta)).cdf
    assert stats.kstest(x, cdf).statistic < 0.01


def test_gg_heavy_tail_variance():
    x = sample_generalized_gaussian(0.2, 1_000_000, np.random.default_rng(3))
    # the fourth moment at beta = 0.2 is huge, so the band is wide
    assert 0.9 <= x.var() <= 1.1


@pytest.mark.parametrize("beta", [0.2, 0.8, 1.8, 3.2, 5.0])
def test_gg_mean_is_zero(beta):
    x = sample_generalized_gaussian(beta, 1_000_000, np.random.default_rng(4))
    assert abs(x.mean()) < 5 * x.std() / np.sqrt(x.size)


def test_gg_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        sample_generalized_gaussian(0.0, 10, np.random.default_rng(0))


def test_analytic_psi_gaussian():
    assert analytic_psi(2.0) == pytest.approx(erf(1 / np.sqrt(2)), abs=1e-12)


@pytest.mark.parametrize("beta", [0.2, 0.8, 1.8, 3.2, 5.0, 7.2])
def test_analytic_psi_matches_scipy(beta):
    ref = stats.gennorm(beta, scale=gg_scale(beta))
    assert analytic_psi(beta) == pytest.approx(ref.cdf(1) - ref.cdf(-1), abs=1e-12)


# model generation


def test_trivial_model():
    m = random_model(1, 1, 1, 0.5, np.random.default_rng(0))
    assert not m.g.edges and m.H.shape == (1, 1) and m.H[0, 0] != 0


def test_random_model_retries_are_rare():
    retries = [random_model(5, 5, 5, 0.5, np.random.default_rng([5, s])).retries for s in range(100)]
    assert max(retries) <= 5


@given(seeds, st.integers(1, 6), st.sampled_from(["gaussian_b", "omega_sq"]))
def test_random_model_invariants(seed, d, weights):
    m = random_model(d, d + 1, d, 0.5, np.random.default_rng(seed), weights=weights)
    adj = m.g.adjacency()
    for k in range(m.K):
        assert np.array_equal(m.A[k] != 0, adj)
        assert np.all(np.diag(m.A[k]) == 0)
    assert np.all(m.omega > 0)
    assert np.allclose(m.betas, 0.2 * np.arange(1, d + 1) ** 2)
    assert np.linalg.matrix_rank(m.H) == d
    assert check_nondegeneracy(m)[0].all()


def test_random_model_rejects_small_K():
    with pytest.raises(ModelError):
        random_model(4, 4, 3, 0.5, np.random.default_rng(0))


def test_model_validation():
    g = Dag(2, {(1, 2)})
    with pytest.raises(ModelError):
        _model(g, np.zeros((1, 2, 2)), np.ones((1, 2)))  # missing edge weight
    A = np.zeros((1, 2, 2))
    A[0, 1, 0] = 1.0
    with pytest.raises(ModelError):
        _model(g, A, [[1.0, -1.0]])
    with pytest.raises(ModelError):
        _model(g, A, [[1.0, 1.0]], betas=[1.0, 1.0])
    with pytest.raises(ModelError):
        _model(g, A, [[1.0, 1.0]], H=np.ones((2, 2)))


def test_model_json_round_trip():
    m = random_intervention_model(3, 4, 0.7, np.random.default_rng(9))
    back = LinearScm.from_json(m.to_json())
    assert back.hash() == m.hash()
    assert back.targets == m.targets
    keys = set(json.loads(m.to_json()))
    assert {"d", "n", "K", "edges", "H", "A", "omega", "betas", "seed"} <= keys


def test_intervention_model_groups():
    m = random_intervention_model(4, 4, 0.8, np.random.default_rng(2))
    B = all_noise_mats(m)
    for a in range(m.K):
        for b in range(m.K):
            rows = {i + 1 for i in range(4) if not np.allclose(B[a, i], B[b, i])}
            allowed = {m.targets[a], m.targets[b]}
            assert rows <= allowed


# sampling


def test_identity_model_returns_noise():
    m = _model(Dag(3), np.zeros((1, 3, 3)), np.ones((1, 3)))
    x, eps = sample_environment(m, 0, 100, np.random.default_rng(0), return_noise=True)
    assert np.array_equal(x, eps)


@given(seeds)
def test_noise_recovered_from_observations(seed):
    m = random_model(4, 6, 4, 0.6, np.random.default_rng(seed))
    M = mixing_matrices(m)
    for k in range(m.K):
        x, eps = sample_environment(m, k, 50, environment_rng(seed, k), return_noise=True)
        assert np.allclose(x @ M[k].T, eps, atol=1e-10 * max(1.0, np.abs(eps).max()))


@given(seeds)
def test_forward_substitution_matches_dense_solve(seed):
    m = random_model(5, 5, 5, 0.6, np.random.default_rng(seed))
    eps = np.random.default_rng(seed + 1).standard_normal((20, 5))
    for k in range(m.K):
        z = sample_latents(m, k, eps)
        dense = np.linalg.solve(np.eye(5) - m.A[k], (np.sqrt(m.omega[k]) * eps).T).T
        assert np.allclose(z, dense, atol=1e-12 * max(1.0, np.abs(dense).max()))


def test_chain_latent_covariance():
    A = np.zeros((1, 2, 2))
    A[0, 1, 0] = 0.8
    omega = np.array([[1.5, 0.5]])
    m = _model(Dag(2, {(1, 2)}), A, omega)
    z = sample_latents(m, 0, np.column_stack([
        sample_generalized_gaussian(b, 100_000, np.random.default_rng([6, i])) for i, b in enumerate(m.betas)
    ]))
    inv = np.linalg.inv(np.eye(2) - A[0])
    expected = inv @ np.diag(omega[0]) @ inv.T
    emp = np.cov(z.T)
    assert np.linalg.norm(emp - expected) / np.linalg.norm(expected) < 0.03


# non-degeneracy


def test_single_environment_is_degenerate():
    A = np.zeros((1, 2, 2))
    A[0, 1, 0] = 1.0
    m = _model(Dag(2, {(1, 2)}), A, np.ones((1, 2)))
    ok, _ = check_nondegeneracy(m)
    assert ok.tolist() == [True, False]


def test_identical_environments_are_degenerate():
    A = np.zeros((3, 2, 2))
    A[:, 1, 0] = 0.4
    m = _model(Dag(2, {(1, 2)}), A, np.ones((3, 2)))
    assert not check_nondegeneracy(m)[0][1]
    assert not check_affine_nondegeneracy(m)[1]


def test_affine_counting_case():
    g = Dag(3, {(1, 3), (2, 3)})
    A = np.zeros((2, 3, 3))
    A[:, 2, :2] = [[0.3, -1.0], [1.2, 0.4]]
    m = _model(g, A, np.ones((2, 3)))
    ok = check_affine_nondegeneracy(m)
    assert ok[0] and ok[1]  # parentless nodes
    assert not ok[2]


@given(seeds, st.sampled_from(["gaussian_b", "omega_sq"]))
def test_affine_and_linear_checks_agree(seed, weights):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    K = int(rng.integers(1, d + 2))
    g = Dag(d, {(i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1) if rng.random() < 0.6})
    adj = g.adjacency()
    A = np.where(adj[None], rng.standard_normal((K, d, d)), 0.0)
    # half the draws make one node's weights identical across environments
    if rng.random() < 0.5:
        A[:, -1] = A[0, -1]
    m = _model(g, A, rng.uniform(0.5, 2.0, (K, d)), H=rng.standard_normal((d, d)))
    assert np.array_equal(check_nondegeneracy(m)[0], check_affine_nondegeneracy(m))


# datasets


def test_dataset_round_trip(tmp_path):
    m = random_model(3, 4, 3, 0.5, np.random.default_rng(0))
    ds = generate_dataset(m, 200, seed=11)
    ds.save(tmp_path)
    assert (tmp_path / "env_0.csv").read_text().splitlines()[0] == "x1,x2,x3,x4"
    back = EnvDataset.load(tmp_path)
    assert back.manifest["model_hash"] == m.hash()
    assert {"seed", "N", "K", "n", "model_hash", "created"} <= set(back.manifest)
    for a, b in zip(ds.blocks, back.blocks):
        assert np.array_equal(a, b)


def test_dataset_is_seed_deterministic():
    m = random_model(3, 3, 3, 0.5, np.random.default_rng(0))
    a, b = generate_dataset(m, 100, 5), generate_dataset(m, 100, 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.blocks, b.blocks))
