import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from eigenmodel._kernels import class_label_scan, eigen_vector_scan
from eigenmodel.data import Sociomatrix, assign_folds, mask_fold
from eigenmodel.mcmc import (
    ChainData,
    ChainState,
    SamplerConfig,
    Trace,
    class_block_stats,
    init_chain,
    posterior_predictive_mean,
    prepare_data,
    run_chain,
    sample_beta,
    sample_thresholds,
    sample_z,
    sweep,
    update_u_class,
    update_u_distance,
    write_trace_csv,
)
from eigenmodel.models import (
    ClassState,
    DistanceState,
    EigenState,
    GlobalParams,
    PriorConfig,
    alpha_dyads,
    calibrate_prior_alpha_variance,
)
from eigenmodel.simulate import planted_partition, simulate, two_cluster_positions
from eigenmodel.stats import make_rng

HALF_NORMAL_MEAN = math.sqrt(2 / math.pi)


def _state(latent, thresholds=(0.0,), beta=(), n_dyads=None, prior=None, seed=0):
    n = alpha_dyads(latent).size if n_dyads is None else n_dyads
    g = GlobalParams(np.asarray(beta, float), thresholds)
    prior = (prior or PriorConfig()).resolved(50)
    return ChainState(np.zeros(n), g, latent, prior, make_rng(seed, "test"))


def _data(n, y, observed=None, X=None, n_levels=2):
    y = np.asarray(y, np.int64)
    observed = np.ones(y.size, bool) if observed is None else np.asarray(observed, bool)
    X = np.zeros((y.size, 0)) if X is None else X
    return ChainData(n, y, observed, X, n_levels, np.arange(n_levels))


def _zero_eigen(n, K=1):
    return EigenState(np.zeros((n, K)), np.zeros(K))


def _z_invariant(state, data):
    cuts = state.globals.cutpoints()
    o = data.observed
    z = state.Z[o]
    return np.all((cuts[data.y[o]] < z) & (z < cuts[data.y[o] + 1]))


# -- step 1 ----------------------------------------------------------------------

def test_sample_z_respects_levels():
    rng = np.random.default_rng(0)
    n = 12
    m = n * (n - 1) // 2
    data = _data(n, rng.integers(0, 2, m), rng.random(m) > 0.2)
    lat = EigenState(rng.standard_normal((n, 2)) * 3, [2.0, -2.0])
    state = _state(lat, thresholds=(0.4,))
    for _ in range(50):
        sample_z(state, data)
        assert np.all(state.Z[data.observed & (data.y == 1)] > 0.4)
        assert np.all(state.Z[data.observed & (data.y == 0)] < 0.4)
    # unobserved dyads are unconstrained draws around eta
    assert np.any(state.Z[~data.observed] > 0.4) or (~data.observed).sum() < 3


def test_sample_z_half_normal_mean():
    data = _data(2, [1])
    state = _state(_zero_eigen(2))
    z = np.array([sample_z(state, data)[0] for _ in range(10_000)])
    sd = math.sqrt(1 - 2 / math.pi)
    assert abs(z.mean() - HALF_NORMAL_MEAN) < 4 * sd / math.sqrt(z.size)


# -- step 2 ----------------------------------------------------------------------

def test_threshold_lands_between_extremes():
    data = _data(4, [0, 1, 0, 1, 1, 0])
    state = _state(_zero_eigen(4))
    state.Z = np.array([-1.0, 0.5, -0.2, 2.0, 0.1, -3.0])
    for _ in range(200):
        mu = sample_thresholds(state, data)
        assert -0.2 < mu[0] < 0.1


def test_thresholds_stay_ordered_with_empty_levels():
    rng = np.random.default_rng(1)
    n = 10
    m = n * (n - 1) // 2
    y = rng.choice([0, 1, 3], m)        # level 2 never occurs
    data = _data(n, y, n_levels=4)
    lat = EigenState(rng.standard_normal((n, 2)), [1.0, 0.5])
    state = _state(lat, thresholds=(0.0, 1.0, 2.0))
    for _ in range(300):
        sweep(state, data)
        assert np.all(np.diff(state.globals.thresholds) > 0)
        assert _z_invariant(state, data)


# -- step 3 ----------------------------------------------------------------------

def test_beta_noop_without_covariates():
    data = _data(3, [0, 1, 1])
    state = _state(_zero_eigen(3))
    before = state.rng.bit_generator.state
    assert sample_beta(state, data).size == 0
    assert state.rng.bit_generator.state == before


def test_beta_shrinks_under_tight_prior():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((45, 2))
    data = _data(10, rng.integers(0, 2, 45), X=X)
    state = _state(_zero_eigen(10), beta=(0.0, 0.0), prior=PriorConfig(beta_var=1e-12))
    state.Z = rng.standard_normal(45) * 5
    assert np.all(np.abs(sample_beta(state, data)) < 1e-4)


def test_beta_recovery():
    n = 60
    rng = np.random.default_rng(3)
    X = rng.standard_normal((n * (n - 1) // 2, 1))
    latent = planted_partition(n, 2, within=0.5, across=-0.5)
    sim = simulate("class", n, 2, latent=latent, beta=[1.5], X=X, seed=4)
    trace = run_chain(sim.Y, X, "class", 2, SamplerConfig(5000, 1000, 5, seed=5))
    b = np.array([s["beta"][0] for s in trace.samples])
    assert abs(b.mean() - 1.5) < 3 * b.std()


# -- step 4 ----------------------------------------------------------------------

def test_tiny_proposals_are_accepted():
    rng = np.random.default_rng(4)
    n = 15
    lat = DistanceState(rng.standard_normal((n, 2)), [1.0, 1.0])
    data = _data(n, rng.integers(0, 2, n * (n - 1) // 2))
    state = _state(lat)
    sample_z(state, data)
    before = lat.positions.copy()
    acc = update_u_distance(state, data, mh_step=1e-8)
    assert acc == n
    assert np.max(np.abs(lat.positions - before)) < 1e-6


def test_distance_adaptation_reaches_target_band():
    n = 100
    pos, _ = two_cluster_positions(n, 2, seed=1)
    sim = simulate("dist", n, 2, latent=DistanceState(pos, [1.0, 1.0]), thresholds=(-2.0,), seed=2)
    trace = run_chain(sim.Y, None, "dist", 2, SamplerConfig(1500, 1000, 10, mh_step=3.0, seed=3))
    assert 0.25 <= trace.acceptance_rate <= 0.50


def _brute_force_label_probs(c, R, i, K, v):
    """P(c_i = k | rest) from the Gaussian marginal of all residuals, M integrated out."""
    n = c.size
    iu, ju = np.triu_indices(n, 1)
    r = R[iu, ju]
    logp = []
    for k in range(K):
        lab = c.copy()
        lab[i] = k
        a, b = np.minimum(lab[iu], lab[ju]), np.maximum(lab[iu], lab[ju])
        block = a * K + b
        same = (block[:, None] == block[None, :]).astype(float)
        cov = np.eye(r.size) + v * same
        logp.append(multivariate_normal(np.zeros(r.size), cov).logpdf(r))
    logp = np.array(logp)
    p = np.exp(logp - logp.max())
    return p / p.sum()


def test_collapsed_label_probabilities_match_brute_force():
    rng = np.random.default_rng(5)
    n, K, v = 7, 3, 0.8
    R = rng.standard_normal((n, n)) * 1.5
    R = np.triu(R, 1) + np.triu(R, 1).T
    c0 = rng.integers(0, K, n)
    p = _brute_force_label_probs(c0, R, 0, K, v)
    cum = np.cumsum(p)
    # the first node's draw is the inverse CDF of its conditional at uniforms[0]
    for u in np.linspace(0.01, 0.99, 25):
        c = c0.copy()
        N, S = class_block_stats(c, R, K)
        uniforms = np.full(n, 0.5)
        uniforms[0] = u
        class_label_scan(c, R, N, S, v, uniforms)
        assert c[0] == int(np.searchsorted(cum, u))


def test_block_stats_are_maintained_by_the_scan():
    rng = np.random.default_rng(6)
    n, K = 9, 3
    R = rng.standard_normal((n, n))
    R = np.triu(R, 1) + np.triu(R, 1).T
    c = rng.integers(0, K, n)
    N, S = class_block_stats(c, R, K)
    class_label_scan(c, R, N, S, 1.0, rng.random(n))
    N2, S2 = class_block_stats(c, R, K)
    np.testing.assert_allclose(N, N2)
    np.testing.assert_allclose(S, S2, atol=1e-12)


def test_class_k1_labels_unchanged():
    rng = np.random.default_rng(7)
    data = _data(8, rng.integers(0, 2, 28))
    state = _state(ClassState(np.zeros(8, int), [[0.0]]))
    for _ in range(10):
        sweep(state, data)
        assert np.all(state.latent.labels == 0)


def test_planted_partition_recovery():
    n = 40
    latent = planted_partition(n, 2, within=3.0, across=-3.0)
    sim = simulate("class", n, 2, latent=latent, seed=8)
    data = prepare_data(sim.Y)
    prior = calibrate_prior_alpha_variance("class", 2, n=n)
    state = init_chain(data, "class", 2, prior, seed=9)
    for _ in range(100):
        sweep(state, data)
    got = state.latent.labels
    agree = max(np.mean(got == latent.labels), np.mean(got != latent.labels))
    assert agree == 1.0


def test_eigen_two_node_conditional():
    # n=2, K=1: u_1 | rest ~ N((m/w + lam u_2 r) / P, 1/P), P = 1/w + lam^2 u_2^2
    lam, u2, m, w, r = 1.7, -0.8, 0.3, 0.5, 1.2
    U = np.array([[0.0], [u2]])
    R = np.array([[0.0, r], [r, 0.0]])
    normals = np.zeros((2, 1))
    normals[0, 0] = 0.9
    eigen_vector_scan(U, np.array([lam]), np.array([m]), R, w, normals)
    P = 1 / w + lam ** 2 * u2 ** 2
    assert U[0, 0] == pytest.approx((m / w + lam * u2 * r) / P + 0.9 / math.sqrt(P), rel=1e-12)


def test_eigen_column_flip_leaves_theta_unchanged():
    rng = np.random.default_rng(9)
    lat = EigenState(rng.standard_normal((6, 2)), [1.0, -2.0])
    flipped = EigenState(lat.vectors * [-1, 1], lat.lam)
    mu = -0.3
    np.testing.assert_allclose(
        1 - 0.5 * np.vectorize(math.erfc)((alpha_dyads(lat) - mu) / math.sqrt(2)),
        1 - 0.5 * np.vectorize(math.erfc)((alpha_dyads(flipped) - mu) / math.sqrt(2)))


def test_eigen_sign_recovery():
    n = 80
    rng = make_rng(10, "eigen-truth")
    lat = EigenState(rng.standard_normal((n, 2)), [3.0, -3.0])
    sim = simulate("eigen", n, 2, latent=lat, thresholds=(0.0,), seed=11)
    trace = run_chain(sim.Y, None, "eigen", 2, SamplerConfig(1500, 500, 5, seed=12))
    lam = np.mean([np.sort(s["lambda"])[::-1] for s in trace.samples], axis=0)
    assert lam[0] > 0 > lam[1]


# -- driver ----------------------------------------------------------------------

def _small_matrix(n=10, seed=0, levels=3):
    rng = np.random.default_rng(seed)
    m = n * (n - 1) // 2
    return Sociomatrix(tuple(f"n{i}" for i in range(n)), rng.integers(0, levels, m), np.ones(m, bool))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(10, 10)
    with pytest.raises(ValueError):
        SamplerConfig(10, 2, thin=0)
    with pytest.raises(ValueError):
        SamplerConfig(10, 2, mh_step=0.0)
    assert SamplerConfig(100, 25, 10).n_recorded == 7


def test_single_recorded_sample():
    t = run_chain(_small_matrix(), None, "eigen", 2, SamplerConfig(11, 10, 1))
    assert t.count == 1 and len(t.samples) == 1


@pytest.mark.parametrize("kind", ["class", "dist", "eigen"])
def test_bitwise_determinism(kind):
    Y = _small_matrix(12, 1)
    cfg = SamplerConfig(60, 20, 4, seed=3)
    a, b = run_chain(Y, None, kind, 2, cfg), run_chain(Y, None, kind, 2, cfg)
    assert a.count == b.count == 10
    np.testing.assert_array_equal(a.theta_sum, b.theta_sum)
    for ra, rb in zip(a.samples, b.samples):
        for key in ra:
            np.testing.assert_array_equal(ra[key], rb[key])


@pytest.mark.parametrize("kind", ["class", "dist", "eigen"])
def test_invariants_hold_after_every_sweep(kind):
    Y = _small_matrix(10, 2, levels=4)
    Y = Y.with_observed(np.random.default_rng(0).random(Y.n_dyads) > 0.2)
    data = prepare_data(Y)
    prior = calibrate_prior_alpha_variance(kind, 2, n=10)
    state = init_chain(data, kind, 2, prior, seed=1)
    for _ in range(100):
        sweep(state, data)
        assert _z_invariant(state, data)
        assert np.all(np.diff(state.globals.thresholds) > 0)
        assert np.all(np.isfinite(alpha_dyads(state.latent)))


@pytest.mark.parametrize("kind", ["class", "dist", "eigen"])
def test_no_leakage_of_hidden_values(kind):
    Y = _small_matrix(12, 3)
    folds = assign_folds(Y, 5, seed=0)
    masked = mask_fold(Y, folds, 2)
    hidden = folds.members(2)
    values = np.array(Y.values)
    values[hidden] = (values[hidden] + 1) % 3
    altered = mask_fold(Sociomatrix(Y.labels, values, Y.observed), folds, 2)
    cfg = SamplerConfig(40, 10, 5, seed=4)
    levels = Y.value_levels
    a = run_chain(masked, None, kind, 2, cfg, levels=levels)
    b = run_chain(altered, None, kind, 2, cfg, levels=levels)
    np.testing.assert_array_equal(posterior_predictive_mean(a, hidden),
                                  posterior_predictive_mean(b, hidden))


def test_predictive_mean_bookkeeping():
    t = Trace("eigen", 1, 3, np.arange(2), count=4, theta_sum=np.array([2.8, 0.0, 4.0]))
    np.testing.assert_allclose(posterior_predictive_mean(t), [0.7, 0.0, 1.0])
    assert posterior_predictive_mean(t, [0]) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        posterior_predictive_mean(Trace("eigen", 1, 3, np.arange(2), theta_sum=np.zeros(3)))


def test_predictive_mean_within_recorded_range_and_mc_agreement():
    Y = _small_matrix(10, 4, levels=2)
    cfg = SamplerConfig(400, 100, 3, seed=5)
    trace = run_chain(Y, None, "eigen", 2, cfg)
    data = prepare_data(Y)
    thetas, draws = [], []
    rng = make_rng(0, "y-draws")
    for lat, s in zip(trace.latent, trace.samples):
        e = alpha_dyads(lat)
        th = 0.5 * np.vectorize(math.erfc)(-(e - s["thresholds"][0]) / math.sqrt(2))
        thetas.append(th)
        z = e[None, :] + rng.standard_normal((200, e.size))
        draws.append(np.mean(z > s["thresholds"][0], axis=0))
    thetas = np.array(thetas)
    yhat = posterior_predictive_mean(trace)
    assert data.y.size == yhat.size
    assert np.all(yhat >= thetas.min(axis=0) - 1e-12)
    assert np.all(yhat <= thetas.max(axis=0) + 1e-12)
    np.testing.assert_allclose(yhat, thetas.mean(axis=0), atol=1e-12)
    assert np.max(np.abs(yhat - np.mean(draws, axis=0))) < 1e-2


def test_trace_csv(tmp_path):
    t = run_chain(_small_matrix(), None, "dist", 2, SamplerConfig(30, 10, 5))
    write_trace_csv(t, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "sample,thresholds_1,thresholds_2,pos_var_1,pos_var_2"
    assert len(lines) == 1 + t.count
