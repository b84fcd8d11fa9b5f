"""Gibbs / Metropolis posterior simulation with latent-z data augmentation.

One sweep updates, in order: the latent ``z`` of every dyad, the ordered
thresholds, the regression coefficients, and the model-specific latent
block.  Unobserved dyads keep an unconstrained imputed ``z`` so every full
conditional has its complete-data conjugate form.
"""
from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .models import (
    ClassState,
    DistanceState,
    EigenState,
    GlobalParams,
    PriorConfig,
    alpha_dyads,
    alpha_matrix,
    calibrate_prior_alpha_variance,
    draw_latent_from_prior,
)
from ._kernels import (
    canonical_normal,
    class_label_scan,
    distance_position_scan,
    eigen_vector_scan,
)
from .stats import (
    inverse_gamma_draw,
    make_rng,
    truncated_normal_draw,
)

log = logging.getLogger(__name__)

__all__ = [
    "ChainData",
    "ChainState",
    "SamplerConfig",
    "Trace",
    "prepare_data",
    "linear_predictor",
    "sample_z",
    "sample_thresholds",
    "sample_beta",
    "update_u_distance",
    "update_u_class",
    "update_u_eigen",
    "update_latent",
    "sweep",
    "init_chain",
    "run_chain",
    "posterior_predictive_mean",
    "write_trace_csv",
]

TARGET_ACCEPT = 0.35


@dataclass
class ChainData:
    """Data arrays in the form the sampler consumes."""

    n: int
    y: np.ndarray          # level index per dyad (0 = lowest level)
    observed: np.ndarray
    X: np.ndarray          # (n_dyads, p)
    n_levels: int
    levels: np.ndarray = None

    def __post_init__(self):
        self.iu, self.ju = np.triu_indices(self.n, 1)

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class SamplerConfig:
    iterations: int = 10_000
    burn_in: int = 2_500
    thin: int = 10
    mh_step: float = 0.5
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.mh_step <= 0:
            raise ValueError("mh_step must be positive")

    @property
    def n_recorded(self):
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    Z: np.ndarray
    globals: GlobalParams
    latent: object
    prior: PriorConfig
    rng: np.random.Generator
    mh_step: float = 0.5

    @property
    def kind(self):
        return {ClassState: "class", DistanceState: "dist", EigenState: "eigen"}[
            type(self.latent)
        ]


@dataclass
class Trace:
    kind: str
    K: int
    n: int
    levels: np.ndarray
    count: int = 0
    theta_sum: np.ndarray = None
    samples: list = field(default_factory=list)
    latent: list = field(default_factory=list)
    accepted: int = 0
    proposed: int = 0
    mh_step: float = None

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposed if self.proposed else float("nan")


def prepare_data(Y, X=None, levels=None):
    """Map a Sociomatrix (and optional covariates) to sampler arrays."""
    levels = Y.value_levels if levels is None else np.asarray(levels)
    if levels.size < 2:
        raise ValueError("need at least two distinct observed values")
    y = np.searchsorted(levels, Y.values)
    y = np.where(Y.observed, y, 0)
    if np.any(Y.observed & (levels[np.minimum(y, levels.size - 1)] != Y.values)):
        raise ValueError("observed value outside the level set")
    Xa = np.zeros((Y.n_dyads, 0)) if X is None else np.asarray(getattr(X, "x", X), float)
    return ChainData(Y.n, y.astype(np.int64), Y.observed.copy(), Xa, levels.size, levels)


def linear_predictor(state, data):
    a = alpha_dyads(state.latent)
    if data.p:
        a = a + data.X @ state.globals.beta
    return a


def _residual_matrix(state, data):
    r = state.Z - data.X @ state.globals.beta if data.p else state.Z
    R = np.zeros((data.n, data.n))
    R[data.iu, data.ju] = r
    R[data.ju, data.iu] = r
    return R


# -- step 1 ------------------------------------------------------------------

def sample_z(state, data):
    """Draw every z from normal(eta, 1), truncated to its level's interval if observed."""
    cuts = state.globals.cutpoints()
    e = linear_predictor(state, data)
    lo = np.where(data.observed, cuts[data.y], -np.inf)
    hi = np.where(data.observed, cuts[data.y + 1], np.inf)
    state.Z = truncated_normal_draw(e, lo, hi, state.rng)
    return state.Z


# -- step 2 ------------------------------------------------------------------

def sample_thresholds(state, data):
    """Draw each finite threshold from its prior truncated by neighbours and z."""
    L = data.n_levels
    zo = state.Z[data.observed]
    yo = data.y[data.observed]
    zmax = np.full(L, -np.inf)
    zmin = np.full(L, np.inf)
    np.maximum.at(zmax, yo, zo)
    np.minimum.at(zmin, yo, zo)
    mu = state.globals.thresholds.copy()
    sd = np.sqrt(state.prior.threshold_var)
    if np.all(np.isfinite(zmax[:-1])) and np.all(np.isfinite(zmin[1:])):
        # every level is occupied, so the z's alone bound each threshold
        # and the thresholds are conditionally independent
        mu = sd * truncated_normal_draw(0.0, zmax[:-1] / sd, zmin[1:] / sd, state.rng)
    else:
        for t in range(L - 1):
            below = mu[t - 1] if t > 0 else -np.inf
            above = mu[t + 1] if t + 1 < L - 1 else np.inf
            lo = max(below, zmax[t])
            hi = min(above, zmin[t + 1])
            if not lo < hi:
                raise RuntimeError(f"empty feasible interval for threshold {t + 1}")
            mu[t] = sd * truncated_normal_draw(0.0, lo / sd, hi / sd, state.rng)
    state.globals.thresholds = mu
    return mu


# -- step 3 ------------------------------------------------------------------

def sample_beta(state, data):
    """Conjugate multivariate normal update of the regression coefficients."""
    if data.p == 0:
        return state.globals.beta
    r = state.Z - alpha_dyads(state.latent)
    P = data.X.T @ data.X + np.eye(data.p) / state.prior.beta_var
    state.globals.beta = canonical_normal(data.X.T @ r, P, state.rng.standard_normal(data.p))
    return state.globals.beta


# -- step 4 ------------------------------------------------------------------

def update_u_distance(state, data, mh_step=None):
    """Random-walk Metropolis for each position, then the coordinate variances.

    Returns the number of accepted proposals.
    """
    lat = state.latent
    rng = state.rng
    step = state.mh_step if mh_step is None else mh_step
    R = _residual_matrix(state, data)
    U = lat.positions
    n, K = U.shape
    noise = rng.standard_normal((n, K)) * step
    logu = np.log(rng.random(n))
    accepted = distance_position_scan(U, R, 1.0 / lat.pos_var, noise, logu)
    shape = state.prior.ig_shape + n / 2.0
    rate = state.prior.dist_rate + 0.5 * np.sum(U * U, axis=0)
    lat.pos_var = np.asarray(inverse_gamma_draw(shape, rate, rng), float).reshape(K)
    return int(accepted)


def class_block_stats(labels, R, K):
    """Pair counts and residual sums for every class-pair block."""
    C = np.zeros((labels.size, K))
    C[np.arange(labels.size), labels] = 1.0
    nk = C.sum(axis=0)
    S = C.T @ R @ C
    N = np.outer(nk, nk)
    di = np.diag_indices(K)
    S[di] *= 0.5
    N[di] = nk * (nk - 1) / 2.0
    return N, S


def update_u_class(state, data):
    """Collapsed Gibbs update of class labels, then M and its variance.

    Each label is drawn from its conditional with M integrated out, using
    per-block pair counts and residual sums; M is then redrawn from its
    conjugate normal full conditional given the new labels.
    """
    lat = state.latent
    rng = state.rng
    K = lat.K
    v = lat.m_var
    R = _residual_matrix(state, data)
    c = lat.labels
    uniforms = rng.random(c.size)
    if K > 1:
        N, S = class_block_stats(c, R, K)
        class_label_scan(c, R, N, S, v, uniforms)
    N, S = class_block_stats(c, R, K)
    prec = N + 1.0 / v
    iu = np.triu_indices(K)
    draw = S[iu] / prec[iu] + rng.standard_normal(iu[0].size) / np.sqrt(prec[iu])
    M = np.zeros((K, K))
    M[iu] = draw
    lat.M = M + np.triu(M, 1).T
    shape = state.prior.ig_shape + iu[0].size / 2.0
    rate = state.prior.class_rate + 0.5 * np.sum(draw * draw)
    lat.m_var = inverse_gamma_draw(shape, rate, rng)
    return lat


def update_u_eigen(state, data):
    """Gibbs updates of each latent vector, their mean, then the eigenvalues."""
    lat = state.latent
    rng = state.rng
    R = _residual_matrix(state, data)
    U = lat.vectors
    n, K = U.shape
    w = state.prior.eigen_u_var
    eigen_vector_scan(U, lat.lam, lat.vec_mean, R, w, rng.standard_normal((n, K)))
    prec = 1.0 / state.prior.eigen_mean_var + n / w
    lat.vec_mean = U.sum(axis=0) / w / prec + rng.standard_normal(K) / np.sqrt(prec)
    G = U.T @ U
    U2 = U * U
    WtW = 0.5 * (G * G - U2.T @ U2)
    Wtr = 0.5 * np.einsum("ik,ij,jk->k", U, R, U)
    P = WtW + np.eye(K) / state.prior.lambda_var
    lat.lam = canonical_normal(Wtr, P, rng.standard_normal(K))
    return lat


def update_latent(state, data):
    """Step 4 for whichever model the state carries; returns MH acceptances."""
    if isinstance(state.latent, DistanceState):
        return update_u_distance(state, data)
    if isinstance(state.latent, ClassState):
        update_u_class(state, data)
    else:
        update_u_eigen(state, data)
    return 0


def sweep(state, data, z_sampler=sample_z):
    """One full scan: z, thresholds, beta, latent block.  Returns MH acceptances."""
    z_sampler(state, data)
    sample_thresholds(state, data)
    sample_beta(state, data)
    return update_latent(state, data)


# -- driver ------------------------------------------------------------------

def initial_thresholds(data):
    """Standard-normal quantiles of the empirical cumulative level frequencies."""
    counts = np.bincount(data.y[data.observed], minlength=data.n_levels).astype(float)
    # every level gets a pseudo-count so the quantiles stay finite and ordered
    counts += 0.5
    cum = np.cumsum(counts)[:-1] / counts.sum()
    return ndtri(cum)


def init_chain(data, kind, K, prior, seed):
    rng = make_rng(seed, "chain")
    latent = draw_latent_from_prior(kind, data.n, K, prior, rng, hyper="mean")
    g = GlobalParams(np.zeros(data.p), initial_thresholds(data))
    return ChainState(np.zeros(data.y.size), g, latent, prior, rng)


def _record(state, data, trace):
    e = linear_predictor(state, data)
    theta = ndtr(e - state.globals.thresholds[0])
    trace.theta_sum += theta
    trace.count += 1
    lat = state.latent
    rec = {"thresholds": state.globals.thresholds.copy(), "beta": state.globals.beta.copy()}
    if isinstance(lat, ClassState):
        rec["m_var"] = float(lat.m_var)
    elif isinstance(lat, DistanceState):
        rec["pos_var"] = lat.pos_var.copy()
    else:
        rec["lambda"] = lat.lam.copy()
        rec["vec_mean"] = lat.vec_mean.copy()
    trace.samples.append(rec)
    trace.latent.append(copy.deepcopy(lat))


def run_chain(Y, X, kind, K, config=None, prior=None, levels=None):
    """Run one chain and return its Trace.

    Predictive accumulators cover every dyad, observed or not.  The prior is
    calibrated first unless it is already marked calibrated.
    """
    config = SamplerConfig() if config is None else config
    prior = PriorConfig() if prior is None else prior
    data = prepare_data(Y, X, levels)
    if not prior.calibrated:
        prior = calibrate_prior_alpha_variance(kind, K, prior, n=data.n)
    prior = prior.resolved(data.n)
    state = init_chain(data, kind, K, prior, config.seed)
    state.mh_step = config.mh_step
    trace = Trace(kind, K, data.n, data.levels, theta_sum=np.zeros(data.y.size))
    for it in range(config.iterations):
        acc = sweep(state, data)
        if kind == "dist":
            if it < config.burn_in:
                if config.adapt:
                    rate = acc / data.n
                    gain = (it + 1) ** -0.6
                    state.mh_step *= np.exp(gain * (rate - TARGET_ACCEPT))
            else:
                trace.accepted += acc
                trace.proposed += data.n
        if it >= config.burn_in and (it - config.burn_in + 1) % config.thin == 0:
            _record(state, data, trace)
    trace.mh_step = state.mh_step
    log.debug("chain %s K=%d done: %d samples", kind, K, trace.count)
    return trace


def posterior_predictive_mean(trace, dyads=None):
    """Average over recorded states of P(y > lowest level) per dyad."""
    if trace.count == 0:
        raise ValueError("trace has no recorded samples")
    yhat = trace.theta_sum / trace.count
    return yhat if dyads is None else yhat[dyads]


def write_trace_csv(trace, path):
    """Per-sample scalar parameters, one row per recorded sample."""
    if not trace.samples:
        raise ValueError("trace has no recorded samples")
    first = trace.samples[0]
    header = ["sample"]
    for key, val in first.items():
        if np.ndim(val) == 0:
            header.append(key)
        else:
            header += [f"{key}_{k + 1}" for k in range(np.size(val))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s, rec in enumerate(trace.samples, 1):
            row = [s]
            for val in rec.values():
                row += [repr(float(v)) for v in np.atleast_1d(val)]
            w.writerow(row)
