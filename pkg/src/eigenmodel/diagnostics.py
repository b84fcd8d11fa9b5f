"""Joint-distribution test of sampler correctness.

Two simulators target the same joint distribution of parameters and data:

* marginal-conditional: parameters from the prior, then data given them;
* successive-conditional: alternate one sampler sweep (parameters given
  data) with a fresh draw of the data given the parameters.

If the sweep leaves the posterior invariant, means of any test function
agree between the two up to Monte Carlo error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mcmc import ChainData, ChainState, linear_predictor, sample_z, sweep
from .models import (
    ClassState,
    DistanceState,
    GlobalParams,
    PriorConfig,
    alpha_dyads,
    draw_latent_from_prior,
)
from .stats import make_rng

__all__ = ["JointCheckReport", "joint_distribution_check", "GIR_PRIOR"]

# proper priors with finite fourth moments keep the test statistics well behaved
GIR_PRIOR = PriorConfig(
    beta_var=1.0,
    threshold_var=1.0,
    ig_shape=5.0,
    class_rate=4.0,
    dist_rate=4.0,
    eigen_u_var=1.0,
    eigen_mean_var=1.0,
    lambda_var=1.0,
    calibrated=True,
)


@dataclass
class JointCheckReport:
    kind: str
    n_levels: int
    rounds: int
    stats: dict = field(default_factory=dict)
    limit: float = 4.0
    error: str | None = None

    @property
    def flagged(self):
        if self.error is not None:
            return sorted(self.stats) or ["<sampler error>"]
        return [k for k, v in self.stats.items() if not abs(v) <= self.limit]

    @property
    def passed(self):
        return self.error is None and not self.flagged

    @property
    def max_abs(self):
        if self.error is not None:
            return float("inf")
        return max(abs(v) for v in self.stats.values())

    def summary(self):
        head = (f"{self.kind} levels={self.n_levels} rounds={self.rounds}: "
                f"{'PASS' if self.passed else 'FAIL'}")
        if self.error is not None:
            return head + f" ({self.error})"
        worst = max(self.stats, key=lambda k: abs(self.stats[k]))
        return head + f" (max |stat| {abs(self.stats[worst]):.2f} at {worst})"


def _draw_globals(n_levels, p, prior, rng):
    mu = np.sort(rng.standard_normal(n_levels - 1) * np.sqrt(prior.threshold_var))
    beta = rng.standard_normal(p) * np.sqrt(prior.beta_var)
    return GlobalParams(beta, mu)


def _draw_data(state, data, rng):
    e = linear_predictor(state, data)
    z = e + rng.standard_normal(e.size)
    data.y = np.searchsorted(state.globals.thresholds, z).astype(np.int64)
    return z


def _test_functions(state, data):
    g = state.globals
    lat = state.latent
    a = alpha_dyads(lat)
    m = a.size
    out = {}
    for t, mu in enumerate(g.thresholds.tolist(), 1):
        out[f"mu{t}"] = mu
        out[f"mu{t}^2"] = mu * mu
    for k, b in enumerate(g.beta.tolist(), 1):
        out[f"beta{k}"] = b
        out[f"beta{k}^2"] = b * b
    for level in range(1, data.n_levels):
        hit = (data.y >= level).astype(float)
        out[f"P(y>={level})"] = hit.sum() / m
        out[f"mean alpha*1(y>={level})"] = a @ hit / m
    out["mean alpha"] = a.sum() / m
    out["mean |alpha|"] = np.abs(a).sum() / m
    if data.p:
        out["mean x*1(y>=1)"] = data.X[:, 0] @ (data.y >= 1) / m
    if isinstance(lat, ClassState):
        out["log m_var"] = np.log(lat.m_var)
        out["max class share"] = np.bincount(lat.labels, minlength=lat.K).max() / lat.labels.size
    elif isinstance(lat, DistanceState):
        for k, s in enumerate(lat.pos_var.tolist(), 1):
            out[f"log pos_var{k}"] = np.log(s)
        P = lat.positions
        out["mean |u|^2"] = np.einsum("ik,ik->", P, P) / P.shape[0]
    else:
        for k, lk in enumerate(lat.lam.tolist(), 1):
            out[f"lambda{k}^2"] = lk * lk
        out["sum lambda"] = lat.lam.sum()
        U = lat.vectors
        out["mean u"] = U.sum() / U.size
        out["mean u^2"] = np.einsum("ik,ik->", U, U) / U.size
    return out


def integrated_autocorr_time(x, c=5.0):
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(x, float) - np.mean(x)
    n = x.size
    if n < 2 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * tau
    m = int(np.argmax(window)) if np.any(window) else n - 1
    return max(1.0, float(tau[m]))


def joint_distribution_check(kind, n=6, K=2, n_levels=2, rounds=100_000, p=1,
                             prior=GIR_PRIOR, mh_step=0.7, seed=0, z_sampler=sample_z,
                             limit=4.0):
    """Compare marginal-conditional and successive-conditional moments.

    Returns a report whose ``stats`` are standardised differences of the
    two estimates of each test-function mean; any ``|stat| > limit`` is
    flagged.  A sampler that raises (for example on an infeasible threshold
    interval) is reported as failed.
    """
    rng_mc = make_rng(seed, "gir", kind, n_levels, "marginal")
    rng_x = make_rng(seed, "gir", kind, n_levels, "covariates")
    n_dyads = n * (n - 1) // 2
    X = rng_x.standard_normal((n_dyads, p))
    data = ChainData(n, np.zeros(n_dyads, dtype=np.int64), np.ones(n_dyads, bool),
                     X, n_levels, np.arange(n_levels))

    mc = []
    for _ in range(rounds):
        g = _draw_globals(n_levels, p, prior, rng_mc)
        lat = draw_latent_from_prior(kind, n, K, prior, rng_mc)
        st = ChainState(np.zeros(n_dyads), g, lat, prior, rng_mc)
        _draw_data(st, data, rng_mc)
        mc.append(_test_functions(st, data))

    rng_sc = make_rng(seed, "gir", kind, n_levels, "successive")
    g = _draw_globals(n_levels, p, prior, rng_sc)
    lat = draw_latent_from_prior(kind, n, K, prior, rng_sc)
    state = ChainState(np.zeros(n_dyads), g, lat, prior, rng_sc, mh_step=mh_step)
    _draw_data(state, data, rng_sc)
    report = JointCheckReport(kind, n_levels, rounds, limit=limit)
    sc = []
    try:
        for _ in range(rounds):
            sweep(state, data, z_sampler=z_sampler)
            _draw_data(state, data, rng_sc)
            sc.append(_test_functions(state, data))
    except (RuntimeError, ValueError) as e:
        report.error = f"sampler failed: {e}"
        return report

    for key in mc[0]:
        a = np.array([r[key] for r in mc], float)
        b = np.array([r[key] for r in sc], float)
        se = np.sqrt((a.var(ddof=1) + b.var(ddof=1) * integrated_autocorr_time(b)) / a.size)
        diff = a.mean() - b.mean()
        report.stats[key] = float(diff / se) if se > 0 else (0.0 if diff == 0 else np.inf)
    return report
