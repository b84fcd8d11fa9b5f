"""Latent class, distance and eigen kernels with (ordered) probit likelihoods.

The latent variable convention throughout is ``z ~ normal(eta, 1)`` and
``y = level l`` iff ``thresholds[l-1] < z < thresholds[l]``, with implicit
``-inf`` and ``+inf`` at the two ends.  For binary data the single threshold
is minus the intercept of the probit model.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .stats import inverse_gamma_draw, make_rng

__all__ = [
    "MODEL_KINDS",
    "GlobalParams",
    "ClassState",
    "DistanceState",
    "EigenState",
    "PriorConfig",
    "alpha_class",
    "alpha_distance",
    "alpha_eigen",
    "alpha_matrix",
    "alpha_dyads",
    "eta",
    "binary_probit_prob",
    "ordered_probit_probs",
    "prob_above_lowest",
    "prior_alpha_variance",
    "calibrate_prior_alpha_variance",
    "draw_latent_from_prior",
]

MODEL_KINDS = ("dist", "class", "eigen")


@dataclass
class GlobalParams:
    beta: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, float))
        self.thresholds = np.atleast_1d(np.asarray(self.thresholds, float))
        if self.thresholds.size < 1:
            raise ValueError("need at least one threshold (two levels)")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def n_levels(self):
        return self.thresholds.size + 1

    @property
    def intercept(self):
        """Probit intercept of the binary model (minus its threshold)."""
        if self.n_levels != 2:
            raise ValueError("intercept is defined for binary data only")
        return -float(self.thresholds[0])

    def cutpoints(self):
        """Thresholds padded with -inf and +inf."""
        return np.concatenate(([-np.inf], self.thresholds, [np.inf]))


@dataclass
class ClassState:
    labels: np.ndarray
    M: np.ndarray
    m_var: float = 1.0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.M = np.asarray(self.M, float)
        if not np.allclose(self.M, self.M.T):
            raise ValueError("M must be symmetric")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise ValueError("class labels out of range")

    @property
    def K(self):
        return self.M.shape[0]


@dataclass
class DistanceState:
    positions: np.ndarray
    pos_var: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float))
        self.pos_var = np.atleast_1d(np.asarray(self.pos_var, float))

    @property
    def K(self):
        return self.positions.shape[1]


@dataclass
class EigenState:
    vectors: np.ndarray
    lam: np.ndarray
    vec_mean: np.ndarray = None

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, float))
        self.lam = np.atleast_1d(np.asarray(self.lam, float))
        if self.vec_mean is None:
            self.vec_mean = np.zeros(self.lam.size)
        self.vec_mean = np.atleast_1d(np.asarray(self.vec_mean, float))

    @property
    def K(self):
        return self.lam.size


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters shared by the three models.

    ``class_rate``, ``dist_rate`` and ``lambda_var`` set the spread of
    alpha; :func:`calibrate_prior_alpha_variance` rescales them.  A
    ``lambda_var`` of ``None`` means "number of nodes".
    """

    beta_var: float = 100.0
    threshold_var: float = 100.0
    ig_shape: float = 2.0
    class_rate: float = 1.0
    dist_rate: float = 1.0
    eigen_u_var: float = 1.0
    eigen_mean_var: float = 1.0
    lambda_var: float | None = None
    target_alpha_var: float = 1.0
    calibrated: bool = False

    def resolved(self, n):
        if self.lambda_var is None:
            return replace(self, lambda_var=float(n))
        return self


# -- kernels -----------------------------------------------------------------

def _check_pair(n, i, j):
    if i == j:
        raise IndexError("alpha is undefined on the diagonal")
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range for n={n}")


def alpha_class(state, i, j):
    _check_pair(state.labels.size, i, j)
    return float(state.M[state.labels[i], state.labels[j]])


def alpha_distance(state, i, j):
    _check_pair(state.positions.shape[0], i, j)
    return -float(np.linalg.norm(state.positions[i] - state.positions[j]))


def alpha_eigen(state, i, j):
    _check_pair(state.vectors.shape[0], i, j)
    u = state.vectors
    return float(np.sum(state.lam * u[i] * u[j]))


def alpha_matrix(state):
    """Full symmetric matrix of alpha values (diagonal set to zero)."""
    if isinstance(state, ClassState):
        a = state.M[np.ix_(state.labels, state.labels)]
    elif isinstance(state, DistanceState):
        u = state.positions
        sq = np.sum(u * u, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * u @ u.T, 0.0)
        a = -np.sqrt(d2)
    elif isinstance(state, EigenState):
        u = state.vectors
        a = (u * state.lam) @ u.T
    else:
        raise TypeError(f"unknown latent state {type(state).__name__}")
    a = np.array(a, dtype=float)
    np.fill_diagonal(a, 0.0)
    return a


@lru_cache(maxsize=32)
def triu_pairs(n):
    """Cached ``np.triu_indices(n, 1)`` (read-only)."""
    iu, ju = np.triu_indices(n, 1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def alpha_dyads(state):
    """Alpha for every pair ``i < j`` in row-major order."""
    if isinstance(state, ClassState):
        iu, ju = triu_pairs(state.labels.size)
        return state.M[state.labels[iu], state.labels[ju]]
    if isinstance(state, DistanceState):
        iu, ju = triu_pairs(state.positions.shape[0])
        diff = state.positions[iu] - state.positions[ju]
        return -np.sqrt(np.einsum("dk,dk->d", diff, diff))
    if isinstance(state, EigenState):
        u = state.vectors
        iu, ju = triu_pairs(u.shape[0])
        return np.einsum("dk,dk->d", u[iu] * state.lam, u[ju])
    raise TypeError(f"unknown latent state {type(state).__name__}")


def eta(g, x, alpha):
    """Linear predictor ``beta'x + alpha``.

    ``x`` is a covariate vector, an ``(n_dyads, p)`` array paired with a
    vector of alphas, or ``None`` when there are no covariates.
    """
    if x is None:
        return alpha
    x = np.asarray(x, float)
    if x.shape[-1] == 0:
        return alpha
    return x @ g.beta + alpha


def binary_probit_prob(g, eta_value):
    """P(y = 1) = Phi(intercept + eta)."""
    if g.n_levels != 2:
        raise ValueError("binary_probit_prob needs binary data")
    return ndtr(g.intercept + np.asarray(eta_value, float))


def ordered_probit_probs(g, eta_value):
    """Probability of every level: Phi(mu_{l+1} - eta) - Phi(mu_l - eta).

    Differences are taken on the side of the normal where both terms are
    small, so probabilities stay non-negative and accurate in the tails.
    """
    cuts = g.cutpoints()
    if np.any(np.diff(cuts) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    e = np.asarray(eta_value, float)[..., None]
    lo = cuts[:-1] - e
    hi = cuts[1:] - e
    upper = ndtr(-lo) - ndtr(-hi)
    lower = ndtr(hi) - ndtr(lo)
    return np.where(lo > 0, upper, lower)


def prob_above_lowest(thresholds, eta_value):
    """P(y > lowest level) = Phi(eta - mu_1)."""
    return ndtr(np.asarray(eta_value, float) - thresholds[0])


# -- priors ------------------------------------------------------------------

def _ig_mean(shape, rate):
    if shape <= 1:
        raise ValueError("inverse-gamma shape must exceed 1 for a finite mean")
    return rate / (shape - 1.0)


def prior_alpha_variance(kind, K, prior, n_draws=100_000, rng=None):
    """Monte Carlo estimate of Var[alpha(u_i, u_j)] for a pair under the prior."""
    rng = make_rng(0, "prior-alpha") if rng is None else rng
    if kind == "class":
        m_var = inverse_gamma_draw(prior.ig_shape, prior.class_rate, rng, size=n_draws)
        a = rng.standard_normal(n_draws) * np.sqrt(m_var)
    elif kind == "dist":
        s2 = inverse_gamma_draw(prior.ig_shape, prior.dist_rate, rng, size=(n_draws, K))
        diff = rng.standard_normal((n_draws, K)) * np.sqrt(2.0 * s2)
        a = -np.linalg.norm(diff, axis=1)
    elif kind == "eigen":
        if prior.lambda_var is None:
            raise ValueError("resolve lambda_var before estimating")
        m = rng.standard_normal((n_draws, K)) * np.sqrt(prior.eigen_mean_var)
        sd = np.sqrt(prior.eigen_u_var)
        ui = m + sd * rng.standard_normal((n_draws, K))
        uj = m + sd * rng.standard_normal((n_draws, K))
        lam = rng.standard_normal((n_draws, K)) * np.sqrt(prior.lambda_var)
        a = np.sum(lam * ui * uj, axis=1)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return float(np.var(a))


def calibrate_prior_alpha_variance(kind, K, prior=None, n=None, n_draws=100_000, seed=0):
    """Rescale the alpha-spread parameters so Var[alpha] equals the target.

    Class and eigen priors have closed-form alpha variances.  For the
    distance model E[alpha^2] is exact and E[alpha] is estimated from
    ``n_draws`` prior draws at unit rate.
    """
    prior = PriorConfig() if prior is None else prior
    v = prior.target_alpha_var
    if v <= 0:
        raise ValueError("target alpha variance must be positive")
    if kind == "class":
        # alpha is a single M entry: Var = E[m_var]
        out = replace(prior, class_rate=v * (prior.ig_shape - 1.0))
    elif kind == "eigen":
        s2, w = prior.eigen_mean_var, prior.eigen_u_var
        fourth = 3 * s2**2 + 2 * w * s2 + w**2
        out = replace(prior, lambda_var=v / (K * fourth))
    elif kind == "dist":
        rng = make_rng(seed, "calibrate-dist")
        unit = replace(prior, dist_rate=1.0)
        s2 = inverse_gamma_draw(unit.ig_shape, 1.0, rng, size=(n_draws, K))
        diff = rng.standard_normal((n_draws, K)) * np.sqrt(2.0 * s2)
        mean_d = np.mean(np.linalg.norm(diff, axis=1))
        var_unit = 2.0 * K * _ig_mean(unit.ig_shape, 1.0) - mean_d**2
        out = replace(prior, dist_rate=v / var_unit)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    out = replace(out, calibrated=True)
    if n is not None:
        out = out.resolved(n)
    return out


def hyper_prior_mean(kind, K, prior):
    if kind == "class":
        return _ig_mean(prior.ig_shape, prior.class_rate)
    if kind == "dist":
        return np.full(K, _ig_mean(prior.ig_shape, prior.dist_rate))
    return np.zeros(K)


def draw_latent_from_prior(kind, n, K, prior, rng, hyper="draw"):
    """Latent state drawn from the prior.

    ``hyper="draw"`` also draws the hyperparameters; ``hyper="mean"`` fixes
    them at their prior means (used to initialise chains).
    """
    prior = prior.resolved(n)
    if kind == "class":
        m_var = (inverse_gamma_draw(prior.ig_shape, prior.class_rate, rng)
                 if hyper == "draw" else hyper_prior_mean(kind, K, prior))
        A = rng.standard_normal((K, K)) * np.sqrt(m_var)
        M = np.triu(A) + np.triu(A, 1).T
        labels = rng.integers(0, K, size=n)
        return ClassState(labels, M, float(m_var))
    if kind == "dist":
        pos_var = (inverse_gamma_draw(prior.ig_shape, prior.dist_rate, rng, size=K)
                   if hyper == "draw" else hyper_prior_mean(kind, K, prior))
        u = rng.standard_normal((n, K)) * np.sqrt(pos_var)
        return DistanceState(u, np.asarray(pos_var, float))
    if kind == "eigen":
        vec_mean = (rng.standard_normal(K) * np.sqrt(prior.eigen_mean_var)
                    if hyper == "draw" else np.zeros(K))
        u = vec_mean + rng.standard_normal((n, K)) * np.sqrt(prior.eigen_u_var)
        lam = rng.standard_normal(K) * np.sqrt(prior.lambda_var)
        return EigenState(u, lam, vec_mean)
    raise ValueError(f"unknown model kind {kind!r}")
