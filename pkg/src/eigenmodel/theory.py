"""Numerical checks of how the three alpha families contain one another.

Covers rank bounds for completed class matrices and squared-distance
matrices, the sphere embedding of distances into an inner-product model,
the "star" eigenmodel matrix, and a multi-restart search for distance
configurations that reproduce the star's entry ordering.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import kendalltau

from .models import ClassState, EigenState, alpha_matrix
from .stats import make_rng

__all__ = [
    "AlphaMatrix",
    "complete_class_matrix",
    "numerical_rank",
    "squared_distance_rank_check",
    "sphere_embedding",
    "order_agreement",
    "star_eigen_matrix",
    "distance_feasibility_search",
    "smallest_sufficient_radius",
    "TheoryCheck",
    "check_theory",
]


@dataclass(frozen=True)
class AlphaMatrix:
    """Off-diagonal entries of a symmetric matrix, optionally with a diagonal."""

    n: int
    entries: np.ndarray
    diagonal: np.ndarray | None = None

    def __post_init__(self):
        if np.asarray(self.entries).shape != (self.n * (self.n - 1) // 2,):
            raise ValueError("entries must hold the n(n-1)/2 upper-triangle values")

    @classmethod
    def from_full(cls, m, keep_diagonal=False):
        m = np.asarray(m, float)
        n = m.shape[0]
        return cls(n, m[np.triu_indices(n, 1)], np.diag(m).copy() if keep_diagonal else None)

    def full(self, fill=0.0):
        out = np.zeros((self.n, self.n))
        iu, ju = np.triu_indices(self.n, 1)
        out[iu, ju] = self.entries
        out[ju, iu] = self.entries
        np.fill_diagonal(out, fill if self.diagonal is None else self.diagonal)
        return out


def complete_class_matrix(state: ClassState) -> AlphaMatrix:
    """Class-model alpha matrix with diagonal completed by ``M[c_i, c_i]``."""
    full = state.M[np.ix_(state.labels, state.labels)]
    return AlphaMatrix.from_full(full, keep_diagonal=True)


def numerical_rank(m, tol_factor=1e-8):
    s = np.linalg.svd(np.asarray(m, float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol_factor * s[0]))


def squared_distance_rank_check(positions, tol_factor=1e-8):
    """Squared-distance matrix built as ``s 1' + 1 s' - 2 Z Z'`` and its rank."""
    Z = np.atleast_2d(np.asarray(positions, float))
    s = np.sum(Z * Z, axis=1)
    one = np.ones_like(s)
    D2 = np.outer(s, one) + np.outer(one, s) - 2.0 * Z @ Z.T
    return D2, numerical_rank(D2, tol_factor)


def sphere_embedding(positions, r):
    """Lift points to ``(z_i, sqrt(r^2 - |z_i|^2))`` with identity eigenvalues.

    For large ``r`` the inner products are close to ``r^2 - |z_i - z_j|^2 / 2``,
    an increasing function of the negative distance.
    """
    Z = np.atleast_2d(np.asarray(positions, float))
    sq = np.sum(Z * Z, axis=1)
    if not r * r > sq.max():
        raise ValueError("radius must exceed the largest point norm")
    U = np.column_stack([Z, np.sqrt(r * r - sq)])
    return EigenState(U, np.ones(U.shape[1]))


def _entries(a):
    if isinstance(a, AlphaMatrix):
        return a.entries
    a = np.asarray(a, float)
    if a.ndim == 2:
        return a[np.triu_indices(a.shape[0], 1)]
    return a


def order_agreement(a, b):
    """Kendall tau-b between the off-diagonal entries of two matrices."""
    ea, eb = _entries(a), _entries(b)
    if ea.shape != eb.shape:
        raise ValueError("matrices must have the same size")
    return float(kendalltau(ea, eb).statistic)


def star_eigen_matrix(n, r):
    """Rank-one matrix from Lambda=1, u_1=1, u_i=r: entries r next to node 0, r^2 elsewhere."""
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    if n < 3:
        raise ValueError("need n >= 3")
    u = np.full(n, r)
    u[0] = 1.0
    return AlphaMatrix.from_full(np.outer(u, u))


def _order_constraints(target):
    """Pairs (a, b) of entry indices with target[a] > target[b]."""
    e = _entries(target)
    a, b = np.nonzero(e[:, None] > e[None, :])
    return a, b


@dataclass
class FeasibilityResult:
    n: int
    K: int
    best_violation: float
    violations: np.ndarray
    best_positions: np.ndarray

    @property
    def feasible(self):
        return self.best_violation == 0.0


def distance_feasibility_search(target, K, restarts=200, margin=0.05, seed=0):
    """Search for points whose negative distances follow ``target``'s ordering.

    Every strict relation ``target[a] > target[b]`` requires
    ``d_a + margin * mean(d) <= d_b``.  Each restart minimises the squared
    hinge from a random start with L-BFGS (optimising against 1.5x the
    margin so solutions land strictly inside) and is scored by the plain
    hinge sum.  Returns the best score; 0 means a configuration was found.
    """
    n = target.n
    ca, cb = _order_constraints(target)
    iu, ju = np.triu_indices(n, 1)
    P = iu.size
    rng = make_rng(seed, "feasibility", n, K)

    def dists(x):
        X = x.reshape(n, K)
        diff = X[iu] - X[ju]
        return np.sqrt(np.sum(diff * diff, axis=1) + 1e-300), diff

    def loss(x, m):
        d, diff = dists(x)
        s = d.mean()
        h = np.maximum(0.0, (d[ca] - d[cb]) / s + m)
        # gradient with respect to each distance
        gd = np.zeros(P)
        np.add.at(gd, ca, 2 * h / s)
        np.add.at(gd, cb, -2 * h / s)
        gd -= np.sum(2 * h * (d[ca] - d[cb])) / (s * s * P)
        gX = np.zeros((n, K))
        contrib = (gd / d)[:, None] * diff
        np.add.at(gX, iu, contrib)
        np.add.at(gX, ju, -contrib)
        return float(np.sum(h * h)), gX.ravel()

    def hinge(x):
        d, _ = dists(x)
        return float(np.sum(np.maximum(0.0, (d[ca] - d[cb]) / d.mean() + margin)))

    scores = np.empty(restarts)
    best, best_x = np.inf, None
    for t in range(restarts):
        x0 = rng.standard_normal(n * K)
        res = minimize(loss, x0, args=(1.5 * margin,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        scores[t] = hinge(res.x)
        if scores[t] < best:
            best, best_x = scores[t], res.x.reshape(n, K)
    return FeasibilityResult(n, K, float(best), scores, best_x)


def smallest_sufficient_radius(positions, factors=(1.01, 2, 5, 10, 20, 50, 100, 1000)):
    """First ``factor * max|z|`` whose sphere embedding preserves the distance order."""
    Z = np.atleast_2d(np.asarray(positions, float))
    base = np.sqrt(np.max(np.sum(Z * Z, axis=1)))
    neg_d = alpha_matrix_from_positions(Z)
    for f in factors:
        e = alpha_matrix(sphere_embedding(Z, f * base))
        if order_agreement(neg_d, e) == 1.0:
            return f * base
    return None


def alpha_matrix_from_positions(Z):
    diff = Z[:, None, :] - Z[None, :, :]
    return -np.sqrt(np.sum(diff * diff, axis=2))


@dataclass
class TheoryCheck:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_theory(seed=0, class_instances=1000, restarts=200):
    """Run the full battery of representation checks; one entry per property."""
    rng = make_rng(seed, "theory")
    out = []

    worst = 0
    ok = True
    for _ in range(class_instances):
        n = int(rng.integers(4, 41))
        K = int(rng.integers(1, 7))
        A = rng.standard_normal((K, K))
        st = ClassState(rng.integers(0, K, size=n), A + A.T)
        rank = numerical_rank(complete_class_matrix(st).full())
        bound = min(K, np.unique(st.labels).size)
        ok &= rank <= bound
        worst = max(worst, rank - bound)
    out.append(TheoryCheck(
        "class completion rank <= K", bool(ok),
        f"{class_instances} random instances, max(rank - bound) = {worst}"))

    ranks = {}
    for K in (1, 2, 3):
        _, ranks[K] = squared_distance_rank_check(rng.standard_normal((50, K)))
    out.append(TheoryCheck(
        "squared distances rank <= K+2 (n=50)",
        all(ranks[K] <= K + 2 for K in ranks),
        ", ".join(f"K={K}: rank {r}" for K, r in ranks.items())))

    Z = rng.standard_normal((20, 2))
    rmax = np.sqrt(np.max(np.sum(Z * Z, axis=1)))
    tau = order_agreement(alpha_matrix_from_positions(Z),
                          alpha_matrix(sphere_embedding(Z, 1e3 * rmax)))
    rmin = smallest_sufficient_radius(Z)
    out.append(TheoryCheck(
        "sphere embedding preserves distance order (n=20, K=2)", tau == 1.0,
        f"Kendall tau = {tau:.6f} at r = 1e3 max|z|; smallest tested r with tau=1: "
        f"{'none' if rmin is None else f'{rmin / rmax:g} max|z|'}"))

    ok = True
    for n in range(3, 51):
        for r in np.arange(1, 10) / 10:
            e = star_eigen_matrix(n, r).full()
            centre = e[0, 1:]
            rest = e[1:, 1:][np.triu_indices(n - 1, 1)]
            ok &= bool(np.all(centre == centre[0]) and centre.min() > rest.max())
    out.append(TheoryCheck("star eigen matrix ordering (n<=50)", ok,
                           "e[0,i] = r > r^2 = e[i,j] for r in 0.1..0.9"))

    for n, K, want_feasible in ((3, 1, True), (6, 2, True), (7, 2, False)):
        res = distance_feasibility_search(star_eigen_matrix(n, 0.5), K, restarts, seed=seed)
        if want_feasible:
            passed = res.best_violation == 0.0
        else:
            passed = bool(np.all(res.violations > 0.0))
        out.append(TheoryCheck(
            f"distance model matches star ordering (n={n}, K={K}): "
            f"{'feasible' if want_feasible else 'infeasible'}",
            passed,
            f"best violation {res.best_violation:.4g} over {restarts} restarts"))
    return out
