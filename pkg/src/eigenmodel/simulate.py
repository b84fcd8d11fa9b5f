"""Forward simulation of sociomatrices from the three latent variable models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import Sociomatrix
from .models import (
    ClassState,
    DistanceState,
    EigenState,
    GlobalParams,
    PriorConfig,
    alpha_dyads,
    calibrate_prior_alpha_variance,
    draw_latent_from_prior,
)
from .stats import make_rng

__all__ = ["Simulation", "simulate", "two_cluster_positions", "planted_partition"]


@dataclass
class Simulation:
    Y: Sociomatrix
    latent: object
    globals: GlobalParams
    theta: np.ndarray
    z: np.ndarray


def two_cluster_positions(n, K=2, separation=3.0, spread=1.0, seed=0):
    """Positions in two Gaussian clusters centred at +/- separation/2 on axis 0."""
    rng = make_rng(seed, "two-cluster")
    group = np.arange(n) % 2
    centre = np.zeros((n, K))
    centre[:, 0] = np.where(group == 0, -separation / 2.0, separation / 2.0)
    return centre + spread * rng.standard_normal((n, K)), group


def planted_partition(n, K=2, within=3.0, across=-3.0, seed=0):
    """Class state with balanced blocks and a two-valued M."""
    labels = np.arange(n) % K
    M = np.full((K, K), across, dtype=float)
    np.fill_diagonal(M, within)
    return ClassState(labels, M, 1.0)


def simulate(kind, n, K, latent=None, thresholds=(0.0,), beta=None, X=None,
             prior=None, seed=0):
    """Draw a sociomatrix from the model ``y = level(z)``, ``z ~ N(eta, 1)``.

    The latent state is drawn from the (calibrated) prior unless given.
    ``thresholds=(mu,)`` gives binary data with P(y=1) = Phi(eta - mu).
    """
    rng = make_rng(seed, "simulate", kind)
    if latent is None:
        prior = PriorConfig() if prior is None else prior
        if not prior.calibrated:
            prior = calibrate_prior_alpha_variance(kind, K, prior, n=n)
        latent = draw_latent_from_prior(kind, n, K, prior, rng)
    expected = {"class": ClassState, "dist": DistanceState, "eigen": EigenState}[kind]
    if not isinstance(latent, expected):
        raise ValueError(f"latent state does not match model kind {kind!r}")
    g = GlobalParams(np.zeros(0) if beta is None else beta, thresholds)
    e = alpha_dyads(latent)
    if e.size != n * (n - 1) // 2:
        raise ValueError("latent state size does not match n")
    if X is not None and g.beta.size:
        e = e + np.asarray(X, float) @ g.beta
    z = e + rng.standard_normal(e.size)
    y = np.searchsorted(g.thresholds, z)
    theta = ndtr(e - g.thresholds[0])
    labels = tuple(f"v{i}" for i in range(n))
    Y = Sociomatrix(labels, y, np.ones(y.size, dtype=bool))
    return Simulation(Y, latent, g, theta, z)

