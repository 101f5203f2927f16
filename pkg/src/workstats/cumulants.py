"""Moment and cumulant conversions for discrete distributions."""

from __future__ import annotations

from math import comb

import numpy as np

from .errors import InsufficientOrder
from .model import CumulantSet


def cumulants_from_moments(moments, source="moments") -> CumulantSet:
    """Raw moments ``mu_1..mu_n`` to cumulants ``K_1..K_n``.

    Uses ``K_n = mu_n - sum_{m=1}^{n-1} C(n-1, m-1) K_m mu_{n-m}``.
    """
    mu = [1.0] + [float(m) for m in moments]
    n_max = len(mu) - 1
    if n_max < 1:
        raise InsufficientOrder("need at least the first moment")
    kappa = [0.0] * (n_max + 1)
    for n in range(1, n_max + 1):
        acc = mu[n]
        for m in range(1, n):
            acc -= comb(n - 1, m - 1) * kappa[m] * mu[n - m]
        kappa[n] = acc
    return CumulantSet(tuple(kappa[1:]), source)


def central_moments(values, probs, n_max):
    """Mean and central moments ``E[(X - mean)^n]`` for n = 1..n_max (first is 0)."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    mean = float(np.dot(probs, values)) / float(probs.sum())
    d = values - mean
    out = []
    power = np.ones_like(d)
    for _ in range(n_max):
        power = power * d
        out.append(float(np.dot(probs, power)))
    out[0] = 0.0
    return mean, out


def raw_moments(values, probs, n_max):
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    return [float(np.dot(probs, values**n)) for n in range(1, n_max + 1)]


def cumulants_of_atoms(values, probs, n_max, source="atoms") -> CumulantSet:
    """Cumulants of a discrete distribution.

    Central moments are fed through the recursion and the mean restored
    afterwards, since higher cumulants are shift invariant and this avoids
    cancellation against a large mean.
    """
    if n_max < 1:
        raise InsufficientOrder("n_max must be >= 1")
    mean, cm = central_moments(values, probs, n_max)
    k = list(cumulants_from_moments(cm).values)
    k[0] = mean
    return CumulantSet(tuple(k), source)
