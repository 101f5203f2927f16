"""Free-fermion engine for the periodic transverse-field Ising ring.

All quantities live in the even-parity sector, whose fermion momenta are
``k = +-pi (2n - 1)/N``.  Each pair ``(k, -k)`` contributes an independent
factor: a two-level block (pair vacuum and pair double occupation) mixed by
the quench, plus two single-occupation states of zero energy that the quench
leaves untouched.  That makes the per-pair work distribution a five-atom
law, and every cumulant is an exact finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cumulants import cumulants_of_atoms
from .dataset import Dataset
from .errors import GaplessMode
from .exact import derivative
from .model import CumulantSet

ENGINE = "tfim"
GAP_TOL = 1e-14


@dataclass(frozen=True)
class ModeSet:
    """Positive momenta of a ring; the partners ``-k`` are implicit."""

    momenta: tuple
    n_sites: int

    def __post_init__(self):
        ks = tuple(float(k) for k in self.momenta)
        object.__setattr__(self, "momenta", ks)
        if any(not 0.0 < k < np.pi for k in ks):
            raise ValueError("momenta must lie in (0, pi)")
        if len(set(ks)) != len(ks):
            raise ValueError("momenta must be distinct")

    @classmethod
    def from_sites(cls, n_sites: int) -> "ModeSet":
        if n_sites < 2 or n_sites % 2:
            raise ValueError("the free-fermion engine needs an even N >= 2")
        n = np.arange(1, n_sites // 2 + 1)
        return cls(tuple(np.pi * (2 * n - 1) / n_sites), n_sites)

    @property
    def k(self) -> np.ndarray:
        return np.array(self.momenta)

    def __len__(self):
        return len(self.momenta)

    def union(self, other: "ModeSet") -> "ModeSet":
        if set(self.momenta) & set(other.momenta):
            raise ValueError("mode sets overlap")
        return ModeSet(self.momenta + other.momenta, self.n_sites + other.n_sites)

    def split(self, idx) -> tuple:
        """Partition into the modes at positions ``idx`` and the rest."""
        idx = set(int(i) for i in idx)
        a = tuple(k for i, k in enumerate(self.momenta) if i in idx)
        b = tuple(k for i, k in enumerate(self.momenta) if i not in idx)
        return ModeSet(a, 2 * len(a)), ModeSet(b, 2 * len(b))


def dispersion(k, lam):
    """``eps_k(lam) = 2 sqrt(sin^2 k + (lam - cos k)^2)``."""
    k = np.asarray(k, dtype=float)
    return 2.0 * np.hypot(np.sin(k), lam - np.cos(k))


def bogoliubov_angle(k, lam):
    """Angle ``phi_k`` with ``cos phi = (lam - cos k)/r`` and ``sin phi = sin k / r``."""
    k = np.asarray(k, dtype=float)
    if np.any(dispersion(k, lam) < GAP_TOL):
        raise GaplessMode(f"gapless mode at lambda={lam!r}")
    return np.arctan2(np.sin(k), lam - np.cos(k))


def delta_angle(k, lambda0, lambda_tau):
    """``Delta_k = phi_k(lambda_tau) - phi_k(lambda0)``."""
    return bogoliubov_angle(k, lambda_tau) - bogoliubov_angle(k, lambda0)


@dataclass(frozen=True)
class ModeWorkAtoms:
    """Per-mode five-atom work laws, one row per positive momentum.

    Column order: ground->ground, ground->excited, excited->excited,
    excited->ground, and the single-occupancy states (weight 2, zero work).
    """

    k: np.ndarray
    eps0: np.ndarray
    eps_tau: np.ndarray
    delta: np.ndarray
    works: np.ndarray
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def _log_mode_z(eps, beta):
    """``log(e^{b e} + e^{-b e} + 2) = 2 log(2 cosh(b e / 2))``, overflow-safe."""
    x = 0.5 * beta * np.asarray(eps)
    return 2.0 * (np.abs(x) + np.log1p(np.exp(-2.0 * np.abs(x))))


def mode_work_atoms(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float) -> ModeWorkAtoms:
    k = modes.k
    e0 = dispersion(k, lambda0)
    et = dispersion(k, lambda_tau)
    d = delta_angle(k, lambda0, lambda_tau)
    with np.errstate(divide="ignore"):
        lc = np.log(np.cos(0.5 * d) ** 2)
        ls = np.log(np.sin(0.5 * d) ** 2)
    be = beta * e0
    logw = np.stack([be + lc, be + ls, -be + lc, -be + ls, np.full_like(be, np.log(2.0))], axis=1)
    logw -= _log_mode_z(e0, beta)[:, None]
    works = np.stack([e0 - et, e0 + et, et - e0, -e0 - et, np.zeros_like(e0)], axis=1)
    return ModeWorkAtoms(k, e0, et, d, works, logw)


def _clse(z, axis):
    """Complex log-sum-exp along ``axis``."""
    shift = np.max(np.where(np.isfinite(z.real), z.real, -np.inf), axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    s = np.sum(np.exp(z - shift), axis=axis)
    return np.log(s) + np.squeeze(shift, axis=axis)


# atom j has work a_j eps0 + b_j eps_tau and initial weight exp(a_j beta eps0)
_A = np.array([1.0, 1.0, -1.0, -1.0, 0.0])
_B = np.array([-1.0, 1.0, 1.0, -1.0, 0.0])


def log_mode_factors(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float, u):
    """Unnormalised per-mode ``log f_k(u)``, shape ``(n_modes,) + shape(u)``.

    Exponents are grouped as ``a eps0 (beta + iu) + b eps_tau iu`` so that
    the ``beta eps0`` pieces cancel exactly at ``u = i beta``.
    """
    k = modes.k
    e0 = dispersion(k, lambda0)
    et = dispersion(k, lambda_tau)
    d = delta_angle(k, lambda0, lambda_tau)
    with np.errstate(divide="ignore"):
        lc = np.log(np.cos(0.5 * d) ** 2)
        ls = np.log(np.sin(0.5 * d) ** 2)
    lamp = np.stack([lc, ls, lc, ls, np.full_like(lc, np.log(2.0))], axis=1)
    u = np.asarray(u, dtype=complex).reshape(-1)
    z = (lamp[..., None]
         + _A[None, :, None] * e0[:, None, None] * (beta + 1j * u)[None, None, :]
         + _B[None, :, None] * et[:, None, None] * (1j * u)[None, None, :])
    return _clse(z, axis=1)


def log_chi_product(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float, u):
    """``log chi(u)`` as a sum of per-mode log factors; ``u`` may be complex and an array."""
    uu = np.asarray(u, dtype=complex)
    lf = log_mode_factors(modes, lambda0, lambda_tau, beta, uu)
    lz = _log_mode_z(dispersion(modes.k, lambda0), beta)
    out = (lf - lz[:, None]).sum(axis=0)
    return out.reshape(uu.shape) if uu.ndim else complex(out[0])


def chi_product(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float, u):
    """Characteristic function of the work for a sudden quench from the Gibbs state."""
    return np.exp(log_chi_product(modes, lambda0, lambda_tau, beta, u))


def partition_function(modes: ModeSet, lam: float, beta: float) -> float:
    """Even-sector ``log Z = sum_k 2 log(2 cosh(beta eps_k / 2))``."""
    return float(np.sum(_log_mode_z(dispersion(modes.k, lam), beta)))


def free_energy_diff(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float) -> float:
    return -(partition_function(modes, lambda_tau, beta) - partition_function(modes, lambda0, beta)) / beta


def jarzynski_residual(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float) -> float:
    """``|chi(i beta) exp(beta dF) - 1|``, accumulated mode by mode.

    Both factors are products over modes, so the log of their product is
    ``sum_k [log f_k(i beta) - log Z_k(lambda_tau)]``; summing the small
    per-mode differences avoids adding up terms of size ``beta eps``.
    """
    lf = log_mode_factors(modes, lambda0, lambda_tau, beta, 1j * beta)[:, 0]
    lz = _log_mode_z(dispersion(modes.k, lambda_tau), beta)
    return abs(np.expm1(np.sum(lf - lz)))


def cumulants_analytic(modes: ModeSet, lambda0: float, lambda_tau: float, beta: float,
                       n_max: int = 4) -> CumulantSet:
    """Exact work cumulants, summed over modes from the per-mode five-atom laws."""
    if not 1 <= n_max <= 10:
        raise ValueError("n_max must be in 1..10")
    at = mode_work_atoms(modes, lambda0, lambda_tau, beta)
    probs = at.probs
    total = np.zeros(n_max)
    for w, p in zip(at.works, probs):
        total += cumulants_of_atoms(w, p, n_max).as_array()
    return CumulantSet(tuple(total), ENGINE)


def magnetization(modes: ModeSet, lam: float, beta: float):
    """Thermal ``(<M_z>, Var M_z)`` from the pair populations.

    In each pair block ``M_z`` acts as ``2 cos(phi) sigma^z + 2 sin(phi) sigma^x``
    in the Bogoliubov basis and vanishes on the singly occupied states.
    """
    k = modes.k
    eps = dispersion(k, lam)
    phi = bogoliubov_angle(k, lam)
    x = 0.5 * beta * eps
    t = np.tanh(x)
    sech2 = 1.0 / np.cosh(np.minimum(x, 350.0)) ** 2
    mean = 2.0 * np.cos(phi) * t
    second = 4.0 - 2.0 * sech2
    return float(mean.sum()), float(np.sum(second - mean**2))


def magnetization_from_work(modes: ModeSet, lambda0: float, beta: float, dlam: float):
    """``(<M_z>, Var M_z)`` read off the first two work cumulants of a quench by ``dlam``."""
    if dlam == 0:
        raise ValueError("dlam must be nonzero")
    kset = cumulants_analytic(modes, lambda0, lambda0 + dlam, beta, 2)
    return -kset[1] / dlam, kset[2] / dlam**2


def _sweep_cumulants(modes, lambda0s, dlam, beta, n_max):
    return np.array([cumulants_analytic(modes, l0, l0 + dlam, beta, n_max).as_array()
                     for l0 in lambda0s])


def _meta(modes, **kw):
    meta = {"engine": ENGINE, "n_sites": modes.n_sites}
    meta.update(kw)
    return meta


def cumulant_table(modes: ModeSet, lambda0s, dlam: float, beta: float, n_max: int = 4) -> Dataset:
    """Columns ``lambda0, K1..Kn, K2/N, gamma`` for a sweep of quenches ``l0 -> l0 + dlam``."""
    lambda0s = np.asarray(lambda0s, dtype=float)
    ks = _sweep_cumulants(modes, lambda0s, dlam, beta, max(n_max, 3))
    cols = {"lambda0": lambda0s}
    units = {"lambda0": "dimensionless"}
    for n in range(1, n_max + 1):
        cols[f"K{n}"] = ks[:, n - 1]
        units[f"K{n}"] = "J" if n == 1 else f"J^{n}"
    cols["K2/N"] = ks[:, 1] / modes.n_sites
    units["K2/N"] = "J^2"
    with np.errstate(divide="ignore", invalid="ignore"):
        cols["gamma"] = ks[:, 2] / ks[:, 1] ** 1.5
    units["gamma"] = "dimensionless"
    return Dataset(cols, units, _meta(modes, beta=beta, dlam=dlam))


def variance_curve(modes: ModeSet, lambda0s, dlam: float, beta: float) -> Dataset:
    """``(lambda0, K2/N)`` across a sweep."""
    lambda0s = np.asarray(lambda0s, dtype=float)
    ks = _sweep_cumulants(modes, lambda0s, dlam, beta, 2)
    return Dataset({"lambda0": lambda0s, "K2/N": ks[:, 1] / modes.n_sites},
                   {"lambda0": "dimensionless", "K2/N": "J^2"},
                   _meta(modes, beta=beta, dlam=dlam))


def skewness_curve(modes: ModeSet, lambda0s, dlam: float, beta: float) -> Dataset:
    """``(lambda0, gamma sqrt(N))`` with ``gamma = K3/K2^(3/2)``.

    ``gamma_M*sqrt(N)`` divides ``K3`` by the cube of the magnetisation
    standard deviation instead, which is ``gamma |dlam|^3``.
    """
    lambda0s = np.asarray(lambda0s, dtype=float)
    ks = _sweep_cumulants(modes, lambda0s, dlam, beta, 3)
    root_n = np.sqrt(modes.n_sites)
    gamma = ks[:, 2] / ks[:, 1] ** 1.5
    return Dataset(
        {"lambda0": lambda0s, "K3": ks[:, 2], "gamma*sqrt(N)": gamma * root_n,
         "gamma_M*sqrt(N)": gamma * abs(dlam) ** 3 * root_n},
        {"lambda0": "dimensionless", "K3": "J^3", "gamma*sqrt(N)": "dimensionless",
         "gamma_M*sqrt(N)": "dimensionless"},
        _meta(modes, beta=beta, dlam=dlam))


def chi_tilde(modes: ModeSet, lambda0: float, beta: float, h: float = 1e-3) -> float:
    """``chi_M - beta Var M_z`` with ``chi_M`` a Richardson central difference of ``<M_z>``."""
    chi = derivative(lambda lam: magnetization(modes, lam, beta)[0], lambda0, 1, h)
    return chi - beta * magnetization(modes, lambda0, beta)[1]


def chi_tilde_curve(modes: ModeSet, beta: float, lambda0s, h: float = 1e-3) -> Dataset:
    """``(lambda0, chi_tilde/N)`` across a sweep."""
    lambda0s = np.asarray(lambda0s, dtype=float)
    vals = np.array([chi_tilde(modes, l0, beta, h) for l0 in lambda0s]) / modes.n_sites
    return Dataset({"lambda0": lambda0s, "chi_tilde/N": vals},
                   {"lambda0": "dimensionless", "chi_tilde/N": "1/J"},
                   _meta(modes, beta=beta, h=h))

