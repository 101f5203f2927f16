"""Exact small-N two-measurement work statistics for sudden quenches.

Everything is computed from dense eigendecompositions.  Thermal weights are
kept in log form wherever an exponential of ``beta * H`` would otherwise
overflow (``beta = 100`` with ``|H| ~ 2N`` is routine).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .cumulants import cumulants_from_moments, cumulants_of_atoms, raw_moments
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    StepTooSmall,
    SupportViolation,
    TruncationNotConverged,
)
from .model import (
    DEFAULT_DENSE_CAP,
    CumulantSet,
    ModelKind,
    QuenchSpec,
    build_hamiltonian,
    quench_operator,
)

PROB_FLOOR = 1e-14
ENGINE = "exact"


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigen-decomposition of one Hamiltonian, grouped into degenerate levels.

    ``eigenvalues`` holds one entry per distinct level; ``raw_eigenvalues``
    and the columns of ``vectors`` hold one entry per basis state, and
    ``level_of[i]`` says which level column ``i`` belongs to.
    """

    matrix: np.ndarray = field(repr=False)
    raw_eigenvalues: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    level_of: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    multiplicities: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_levels(self) -> int:
        return len(self.eigenvalues)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.raw_eigenvalues)))

    @property
    def level_energies(self) -> np.ndarray:
        """Level energy of every eigenvector column."""
        return self.eigenvalues[self.level_of]

    def level_columns(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.level_of == n)

    def projector(self, n: int) -> np.ndarray:
        v = self.vectors[:, self.level_of == n]
        return v @ v.conj().T

    @property
    def projectors(self) -> list:
        return [self.projector(n) for n in range(self.n_levels)]

    def level_indicator(self) -> np.ndarray:
        """``(n_levels, dim)`` 0/1 matrix mapping eigenvector columns to levels."""
        ind = np.zeros((self.n_levels, self.dimension))
        ind[self.level_of, np.arange(self.dimension)] = 1.0
        return ind


def eigendecompose(h: np.ndarray, degeneracy_tol: Optional[float] = None) -> SpectralData:
    """Diagonalise ``h`` and merge eigenvalues closer than ``degeneracy_tol``.

    The default tolerance is ``1e-8 * max(|H|, 1)``.  Merging chains through
    consecutive sorted eigenvalues.
    """
    h = np.asarray(h)
    try:
        evals, evecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    scale = max(float(np.max(np.abs(evals))) if evals.size else 0.0, 1.0)
    tol = 1e-8 * scale if degeneracy_tol is None else degeneracy_tol
    breaks = np.diff(evals) > tol
    level_of = np.concatenate([[0], np.cumsum(breaks)]).astype(int)
    n_levels = int(level_of[-1]) + 1
    mult = np.bincount(level_of, minlength=n_levels)
    levels = np.bincount(level_of, weights=evals, minlength=n_levels) / mult
    return SpectralData(h, evals, evecs, level_of, levels, mult)


@dataclass(frozen=True, eq=False)
class DensityState:
    """A density matrix plus, for thermal states, its exact log-eigenvalues.

    ``log_weights[i]`` is the log-population of column ``i`` of
    ``basis.vectors``; it is carried so that weights like ``exp(-4000)`` are
    not lost to underflow when they get multiplied by ``exp(+beta W)``.
    """

    matrix: np.ndarray = field(repr=False)
    label: str
    log_weights: Optional[np.ndarray] = field(default=None, repr=False)
    basis: Optional[SpectralData] = field(default=None, repr=False)
    log_z: Optional[float] = None

    def __post_init__(self):
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > 1e-12 * max(1.0, self.matrix.shape[0] / 1024):
            raise ValueError(f"density matrix trace is {tr!r}")

    @classmethod
    def from_matrix(cls, matrix, label="CustomInitial", tol=1e-12) -> "DensityState":
        """Validate Hermiticity, unit trace and positivity of a user-supplied state."""
        matrix = np.asarray(matrix, dtype=complex)
        if np.max(np.abs(matrix - matrix.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(matrix).min() < -tol:
            raise ValueError("density matrix is not positive semidefinite")
        return cls(matrix, label)

    @classmethod
    def pure(cls, psi, label="CustomInitial") -> "DensityState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), label)

    def log_weights_in(self, spec: SpectralData) -> Optional[np.ndarray]:
        if self.log_weights is not None and self.basis is spec:
            return self.log_weights
        return None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _check_dims(*objs):
    dims = {o.dimension for o in objs}
    if len(dims) != 1:
        raise DimensionMismatch(f"dimensions differ: {sorted(dims)}")


def log_partition(spec: SpectralData, beta: float) -> float:
    return float(logsumexp(-beta * spec.raw_eigenvalues))


def gibbs_state(spec: SpectralData, beta: float) -> DensityState:
    """Thermal state ``exp(-beta H)/Z`` with ``log Z`` computed by log-sum-exp."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    e = spec.raw_eigenvalues
    logw = -beta * (e - e.min())
    log_zs = logsumexp(logw)
    logw = logw - log_zs
    log_z = float(log_zs - beta * e.min())
    v = spec.vectors
    rho = (v * np.exp(logw)) @ v.conj().T
    rho = rho / np.trace(rho).real
    return DensityState(rho, f"Gibbs(beta={beta!r})", logw, spec, log_z)


def project_state(rho0: DensityState, spec0: SpectralData) -> DensityState:
    """Dephase ``rho0`` in the eigenbasis of ``H(lambda0)``: ``sum_n P_n rho0 P_n``."""
    _check_dims(rho0, spec0)
    if rho0.log_weights_in(spec0) is not None:
        return rho0
    v = spec0.vectors
    rt = v.conj().T @ rho0.matrix @ v
    same = spec0.level_of[:, None] == spec0.level_of[None, :]
    out = v @ (rt * same) @ v.conj().T
    label = "ProjectedGibbs" if rho0.label.startswith("Gibbs") else "CustomProjected"
    return DensityState(out, label)


def _joint_log_mass(spec0: SpectralData, spec_tau: SpectralData, rho: DensityState):
    """Log-probabilities of (final eigenvector j, initial column/level) pairs.

    Returns ``(logm, works)`` with matching shapes ``(dim, K)``.  For thermal
    states with known log-weights ``K = dim`` (one column per initial
    eigenvector); otherwise ``K = n_levels`` of ``spec0`` and the mass is the
    degenerate-safe ``Tr[P_j P_n rho P_n]``.
    """
    _check_dims(spec0, spec_tau, rho)
    overlap = spec_tau.vectors.conj().T @ spec0.vectors
    e_tau = spec_tau.level_energies
    logw = rho.log_weights_in(spec0)
    with np.errstate(divide="ignore"):
        if logw is not None:
            logm = logw[None, :] + np.log(np.abs(overlap) ** 2)
            works = e_tau[:, None] - spec0.level_energies[None, :]
            return logm, works
        v = spec0.vectors
        rt = v.conj().T @ rho.matrix @ v
        mass = np.zeros((spec0.dimension, spec0.n_levels))
        for n in range(spec0.n_levels):
            cols = spec0.level_columns(n)
            o = overlap[:, cols]
            block = rt[np.ix_(cols, cols)]
            mass[:, n] = np.einsum("ja,ab,jb->j", o, block, o.conj()).real
        logm = np.log(np.clip(mass, 0.0, None))
    works = e_tau[:, None] - spec0.eigenvalues[None, :]
    return logm, works


@dataclass(frozen=True)
class WorkDistribution:
    """Discrete work distribution, atoms sorted ascending in W."""

    works: np.ndarray
    probs: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    @property
    def atoms(self):
        return list(zip(self.works.tolist(), self.probs.tolist()))

    def __len__(self):
        return len(self.works)

    def moments(self, n_max: int) -> list:
        return raw_moments(self.works, self.probs, n_max)

    def cumulants(self, n_max: int, source: str = ENGINE) -> CumulantSet:
        return cumulants_of_atoms(self.works, self.probs, n_max, source)

    def characteristic(self, u) -> complex:
        with np.errstate(divide="ignore"):
            z = np.log(self.probs) + 1j * u * self.works
        return complex(np.exp(_complex_logsumexp(z)))


def _merge_atoms(works, probs, tol):
    order = np.argsort(works, kind="stable")
    works, probs = works[order], probs[order]
    if len(works) == 0:
        return works, probs
    starts = np.concatenate([[True], np.diff(works) > tol])
    gid = np.cumsum(starts) - 1
    p = np.bincount(gid, weights=probs)
    w = np.bincount(gid, weights=probs * works) / p
    return w, p


def work_distribution(spec0: SpectralData, spec_tau: SpectralData, rho0p: DensityState,
                      merge_tol: Optional[float] = None) -> WorkDistribution:
    """Two-projective-measurement work distribution for a sudden quench.

    Atoms are ``E_m(lambda_tau) - E_n(lambda0)`` with mass
    ``Tr[P_m P_n rho P_n]``; masses below 1e-14 are dropped and atoms closer
    than ``merge_tol`` (default ``1e-9 * max|H|``) are merged.
    """
    logm, _ = _joint_log_mass(spec0, spec_tau, rho0p)
    ind_tau = spec_tau.level_indicator()
    if logm.shape[1] == spec0.dimension:
        ind0 = spec0.level_indicator().T
    else:
        ind0 = np.eye(spec0.n_levels)
    mass = ind_tau @ np.exp(logm) @ ind0
    works = spec_tau.eigenvalues[:, None] - spec0.eigenvalues[None, :]
    keep = mass > PROB_FLOOR
    if merge_tol is None:
        merge_tol = 1e-9 * max(spec0.norm, spec_tau.norm, 1.0)
    w, p = _merge_atoms(works[keep], mass[keep], merge_tol)
    return WorkDistribution(w, p)


def _complex_logsumexp(z) -> complex:
    z = np.ravel(z)
    finite = np.isfinite(z.real)
    if not finite.any():
        return complex(-np.inf)
    z = z[finite]
    shift = z.real.max()
    return complex(shift + np.log(np.sum(np.exp(z - shift))))


def log_characteristic_function(spec0, spec_tau, rho0p, u) -> complex:
    """``log chi(u)`` for complex ``u``, summed in log space."""
    logm, works = _joint_log_mass(spec0, spec_tau, rho0p)
    return _complex_logsumexp(logm + 1j * u * works)


def characteristic_function(spec0, spec_tau, rho0p, u) -> complex:
    """``chi(u) = Tr[exp(iu H_tau) exp(-iu H_0) rho0']`` for complex ``u``.

    Evaluated as a spectral sum, which stays finite at ``u = i beta`` for
    large ``beta``.  See :func:`characteristic_function_trace` for the
    literal dense trace.
    """
    return complex(np.exp(log_characteristic_function(spec0, spec_tau, rho0p, u)))


def characteristic_function_trace(spec0, spec_tau, rho0p, u) -> complex:
    """Literal ``Tr[exp(iu H_tau) exp(-iu H_0) rho0']`` with dense exponentials.

    Only safe when ``|Im u| * |H|`` is moderate.
    """
    _check_dims(spec0, spec_tau, rho0p)
    v0, vt = spec0.vectors, spec_tau.vectors
    u_tau = (vt * np.exp(1j * u * spec_tau.raw_eigenvalues)) @ vt.conj().T
    u_0 = (v0 * np.exp(-1j * u * spec0.raw_eigenvalues)) @ v0.conj().T
    return complex(np.sum(u_tau * (u_0 @ rho0p.matrix).T))


def moments_direct(spec0, spec_tau, rho0p, n_max: int) -> list:
    """``<W^n> = Tr[sum_k (-1)^k C(n,k) H_tau^(n-k) H_0^k rho0']`` for n = 1..n_max."""
    _check_dims(spec0, spec_tau, rho0p)
    # a common energy shift leaves every work value unchanged
    c = 0.5 * (spec0.raw_eigenvalues.max() + spec0.raw_eigenvalues.min())
    eye = np.eye(spec0.dimension)
    h0 = spec0.matrix - c * eye
    ht = spec_tau.matrix - c * eye
    right = [rho0p.matrix]
    left = [eye]
    for _ in range(n_max):
        right.append(h0 @ right[-1])
        left.append(left[-1] @ ht)
    out = []
    for n in range(1, n_max + 1):
        acc = 0.0
        for k in range(n + 1):
            acc += (-1) ** k * comb(n, k) * np.sum(left[n - k] * right[k].T)
        out.append(float(acc.real))
    return out


def moments_delta_h(spec0, spec_tau, rho0p, n_max: int) -> list:
    """``Tr[(H_tau - H_0)^n rho0']``, equal to ``<W^n>`` only for n <= 2 in general."""
    dh = spec_tau.matrix - spec0.matrix
    out = []
    p = np.eye(spec0.dimension)
    for _ in range(n_max):
        p = p @ dh
        out.append(float(np.sum(p * rho0p.matrix.T).real))
    return out


def _observable_distribution(rho: DensityState, m: np.ndarray):
    m = np.asarray(m)
    offdiag = m - np.diag(np.diag(m))
    if not np.any(offdiag):
        return np.diag(m).real, np.diag(rho.matrix).real
    vals, vecs = np.linalg.eigh(m)
    q = np.einsum("ia,ij,ja->a", vecs.conj(), rho.matrix, vecs).real
    return vals, q


def magnetization_genfun(rho0p: DensityState, m: np.ndarray, v) -> complex:
    """``G(v) = Tr[exp(i v M) rho0']``."""
    vals, q = _observable_distribution(rho0p, m)
    return complex(np.sum(q * np.exp(1j * v * vals)))


def mag_cumulants(rho0p: DensityState, m: np.ndarray, n_max: int) -> CumulantSet:
    """Cumulants ``C_1..C_n`` of the single projective measurement of ``m``."""
    vals, q = _observable_distribution(rho0p, m)
    return cumulants_of_atoms(vals, q, n_max, "magnetization")


def work_operator_genfun(spec0, spec_tau, rho0p, v) -> complex:
    """Generating function of the observable ``Delta E = H_tau - H_0`` over ``rho0'``."""
    vals, vecs = np.linalg.eigh(spec_tau.matrix - spec0.matrix)
    q = np.einsum("ia,ij,ja->a", vecs.conj(), rho0p.matrix, vecs).real
    return complex(np.sum(q * np.exp(1j * v * vals)))


# -- susceptibilities ------------------------------------------------------

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}
DEFAULT_STEPS = {1: 1e-3, 2: 1e-2, 3: 1e-2, 4: 1e-2}


def _central(f, x, j, h):
    vals = [(w, f(x + s * h)) for s, w in _STENCILS[j]]
    d = sum(w * fx for w, fx in vals) / h**j
    noise = np.finfo(float).eps * sum(abs(w * fx) for w, fx in vals) / h**j
    return d, noise


def derivative(f: Callable[[float], float], x: float, j: int, h: Optional[float] = None,
               levels: int = 2, rtol: float = 1e-3, atol: float = 1e-12) -> float:
    """Central finite difference of order ``j`` with Richardson step halving.

    Raises
    ------
    StepTooSmall
        If the round-off estimate exceeds ``rtol * |value|`` and ``atol``.
    """
    if j not in _STENCILS:
        raise ValueError(f"derivative order {j} not supported")
    h = DEFAULT_STEPS[j] if h is None else h
    table = []
    noise = 0.0
    for lev in range(levels):
        d, nz = _central(f, x, j, h / 2**lev)
        table.append(d)
        noise = max(noise, nz)
    # every stencil here has an even error expansion in h
    for k in range(1, levels):
        fac = 4.0**k
        table = [(fac * table[i + 1] - table[i]) / (fac - 1) for i in range(len(table) - 1)]
    value = table[0]
    noise *= 2.0 ** (j * (levels - 1))
    if noise > rtol * abs(value) and noise > atol:
        raise StepTooSmall(f"round-off {noise:.2e} swamps derivative {value:.2e} (h={h})")
    return float(value)


def thermal_magnetization(model: ModelKind, n_sites: int, lam: float, beta: float,
                          cap: int = DEFAULT_DENSE_CAP):
    """``(<M>, Var M)`` of the Gibbs state of ``H(lam)``, with ``M`` the quench operator."""
    spec = eigendecompose(build_hamiltonian(model, n_sites, lam, cap))
    rho = gibbs_state(spec, beta)
    c = mag_cumulants(rho, quench_operator(model, n_sites, cap), 2)
    return c[1], c[2]


def susceptibility_order_j(family: Callable[[float], float], lambda0: float, j: int,
                           h: Optional[float] = None, levels: int = 2) -> float:
    """``chi^(j) = (1/j!) d^j <M>/d lambda^j`` at ``lambda0``; ``family`` maps lam to ``<M>``."""
    if j not in (1, 2, 3):
        raise ValueError("susceptibility order must be 1, 2 or 3")
    return derivative(family, lambda0, j, h, levels) / factorial(j)


def magnetization_family(model: ModelKind, n_sites: int, beta: float,
                         cap: int = DEFAULT_DENSE_CAP) -> Callable[[float], float]:
    return lambda lam: thermal_magnetization(model, n_sites, lam, beta, cap)[0]


def chi_tilde_difference(model: ModelKind, n_sites: int, lambda0: float, beta: float,
                         h: float = 1e-3, levels: int = 2,
                         cap: int = DEFAULT_DENSE_CAP) -> float:
    """Non-commuting susceptibility correction ``chi_M - beta Var(M)``.

    ``chi_M`` comes from a finite difference of the thermal magnetisation.
    """
    # only absolute accuracy matters here, chi_M itself may be ~0 when saturated
    chi = derivative(magnetization_family(model, n_sites, beta, cap), lambda0, 1, h, levels,
                     atol=1e-10)
    _, var = thermal_magnetization(model, n_sites, lambda0, beta, cap)
    return chi - beta * var


@dataclass(frozen=True)
class SeriesResult:
    value: float
    remainder: float
    n_terms: int


def chi_tilde_series(model: ModelKind, n_sites: int, lambda0: float, beta: float,
                     n_cut: Optional[int] = None, tol: float = 1e-8, max_terms: int = 200,
                     cap: int = DEFAULT_DENSE_CAP) -> SeriesResult:
    """Truncated double series for the susceptibility correction.

    The trace of each order ``n`` term,
    ``(-beta)^n/n! sum_k Tr[[H^k, M] M H^(n-k-1)]`` with ``H = H_ss - lambda0 M``,
    is evaluated in the eigenbasis of ``H`` after shifting ``H`` by the
    midpoint of its spectrum (the normalised series is shift invariant and
    the shift keeps the alternating terms from cancelling catastrophically).

    With ``n_cut=None`` terms are added until the last two fall below
    ``tol`` relative to the partial sum (and the terms have passed their
    peak), up to ``max_terms``.  The remainder estimate is the larger of
    the last two term magnitudes over the partial sum.

    Raises
    ------
    TruncationNotConverged
        If the remainder estimate is still above ``tol`` at the cut, or the
        cut comes before the terms peak (order ``~ beta`` times the spectral
        half-width).
    """
    h = build_hamiltonian(model, n_sites, lambda0, cap)
    m = quench_operator(model, n_sites, cap)
    e, v = np.linalg.eigh(h)
    x = -beta * (e - 0.5 * (e.max() + e.min()))
    xmax = float(x.max())
    if xmax > 700.0:
        # exp(-xmax) underflows, and the terms peak near order xmax anyway
        raise TruncationNotConverged(
            f"beta * spectral half-width = {xmax:.1f} is out of reach of the series")
    mt = v.conj().T @ m @ v
    a = np.abs(mt) ** 2
    z = float(np.sum(np.exp(x - xmax)))
    # scale factor exp(-xmax) rides along with every power series
    p_prev = np.full_like(x, math.exp(-xmax))          # x_a^(n-1)/(n-1)! * exp(-xmax)
    q = np.full(a.shape, math.exp(-xmax))               # h_(n-1)(x_a, x_b)/n! * exp(-xmax)
    scale = beta * float(np.sum(a * np.exp(x - xmax)[:, None])) / z
    limit = max_terms if n_cut is None else n_cut
    total = 0.0
    last = [0.0, 0.0]
    n = 0
    for n in range(1, limit + 1):
        term = -beta * float(np.sum(a * (p_prev[:, None] - q))) / z
        total += term
        # symmetric spectra make every other term vanish, so look at two
        last = [last[1], abs(term)]
        # advance to order n+1
        p_next = p_prev * x / n
        q = (x[:, None] * q + p_next[None, :]) / (n + 1)
        p_prev = p_next
        if n_cut is None and n > abs(x).max() and max(last) <= tol * max(abs(total), scale):
            break
    remainder = max(last) / max(abs(total), scale) if scale > 0 else 0.0
    # before the peak the tail dominates however small the last terms look
    if remainder > tol or n <= abs(x).max():
        raise TruncationNotConverged(
            f"series remainder {remainder:.2e} after {n} terms (beta*|H| ~ {abs(x).max():.1f})")
    return SeriesResult(total, remainder, n)


# -- fluctuation theorems --------------------------------------------------

def free_energy_diff(log_z0: float, log_ztau: float, beta: float) -> float:
    return -(log_ztau - log_z0) / beta


def jarzynski_check(spec0: SpectralData, spec_tau: SpectralData, beta: float) -> float:
    """Relative Jarzynski residual ``|chi(i beta) exp(beta dF) - 1|`` for the Gibbs state."""
    rho = gibbs_state(spec0, beta)
    log_chi = log_characteristic_function(spec0, spec_tau, rho, 1j * beta)
    df = free_energy_diff(rho.log_z, log_partition(spec_tau, beta), beta)
    return abs(np.expm1(log_chi + beta * df))


def crooks_residual(spec0: SpectralData, spec_tau: SpectralData, beta: float, u) -> float:
    """``|chi(u)/chi_back(i beta - u) exp(beta dF) - 1|`` with the reversed quench."""
    fwd = gibbs_state(spec0, beta)
    bwd = gibbs_state(spec_tau, beta)
    df = free_energy_diff(fwd.log_z, bwd.log_z, beta)
    lf = log_characteristic_function(spec0, spec_tau, fwd, u)
    lb = log_characteristic_function(spec_tau, spec0, bwd, 1j * beta - u)
    return abs(np.expm1(lf - lb + beta * df))


@dataclass(frozen=True)
class SeriesSums:
    """Partial sums of the cumulant expansions of dF and of the lag.

    ``free_energy[i]`` sums orders 1..i+1; ``lag[i]`` sums orders 2..i+1
    (so ``lag[0]`` is 0).
    """

    free_energy: np.ndarray
    lag: np.ndarray
    delta_f: Optional[float] = None
    lag_exact: Optional[float] = None


def cumulant_series_sums(k: CumulantSet, beta: float, delta_f: Optional[float] = None) -> SeriesSums:
    """Partial sums of ``sum (-beta)^(n-1)/n! K_n`` and ``sum_{n>=2} (-beta)^n/n! K_n``."""
    kv = k.as_array()
    n = np.arange(1, len(kv) + 1)
    fact = np.array([float(factorial(i)) for i in n])
    df_terms = (-beta) ** (n - 1) / fact * kv
    lag_terms = np.where(n >= 2, (-beta) ** n / fact * kv, 0.0)
    lag_exact = None if delta_f is None else beta * (kv[0] - delta_f)
    return SeriesSums(np.cumsum(df_terms), np.cumsum(lag_terms), delta_f, lag_exact)


def _log_matrix(rho: DensityState, tol: float):
    """Eigenvalues, log-eigenvalues and eigenvectors of a density matrix."""
    if rho.log_weights is not None:
        return np.exp(rho.log_weights), rho.log_weights, rho.basis.vectors
    vals, vecs = np.linalg.eigh(rho.matrix)
    vals = np.clip(vals, 0.0, None)
    with np.errstate(divide="ignore"):
        logs = np.where(vals > tol, np.log(np.where(vals > 0, vals, 1.0)), -np.inf)
    return vals, logs, vecs


def neq_lag_relative_entropy(rho: DensityState, sigma: DensityState, tol: float = 1e-12) -> float:
    """Relative entropy ``Tr[rho log rho - rho log sigma]``.

    Raises
    ------
    SupportViolation
        If ``rho`` has weight above ``tol`` on the kernel of ``sigma``.
    """
    _check_dims(rho, sigma)
    p, logp, _ = _log_matrix(rho, tol)
    s, logs, vs = _log_matrix(sigma, tol)
    # populations of rho in the eigenbasis of sigma
    q = np.einsum("ia,ij,ja->a", vs.conj(), rho.matrix, vs).real
    outside = ~np.isfinite(logs)
    if np.any(q[outside] > tol):
        raise SupportViolation(f"rho puts weight {q[outside].sum():.2e} outside supp(sigma)")
    ent = float(np.sum(np.where(p > 0, p * np.where(np.isfinite(logp), logp, 0.0), 0.0)))
    cross = float(np.sum(q[~outside] * logs[~outside]))
    return ent - cross


@dataclass(frozen=True)
class SuddenBound:
    """Upper bound on the ramp time; ``unbounded`` when every transition element vanishes."""

    tau_max: float
    unbounded: bool
    elements: np.ndarray = field(repr=False)
    argmax: int = -1


def sudden_quench_bound(spec_tau: SpectralData, b: np.ndarray, initial_state, lambda_tau: float,
                        zero_tol: float = 1e-14) -> SuddenBound:
    """Bound ``2 / (|lambda_tau| max_n |<n(lambda_tau)| B |i>|)`` for a linear ramp.

    Only transitions out of ``|i>`` count, so the component of ``B|i>``
    along ``|i>`` itself is removed before projecting onto the final
    eigenbasis.  ``elements`` holds the magnitude for every final eigenvector.
    """
    psi = np.asarray(initial_state, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    bpsi = b @ psi
    bpsi = bpsi - np.vdot(psi, bpsi) * psi
    elems = np.abs(spec_tau.vectors.conj().T @ bpsi)
    big = float(elems.max()) if elems.size else 0.0
    if big < zero_tol or abs(lambda_tau) * big < zero_tol:
        return SuddenBound(math.inf, True, elems)
    return SuddenBound(2.0 / (abs(lambda_tau) * big), False, elems, int(np.argmax(elems)))


# -- convenience bundle ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExactQuench:
    """Eigen-data and Gibbs state of one quench, built once and queried many times."""

    quench: QuenchSpec
    spec0: SpectralData
    spec_tau: SpectralData
    rho: DensityState

    @classmethod
    def from_spec(cls, q: QuenchSpec, cap: int = DEFAULT_DENSE_CAP) -> "ExactQuench":
        s0 = eigendecompose(build_hamiltonian(q.model, q.n_sites, q.lambda0, cap))
        if q.dlam == 0:
            st = s0
        else:
            st = eigendecompose(build_hamiltonian(q.model, q.n_sites, q.lambda_tau, cap))
        return cls(q, s0, st, gibbs_state(s0, q.beta))

    def distribution(self, merge_tol=None) -> WorkDistribution:
        return work_distribution(self.spec0, self.spec_tau, self.rho, merge_tol)

    def chi(self, u) -> complex:
        return characteristic_function(self.spec0, self.spec_tau, self.rho, u)

    def log_chi(self, u) -> complex:
        return log_characteristic_function(self.spec0, self.spec_tau, self.rho, u)

    def cumulants(self, n_max: int) -> CumulantSet:
        return self.distribution().cumulants(n_max)

    def moments(self, n_max: int) -> list:
        return moments_direct(self.spec0, self.spec_tau, self.rho, n_max)

    @property
    def delta_f(self) -> float:
        return free_energy_diff(self.rho.log_z, log_partition(self.spec_tau, self.quench.beta),
                                self.quench.beta)

    @property
    def mean_work(self) -> float:
        return float(np.sum(self.rho.matrix * (self.spec_tau.matrix - self.spec0.matrix).T).real)

    @property
    def lag(self) -> float:
        return self.quench.beta * (self.mean_work - self.delta_f)
