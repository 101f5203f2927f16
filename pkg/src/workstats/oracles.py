"""Brute-force references for the engines.

Nothing here imports the exact or free-fermion engines; the only shared
pieces are the exception types.  Mode ordering for the fermion register is
ascending ``|k|`` with ``+k`` before ``-k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import factorial
from typing import Callable, Optional

import numpy as np

from .errors import CapExceeded, StepTooSmall

MODE_ORDERING = "ascending |k|, +k before -k"
FOCK_CAP = 12

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "y": np.array([[0.0, -1j], [1j, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "i": np.eye(2),
}


def pauli_string(n_sites: int, ops: dict) -> np.ndarray:
    """Kronecker product with ``ops[i]`` on site ``i``; site 0 is the least significant bit."""
    mats = [_PAULI[ops.get(i, "i")] for i in reversed(range(n_sites))]
    return reduce(np.kron, mats)


def pauli_chain_hamiltonian(n_sites: int, lam: float, coupling: str = "x") -> np.ndarray:
    """``-sum_i s^a_i s^a_(i+1) - lam sum_i s^z_i`` on a ring, assembled from Kronecker products."""
    if n_sites < 2:
        raise ValueError("a ring needs two sites")
    h = 0
    for i in range(n_sites):
        # N=2 visits the single bond twice, as a ring should
        h = h - pauli_string(n_sites, {i: coupling, (i + 1) % n_sites: coupling})
        h = h - lam * pauli_string(n_sites, {i: "z"})
    return np.real_if_close(h)


def two_site_spectrum(lam: float) -> np.ndarray:
    """Hand-diagonalised N=2 ring: the bond term appears twice, giving two 2x2 blocks."""
    r = 2.0 * np.sqrt(lam**2 + 1.0)
    return np.sort([-r, -2.0, 2.0, r])


@dataclass(frozen=True, eq=False)
class FockOperatorSet:
    """Dense annihilation operators of an ordered fermion register.

    ``c[j]`` carries the sign string of every mode before ``j``; bit ``j`` of
    the basis index is the occupation of mode ``j``.
    """

    labels: tuple
    c: tuple

    @classmethod
    def build(cls, labels, cap: int = FOCK_CAP) -> "FockOperatorSet":
        n = len(labels)
        if n > cap:
            raise CapExceeded(f"{n} fermion modes exceed the dense cap {cap}")
        dim = 2**n
        idx = np.arange(dim)
        ops = []
        for j in range(n):
            occ = (idx >> j) & 1
            below = idx & ((1 << j) - 1)
            sign = (-1.0) ** np.array([bin(b).count("1") for b in below])
            m = np.zeros((dim, dim))
            src = idx[occ == 1]
            m[src ^ (1 << j), src] = sign[occ == 1]
            ops.append(m)
        return cls(tuple(labels), tuple(ops))

    @property
    def n_modes(self) -> int:
        return len(self.c)

    @property
    def dimension(self) -> int:
        return 2**self.n_modes

    def cdag(self, j: int) -> np.ndarray:
        return self.c[j].T

    def number(self, j: int) -> np.ndarray:
        return self.cdag(j) @ self.c[j]

    def car_deviation(self) -> float:
        """Largest entry deviation from the canonical anticommutation relations."""
        eye = np.eye(self.dimension)
        worst = 0.0
        for a in range(self.n_modes):
            for b in range(self.n_modes):
                ca, cb = self.c[a], self.c[b]
                worst = max(worst, np.max(np.abs(ca @ cb + cb @ ca)))
                target = eye if a == b else 0.0
                worst = max(worst, np.max(np.abs(ca @ cb.T + cb.T @ ca - target)))
        return float(worst)


def _positive_momenta(modes) -> np.ndarray:
    return np.sort(np.asarray(getattr(modes, "momenta", modes), dtype=float))


def fock_register(modes, cap: int = FOCK_CAP) -> FockOperatorSet:
    labels = []
    for k in _positive_momenta(modes):
        labels += [k, -k]
    return FockOperatorSet.build(labels, cap)


def fermion_hamiltonian(modes, lam: float, register: Optional[FockOperatorSet] = None) -> np.ndarray:
    """Momentum-space quadratic Hamiltonian in the bare fermion register.

    Each pair contributes
    ``2 (lam - cos k)(n_k + n_-k - 1) + 2 sin k (c+_k c+_-k + c_-k c_k)``.
    """
    reg = fock_register(modes) if register is None else register
    eye = np.eye(reg.dimension)
    h = np.zeros((reg.dimension, reg.dimension))
    for p, k in enumerate(_positive_momenta(modes)):
        a, b = 2 * p, 2 * p + 1
        pair = reg.cdag(a) @ reg.cdag(b)
        h += 2.0 * (lam - np.cos(k)) * (reg.number(a) + reg.number(b) - eye)
        h += 2.0 * np.sin(k) * (pair + pair.T)
    return h


def _eps_phi(k, lam):
    r = np.sqrt(np.sin(k) ** 2 + (lam - np.cos(k)) ** 2)
    return 2.0 * r, np.arctan2(np.sin(k) / r, (lam - np.cos(k)) / r)


def bogoliubov_hamiltonian(modes, lam: float, lambda_ref: Optional[float] = None,
                           register: Optional[FockOperatorSet] = None) -> np.ndarray:
    """``sum_k eps_k(lam) (g'+_k g'_k - 1/2)`` written in the quasiparticles of ``lambda_ref``.

    The register modes are the quasiparticles ``g`` of ``H(lambda_ref)``; the
    rotated ones are ``g'_k = g_k cos(D/2) + g+_-k sin(D/2)`` and
    ``g'_-k = g_-k cos(D/2) - g+_k sin(D/2)`` with ``D`` the angle difference.
    With ``lambda_ref=None`` the result is diagonal.
    """
    reg = fock_register(modes) if register is None else register
    ref = lam if lambda_ref is None else lambda_ref
    eye = np.eye(reg.dimension)
    h = np.zeros((reg.dimension, reg.dimension))
    for p, k in enumerate(_positive_momenta(modes)):
        a, b = 2 * p, 2 * p + 1
        eps, phi = _eps_phi(k, lam)
        _, phi_ref = _eps_phi(k, ref)
        cs, sn = np.cos(0.5 * (phi - phi_ref)), np.sin(0.5 * (phi - phi_ref))
        ga = reg.c[a] * cs + reg.cdag(b) * sn
        gb = reg.c[b] * cs - reg.cdag(a) * sn
        h += eps * (ga.T @ ga + gb.T @ gb - eye)
    return h


def _gibbs_and_unitaries(h0, ht, beta):
    e0, v0 = np.linalg.eigh(h0)
    et, vt = np.linalg.eigh(ht)
    w = np.exp(-beta * (e0 - e0.min()))
    rho = (v0 * (w / w.sum())) @ v0.T.conj()
    return (e0, v0), (et, vt), rho


def dense_chi(h0: np.ndarray, ht: np.ndarray, beta: float, us) -> np.ndarray:
    """``Tr[exp(iu Ht) exp(-iu H0) rho_G(H0)]`` by explicit matrix products, per ``u``."""
    (e0, v0), (et, vt), rho = _gibbs_and_unitaries(h0, ht, beta)
    us = np.atleast_1d(np.asarray(us, dtype=complex))
    out = np.empty(len(us), dtype=complex)
    for i, u in enumerate(us):
        ut = (vt * np.exp(1j * u * et)) @ vt.T.conj()
        u0 = (v0 * np.exp(-1j * u * e0)) @ v0.T.conj()
        out[i] = np.trace(ut @ u0 @ rho)
    return out


def fock_oracle_chi(modes, lambda0: float, lambda_tau: float, beta: float, u,
                    construction: str = "bdg", cap: int = FOCK_CAP):
    """Work characteristic function from a full Fock-space trace.

    ``construction="bdg"`` uses the bare-fermion Hamiltonians at both fields;
    ``"bogoliubov"`` uses the quasiparticle register of ``lambda0``.
    """
    reg = fock_register(modes, cap)
    if construction == "bdg":
        h0 = fermion_hamiltonian(modes, lambda0, reg)
        ht = fermion_hamiltonian(modes, lambda_tau, reg)
    elif construction == "bogoliubov":
        h0 = bogoliubov_hamiltonian(modes, lambda0, None, reg)
        ht = bogoliubov_hamiltonian(modes, lambda_tau, lambda0, reg)
    else:
        raise ValueError(f"unknown construction {construction!r}")
    vals = dense_chi(h0, ht, beta, u)
    return vals if np.ndim(u) else complex(vals[0])


def fock_log_partition(modes, lam: float, beta: float) -> float:
    e = np.linalg.eigvalsh(fermion_hamiltonian(modes, lam))
    return float(np.log(np.sum(np.exp(-beta * (e - e.min())))) - beta * e.min())


def fock_magnetization(modes, lam: float, beta: float):
    """Thermal ``<M>`` and ``Var M`` with ``M = sum_j (1 - 2 n_j)`` over every mode."""
    reg = fock_register(modes)
    m = sum(np.eye(reg.dimension) - 2.0 * reg.number(j) for j in range(reg.n_modes))
    e, v = np.linalg.eigh(fermion_hamiltonian(modes, lam, reg))
    w = np.exp(-beta * (e - e.min()))
    rho = (v * (w / w.sum())) @ v.T
    mean = np.trace(m @ rho).real
    return float(mean), float(np.trace(m @ m @ rho).real - mean**2)


def pair_chi_tilde(modes, lam: float, beta: float) -> float:
    """Closed form ``chi_M - beta Var M`` summed over pairs.

    Per pair, with ``x = beta eps/2``:
    ``2 beta sin^2(phi) [tanh(x)/x - 1 - tanh(x)^2]``.
    """
    total = 0.0
    for k in _positive_momenta(modes):
        eps, phi = _eps_phi(k, lam)
        x = 0.5 * beta * eps
        t = np.tanh(x)
        total += 2.0 * beta * np.sin(phi) ** 2 * (t / x - 1.0 - t * t)
    return float(total)


# -- two-measurement work distribution ------------------------------------

def _levels(h, tol):
    e, v = np.linalg.eigh(h)
    groups = []
    for i in range(len(e)):
        if groups and abs(e[i] - groups[-1][0][-1]) <= tol:
            groups[-1][0].append(e[i])
            groups[-1][1].append(i)
        else:
            groups.append(([e[i]], [i]))
    out = []
    for vals, cols in groups:
        vv = v[:, cols]
        out.append((float(np.mean(vals)), vv @ vv.conj().T))
    return out


def brute_force_work(h0: np.ndarray, h_tau: np.ndarray, rho0: np.ndarray,
                     degeneracy_tol: Optional[float] = None, merge_tol: Optional[float] = None,
                     cap_dim: int = 2**FOCK_CAP):
    """Enumerate every (initial level, final level) pair of a sudden quench.

    The mass of a pair is ``Tr[P_m P_n rho P_n P_m]``, so degenerate levels
    are handled without choosing a basis inside them.

    Returns
    -------
    works, probs : ndarray
        Atoms sorted by work, merged within ``merge_tol``, masses below
        1e-14 dropped.
    """
    h0 = np.asarray(h0)
    h_tau = np.asarray(h_tau)
    if h0.shape[0] > cap_dim:
        raise CapExceeded(f"dimension {h0.shape[0]} above {cap_dim}")
    norm = max(np.max(np.abs(np.linalg.eigvalsh(h0))), np.max(np.abs(np.linalg.eigvalsh(h_tau))), 1.0)
    dtol = 1e-8 * norm if degeneracy_tol is None else degeneracy_tol
    mtol = 1e-9 * norm if merge_tol is None else merge_tol
    lev0 = _levels(h0, dtol)
    levt = _levels(h_tau, dtol)
    atoms = []
    for en, pn in lev0:
        x = pn @ rho0 @ pn
        for em, pm in levt:
            p = float(np.real(np.sum(pm * x.T)))
            if p > 1e-14:
                atoms.append((em - en, p))
    atoms.sort()
    works, probs = [], []
    for w, p in atoms:
        if works and w - works[-1][-1] <= mtol:
            works[-1].append(w)
            probs[-1].append(p)
        else:
            works.append([w])
            probs.append([p])
    pw = np.array([sum(p) for p in probs])
    ww = np.array([np.dot(w, p) / sum(p) for w, p in zip(works, probs)])
    return ww, pw


# -- finite differences ---------------------------------------------------

@dataclass(frozen=True)
class FiniteDiff:
    value: float
    error: float
    roundoff: float
    kink: float


def _weights(offsets, order):
    offsets = np.asarray(offsets, dtype=float)
    p = np.arange(len(offsets))
    a = offsets[None, :] ** p[:, None]
    rhs = np.zeros(len(offsets))
    rhs[order] = factorial(order)
    return np.linalg.solve(a, rhs)


def _stencil(f, x, h, offsets, w, order):
    vals = np.array([f(x + s * h) for s in offsets])
    return float(np.dot(w, vals) / h**order), float(np.dot(np.abs(w), np.abs(vals)) / h**order)


def finite_diff(f: Callable[[float], float], x: float, order: int, h: Optional[float] = None,
                levels: int = 3, strict: bool = False, atol: float = 1e-12) -> FiniteDiff:
    """Central finite difference of the given order, Richardson-extrapolated.

    The error estimate combines the spread of the last two extrapolation
    levels, a round-off estimate and a kink probe (the mismatch of forward
    and backward one-sided stencils after cancelling their leading
    step-linear term).

    Raises
    ------
    StepTooSmall
        If round-off exceeds ``max(|value|, atol)``; with ``strict=True``
        also if the total error estimate does.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be 1..4")
    h = 1e-2 * max(1.0, abs(x)) if h is None else h
    m = (order + 1) // 2
    offs = np.arange(-m, m + 1)
    w = _weights(offs, order)
    table = []
    roundoff = 0.0
    for lev in range(levels):
        d, scale = _stencil(f, x, h / 2**lev, offs, w, order)
        table.append([d])
        roundoff = max(roundoff, np.finfo(float).eps * scale)
    for j in range(1, levels):
        fac = 4.0**j
        for i in range(j, levels):
            table[i].append((fac * table[i][j - 1] - table[i - 1][j - 1]) / (fac - 1))
    value = table[-1][-1]
    spread = abs(value - table[-2][-2]) if levels > 1 else abs(value)

    fw = _weights(np.arange(order + 1), order)

    def jump(step):
        fwd, _ = _stencil(f, x, step, np.arange(order + 1), fw, order)
        bwd, _ = _stencil(f, x, step, -np.arange(order + 1), fw * (-1) ** order, order)
        return fwd - bwd

    kink = abs(2.0 * jump(h / 2) - jump(h))
    error = spread + roundoff + kink
    if roundoff > max(abs(value), atol) or (strict and error > max(abs(value), atol)):
        raise StepTooSmall(f"finite-difference error {error:.2e} vs value {value:.2e}")
    return FiniteDiff(float(value), float(error), float(roundoff), float(kink))
