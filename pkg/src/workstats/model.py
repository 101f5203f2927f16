"""Experiment vocabulary and dense spin-chain Hamiltonians.

Basis convention: computational states are indexed by an integer whose bit
``i`` is the state of spin ``i``; bit 0 means sigma^z = +1.  Energies are
in units of the coupling J.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CapExceeded, NotHermitian

DEFAULT_DENSE_CAP = 12
HERMITIAN_TOL = 1e-12


class Variant(enum.Enum):
    TFIM_PERIODIC = "tfim"
    CLASSICAL_ISING = "classical"
    CUSTOM_DENSE = "custom"


@dataclass(frozen=True, eq=False)
class ModelKind:
    """Which Hamiltonian family ``H(lam) = H_ss - lam * B`` to build.

    For the two spin-chain variants ``B`` is the z-magnetisation.  The custom
    variant carries its own ``h_ss`` and ``quench_op`` matrices.
    """

    variant: Variant
    h_ss: Optional[np.ndarray] = field(default=None, repr=False)
    quench_op: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def tfim(cls) -> "ModelKind":
        return cls(Variant.TFIM_PERIODIC)

    @classmethod
    def classical(cls) -> "ModelKind":
        return cls(Variant.CLASSICAL_ISING)

    @classmethod
    def custom(cls, h_ss, quench_op) -> "ModelKind":
        h_ss = np.asarray(h_ss)
        quench_op = np.asarray(quench_op)
        if h_ss.shape != quench_op.shape or h_ss.ndim != 2 or h_ss.shape[0] != h_ss.shape[1]:
            raise ValueError("h_ss and quench_op must be square matrices of equal shape")
        check_hermitian(h_ss, "h_ss")
        check_hermitian(quench_op, "quench_op")
        return cls(Variant.CUSTOM_DENSE, h_ss, quench_op)

    @property
    def is_commuting(self) -> bool:
        """True when the interaction term commutes with the quench operator by construction."""
        return self.variant is Variant.CLASSICAL_ISING


@dataclass(frozen=True)
class QuenchSpec:
    """A sudden quench ``lambda0 -> lambda_tau`` from a Gibbs state at ``beta``."""

    model: ModelKind
    n_sites: int
    beta: float
    lambda0: float
    lambda_tau: float

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be finite and positive")
        if not math.isfinite(self.lambda_tau - self.lambda0):
            raise ValueError("quench amplitude must be finite")

    @property
    def dlam(self) -> float:
        return self.lambda_tau - self.lambda0


@dataclass(frozen=True)
class CumulantSet:
    """Cumulants ``K_1..K_max`` of a real random variable (``K_n`` in units of J^n)."""

    values: tuple
    source: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("at least one cumulant is required")
        object.__setattr__(self, "values", vals)
        if len(vals) >= 2:
            scale = max(abs(vals[0]) ** 2, 1.0)
            if vals[1] < -1e-12 * scale:
                raise ValueError(f"negative variance K_2={vals[1]!r}")

    @property
    def max_order(self) -> int:
        return len(self.values)

    def __getitem__(self, n: int) -> float:
        """Return ``K_n`` (orders start at 1)."""
        if not 1 <= n <= self.max_order:
            raise IndexError(f"cumulant order {n} outside 1..{self.max_order}")
        return self.values[n - 1]

    def __len__(self):
        return self.max_order

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def check_hermitian(a, name="matrix", tol=HERMITIAN_TOL):
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol:
        raise NotHermitian(f"{name} deviates from Hermitian by {dev:.3e}")


def _check_cap(n_sites, cap):
    if n_sites > cap:
        raise CapExceeded(f"N={n_sites} exceeds dense cap {cap} (dimension 2^{n_sites})")


def _z_signs(n_sites: int) -> np.ndarray:
    """Row ``i`` holds the sigma^z_i eigenvalue of every basis state."""
    idx = np.arange(2**n_sites)
    bits = (idx[None, :] >> np.arange(n_sites)[:, None]) & 1
    return 1 - 2 * bits


def magnetization_operator(n_sites: int, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense diagonal ``M_z = sum_i sigma^z_i``.

    Diagonal entries are ``N - 2 * popcount(index)``.
    """
    _check_cap(n_sites, cap)
    return np.diag(_z_signs(n_sites).sum(axis=0).astype(float))


def _xx_ring(n_sites: int) -> np.ndarray:
    dim = 2**n_sites
    out = np.zeros((dim, dim))
    idx = np.arange(dim)
    for i in range(n_sites):
        j = (i + 1) % n_sites
        # sigma^x_i sigma^x_j flips both bits; for N=2 the ring visits the pair twice
        np.add.at(out, (idx ^ ((1 << i) | (1 << j)), idx), 1.0)
    return out


def _zz_ring(n_sites: int) -> np.ndarray:
    z = _z_signs(n_sites)
    return np.diag((z * np.roll(z, -1, axis=0)).sum(axis=0).astype(float))


def interaction_term(model: ModelKind, n_sites: int, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """The lambda-independent part ``H_ss``."""
    if model.variant is Variant.CUSTOM_DENSE:
        return model.h_ss
    if n_sites < 2:
        raise ValueError("spin-chain models need at least two sites")
    _check_cap(n_sites, cap)
    if model.variant is Variant.TFIM_PERIODIC:
        return -_xx_ring(n_sites)
    return -_zz_ring(n_sites)


def quench_operator(model: ModelKind, n_sites: int, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """The operator ``B`` multiplying ``-lam`` in ``H(lam)``."""
    if model.variant is Variant.CUSTOM_DENSE:
        return model.quench_op
    return magnetization_operator(n_sites, cap)


def build_hamiltonian(model: ModelKind, n_sites: int, lam: float,
                      cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense ``H(lam) = H_ss - lam * B`` in the computational basis.

    Raises
    ------
    CapExceeded
        If ``n_sites`` is above ``cap``.
    NotHermitian
        If a custom model's matrices are not Hermitian.
    """
    if model.variant is Variant.CUSTOM_DENSE:
        dim = model.h_ss.shape[0]
        if dim != 2**n_sites:
            raise ValueError(f"custom matrices have dimension {dim}, expected 2^{n_sites}")
        _check_cap(n_sites, cap)
        check_hermitian(model.h_ss, "h_ss")
        check_hermitian(model.quench_op, "quench_op")
    h = interaction_term(model, n_sites, cap) - lam * quench_operator(model, n_sites, cap)
    return h


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """Max-entry norm of ``[a, b]``."""
    return float(np.max(np.abs(a @ b - b @ a)))


def parity_operator(n_sites: int, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Diagonal of ``prod_i sigma^z_i``."""
    _check_cap(n_sites, cap)
    return np.prod(_z_signs(n_sites), axis=0).astype(float)
