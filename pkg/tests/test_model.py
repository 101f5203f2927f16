import numpy as np
import pytest

from workstats.errors import CapExceeded, NotHermitian
from workstats.model import (
    CumulantSet, ModelKind, QuenchSpec, build_hamiltonian, commutator_norm,
    interaction_term, magnetization_operator, parity_operator, quench_operator,
)
from workstats.oracles import pauli_chain_hamiltonian, two_site_spectrum

TFIM = ModelKind.tfim()
CLASSICAL = ModelKind.classical()


@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0, -2.5])
def test_two_site_spectrum_matches_block_form(lam):
    e = np.linalg.eigvalsh(build_hamiltonian(TFIM, 2, lam))
    r = 2.0 * np.sqrt(lam**2 + 1.0)
    np.testing.assert_allclose(e, np.sort([-r, -2.0, 2.0, r]), atol=1e-12)
    np.testing.assert_allclose(e, two_site_spectrum(lam), atol=1e-12)


def test_two_site_ground_level_degenerate_at_zero_field():
    e = np.linalg.eigvalsh(build_hamiltonian(TFIM, 2, 0.0))
    np.testing.assert_allclose(e[:2], [-2.0, -2.0], atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("lam", [0.0, 0.7, 1.9])
def test_hamiltonian_matches_kronecker_construction(n, lam):
    np.testing.assert_allclose(build_hamiltonian(TFIM, n, lam), pauli_chain_hamiltonian(n, lam, "x"),
                               atol=1e-12)
    np.testing.assert_allclose(build_hamiltonian(CLASSICAL, n, lam),
                               pauli_chain_hamiltonian(n, lam, "z"), atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 5])
def test_classical_chain_is_diagonal(n):
    h = build_hamiltonian(CLASSICAL, n, 0.0)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0


def test_magnetization_operator_small_cases():
    np.testing.assert_array_equal(np.diag(magnetization_operator(1)), [1.0, -1.0])
    np.testing.assert_array_equal(np.diag(magnetization_operator(2)), [2.0, 0.0, 0.0, -2.0])
    for n in range(1, 8):
        assert np.trace(magnetization_operator(n)) == 0.0


def test_field_enters_linearly():
    for model in (TFIM, CLASSICAL):
        h0 = build_hamiltonian(model, 4, 0.0)
        b = quench_operator(model, 4)
        np.testing.assert_allclose(build_hamiltonian(model, 4, 1.3), h0 - 1.3 * b, atol=1e-12)
        np.testing.assert_allclose(interaction_term(model, 4), h0, atol=1e-12)


def test_commutators():
    m = magnetization_operator(4)
    assert commutator_norm(interaction_term(CLASSICAL, 4), m) == 0.0
    assert commutator_norm(interaction_term(TFIM, 4), m) > 1.0
    assert CLASSICAL.is_commuting and not TFIM.is_commuting


def test_parity_commutes_with_tfim():
    p = np.diag(parity_operator(4))
    assert commutator_norm(build_hamiltonian(TFIM, 4, 0.8), p) < 1e-12


def test_cap_and_hermiticity_guards():
    with pytest.raises(CapExceeded):
        build_hamiltonian(TFIM, 6, 0.1, cap=5)
    with pytest.raises(NotHermitian):
        ModelKind.custom(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    with pytest.raises(ValueError):
        ModelKind.custom(np.eye(2), np.eye(3))


def test_custom_model_round_trip():
    hs = np.array([[1.0, 0.5], [0.5, -1.0]])
    b = np.diag([1.0, -1.0])
    model = ModelKind.custom(hs, b)
    np.testing.assert_allclose(build_hamiltonian(model, 1, 2.0), hs - 2.0 * b)


def test_quench_spec_validation():
    q = QuenchSpec(TFIM, 4, 1.0, 0.5, 0.75)
    assert q.dlam == 0.25
    for beta in (0.0, -1.0, float("inf")):
        with pytest.raises(ValueError):
            QuenchSpec(TFIM, 4, beta, 0.5, 0.75)
    with pytest.raises(ValueError):
        QuenchSpec(TFIM, 0, 1.0, 0.5, 0.75)


def test_cumulant_set_indexing():
    k = CumulantSet((0.1, 2.0, -0.3))
    assert k[1] == 0.1 and k[3] == -0.3 and len(k) == 3
    with pytest.raises(IndexError):
        k[0]
    with pytest.raises(ValueError):
        CumulantSet((0.0, -1.0))
