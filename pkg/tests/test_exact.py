import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from workstats import exact
from workstats.errors import DimensionMismatch, SupportViolation, TruncationNotConverged
from workstats.model import (
    ModelKind, QuenchSpec, build_hamiltonian, magnetization_operator, quench_operator,
)
from workstats.oracles import brute_force_work, two_site_spectrum

TFIM = ModelKind.tfim()
CLASSICAL = ModelKind.classical()
SQ2 = math.sqrt(2.0)


def spec_of(model, n, lam):
    return exact.eigendecompose(build_hamiltonian(model, n, lam))


def quench(model, n, l0, lt, beta):
    return exact.ExactQuench.from_spec(QuenchSpec(model, n, beta, l0, lt))


# Two-site chain, lambda 0 -> 1, beta = 1, enumerated by hand from the
# even block [[-2 lam, -2], [-2, 2 lam]] and the lambda-independent odd block.
# Ground vector of the even block at lam = 1 has overlap^2 (2 + sqrt 2)/4 with
# the lam = 0 ground vector.
def _hand_atoms():
    z = 2.0 * math.exp(2.0) + 2.0 * math.exp(-2.0)
    c2 = (2.0 + SQ2) / 4.0
    s2 = (2.0 - SQ2) / 4.0
    return [
        (-2.0 - 2.0 * SQ2, math.exp(-2.0) * s2 / z),
        (2.0 - 2.0 * SQ2, math.exp(2.0) * c2 / z),
        (0.0, 0.5),
        (2.0 * SQ2 - 2.0, math.exp(-2.0) * c2 / z),
        (2.0 + 2.0 * SQ2, math.exp(2.0) * s2 / z),
    ]


HAND_ATOMS = _hand_atoms()


# -- spectra and states ----------------------------------------------------

def test_degenerate_identity():
    s = exact.eigendecompose(np.eye(2), 1e-8)
    assert s.n_levels == 1 and s.multiplicities[0] == 2
    np.testing.assert_allclose(s.eigenvalues, [1.0])
    np.testing.assert_allclose(s.projector(0), np.eye(2), atol=1e-14)


def test_two_site_eigenvalues():
    s = spec_of(TFIM, 2, 1.0)
    np.testing.assert_allclose(s.raw_eigenvalues, [-2 * SQ2, -2.0, 2.0, 2 * SQ2], atol=1e-12)
    np.testing.assert_allclose(s.level_energies, s.raw_eigenvalues, atol=1e-12)


def test_reconstruction_and_shift():
    h = build_hamiltonian(TFIM, 4, 0.7)
    s = exact.eigendecompose(h)
    sc = exact.eigendecompose(h + 3.5 * np.eye(16))
    recon = sum(e * p for e, p in zip(s.eigenvalues, s.projectors))
    np.testing.assert_allclose(recon, h, atol=1e-12)
    np.testing.assert_allclose(sc.eigenvalues, s.eigenvalues + 3.5, atol=1e-12)
    assert sc.n_levels == s.n_levels
    for n in range(s.n_levels):
        np.testing.assert_allclose(sc.projector(n), s.projector(n), atol=1e-10)


def test_projectors_resolve_identity():
    s = spec_of(TFIM, 4, 0.0)
    np.testing.assert_allclose(sum(s.projectors), np.eye(16), atol=1e-12)
    assert s.multiplicities.sum() == 16


def test_gibbs_infinite_temperature():
    rho = exact.gibbs_state(spec_of(TFIM, 3, 0.4), 1e-12)
    np.testing.assert_allclose(rho.matrix, np.eye(8) / 8, atol=1e-12)


def test_two_site_partition_function():
    s = spec_of(TFIM, 2, 0.5)
    z = np.sum(np.exp(-two_site_spectrum(0.5)))
    assert exact.log_partition(s, 1.0) == pytest.approx(math.log(z), rel=1e-14)
    assert exact.gibbs_state(s, 1.0).log_z == pytest.approx(math.log(z), rel=1e-14)


@pytest.mark.parametrize("lam,beta", [(0.3, 1.0), (1.0, 10.0), (1.7, 100.0)])
def test_gibbs_commutes_with_hamiltonian(lam, beta):
    s = spec_of(TFIM, 4, lam)
    rho = exact.gibbs_state(s, beta).matrix
    assert np.max(np.abs(rho @ s.matrix - s.matrix @ rho)) < 1e-10
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_project_gibbs_is_identity():
    s = spec_of(TFIM, 4, 0.6)
    rho = exact.gibbs_state(s, 2.0)
    out = exact.project_state(rho, s)
    np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-12)


def test_project_gibbs_from_other_basis_is_labelled():
    s = spec_of(TFIM, 2, 0.3)
    rho = exact.DensityState.from_matrix(exact.gibbs_state(spec_of(TFIM, 2, 0.3), 1.0).matrix,
                                         label="Gibbs(beta=1.0)")
    out = exact.project_state(rho, s)
    assert out.label == "ProjectedGibbs"
    np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-12)


def test_project_plus_state():
    plus = exact.DensityState.pure([1.0, 1.0])
    out = exact.project_state(plus, exact.eigendecompose(np.diag([1.0, -1.0])))
    np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=1e-15)
    assert out.label == "CustomProjected"


def test_project_maximally_mixed():
    s = spec_of(TFIM, 3, 0.9)
    mixed = exact.DensityState.from_matrix(np.eye(8) / 8)
    np.testing.assert_allclose(exact.project_state(mixed, s).matrix, np.eye(8) / 8, atol=1e-14)


def test_project_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        exact.project_state(exact.DensityState.pure([1.0, 0.0]), spec_of(TFIM, 2, 0.1))


def test_density_state_validation():
    with pytest.raises(ValueError):
        exact.DensityState.from_matrix(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        exact.DensityState.from_matrix(np.diag([1.5, -0.5]))


@given(st.integers(0, 10**6))
def test_projection_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = exact.DensityState.from_matrix(a @ a.conj().T / np.trace(a @ a.conj().T))
    s = spec_of(TFIM, 3, 0.0)  # degenerate spectrum
    once = exact.project_state(rho, s)
    twice = exact.project_state(once, s)
    np.testing.assert_allclose(twice.matrix, once.matrix, atol=1e-12)


# -- work distribution -----------------------------------------------------

def test_hand_enumerated_two_site_quench():
    q = quench(TFIM, 2, 0.0, 1.0, 1.0)
    d = q.distribution()
    np.testing.assert_allclose(d.works, [w for w, _ in HAND_ATOMS], atol=1e-12)
    np.testing.assert_allclose(d.probs, [p for _, p in HAND_ATOMS], atol=1e-13)
    w, p = brute_force_work(q.spec0.matrix, q.spec_tau.matrix, q.rho.matrix)
    np.testing.assert_allclose(w, [a for a, _ in HAND_ATOMS], atol=1e-12)
    np.testing.assert_allclose(p, [b for _, b in HAND_ATOMS], atol=1e-13)


def test_two_site_brute_force_agreement():
    q = quench(TFIM, 2, 0.5, 1.0, 1.0)
    d = q.distribution()
    w, p = brute_force_work(q.spec0.matrix, q.spec_tau.matrix, q.rho.matrix)
    np.testing.assert_allclose(d.works, w, atol=1e-12)
    np.testing.assert_allclose(d.probs, p, atol=1e-13)


def test_identity_quench_is_point_mass():
    q = quench(TFIM, 4, 0.7, 0.7, 2.0)
    d = q.distribution()
    assert len(d) == 1 and d.works[0] == 0.0
    assert d.probs[0] == pytest.approx(1.0, abs=1e-12)
    for u in (0.3, -4.0, 11.0):
        assert abs(q.chi(u) - 1.0) < 1e-12
    np.testing.assert_allclose(q.cumulants(4).as_array(), 0.0, atol=1e-14)


def test_commuting_support():
    dlam = 0.3
    q = quench(CLASSICAL, 4, 0.2, 0.2 + dlam, 1.0)
    allowed = -dlam * np.array([4.0, 2.0, 0.0, -2.0, -4.0])
    for w in q.distribution().works:
        assert np.min(np.abs(allowed - w)) < 1e-10


@given(st.integers(2, 5), st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.05, 20.0))
def test_distribution_is_normalised(n, l0, dl, beta):
    q = quench(TFIM, n, l0, l0 + dl, beta)
    d = q.distribution()
    assert d.total_mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(d.probs >= 0.0)
    assert np.all(np.diff(d.works) > 0.0)


# -- characteristic function and moments ------------------------------------

@given(st.integers(2, 5), st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.05, 20.0),
       st.floats(-30.0, 30.0))
def test_chi_normalised_and_bounded(n, l0, dl, beta, u):
    q = quench(TFIM, n, l0, l0 + dl, beta)
    assert abs(q.chi(0.0) - 1.0) < 1e-12
    assert abs(q.chi(u)) <= 1.0 + 1e-12
    assert abs(q.chi(-u) - np.conj(q.chi(u))) < 1e-12


@pytest.mark.parametrize("u", [0.0, 0.4, -1.3, 7.0])
def test_trace_and_spectral_chi_agree(u):
    q = quench(TFIM, 4, 0.5, 1.2, 1.5)
    a = exact.characteristic_function(q.spec0, q.spec_tau, q.rho, u)
    b = exact.characteristic_function_trace(q.spec0, q.spec_tau, q.rho, u)
    assert abs(a - b) < 1e-12


def test_chi_at_imaginary_beta():
    beta = 1.3
    q = quench(TFIM, 4, 0.4, 0.9, beta)
    ratio = math.exp(exact.log_partition(q.spec_tau, beta) - exact.log_partition(q.spec0, beta))
    assert q.chi(1j * beta).real == pytest.approx(ratio, rel=1e-12)


def test_low_moments_from_magnetisation():
    dlam = 0.4
    q = quench(TFIM, 4, 0.6, 0.6 + dlam, 1.0)
    m = magnetization_operator(4)
    mean_m = np.trace(q.rho.matrix @ m).real
    m2 = np.trace(q.rho.matrix @ m @ m).real
    mom = q.moments(3)
    assert mom[0] == pytest.approx(-dlam * mean_m, abs=1e-12)
    assert mom[1] == pytest.approx(dlam**2 * m2, abs=1e-12)
    assert q.mean_work == pytest.approx(mom[0], abs=1e-12)


def test_moments_agree_with_atoms_but_not_delta_h_beyond_two():
    q = quench(TFIM, 2, 0.5, 1.5, 1.0)
    direct = q.moments(4)
    atoms = q.distribution().moments(4)
    dh = exact.moments_delta_h(q.spec0, q.spec_tau, q.rho, 4)
    np.testing.assert_allclose(direct, atoms, atol=1e-11)
    np.testing.assert_allclose(direct[:2], dh[:2], atol=1e-11)
    assert abs(direct[3] - dh[3]) > 1e-3


def test_chi_derivatives_give_moments():
    q = quench(TFIM, 4, 0.5, 1.0, 1.0)
    h = 1e-4
    d1 = (q.chi(h) - q.chi(-h)) / (2 * h)
    d2 = (q.chi(h) - 2 * q.chi(0.0) + q.chi(-h)) / h**2
    mom = q.moments(2)
    assert (d1 / 1j).real == pytest.approx(mom[0], rel=1e-6)
    assert (-d2).real == pytest.approx(mom[1], rel=1e-5)


# -- magnetisation statistics and susceptibility ----------------------------

def test_infinite_temperature_magnetisation_cumulants():
    n = 5
    rho = exact.gibbs_state(spec_of(TFIM, n, 0.8), 1e-12)
    c = exact.mag_cumulants(rho, magnetization_operator(n), 2)
    assert abs(c[1]) < 1e-9 and c[2] == pytest.approx(n, rel=1e-9)


def test_magnetisation_genfun_at_zero():
    rho = exact.gibbs_state(spec_of(TFIM, 3, 0.8), 1.0)
    assert abs(exact.magnetization_genfun(rho, magnetization_operator(3), 0.0) - 1.0) < 1e-14


@pytest.mark.parametrize("dlam", [0.1, -0.25, 0.6])
def test_commuting_work_cumulants_are_scaled_magnetisation_cumulants(dlam):
    q = quench(CLASSICAL, 6, 0.3, 0.3 + dlam, 0.8)
    k = q.cumulants(5)
    c = exact.mag_cumulants(q.rho, magnetization_operator(6), 5)
    for n in range(1, 6):
        assert k[n] == pytest.approx((-dlam) ** n * c[n], abs=1e-10)


def test_noncommuting_third_cumulant_breaks_scaling():
    dlam = 0.5
    q = quench(TFIM, 4, 0.8, 0.8 + dlam, 1.0)
    k = q.cumulants(3)
    c = exact.mag_cumulants(q.rho, magnetization_operator(4), 3)
    assert abs(k[3] - (-dlam) ** 3 * c[3]) > 1e-3


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_commuting_susceptibility_is_variance(beta):
    fam = exact.magnetization_family(CLASSICAL, 6, beta)
    chi = exact.susceptibility_order_j(fam, 0.2, 1)
    _, var = exact.thermal_magnetization(CLASSICAL, 6, 0.2, beta)
    assert chi == pytest.approx(beta * var, rel=1e-6)


def test_susceptibility_vanishes_at_high_temperature():
    fam = exact.magnetization_family(TFIM, 4, 1e-6)
    assert abs(exact.susceptibility_order_j(fam, 0.5, 1)) < 1e-4


def test_commuting_chi_tilde_vanishes():
    assert abs(exact.chi_tilde_difference(CLASSICAL, 6, 0.4, 2.0)) < 1e-10
    assert abs(exact.chi_tilde_series(CLASSICAL, 6, 0.4, 2.0).value) < 1e-10


@pytest.mark.parametrize("l0,beta", [(0.5, 1.0), (1.0, 3.0), (1.6, 1.0)])
def test_series_matches_difference_ten_sites(l0, beta):
    s = exact.chi_tilde_series(TFIM, 10, l0, beta)
    d = exact.chi_tilde_difference(TFIM, 10, l0, beta)
    assert s.value < 0 and d < 0
    assert s.value == pytest.approx(d, rel=1e-3)


def test_series_refuses_out_of_reach_temperature():
    with pytest.raises(TruncationNotConverged):
        exact.chi_tilde_series(TFIM, 10, 1.0, 100.0)
    with pytest.raises(TruncationNotConverged):
        exact.chi_tilde_series(TFIM, 4, 1.0, 5.0, n_cut=3)


# -- fluctuation relations -------------------------------------------------

def test_identity_quench_free_energy():
    q = quench(TFIM, 4, 0.5, 0.5, 1.0)
    assert q.delta_f == 0.0
    assert exact.jarzynski_check(q.spec0, q.spec_tau, 1.0) < 1e-12


def test_two_site_free_energy_from_closed_spectrum():
    beta = 1.0
    lz0 = math.log(np.sum(np.exp(-beta * two_site_spectrum(0.5))))
    lzt = math.log(np.sum(np.exp(-beta * two_site_spectrum(0.51))))
    q = quench(TFIM, 2, 0.5, 0.51, beta)
    assert q.delta_f == pytest.approx(-(lzt - lz0) / beta, rel=1e-10)


@pytest.mark.parametrize("l0", np.linspace(0.0, 2.0, 5))
@pytest.mark.parametrize("dl", [-0.5, -0.1, 0.01, 0.3, 1.0])
def test_jarzynski_grid(l0, dl):
    s0, st_ = spec_of(TFIM, 4, l0), spec_of(TFIM, 4, l0 + dl)
    assert exact.jarzynski_check(s0, st_, 1.0) < 1e-10


@pytest.mark.parametrize("u", [0.0, 0.7, -2.1, 5.0])
def test_tasaki_crooks(u):
    s0, st_ = spec_of(TFIM, 4, 0.3), spec_of(TFIM, 4, 1.1)
    assert exact.crooks_residual(s0, st_, 2.0, u) < 1e-10


def test_series_sums_identity_quench():
    q = quench(TFIM, 4, 0.5, 0.5, 1.0)
    s = exact.cumulant_series_sums(q.cumulants(6), 1.0, q.delta_f)
    np.testing.assert_allclose(s.free_energy, 0.0, atol=1e-14)
    np.testing.assert_allclose(s.lag, 0.0, atol=1e-14)


def test_series_sums_commuting_chain():
    q = quench(CLASSICAL, 8, 0.3, 0.31, 1.0)
    s = exact.cumulant_series_sums(q.cumulants(6), 1.0, q.delta_f)
    assert s.free_energy[-1] == pytest.approx(q.delta_f, rel=1e-6)
    assert s.lag[-1] == pytest.approx(s.lag_exact, rel=1e-6)


@given(st.integers(2, 5), st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.05, 20.0))
def test_lag_non_negative(n, l0, dl, beta):
    q = quench(TFIM, n, l0, l0 + dl, beta)
    assert q.lag >= -1e-10


def test_relative_entropy_trivial_cases():
    s = spec_of(TFIM, 3, 0.5)
    rho = exact.gibbs_state(s, 1.0)
    assert abs(exact.neq_lag_relative_entropy(rho, rho)) < 1e-12


def test_lag_equals_relative_entropy():
    beta = 2.0
    q = quench(TFIM, 4, 0.5, 1.5, beta)
    sigma = exact.gibbs_state(q.spec_tau, beta)
    rho_tau = exact.DensityState.from_matrix(q.rho.matrix)  # sudden quench: state unchanged
    d = exact.neq_lag_relative_entropy(rho_tau, sigma)
    assert d == pytest.approx(q.lag, rel=1e-10)


def test_relative_entropy_support_violation():
    rho = exact.DensityState.from_matrix(np.diag([0.5, 0.5]))
    sigma = exact.DensityState.from_matrix(np.diag([1.0, 0.0]))
    with pytest.raises(SupportViolation):
        exact.neq_lag_relative_entropy(rho, sigma)


# -- sudden-quench bound ---------------------------------------------------

def test_bound_unbounded_when_commuting():
    s = spec_of(CLASSICAL, 4, 1.0)
    psi = np.zeros(16)
    psi[0] = 1.0
    out = exact.sudden_quench_bound(s, quench_operator(CLASSICAL, 4), psi, 1.0)
    assert out.unbounded and math.isinf(out.tau_max)


def test_bound_unbounded_without_quench_term():
    s = spec_of(TFIM, 4, 0.0)
    psi = spec_of(TFIM, 4, 0.5).vectors[:, 0]
    out = exact.sudden_quench_bound(s, quench_operator(TFIM, 4), psi, 0.0)
    assert out.unbounded


def test_bound_finite_for_tfim():
    s = spec_of(TFIM, 4, 1.5)
    psi = spec_of(TFIM, 4, 0.5).vectors[:, 0]
    b = quench_operator(TFIM, 4)
    out = exact.sudden_quench_bound(s, b, psi, 1.5)
    assert not out.unbounded and out.tau_max > 0
    # independent dense evaluation of the same matrix elements
    bpsi = b @ psi - (psi @ b @ psi) * psi
    big = np.max(np.abs(s.vectors.T @ bpsi))
    assert out.tau_max == pytest.approx(2.0 / (1.5 * big), rel=1e-12)
