"""Tests for the lattice Fock machinery: basis, operators, identities.

Everything here runs on small tori (13 modes in one dimension, a
19-mode ball in three) so the full matrix algebra is exact and fast;
tolerances are set by the identity being checked, not by the solver.
"""

import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pwavelab import fock, scattering as sc, torus as tr
from pwavelab.errors import (
    CutoffTooSmall,
    ExpDivergence,
    SectorMissing,
    SectorTooLarge,
)

TWO_PI = 2.0 * math.pi

K_F = 1.5
CUT = 6.0
R0 = 0.5
V0 = 4.0


def _build(v0, dim=1, k_f=K_F, cut=CUT, sector=None):
    spec = tr.TorusSpec(dim, TWO_PI)
    pot = sc.RadialPotential.soft_sphere(v0, R0, dim=dim)
    corr = sc.cutoff_phi(sc.solve_scattering(pot), 1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffTooSmall)
        return fock.build_model(spec, k_f, cut, pot, corr, sector=sector)


@pytest.fixture(scope="module")
def model():
    return _build(V0)


@pytest.fixture(scope="module")
def free_model():
    return _build(0.0)


@pytest.fixture(scope="module")
def suite(model):
    return fock.commutator_suite(model)


@pytest.fixture(scope="module")
def model3():
    return _build(10.0, dim=3, cut=1.5, sector=(0, 1, 2))


# ---------------------------------------------------------------------------
# mode sets and the occupation basis
# ---------------------------------------------------------------------------

def test_default_mode_set(model):
    assert model.modes.n_modes == 13
    assert model.modes.n_ball == 3
    assert model.basis.dim == 2 ** 13
    assert model.e_fermi == 2.0
    assert fock.popcount(model.modes.ball_mask) == 3


def test_cut_below_fermi_rejected():
    spec = tr.TorusSpec(1, TWO_PI)
    with pytest.raises(ValueError):
        fock.build_mode_set(spec, 1.5, 1.0)


def test_too_many_modes_rejected():
    spec = tr.TorusSpec(3, TWO_PI)
    with pytest.raises(SectorTooLarge):
        fock.build_mode_set(spec, 1.0, 2.5)


def test_basis_cap_enforced(model):
    with pytest.raises(SectorTooLarge):
        fock.FockBasis(model.modes, cap=100)


def test_monomial_signs_small_case():
    states = np.array([0b011], dtype=np.uint64)
    # annihilating mode 1 hops over the occupied mode 0
    _, tgt, amp = fock.apply_monomial(states, [(1, False)], 1.0)
    assert tgt[0] == 0b001 and amp[0] == -1.0
    # a*_2 a_0 on a*_0 a*_1 |0> = -a*_1 a*_2 |0>
    _, tgt, amp = fock.apply_monomial(states, [(0, False), (2, True)], 1.0)
    assert tgt[0] == 0b110 and amp[0] == -1.0
    # creation on an occupied mode kills the state
    src, _, _ = fock.apply_monomial(states, [(0, True)], 1.0)
    assert len(src) == 0
    # annihilation of an empty mode kills the state
    src, _, _ = fock.apply_monomial(states, [(2, False)], 1.0)
    assert len(src) == 0


@settings(max_examples=60, deadline=None)
@given(state=st.integers(min_value=0, max_value=2 ** 13 - 1),
       mode=st.integers(min_value=0, max_value=12),
       target=st.integers(min_value=0, max_value=12))
def test_monomial_projection_and_hop(state, mode, target):
    # normal products only: a*_j a_j projects onto occupation of j and
    # a*_t a_j hops exactly when j is filled and t is free
    states = np.array([state], dtype=np.uint64)
    occupied = bool((state >> mode) & 1)
    src, tgt, amp = fock.apply_monomial(
        states, [(mode, False), (mode, True)], 1.0)
    if occupied:
        assert len(src) == 1 and tgt[0] == state and amp[0] == 1.0
    else:
        assert len(src) == 0
    if target == mode:
        return
    free = not bool((state >> target) & 1)
    src, tgt, amp = fock.apply_monomial(
        states, [(mode, False), (target, True)], 1.0)
    if occupied and free:
        assert len(src) == 1
        assert tgt[0] == (state ^ (1 << mode)) | (1 << target)
        assert amp[0] in (-1.0, 1.0)
    else:
        assert len(src) == 0


def test_particle_hole_permutation_orthogonal(model):
    targets, signs = fock.particle_hole_permutation(model.basis)
    # a signed permutation with square +-1 on the diagonal
    assert np.array_equal(np.sort(targets), np.arange(model.basis.dim))
    back = targets[targets]
    assert np.array_equal(back, np.arange(model.basis.dim))
    r = model.r_matrix()
    gram = (r.T @ r - sp.identity(model.basis.dim)).tocsr()
    assert gram.nnz == 0 or np.max(np.abs(gram.data)) == 0.0


def test_particle_hole_maps_vacuum_to_sea(model):
    vac = model.vacuum_vector()
    sea = model.apply_r(vac)
    assert sea[model.fermi_sea_index()] == 1.0
    assert np.count_nonzero(sea) == 1


def test_kinetic_conjugation_deviation_law(model):
    # R* dGamma(-Lap) R = E_F + excitation diagonal on hole/excitation
    # balanced patterns; off balance the gap is exactly
    # k_F^2 (holes - excited), which pins both the identity and its
    # domain of validity.
    conj = fock.particle_hole_conjugate(model, model.kinetic)
    lhs = conj.matrix.diagonal()
    rhs = model.e_fermi + model.excitation_energy.matrix.diagonal()
    states = model.basis.states
    ball = model.modes.ball_mask
    holes = fock.popcount(states & ball).astype(float)
    excited = fock.popcount(states & ~ball).astype(float)
    gap = model.k_F ** 2 * (excited - holes)
    assert np.max(np.abs(lhs - (rhs + gap))) <= 1e-12
    balanced = holes == excited
    assert balanced.sum() > 100
    assert np.max(np.abs(lhs[balanced] - rhs[balanced])) <= 1e-12


# ---------------------------------------------------------------------------
# exact operator identities
# ---------------------------------------------------------------------------

def test_car_relations(suite):
    assert suite["car_mixed_defect"] <= 1e-13
    assert suite["car_pair_defect"] <= 1e-13


def test_symmetry_flags(model):
    assert fock.symmetry_defect(model.hamiltonian.matrix, 1.0) <= 1e-13
    assert fock.symmetry_defect(model.pair_excitation.matrix, 1.0) <= 1e-13
    assert fock.symmetry_defect(
        model.excited_pair_interaction.matrix, 1.0) <= 1e-13
    assert fock.symmetry_defect(
        model.correlation_generator.matrix, -1.0) <= 1e-13


def test_symmetry_check_rejects_mismatch(model):
    bad = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        fock.SparseOperator(basis=model.basis, matrix=bad, name="bad",
                            hermitian=True)


def test_conservation_laws(suite):
    assert suite["number_conservation_defect"] == 0.0
    assert suite["momentum_conservation_defect"] == 0.0


def test_generator_counting_commutator(suite):
    # [N, B] = -4 (G + G^T) termwise
    assert suite["count_commutator_defect"] == 0.0


def test_wick_vacuum_value(suite):
    assert suite["wick_rel_defect"] <= 1e-10
    assert suite["wick_matrix"] < 0.0
    assert suite["wick_matrix"] == pytest.approx(-7.06561182937893e-3,
                                                rel=1e-10)


def test_counting_inequality_constants(suite):
    # far region |k| > 2 k_F: the gap bound k_F^2/||k|^2-k_F^2| <= 1/3
    assert suite["far_count_constant"] == pytest.approx(9.0 / 55.0, rel=1e-14)
    assert suite["far_count_constant"] <= 1.0 / 3.0
    # window |k| > k_F (a k_F)^{-1/2}: constant stays below one
    assert suite["alpha_count_constant"] == pytest.approx(
        0.9490819595959084, rel=1e-10)
    assert suite["alpha_count_constant"] < 1.0


def test_regularizer_profile_shape():
    k_f = 1.5
    norms = np.linspace(0.0, 5.0, 401)
    vals = fock.regularizer_profile(norms, k_f)
    assert np.all(vals[norms <= 2.0 * k_f] == 0.0)
    assert np.all(vals[norms >= 3.0 * k_f] == 1.0)
    assert np.all(np.diff(vals) >= -1e-15)
    assert fock.regularizer_profile(2.5 * k_f, k_f) == pytest.approx(0.5)


def test_dropped_fraction_report(model):
    frac = model.dropped_fractions
    assert set(frac) == {"interaction", "interaction_phi", "pair_excitation",
                         "excited_pair_interaction", "correlation_generator"}
    for value in frac.values():
        assert 0.0 < value < 1.0


def test_small_cutoff_warns():
    spec = tr.TorusSpec(1, TWO_PI)
    pot = sc.RadialPotential.soft_sphere(V0, R0, dim=1)
    corr = sc.cutoff_phi(sc.solve_scattering(pot), K_F)
    with pytest.warns(CutoffTooSmall):
        fock.build_model(spec, K_F, CUT, pot, corr)


# ---------------------------------------------------------------------------
# generator flows
# ---------------------------------------------------------------------------

def test_exp_generator_unitary(model):
    rng = np.random.default_rng(4)
    v = rng.standard_normal(model.basis.dim)
    v /= np.linalg.norm(v)
    w = fock.apply_exp_generator(model, v, 1.0)
    assert abs(np.linalg.norm(w) - 1.0) <= 1e-11
    back = fock.apply_exp_generator(model, w, -1.0)
    assert np.max(np.abs(back - v)) <= 1e-12


def test_evolve_at_zero_is_hole_frame(model):
    sea = np.zeros(model.basis.dim)
    sea[model.fermi_sea_index()] = 1.0
    xi = fock.evolve_xi(model, sea, 0.0)
    assert np.array_equal(xi, model.apply_r_inverse(sea))
    assert xi[model.basis.vacuum_index()] == 1.0


def test_flow_derivative_matches_commutator(model):
    # transport by exp(-lam B) gives d/dlam <A>_xi = -<[A, B]>_xi, and
    # for symmetric A, antisymmetric B on a real state the commutator
    # expectation contracts to 2 (A xi).(B xi)
    sea = np.zeros(model.basis.dim)
    sea[model.fermi_sea_index()] = 1.0
    lam, h = 0.37, 1e-4
    xi = fock.evolve_xi(model, sea, lam)
    bxi = model.correlation_generator.apply(xi)
    for op in (model.number_op, model.excitation_energy,
               model.excited_pair_interaction):
        plus = op.expectation(fock.evolve_xi(model, sea, lam + h))
        minus = op.expectation(fock.evolve_xi(model, sea, lam - h))
        fd = (plus - minus) / (2.0 * h)
        exact = -2.0 * float(bxi @ op.apply(xi))
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_exp_series_guard(model):
    # with the norm cache poisoned the series runs unsegmented; pick t
    # large enough that the raw Taylor series cannot settle within the
    # term cap, so a guard must trip (term cap or overflow) instead of
    # returning garbage; start from the vacuum, which the generator
    # actually moves
    v = model.vacuum_vector()
    true_norm = model.correlation_norm()
    assert true_norm > 0.0
    t = 1e6 / true_norm
    model._b_norm = 1e-30
    try:
        with pytest.raises(ExpDivergence):
            fock.apply_exp_generator(model, v, t)
    finally:
        model._b_norm = true_norm


# ---------------------------------------------------------------------------
# ground states
# ---------------------------------------------------------------------------

def test_free_sector_energies(free_model):
    # mode energies n^2 for n in -6..6: lowest fillings 0, 1, 2, 6
    for n, expect in ((1, 0.0), (2, 1.0), (3, 2.0), (4, 6.0)):
        energy, vec = fock.ground_state(free_model, n)
        assert energy == pytest.approx(expect, abs=1e-12)
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-12


def test_interacting_ground_bracketed(model):
    energy, vec = fock.ground_state(model, model.ball.N)
    sea = np.zeros(model.basis.dim)
    sea[model.fermi_sea_index()] = 1.0
    sea_energy = model.hamiltonian.expectation(sea)
    assert 2.0 - 1e-12 <= energy <= sea_energy + 1e-12
    assert energy == pytest.approx(2.136221916839218, rel=1e-8)


def test_lanczos_agrees_with_dense(model):
    e_dense, v_dense = fock.ground_state(model, model.ball.N)
    e_iter, v_iter = fock.ground_state(model, model.ball.N,
                                       dense_threshold=0)
    assert e_iter == pytest.approx(e_dense, abs=1e-9)
    assert abs(float(v_dense @ v_iter)) == pytest.approx(1.0, abs=1e-7)


def test_missing_sector_rejected(model):
    with pytest.raises(SectorMissing):
        fock.ground_state(model, model.modes.n_modes + 1)


# ---------------------------------------------------------------------------
# energy audit
# ---------------------------------------------------------------------------

def _sea_vector(m):
    sea = np.zeros(m.basis.dim)
    sea[m.fermi_sea_index()] = 1.0
    return sea


def test_audit_closes_on_three_states(model):
    states = {
        "sea": _sea_vector(model),
        "trial": fock.trial_state(model),
        "ground": fock.ground_state(model, model.ball.N)[1],
    }
    for name, psi in states.items():
        rep = fock.energy_audit(model, psi)
        assert rep.relative_defect <= 1e-9, name
        assert rep.term_sum() == pytest.approx(rep.h_expectation, rel=1e-9)
        assert rep.quadrature_order == 32


def test_trial_state_kills_excitation_term(model):
    rep = fock.energy_audit(model, fock.trial_state(model))
    assert abs(rep.xi1_excitation) <= 1e-12


def test_leading_term_dual_route(model):
    rep = fock.energy_audit(model, _sea_vector(model))
    assert rep.leading_matrix == pytest.approx(rep.leading_kernel, rel=1e-8)
    assert rep.sea_interaction == pytest.approx(0.15331514128676527,
                                               rel=1e-10)
    assert rep.leading_matrix == pytest.approx(0.1277674287143236, rel=1e-8)


def test_audit_sign_invariant(model):
    psi = fock.trial_state(model)
    a = fock.energy_audit(model, psi)
    b = fock.energy_audit(model, -psi)
    assert a.h_expectation == pytest.approx(b.h_expectation, rel=1e-12)


def test_audit_rejects_wrong_sector(model):
    with pytest.raises(ValueError):
        fock.energy_audit(model, model.vacuum_vector())


def test_trial_vs_oracle_orderings(model):
    tv = fock.trial_vs_oracle(model)
    assert tv["variational_ok"]
    assert tv["e_exact"] <= tv["e_trial"] + 1e-10
    assert tv["trial_below_sea"]
    assert tv["e_sea"] == pytest.approx(2.1533151412867655, rel=1e-10)
    assert tv["e_trial"] == pytest.approx(2.150022689954258, rel=1e-8)
    assert tv["leading_estimate"] == pytest.approx(2.1277674287143236,
                                                  rel=1e-8)
    assert tv["excess_per_unit"] == pytest.approx(0.21328277200778487,
                                                 rel=1e-6)


def test_exact_energy_monotone_in_strength(model):
    energies = [fock.ground_state(_build(v0), 3)[0] for v0 in (2.0, 8.0)]
    e_mid = fock.ground_state(model, 3)[0]
    assert energies[0] < e_mid < energies[1]


def test_zero_potential_collapses_everything(free_model):
    offdiag = free_model.hamiltonian.matrix.copy()
    offdiag.setdiag(0.0)
    offdiag.eliminate_zeros()
    assert offdiag.nnz == 0
    tv = fock.trial_vs_oracle(free_model)
    for key in ("e_exact", "e_trial", "e_sea", "leading_estimate"):
        assert tv[key] == pytest.approx(2.0, abs=1e-12)


def test_zero_correlation_reduces_to_sea(model):
    # an identically vanishing pair profile produces no generator flow,
    # so the audit must return the bare sea expectation with every
    # remainder at rounding level
    spec = tr.TorusSpec(1, TWO_PI)
    pot = sc.RadialPotential.soft_sphere(V0, R0, dim=1)
    null = sc.cutoff_phi(
        sc.solve_scattering(sc.RadialPotential.soft_sphere(0.0, R0, dim=1)),
        1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffTooSmall)
        bare = fock.build_model(spec, K_F, CUT, pot, null)
    rep = fock.energy_audit(bare, _sea_vector(bare))
    assert abs(rep.contracted_pair) <= 1e-14
    assert rep.leading_matrix == pytest.approx(rep.sea_interaction, abs=1e-14)
    assert abs(rep.remainder_pair_flow) <= 1e-14
    assert abs(rep.remainder_scatter_flow) <= 1e-14
    assert abs(rep.closure_defect) <= 1e-14
    tv = fock.trial_vs_oracle(bare)
    assert tv["e_trial"] == pytest.approx(tv["e_sea"], abs=1e-13)


def test_build_is_deterministic(model):
    again = _build(V0)
    for attr in ("hamiltonian", "correlation_generator", "pair_excitation"):
        a = getattr(model, attr).matrix
        b = getattr(again, attr).matrix
        assert np.array_equal(a.indptr, b.indptr)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# three-dimensional sector build
# ---------------------------------------------------------------------------

def test_d3_sector_model(model3):
    assert model3.modes.n_modes == 19
    assert model3.basis.dim == 1 + 19 + 19 * 18 // 2
    e1, _ = fock.ground_state(model3, 1)
    assert e1 == pytest.approx(0.0, abs=1e-12)
    e2, _ = fock.ground_state(model3, 2)
    assert e2 >= 1.0 - 1e-10  # repulsion cannot beat the free pair


def test_d3_sector_lacks_hole_frame(model3):
    with pytest.raises(SectorMissing):
        model3.r_permutation()
    with pytest.raises(ValueError):
        fock.commutator_suite(model3)
