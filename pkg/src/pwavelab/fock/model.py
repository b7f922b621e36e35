"""Momentum-space many-fermion model on a torus, built for identity checks.

One bitmask basis carries two readings of the same 2^M space.  In the
plain reading a set bit means the orbital is occupied; the kinetic and
interaction operators live there and the filled Fermi ball is the free
ground state.  In the quasiparticle reading a set bit inside the ball
is a hole and outside is an excited particle; the excitation energy,
the pair-excitation and excited-interaction quartics, and the
correlation generator live there, with the empty state as vacuum.  The
signed permutation R intertwines the two readings, sending the vacuum
to the filled ball.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigh_tridiagonal

from ..errors import (CutoffTooSmall, ExpDivergence, NoConvergence,
                      SectorMissing)
from ..quadrature import radial_fourier_transform
from ..scattering import CutoffScattering, RadialPotential
from ..torus import FermiBall, TorusSpec, fermi_ball
from .basis import (FockBasis, ModeSet, build_mode_set,
                    particle_hole_permutation, popcount)
from .operators import (SparseOperator, annihilator_matrix, assemble_quartic,
                        commute_with_diagonal, conservation_defect,
                        diagonal_operator, difference_set, enumerate_quartic,
                        mode_occupation_matrix)

_COEFF_TOL = 1e-11
_EXP_TERM_CAP = 200
_DENSE_EIG_LIMIT = 2000


def regularizer_profile(norm, k_F: float):
    """Smooth momentum regularizer: 0 up to 2 k_F, 1 from 3 k_F on.

    The ramp is the quintic smoothstep in |k|/k_F, matching the C^2
    smoothness of the real-space cutoff window.
    """
    norm = np.asarray(norm, dtype=float)
    u = np.clip((norm - 2.0 * k_F) / k_F, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass
class FockModel:
    """Assembled operators and coefficient tables for one configuration."""

    spec: TorusSpec
    k_F: float
    lambda_cut: float
    potential: RadialPotential
    correlation: CutoffScattering
    alpha: float
    a_length: float
    modes: ModeSet
    basis: FockBasis
    ball: FermiBall
    e_fermi: float
    v_hat: dict
    phi_hat: dict
    vphi_hat: dict
    u_values: np.ndarray
    # plain-reading operators
    kinetic: SparseOperator
    interaction: SparseOperator
    interaction_phi: SparseOperator
    hamiltonian: SparseOperator
    # quasiparticle-reading operators
    excitation_energy: SparseOperator
    pair_excitation_half: SparseOperator
    pair_excitation: SparseOperator
    excited_pair_interaction: SparseOperator
    correlation_half: SparseOperator
    correlation_generator: SparseOperator
    # diagonal counters shared by both readings
    number_op: SparseOperator
    number_far: SparseOperator
    number_far_alpha: SparseOperator
    momentum_charges: list
    dropped_fractions: dict
    far_threshold: float
    alpha_threshold: float
    _r_data: tuple | None = field(default=None, repr=False)
    _r_matrix: sp.csr_matrix | None = field(default=None, repr=False)
    _b_norm: float | None = field(default=None, repr=False)

    # -- particle-hole machinery -------------------------------------------

    def r_permutation(self):
        """Signed permutation data of R; raises SectorMissing if truncated."""
        if self._r_data is None:
            self._r_data = particle_hole_permutation(self.basis)
        return self._r_data

    def r_matrix(self) -> sp.csr_matrix:
        if self._r_matrix is None:
            targets, signs = self.r_permutation()
            dim = self.basis.dim
            self._r_matrix = sp.csr_matrix(
                (signs, (targets, np.arange(dim))), shape=(dim, dim))
        return self._r_matrix

    def apply_r(self, v: np.ndarray) -> np.ndarray:
        targets, signs = self.r_permutation()
        out = np.empty_like(np.asarray(v, dtype=float))
        out[targets] = signs * v
        return out

    def apply_r_inverse(self, v: np.ndarray) -> np.ndarray:
        targets, signs = self.r_permutation()
        return signs * np.asarray(v, dtype=float)[targets]

    # -- convenience indices ------------------------------------------------

    def vacuum_vector(self) -> np.ndarray:
        out = np.zeros(self.basis.dim)
        out[self.basis.vacuum_index()] = 1.0
        return out

    def fermi_sea_index(self) -> int:
        return self.basis.fermi_sea_index()

    def correlation_norm(self) -> float:
        """Cached 1-norm of the correlation generator matrix."""
        if self._b_norm is None:
            m = self.correlation_generator.matrix
            if m.nnz == 0:
                self._b_norm = 0.0
            else:
                self._b_norm = float(
                    np.max(np.asarray(abs(m).sum(axis=0))))
        return self._b_norm


def _coefficient_table(p2_values, unit: float, f, dim: int,
                       support: float, breakpoints) -> dict:
    # Profiles built from p-wave solutions carry ~eps cancellation noise
    # (e.g. 1 - psi/A with psi == A), so grant the transform an absolute
    # floor tied to the largest profile value actually seen.
    probe = (np.arange(257) + 0.5) * (support / 257.0)
    fmax = float(np.max(np.abs([f(r) for r in probe])))
    floor = 1e-14 * (1.0 + fmax)
    table = {}
    for p2 in p2_values:
        table[int(p2)] = radial_fourier_transform(
            f, dim, unit * math.sqrt(p2), support,
            breakpoints=breakpoints, rel_tol=_COEFF_TOL, noise_floor=floor)
    return table


def build_model(spec: TorusSpec, k_F: float, lambda_cut: float,
                potential: RadialPotential, correlation: CutoffScattering,
                sector=None, alpha: float = 0.5,
                basis_cap: int = 2 * 10 ** 6) -> FockModel:
    """Assemble every operator family for one torus configuration.

    sector=None builds the full 2^M space; an iterable of particle
    numbers restricts to those sectors (operators are then compressions
    onto the held sectors).  Warns CutoffTooSmall when the regularized
    correlation terms want momenta beyond the cutoff.
    """
    if potential.dim != spec.d:
        raise ValueError(
            f"potential dimension {potential.dim} != torus dimension {spec.d}")
    if correlation.base.dim != spec.d:
        raise ValueError(
            f"correlation profile dimension {correlation.base.dim} != {spec.d}")
    modes = build_mode_set(spec, k_F, lambda_cut)
    basis = FockBasis(modes, sectors=sector, cap=basis_cap)
    ball = fermi_ball(spec, k_F)
    ball_rows = {tuple(int(c) for c in row) for row in ball.momenta}
    mode_ball_rows = {tuple(int(c) for c in row)
                      for row in modes.ints[modes.in_ball]}
    if ball_rows != mode_ball_rows:
        raise RuntimeError("mode-set ball disagrees with the enumerated ball")

    diffs = difference_set(modes)
    p2_values = np.unique((diffs * diffs).sum(axis=1))
    unit = spec.unit
    r0 = potential.r0
    v_breaks = tuple(potential.interior_breakpoints())
    v_hat = _coefficient_table(p2_values, unit, potential, spec.d, r0,
                               v_breaks)
    phi_support = correlation.support_radius
    phi_breaks = tuple(sorted(b for b in {r0, 1.0 / k_F}
                              if 0.0 < b < phi_support))
    phi_hat = _coefficient_table(p2_values, unit, correlation.phi, spec.d,
                                 phi_support, phi_breaks)

    def v_times_phi(r):
        return potential(r) * correlation.phi(r)

    vphi_hat = _coefficient_table(p2_values, unit, v_times_phi, spec.d, r0,
                                  v_breaks)

    mode_norms = np.sqrt(modes.k2)
    u_values = regularizer_profile(mode_norms, k_F)
    a_length = correlation.base.a

    occupation = mode_occupation_matrix(basis)
    number_op = diagonal_operator(basis, np.ones(modes.n_modes), "number",
                                  occupation)
    kinetic = diagonal_operator(basis, modes.k2, "kinetic", occupation)
    excitation_energy = diagonal_operator(
        basis, np.abs(modes.k2 - k_F ** 2), "excitation_energy", occupation)
    far_threshold = 2.0 * k_F
    far_mask = mode_norms > far_threshold
    number_far = diagonal_operator(basis, far_mask.astype(float),
                                   "number_far", occupation)
    if a_length > 0.0:
        alpha_threshold = k_F * (a_length * k_F) ** (-alpha)
    else:
        alpha_threshold = math.inf
    alpha_mask = mode_norms > alpha_threshold
    number_far_alpha = diagonal_operator(basis, alpha_mask.astype(float),
                                         "number_far_alpha", occupation)
    momentum_charges = [occupation @ modes.ints[:, j].astype(float)
                        for j in range(spec.d)]

    pref = 0.5 / spec.L ** spec.d

    inter_fam = enumerate_quartic(modes, v_hat, source="all",
                                  targets_outside=False)
    interaction = SparseOperator(
        basis=basis, matrix=assemble_quartic(basis, inter_fam, "mixed", pref),
        name="interaction", hermitian=True,
        dropped_fraction=inter_fam.dropped_fraction)

    vphi_fam = enumerate_quartic(modes, vphi_hat, source="all",
                                 targets_outside=False)
    interaction_phi = SparseOperator(
        basis=basis, matrix=assemble_quartic(basis, vphi_fam, "mixed", pref),
        name="interaction_phi", hermitian=True,
        dropped_fraction=vphi_fam.dropped_fraction)

    g2_fam = enumerate_quartic(modes, v_hat, source="ball",
                               targets_outside=True)
    g2_matrix = assemble_quartic(basis, g2_fam, "create", pref)
    pair_excitation_half = SparseOperator(
        basis=basis, matrix=g2_matrix, name="pair_excitation_half",
        dropped_fraction=g2_fam.dropped_fraction)
    pair_excitation = SparseOperator(
        basis=basis, matrix=(g2_matrix + g2_matrix.T).tocsr(),
        name="pair_excitation", hermitian=True,
        dropped_fraction=g2_fam.dropped_fraction)

    q4_fam = enumerate_quartic(modes, v_hat, source="outside",
                               targets_outside=True)
    excited_pair_interaction = SparseOperator(
        basis=basis, matrix=assemble_quartic(basis, q4_fam, "mixed", pref),
        name="excited_pair_interaction", hermitian=True,
        dropped_fraction=q4_fam.dropped_fraction)

    def u_of_norm(n):
        return float(regularizer_profile(n, k_F))

    g_fam = enumerate_quartic(modes, phi_hat, source="ball",
                              targets_outside=True, u_of_norm=u_of_norm)
    g_matrix = assemble_quartic(basis, g_fam, "annihilate", pref)
    correlation_half = SparseOperator(
        basis=basis, matrix=g_matrix, name="correlation_half",
        dropped_fraction=g_fam.dropped_fraction)
    correlation_generator = SparseOperator(
        basis=basis, matrix=(g_matrix - g_matrix.T).tocsr(),
        name="correlation_generator", anti_hermitian=True,
        dropped_fraction=g_fam.dropped_fraction)

    hamiltonian = SparseOperator(
        basis=basis,
        matrix=(kinetic.matrix + interaction.matrix).tocsr(),
        name="hamiltonian", hermitian=True,
        dropped_fraction=inter_fam.dropped_fraction)

    needed = 3.0 * k_F + g_fam.max_transfer
    if lambda_cut < needed or g_fam.dropped_weight > 0.0:
        warnings.warn(
            f"regularized correlation terms want momenta up to {needed:.3g} "
            f"but the cutoff is {lambda_cut:.3g}; dropped weight fraction "
            f"{g_fam.dropped_fraction:.3e}", CutoffTooSmall, stacklevel=2)

    dropped = {
        "interaction": inter_fam.dropped_fraction,
        "interaction_phi": vphi_fam.dropped_fraction,
        "pair_excitation": g2_fam.dropped_fraction,
        "excited_pair_interaction": q4_fam.dropped_fraction,
        "correlation_generator": g_fam.dropped_fraction,
    }

    return FockModel(
        spec=spec, k_F=float(k_F), lambda_cut=float(lambda_cut),
        potential=potential, correlation=correlation, alpha=float(alpha),
        a_length=float(a_length), modes=modes, basis=basis, ball=ball,
        e_fermi=ball.E_F, v_hat=v_hat, phi_hat=phi_hat, vphi_hat=vphi_hat,
        u_values=u_values, kinetic=kinetic, interaction=interaction,
        interaction_phi=interaction_phi, hamiltonian=hamiltonian,
        excitation_energy=excitation_energy,
        pair_excitation_half=pair_excitation_half,
        pair_excitation=pair_excitation,
        excited_pair_interaction=excited_pair_interaction,
        correlation_half=correlation_half,
        correlation_generator=correlation_generator,
        number_op=number_op, number_far=number_far,
        number_far_alpha=number_far_alpha,
        momentum_charges=momentum_charges, dropped_fractions=dropped,
        far_threshold=far_threshold, alpha_threshold=alpha_threshold)


def particle_hole_conjugate(model: FockModel,
                            op: SparseOperator) -> SparseOperator:
    """R^T A R on the model basis, via the explicit signed permutation."""
    r = model.r_matrix()
    conjugated = (r.T @ op.matrix @ r).tocsr()
    return SparseOperator(basis=model.basis, matrix=conjugated,
                          name=f"conjugated({op.name})",
                          hermitian=op.hermitian,
                          anti_hermitian=op.anti_hermitian,
                          dropped_fraction=op.dropped_fraction)


# ---------------------------------------------------------------------------
# flow evolution
# ---------------------------------------------------------------------------


def apply_exp_generator(model: FockModel, v: np.ndarray,
                        t: float) -> np.ndarray:
    """e^{t B} v for the antisymmetric generator, by scaled Taylor series.

    Scaling by powers of two keeps every segment in the norm regime
    where the series contracts; raises ExpDivergence if a segment's
    terms fail to shrink within the term cap.
    """
    v = np.asarray(v, dtype=float).copy()
    b = model.correlation_generator.matrix
    if t == 0.0 or b.nnz == 0:
        return v
    scale = model.correlation_norm() * abs(t)
    segments = 1 if scale <= 1.0 else 1 << max(0, math.ceil(math.log2(scale)))
    dt = t / segments
    for _ in range(segments):
        acc = v.copy()
        term = v
        done = False
        for n in range(1, _EXP_TERM_CAP + 1):
            term = b.dot(term)
            term *= dt / n
            acc += term
            norm_term = np.linalg.norm(term)
            if not np.isfinite(norm_term):
                raise ExpDivergence(
                    f"exponential series overflowed at term {n} "
                    f"(segment step {dt:.3g})")
            if norm_term <= 1e-14 * max(1.0, np.linalg.norm(acc)):
                done = True
                break
        if not done:
            raise ExpDivergence(
                f"exponential series still churning after {_EXP_TERM_CAP} "
                f"terms (segment step {dt:.3g})")
        v = acc
    return v


def evolve_xi(model: FockModel, psi: np.ndarray, lam: float) -> np.ndarray:
    """The flow state e^{-lam B} R^T psi of the decorrelation family."""
    xi0 = model.apply_r_inverse(np.asarray(psi, dtype=float))
    return apply_exp_generator(model, xi0, -lam)


# ---------------------------------------------------------------------------
# ground states
# ---------------------------------------------------------------------------


def _lanczos_ground(matrix, tol: float, max_iter: int):
    """Smallest eigenpair by Lanczos with full reorthogonalization."""
    n = matrix.shape[0]
    rng = np.random.default_rng(978364821)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    steps = min(max_iter, n)
    vecs = np.empty((steps + 1, n))
    vecs[0] = q
    alphas: list[float] = []
    betas: list[float] = []
    for m in range(steps):
        w = matrix @ vecs[m]
        a = float(vecs[m] @ w)
        alphas.append(a)
        w -= a * vecs[m]
        if m > 0:
            w -= betas[-1] * vecs[m - 1]
        # two reorthogonalization sweeps against the whole block
        for _ in range(2):
            w -= vecs[:m + 1].T @ (vecs[:m + 1] @ w)
        beta = float(np.linalg.norm(w))
        theta, s = eigh_tridiagonal(alphas, betas, select="i",
                                    select_range=(0, 0))
        est = beta * abs(s[-1, 0])
        if est <= 0.25 * tol * max(abs(theta[0]), 1.0) or beta <= 1e-14 * max(
                abs(theta[0]), 1.0):
            vec = vecs[:m + 1].T @ s[:, 0]
            vec /= np.linalg.norm(vec)
            return float(theta[0]), vec
        betas.append(beta)
        vecs[m + 1] = w / beta
    raise NoConvergence(
        f"Lanczos did not reach tolerance {tol} in {steps} iterations")


def ground_state(model: FockModel, sector: int,
                 dense_threshold: int = _DENSE_EIG_LIMIT,
                 max_iter: int = 500, tol: float = 1e-9):
    """Lowest eigenpair of the Hamiltonian in one particle-number sector.

    Dense solve below dense_threshold, Lanczos with full
    reorthogonalization above; the returned vector lives on the full
    model basis (zeros outside the sector) with its largest component
    made positive for determinism.  The residual contract is checked on
    exit and NoConvergence raised if violated.
    """
    idx = model.basis.sector_indices(int(sector))
    if len(idx) == 0:
        raise SectorMissing(f"sector {sector} not held by this basis")
    sub = model.hamiltonian.matrix[idx][:, idx]
    if len(idx) <= dense_threshold:
        dense = sub.toarray()
        vals, mat = eigh(dense, subset_by_index=(0, 0))
        energy, vec = float(vals[0]), mat[:, 0]
    else:
        energy, vec = _lanczos_ground(sub, tol, max_iter)
    residual = float(np.linalg.norm(sub @ vec - energy * vec))
    if residual > tol * max(abs(energy), 1.0):
        raise NoConvergence(
            f"eigen residual {residual:.3e} above {tol} * max(|E|, 1)")
    pivot = int(np.argmax(np.abs(vec)))
    if vec[pivot] < 0.0:
        vec = -vec
    full = np.zeros(model.basis.dim)
    full[idx] = vec
    return energy, full


# ---------------------------------------------------------------------------
# identity reports
# ---------------------------------------------------------------------------


def _max_abs(matrix) -> float:
    return 0.0 if matrix.nnz == 0 else float(np.max(np.abs(matrix.data)))


def wick_vacuum_sum(model: FockModel) -> float:
    """Vacuum expectation of [pair_excitation, generator] as a lattice sum.

    Independent of the sparse matrices: the fully contracted pairings
    reduce to a direct sum over ordered hole pairs (k, k') and the
    excited output momentum t, with the exchange pairing carrying the
    opposite sign.  The enumeration mirrors the operator truncation so
    the two routes are comparable term for term.
    """
    modes = model.modes
    ints = modes.ints
    index = modes.index
    in_ball = modes.in_ball
    ball_idx = np.flatnonzero(in_ball)
    out_idx = np.flatnonzero(~in_ball)
    u = model.u_values
    total = 0.0
    for ik in ball_idx:
        k = ints[ik]
        for ik2 in ball_idx:
            if ik2 == ik:
                continue
            k2 = ints[ik2]
            for it in out_idx:
                t = ints[it]
                t2 = k + k2 - t
                it2 = index.get(tuple(int(c) for c in t2))
                if it2 is None or it2 == it or in_ball[it2]:
                    continue
                p2 = int(((t - k) ** 2).sum())
                x2 = int(((t - k2) ** 2).sum())
                total += (model.v_hat[p2] * u[it] * u[it2]
                          * (model.phi_hat[p2] - model.phi_hat[x2]))
    return -total / model.spec.L ** (2 * model.spec.d)


def commutator_suite(model: FockModel) -> dict:
    """Exact-identity report: CAR, Wick vacuum value, counting identities.

    Needs the all-sector basis (operator products leave truncated
    sectors).  Returns measured defects and the smallest admissible
    constants of the diagonal counting inequalities.
    """
    if not model.basis.full:
        raise ValueError("commutator suite needs the all-sector basis")
    basis = model.basis
    m = model.modes.n_modes
    eye = sp.identity(basis.dim, format="csr")
    ann = [annihilator_matrix(basis, j) for j in range(m)]
    car = 0.0
    pair_car = 0.0
    for j in range(m):
        aj = ann[j]
        for k in range(j, m):
            ak = ann[k]
            mixed = aj @ ak.T + ak.T @ aj
            if j == k:
                mixed = mixed - eye
            car = max(car, _max_abs(sp.csr_matrix(mixed)))
            same = aj @ ak + ak @ aj
            pair_car = max(pair_car, _max_abs(sp.csr_matrix(same)))

    vac = model.vacuum_vector()
    q2 = model.pair_excitation.matrix
    b = model.correlation_generator.matrix
    w_matrix = float(vac @ (q2 @ (b @ vac)) - vac @ (b @ (q2 @ vac)))
    w_sum = wick_vacuum_sum(model)
    w_scale = max(abs(w_sum), abs(w_matrix), 1e-300)

    counts = popcount(basis.states).astype(float)
    g = model.correlation_half.matrix
    count_defect = _max_abs(sp.csr_matrix(
        commute_with_diagonal(model.correlation_generator, counts)
        + 4.0 * (g + g.T)))

    k2 = model.modes.k2
    gap = np.abs(k2 - model.k_F ** 2)
    far = np.sqrt(k2) > model.far_threshold
    if far.any():
        c_far = float(np.max(model.k_F ** 2 / gap[far]))
    else:
        c_far = 0.0
    alpha_sel = np.sqrt(k2) > model.alpha_threshold
    if alpha_sel.any() and model.a_length > 0.0:
        scale = (model.a_length * model.k_F) ** (2.0 * model.alpha)
        c_alpha = float(np.max(model.k_F ** 2 / (scale * gap[alpha_sel])))
    else:
        c_alpha = 0.0

    return {
        "car_mixed_defect": car,
        "car_pair_defect": pair_car,
        "wick_matrix": w_matrix,
        "wick_sum": w_sum,
        "wick_rel_defect": abs(w_matrix - w_sum) / w_scale,
        "count_commutator_defect": count_defect,
        "number_conservation_defect": conservation_defect(
            model.hamiltonian, counts),
        "momentum_conservation_defect": max(
            conservation_defect(model.hamiltonian, charge)
            for charge in model.momentum_charges),
        "far_count_constant": c_far,
        "alpha_count_constant": c_alpha,
        "dropped_fractions": dict(model.dropped_fractions),
    }
