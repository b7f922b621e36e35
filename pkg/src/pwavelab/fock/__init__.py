"""Exact many-body machinery on small momentum-space Fock spaces."""

from .audit import AuditReport, energy_audit, trial_state, trial_vs_oracle
from .basis import (FockBasis, ModeSet, apply_monomial, build_mode_set,
                    particle_hole_permutation, popcount)
from .model import (FockModel, apply_exp_generator, build_model,
                    commutator_suite, evolve_xi, ground_state,
                    particle_hole_conjugate, regularizer_profile,
                    wick_vacuum_sum)
from .operators import (QuarticFamily, SparseOperator, annihilator_matrix,
                        assemble_quartic, conservation_defect,
                        diagonal_operator, difference_set, enumerate_quartic,
                        mode_occupation_matrix, symmetry_defect)

__all__ = [
    "AuditReport", "FockBasis", "FockModel", "ModeSet", "QuarticFamily",
    "SparseOperator", "annihilator_matrix", "apply_exp_generator",
    "apply_monomial", "assemble_quartic", "build_mode_set", "build_model",
    "commutator_suite", "conservation_defect", "diagonal_operator",
    "difference_set", "energy_audit", "enumerate_quartic", "evolve_xi",
    "ground_state", "mode_occupation_matrix", "particle_hole_conjugate",
    "particle_hole_permutation", "popcount", "regularizer_profile",
    "symmetry_defect", "trial_state", "trial_vs_oracle", "wick_vacuum_sum",
]
