"""Sparse second-quantized operators on bitmask bases.

All matrices here are real (the momentum-space coefficients are radial
transforms of radial functions, hence real), so Hermitian means
symmetric.  Quartic families share one enumerator that walks ordered
mode pairs (k, k') and a momentum transfer p from the finite
mode-difference set; a term whose output momentum k+p or k'-p leaves
the cutoff is not silently lost but tallied as dropped weight, so
identity defects downstream stay attributable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis, ModeSet, apply_monomial

_ONE = np.uint64(1)
_SYM_TOL = 1e-13


def symmetry_defect(matrix, sign: float) -> float:
    """Max-entry magnitude of M - sign*M^T (sign=+1 symmetric test)."""
    if matrix.nnz == 0:
        return 0.0
    diff = (matrix - sign * matrix.T).tocoo()
    if diff.nnz == 0:
        return 0.0
    return float(np.max(np.abs(diff.data)))


@dataclass
class SparseOperator:
    """A named sparse matrix with its symmetry contract checked on build."""

    basis: FockBasis
    matrix: sp.csr_matrix
    name: str
    hermitian: bool = False
    anti_hermitian: bool = False
    dropped_fraction: float = 0.0

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        if self.hermitian:
            defect = symmetry_defect(self.matrix, 1.0)
            if defect > _SYM_TOL:
                raise ValueError(
                    f"{self.name}: symmetry defect {defect:.3e} > {_SYM_TOL}")
        if self.anti_hermitian:
            defect = symmetry_defect(self.matrix, -1.0)
            if defect > _SYM_TOL:
                raise ValueError(
                    f"{self.name}: antisymmetry defect {defect:.3e} "
                    f"> {_SYM_TOL}")

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def expectation(self, v: np.ndarray) -> float:
        return float(v @ (self.matrix @ v))

    def transpose(self) -> "SparseOperator":
        return SparseOperator(basis=self.basis, matrix=self.matrix.T.tocsr(),
                              name=self.name + "^T",
                              dropped_fraction=self.dropped_fraction)

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


def mode_occupation_matrix(basis: FockBasis) -> np.ndarray:
    """Dense (dim, M) matrix of per-mode occupation numbers, 0.0/1.0."""
    shifts = np.arange(basis.modes.n_modes, dtype=np.uint64)
    return ((basis.states[:, None] >> shifts[None, :]) & _ONE).astype(float)


def diagonal_operator(basis: FockBasis, mode_values, name: str,
                      occupation=None) -> SparseOperator:
    """Second quantization of a diagonal one-body multiplier.

    The diagonal entry of a state is the sum of mode_values over its
    occupied modes.
    """
    if occupation is None:
        occupation = mode_occupation_matrix(basis)
    diag = occupation @ np.asarray(mode_values, dtype=float)
    matrix = sp.diags(diag, format="csr")
    return SparseOperator(basis=basis, matrix=matrix, name=name,
                          hermitian=True)


def annihilator_matrix(basis: FockBasis, mode: int) -> sp.csr_matrix:
    """Matrix of a_mode on the basis (compressed to the held sectors)."""
    src, masks, amp = apply_monomial(basis.states, [(mode, False)], 1.0)
    keep = basis.contains(masks)
    rows = basis.lookup(masks[keep])
    return sp.csr_matrix((amp[keep], (rows, src[keep])),
                         shape=(basis.dim, basis.dim))


def difference_set(modes: ModeSet) -> np.ndarray:
    """Unique integer momentum-transfer vectors m1 - m2 over mode pairs."""
    diffs = modes.ints[:, None, :] - modes.ints[None, :, :]
    return np.unique(diffs.reshape(-1, modes.ints.shape[1]), axis=0)


@dataclass
class QuarticFamily:
    """Enumerated quartic terms plus the cutoff-drop bookkeeping.

    terms holds (mode indices (ik, ik2, it2, it), coefficient); kept and
    dropped are absolute-weight totals over the enumerated transfer set,
    and max_transfer is the largest physical |p| among retained terms.
    """

    terms: list = field(default_factory=list)
    kept_weight: float = 0.0
    dropped_weight: float = 0.0
    max_transfer: float = 0.0

    @property
    def dropped_fraction(self) -> float:
        total = self.kept_weight + self.dropped_weight
        return self.dropped_weight / total if total > 0.0 else 0.0


def enumerate_quartic(modes: ModeSet, weight_of_p2: dict,
                      source: str = "all", targets_outside: bool = False,
                      u_of_norm=None) -> QuarticFamily:
    """Walk ordered (k, k', p) with p in the mode-difference set.

    source selects where k, k' live ("all", "ball", "outside"); with
    targets_outside the output modes k+p and k'-p must leave the Fermi
    ball.  u_of_norm, when given, multiplies the weight by a regularizer
    evaluated at the physical norms of both output momenta (it is
    evaluated even for dropped terms, at the out-of-cutoff norm).

    A candidate whose in-cutoff legs satisfy all ball constraints but
    whose output leaves the mode set counts as dropped weight; one that
    violates a ball constraint inside the cutoff is simply not a term of
    this family.
    """
    ints = modes.ints
    index = modes.index
    in_ball = modes.in_ball
    unit = modes.spec.unit
    if source == "all":
        src = range(modes.n_modes)
    elif source == "ball":
        src = [int(i) for i in np.flatnonzero(in_ball)]
    elif source == "outside":
        src = [int(i) for i in np.flatnonzero(~in_ball)]
    else:
        raise ValueError(f"unknown source selector {source!r}")
    diffs = difference_set(modes)
    p2_int = (diffs * diffs).sum(axis=1)
    fam = QuarticFamily()
    for ik in src:
        k = ints[ik]
        for ik2 in src:
            if ik2 == ik:
                continue
            k2 = ints[ik2]
            for p, pn2 in zip(diffs, p2_int):
                w = weight_of_p2[int(pn2)]
                if w == 0.0 and u_of_norm is None:
                    continue
                t = k + p
                t2 = k2 - p
                if (t == t2).all():
                    continue
                it = index.get(tuple(int(c) for c in t))
                it2 = index.get(tuple(int(c) for c in t2))
                if u_of_norm is not None:
                    tn = unit * np.sqrt(float((t * t).sum()))
                    t2n = unit * np.sqrt(float((t2 * t2).sum()))
                    w = w * u_of_norm(tn) * u_of_norm(t2n)
                    if w == 0.0:
                        continue
                if it is None or it2 is None:
                    admissible = True
                    if targets_outside:
                        if it is not None and in_ball[it]:
                            admissible = False
                        if it2 is not None and in_ball[it2]:
                            admissible = False
                    if admissible:
                        fam.dropped_weight += abs(w)
                    continue
                if targets_outside and (in_ball[it] or in_ball[it2]):
                    continue
                fam.kept_weight += abs(w)
                fam.max_transfer = max(
                    fam.max_transfer, unit * np.sqrt(float(pn2)))
                fam.terms.append(((ik, ik2, it2, it), w))
    return fam


# application-order patterns for the quartic monomials; the written
# monomial reads right to left, so k is annihilated (or created) first
def _ops_mixed(ik, ik2, it2, it):
    return [(ik, False), (ik2, False), (it2, True), (it, True)]


def _ops_create(ik, ik2, it2, it):
    return [(ik, True), (ik2, True), (it2, True), (it, True)]


def _ops_annihilate(ik, ik2, it2, it):
    return [(ik, False), (ik2, False), (it2, False), (it, False)]


_OPS_PATTERN = {"mixed": _ops_mixed, "create": _ops_create,
                "annihilate": _ops_annihilate}


def assemble_quartic(basis: FockBasis, family: QuarticFamily,
                     pattern: str, prefactor: float) -> sp.csr_matrix:
    """Sum the family's monomials into one sparse matrix.

    pattern picks the creation/annihilation placement: "mixed" is the
    two-body normal form a*_t a*_t2 a_k' a_k, "create" turns all four
    legs into creators, "annihilate" into annihilators.  On a
    sector-restricted basis the result is the compression of the
    operator to the held sectors.
    """
    ops_of = _OPS_PATTERN[pattern]
    states = basis.states
    rows, cols, vals = [], [], []
    for (ik, ik2, it2, it), w in family.terms:
        src, masks, amp = apply_monomial(states, ops_of(ik, ik2, it2, it),
                                         prefactor * w)
        if len(src) == 0:
            continue
        keep = basis.contains(masks)
        if not keep.all():
            src, masks, amp = src[keep], masks[keep], amp[keep]
        rows.append(basis.lookup(masks))
        cols.append(src)
        vals.append(amp)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim))
    matrix = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols).astype(np.int64))),
        shape=(basis.dim, basis.dim)).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


def conservation_defect(op: SparseOperator, charge: np.ndarray) -> float:
    """Max |A_rs (q_r - q_s)| for a diagonal charge q; 0 means [A,Q]=0."""
    m = op.matrix.tocoo()
    if m.nnz == 0:
        return 0.0
    return float(np.max(np.abs(m.data * (charge[m.row] - charge[m.col]))))


def commute_with_diagonal(op: SparseOperator, charge: np.ndarray):
    """Sparse matrix of [Q, A] for diagonal Q with entries charge."""
    m = op.matrix.tocoo()
    data = m.data * (charge[m.row] - charge[m.col])
    out = sp.coo_matrix((data, (m.row, m.col)), shape=m.shape).tocsr()
    out.eliminate_zeros()
    return out
