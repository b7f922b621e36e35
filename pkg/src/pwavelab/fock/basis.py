"""Occupation-number bases and fermionic sign bookkeeping.

States are uint64 bitmasks over a canonical mode list (lexicographic on
integer lattice coordinates); bit i set means mode i occupied.  The
creation operator at position i acting past the lower-index occupied
modes picks up (-1)^{popcount of bits below i}, which is all the sign
machinery needed: monomials in a/a* apply to an entire basis vectorized,
and the particle-hole map is a signed bit-complement of the Fermi ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SectorMissing, SectorTooLarge
from ..torus import TorusSpec

_SECTOR_CAP = 2 * 10 ** 6

_ONE = np.uint64(1)


def popcount(x):
    """Population count on uint64 arrays."""
    return np.bitwise_count(x)


@dataclass(frozen=True)
class ModeSet:
    """Ordered plane-wave modes |k| <= lambda_cut on the momentum lattice.

    Contains the whole Fermi ball; modes are sorted lexicographically by
    integer coordinates and indexed by bit position in basis states.
    """

    spec: TorusSpec
    k_F: float
    lambda_cut: float
    ints: np.ndarray        # (M, d) integer lattice coordinates
    phys: np.ndarray        # (M, d) physical momenta
    k2: np.ndarray          # |k|^2 per mode
    in_ball: np.ndarray     # boolean, |k| <= k_F
    index: dict             # integer coordinate tuple -> bit position

    @property
    def n_modes(self) -> int:
        return len(self.ints)

    @property
    def ball_mask(self) -> np.uint64:
        bits = np.uint64(0)
        for i in np.flatnonzero(self.in_ball):
            bits |= _ONE << np.uint64(i)
        return bits

    @property
    def n_ball(self) -> int:
        return int(self.in_ball.sum())


def build_mode_set(spec: TorusSpec, k_F: float, lambda_cut: float) -> ModeSet:
    if lambda_cut < k_F:
        raise ValueError(
            f"mode cutoff {lambda_cut} must contain the Fermi ball (k_F={k_F})")
    n_max = math.ceil(lambda_cut * spec.L / (2.0 * math.pi))
    axis = np.arange(-n_max, n_max + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * spec.d), indexing="ij")
    box = np.stack([g.ravel() for g in grids], axis=1)
    norm2 = (box * box).sum(axis=1)
    lim = (lambda_cut * spec.L / (2.0 * math.pi)) ** 2
    box = box[norm2 <= lim * (1.0 + 1e-12)]
    order = np.lexsort(tuple(box[:, j] for j in range(spec.d - 1, -1, -1)))
    ints = box[order]
    if len(ints) > 63:
        raise SectorTooLarge(f"{len(ints)} modes exceed the 63-bit state limit")
    phys = spec.unit * ints.astype(float)
    k2 = (phys * phys).sum(axis=1)
    ball = k2 <= (k_F ** 2) * (1.0 + 1e-12)
    index = {tuple(int(c) for c in row): i for i, row in enumerate(ints)}
    ints.setflags(write=False)
    return ModeSet(spec=spec, k_F=float(k_F), lambda_cut=float(lambda_cut),
                   ints=ints, phys=phys, k2=k2, in_ball=ball, index=index)


class FockBasis:
    """Sorted bitmask basis over a mode set, possibly sector-restricted.

    sectors = None means the full 2^M space; otherwise only the listed
    particle numbers are kept.  States are ascending uint64, so index
    lookup is a searchsorted.
    """

    def __init__(self, modes: ModeSet, sectors=None, cap: int = _SECTOR_CAP):
        self.modes = modes
        m = modes.n_modes
        if sectors is None:
            dim = 1 << m
            if dim > cap:
                raise SectorTooLarge(
                    f"full space dimension {dim} exceeds cap {cap}")
            self.states = np.arange(dim, dtype=np.uint64)
            self.full = True
        else:
            sectors = sorted(set(int(n) for n in sectors))
            if any(n < 0 or n > m for n in sectors):
                raise ValueError(f"sectors {sectors} outside [0, {m}]")
            dim = sum(math.comb(m, n) for n in sectors)
            if dim > cap:
                raise SectorTooLarge(
                    f"sector dimension {dim} exceeds cap {cap}")
            everything = np.arange(1 << m, dtype=np.uint64)
            keep = np.isin(popcount(everything), sectors)
            self.states = everything[keep]
            self.full = False
        self.states.setflags(write=False)
        self.dim = len(self.states)
        self.sectors = sectors

    def lookup(self, masks):
        """Indices of the given bitmasks; raises if any is absent."""
        masks = np.asarray(masks, dtype=np.uint64)
        if self.full:
            return masks.astype(np.int64)
        idx = np.searchsorted(self.states, masks)
        bad = (idx >= self.dim) | (self.states[np.minimum(idx, self.dim - 1)]
                                   != masks)
        if np.any(bad):
            raise SectorMissing(
                f"{int(bad.sum())} states fall outside the basis sectors")
        return idx

    def contains(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.uint64)
        if self.full:
            return np.ones(len(masks), dtype=bool)
        idx = np.searchsorted(self.states, masks)
        return (idx < self.dim) & (self.states[np.minimum(idx, self.dim - 1)]
                                   == masks)

    def sector_indices(self, n_particles: int) -> np.ndarray:
        return np.flatnonzero(popcount(self.states) == n_particles)

    def vacuum_index(self) -> int:
        return int(self.lookup(np.array([0], dtype=np.uint64))[0])

    def fermi_sea_index(self) -> int:
        return int(self.lookup(np.array([self.modes.ball_mask]))[0])


def apply_monomial(states, ops, coef):
    """Apply a normal product of a/a* factors to every basis state.

    ops is a sequence of (mode_position, is_creation) in application
    order (the rightmost factor of the written monomial comes first).
    Returns (source_positions, target_masks, amplitudes) for the states
    the monomial does not kill.
    """
    mask_ann = np.uint64(0)
    mask_cre = np.uint64(0)
    for mode, create in ops:
        bit = _ONE << np.uint64(mode)
        if create:
            mask_cre |= bit
        else:
            mask_ann |= bit
    alive = ((states & mask_ann) == mask_ann) \
        & (((states ^ mask_ann) & mask_cre) == 0)
    src = np.flatnonzero(alive)
    if len(src) == 0:
        return src, src.astype(np.uint64), np.empty(0)
    cur = states[src].copy()
    parity = np.zeros(len(src), dtype=np.uint64)
    for mode, _ in ops:
        bit = _ONE << np.uint64(mode)
        below = bit - _ONE
        parity ^= popcount(cur & below)
        cur ^= bit
    sign = np.where(parity & _ONE, -1.0, 1.0)
    return src, cur, coef * sign


def particle_hole_permutation(basis: FockBasis):
    """Signed permutation data for the particle-hole unitary R.

    R sends the state built by ordered creators on the vacuum to the
    corresponding word of ball-annihilators / outside-creators applied
    to the filled Fermi sea, so R Omega = + psi_F and R is real
    orthogonal.  Returns (target_indices, signs) with
    R e_S = signs[S] * e_{target[S]}.

    Raises SectorMissing when the basis lacks an image state.
    """
    modes = basis.modes
    ball = modes.ball_mask
    states = basis.states
    images = states ^ ball
    targets = basis.lookup(images)
    cur = np.full(basis.dim, ball, dtype=np.uint64)
    parity = np.zeros(basis.dim, dtype=np.uint64)
    # factors applied right-to-left mirror the ordered creator word, so
    # the highest mode of each state acts first
    for mode in range(modes.n_modes - 1, -1, -1):
        bit = _ONE << np.uint64(mode)
        has = (states & bit) != 0
        below = bit - _ONE
        parity[has] ^= popcount(cur[has] & below)
        cur[has] ^= bit
    signs = np.where(parity & _ONE, -1.0, 1.0)
    return targets, signs
