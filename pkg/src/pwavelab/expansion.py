"""Energy expansions, bracket intervals, and scaling-exponent fits.

Per-particle energies are reported as dimensionless terms in units of
k_F^2, so a breakdown reads E/N = k_F^2 * sum(term values).  The term
labels form a closed vocabulary:

    kinetic          free-gas value (3/5, 1/2, or 1/3)
    p-wave           leading interaction shift c_d (a k_F)^{p_d}
    effective-range  d=3 refinement, needs an effective range input
    second-order     d=3 (a k_F)^6 coefficient
    error-envelope   envelope shapes used by the bracket bounds
    finite-size      N^{-1/d} envelope

Bracket intervals carry user-chosen envelope constants because the
underlying bounds hold with unspecified constants; defaulting them to
one and echoing them keeps the arbitrariness visible instead of baked
in.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, MissingEffectiveRange, UnsupportedDim
from .scattering import ScalingFit

TERM_LABELS = ("kinetic", "p-wave", "effective-range", "second-order",
               "error-envelope", "finite-size")

# free-gas energy per particle over k_F^2, and the leading interaction
# coefficient c_d with its power p_d of (a k_F)
FREE_GAS_TERM = {1: 1.0 / 3.0, 2: 0.5, 3: 0.6}
PWAVE_COEF = {1: 2.0 / (3.0 * math.pi), 2: 0.25, 3: 2.0 / (5.0 * math.pi)}
PWAVE_POWER = {1: 1, 2: 2, 3: 3}

SECOND_ORDER_COEF = (2066.0 - 312.0 * math.log(2.0)) \
    / (10395.0 * math.pi ** 2)
EFFECTIVE_RANGE_COEF = -1.0 / (35.0 * math.pi)


def _require_dim(dim):
    if dim not in (1, 2, 3):
        raise UnsupportedDim(f"no energy expansion in dimension {dim}")
    return int(dim)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Term-by-term per-particle energy, each value in units of k_F^2."""

    dim: int
    a: float
    k_F: float
    N: int | None
    R_eff: float | None
    C_err: float | None
    terms: tuple
    total: float
    bracket: tuple | None = None
    flags: tuple = ()

    def __post_init__(self):
        for label, _ in self.terms:
            if label not in TERM_LABELS:
                raise ValueError(f"unknown term label {label!r}")
        if not math.isclose(self.total, sum(v for _, v in self.terms),
                            rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("total does not equal the sum of terms")

    def term(self, label):
        for name, value in self.terms:
            if name == label:
                return value
        raise KeyError(label)

    def labels(self):
        return tuple(name for name, _ in self.terms)

    def per_particle_energy(self):
        """Total in absolute units (k_F^2 times the dimensionless sum)."""
        return self.k_F ** 2 * self.total


def energy_expansion(dim, a, k_F, N=None, R_eff=None):
    """Evaluate the known per-particle energy expansion terms.

    d=3 carries four terms (kinetic, p-wave, effective-range,
    second-order); the effective-range piece needs R_eff and is dropped
    with a MissingEffectiveRange warning when that input is absent.
    d=2 and d=1 have their kinetic and leading p-wave terms only.
    """
    dim = _require_dim(dim)
    a = float(a)
    k_F = float(k_F)
    if a < 0.0:
        raise ValueError(f"scattering length must be >= 0, got {a}")
    if k_F <= 0.0:
        raise ValueError(f"k_F must be positive, got {k_F}")
    x = a * k_F
    terms = [("kinetic", FREE_GAS_TERM[dim]),
             ("p-wave", PWAVE_COEF[dim] * x ** PWAVE_POWER[dim])]
    flags = ()
    if dim == 3:
        if R_eff is not None:
            terms.append((
                "effective-range",
                EFFECTIVE_RANGE_COEF * a ** 6 * k_F ** 5 / float(R_eff)))
        else:
            flags = ("effective-range term omitted: no R_eff supplied",)
            warnings.warn("effective-range term omitted: no R_eff supplied",
                          MissingEffectiveRange, stacklevel=2)
        terms.append(("second-order", SECOND_ORDER_COEF * x ** 6))
    return EnergyBreakdown(
        dim=dim, a=a, k_F=k_F, N=None if N is None else int(N),
        R_eff=None if R_eff is None else float(R_eff), C_err=None,
        terms=tuple(terms), total=sum(v for _, v in terms), flags=flags)


def _envelope(x, power):
    # x^power |log x|, continued by its limit 0 at x = 0
    if x == 0.0:
        return 0.0
    return x ** power * abs(math.log(x))


def error_envelopes(dim, a, k_F):
    """The (lower, upper) bound envelope shapes, no constants applied.

    d=3 uses x^{3.3}|log x| below and x^4|log x| above; d=2 uses
    x^{2.25}|log x| on both sides.  Values are dimensionless (units of
    k_F^2 per particle), x = a k_F.
    """
    dim = _require_dim(dim)
    x = float(a) * float(k_F)
    if dim == 3:
        return _envelope(x, 3.3), _envelope(x, 4.0)
    if dim == 2:
        env = _envelope(x, 2.25)
        return env, env
    raise UnsupportedDim(
        "no bracket in one dimension: the two-sided result there is "
        "external input, only the leading formula is evaluated")


def bound_bracket(dim, a, k_F, N, C_low=1.0, C_up=1.0, C_fs=1.0):
    """Lower/upper interval for the per-particle energy, absolute units.

        lower = k_F^2 [e_d + c_d x^{p_d} - C_low err_low(x) - C_fs N^{-1/d}]
        upper = k_F^2 [e_d + c_d x^{p_d} + C_up err_up(x) + C_fs N^{-1/d}]

    with x = a k_F and the envelope shapes of error_envelopes.  The
    constants are the caller's choice (the bounds hold for *some*
    constant; nothing pins its value) and default to one.
    """
    dim = _require_dim(dim)
    a = float(a)
    k_F = float(k_F)
    n = int(N)
    if a < 0.0 or k_F <= 0.0 or n <= 0:
        raise ValueError("need a >= 0, k_F > 0, N >= 1")
    if min(C_low, C_up, C_fs) < 0.0:
        raise ValueError("envelope constants must be >= 0")
    err_low, err_up = error_envelopes(dim, a, k_F)
    x = a * k_F
    leading = FREE_GAS_TERM[dim] + PWAVE_COEF[dim] * x ** PWAVE_POWER[dim]
    size = n ** (-1.0 / dim)
    lower = k_F ** 2 * (leading - C_low * err_low - C_fs * size)
    upper = k_F ** 2 * (leading + C_up * err_up + C_fs * size)
    return lower, upper


@dataclass(frozen=True)
class SpinfulInput:
    """Multi-component comparison point: counts, s-wave length, box size."""

    counts: tuple
    a_s: float
    L: float
    dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "counts",
                           tuple(int(n) for n in self.counts))
        if any(n < 0 for n in self.counts):
            raise ValueError("component counts must be >= 0")
        if self.a_s < 0.0:
            raise ValueError("s-wave scattering length must be >= 0")
        if self.L <= 0.0:
            raise ValueError("box size must be positive")


def spinful_energy(inp):
    """Total energy of a multi-component gas with s-wave cross coupling.

    sum_s (3/5) N_s (6 pi^2 rho_s)^{2/3} + sum_{s != s'} 4 pi a_s N_s
    N_s' / L^3 over ordered component pairs; three dimensions only.
    The cross term is first order in a_s and much larger than the
    single-component p-wave shift at comparable density.
    """
    if inp.dim != 3:
        raise UnsupportedDim(
            f"spinful comparison defined in d=3 only, got d={inp.dim}")
    vol = inp.L ** 3
    free = sum(0.6 * n * (6.0 * math.pi ** 2 * n / vol) ** (2.0 / 3.0)
               for n in inp.counts)
    cross = sum(4.0 * math.pi * inp.a_s * n1 * n2 / vol
                for i, n1 in enumerate(inp.counts)
                for j, n2 in enumerate(inp.counts) if i != j)
    return free + cross


def _fit_power(x, y):
    lx = np.log(x)
    ly = np.log(np.abs(y))

    def line(target):
        coef, res, *_ = np.polyfit(lx, target, 1, full=True)
        ssr = float(res[0]) if len(res) else 0.0
        return float(coef[0]), ssr

    p_plain, ssr_plain = line(ly)
    # the log-corrected model is only meaningful with x away from 1,
    # where |log x| does not vanish
    if np.min(np.abs(lx)) > 1e-3:
        p_log, ssr_log = line(ly - np.log(np.abs(lx)))
        if ssr_log < ssr_plain:
            return ScalingFit(exponent=p_log, log_flag=True,
                              residual_power=ssr_plain,
                              residual_power_log=ssr_log)
    else:
        ssr_log = math.inf
    return ScalingFit(exponent=p_plain, log_flag=False,
                      residual_power=ssr_plain, residual_power_log=ssr_log)


def scaling_table(sweeps):
    """Fit a power law (optionally times |log x|) per swept quantity.

    sweeps maps quantity name -> iterable of (x, value) points; at
    least four points per quantity and a nondegenerate x span are
    required.  Unlike the scattering-side norm fit this accepts any
    positive x (system-size sweeps have x > 1), so callers pick the
    variable to resolve.
    """
    report = {}
    for name, points in sweeps.items():
        pts = [(float(px), float(py)) for px, py in points]
        if len(pts) < 4:
            raise InsufficientSamples(
                f"{name}: need >= 4 points, got {len(pts)}")
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        if np.any(x <= 0.0):
            raise ValueError(f"{name}: sweep variable must be positive")
        if np.any(y == 0.0):
            raise ValueError(f"{name}: cannot fit exact zeros")
        if np.max(x) < np.min(x) * 1.0001:
            raise InsufficientSamples(f"{name}: sweep span is degenerate")
        report[name] = _fit_power(x, y)
    return report
