"""Deterministic panel quadrature shared by the radial integrators.

Gauss-Legendre panels with dyadic refinement: every integrand here is
piecewise smooth with known breakpoints (potential edges, cutoff radii,
trigonometric kernels), so panel doubling converges spectrally and the
refinement ladder doubles as an error estimate.
"""

from __future__ import annotations

import numpy as np
from scipy.special import j0

from .errors import QuadratureFailure

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gauss_panel(f, a, b, level):
    edges = np.linspace(a, b, (1 << level) + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    pts = (mid + half * _GL_NODES[None, :]).ravel()
    vals = np.asarray(f(pts), dtype=float).reshape(-1, len(_GL_NODES))
    return float(half * (vals * _GL_WEIGHTS[None, :]).sum())


def adaptive_radial_integral(f, a, b, breakpoints=(), rel_tol=1e-9,
                             max_level=12, abs_tol=0.0):
    """Dyadically refined Gauss-Legendre integral of f over [a, b].

    The interval is split at the supplied breakpoints; each piece is
    refined by panel doubling until two consecutive refinements agree to
    rel_tol (relative to the running total scale).  abs_tol adds an
    absolute acceptance floor for integrands known only to finite
    absolute accuracy (evaluation noise, near-total cancellation), where
    a purely relative test could never be met.

    Raises QuadratureFailure when a piece fails to converge.
    """
    cuts = sorted({a, b, *[c for c in breakpoints if a < c < b]})
    total = 0.0
    scale = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        prev = _gauss_panel(f, lo, hi, 0)
        ok = False
        for level in range(1, max_level + 1):
            cur = _gauss_panel(f, lo, hi, level)
            budget = max(rel_tol * max(abs(cur), scale, 1e-300), abs_tol)
            if abs(cur - prev) <= budget:
                ok = True
                prev = cur
                break
            prev = cur
        if not ok:
            raise QuadratureFailure(
                f"panel [{lo}, {hi}] not converged at level {max_level}")
        total += prev
        scale = max(scale, abs(total))
    return total


def radial_fourier_transform(f, dim, p, support_radius, breakpoints=(),
                             rel_tol=1e-11, noise_floor=0.0):
    """Fourier transform of a radial function at wavenumber |p|.

    Integrates f(|x|) e^{-i p.x} over R^dim for compactly supported
    radial f; the angular integral is done in closed form, leaving a
    one-dimensional radial integral (real by symmetry):

        dim=1:  2 int f(r) cos(p r) dr
        dim=2:  2 pi int f(r) J0(p r) r dr
        dim=3:  4 pi int f(r) sin(p r)/(p r) r^2 dr

    noise_floor is the absolute accuracy of f itself; values of the
    transform below noise_floor * support are meaningless and the
    quadrature is allowed to accept at that level instead of chasing a
    relative target that cancellation noise can never meet.
    """
    p = abs(float(p))
    if dim == 1:
        def g(r):
            return f(r) * np.cos(p * r)
        front = 2.0
    elif dim == 2:
        def g(r):
            return f(r) * j0(p * r) * r
        front = 2.0 * np.pi
    elif dim == 3:
        def g(r):
            return f(r) * np.sinc(p * r / np.pi) * r * r
        front = 4.0 * np.pi
    else:
        raise ValueError(f"no radial transform for dim={dim}")
    abs_tol = noise_floor * support_radius
    return front * adaptive_radial_integral(
        g, 0.0, support_radius, breakpoints=breakpoints, rel_tol=rel_tol,
        abs_tol=abs_tol)
