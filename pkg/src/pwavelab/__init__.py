"""Numerical laboratory for a dilute gas of spin-polarized fermions.

Desk-scale verification of the objects entering the low-density energy
expansion of a fully polarized Fermi gas with repulsive pair interactions:
the zero-energy p-wave scattering problem and its cutoff correlation
function, the free Fermi sea on a periodic box, exact operator identities
in a truncated Fock space, and the leading energy formulas in one, two
and three dimensions.
"""

__version__ = "0.1.0"

from . import errors, expansion, fock, quadrature, scattering, torus

__all__ = ["errors", "expansion", "fock", "quadrature", "scattering",
           "torus", "__version__"]
