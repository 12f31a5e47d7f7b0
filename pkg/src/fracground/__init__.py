"""Ground states of the semiclassical fractional Schrodinger equation.

Solves constrained Rayleigh-quotient minimization problems for
eps^{2s} (-Delta)^s u + V(x) u = u^p on a truncated periodic box, and
provides desk-scale numerical checks of the concentration, decay,
orthogonality, coercivity and uniqueness properties of the minimizers.
"""

__version__ = "0.1.0"
