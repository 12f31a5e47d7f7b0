"""Potentials, problem parameters and the two variational frames.

The rescaled frame works with V_eps(x) = V(eps*x + x0) and the quotient
nu = (|u|_{D^{s,2}}^2 + int V_eps u^2) / |u|_{L^{p+1}}^2; the physical
frame carries the eps^{2s} operator weight and the eps^{N(1-p)/(1+p)}
prefactor.  Both frames attain the same minimum value, which
`frame_transfer` plus `physical_frame_quotient` verify numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_spectral import (
    Field,
    FracLapOperator,
    Grid,
    dsquare_seminorm,
    integrate,
    lp_norm,
)

__all__ = [
    "Potential",
    "ProblemParams",
    "make_potential",
    "check_subcritical",
    "subcritical_exponent_ok",
    "rescaled_potential",
    "rescaled_potential_on_grid",
    "rayleigh_quotient",
    "energy_J",
    "el_residual",
    "frame_transfer",
    "physical_frame_quotient",
    "positive_power",
]

POTENTIAL_FAMILIES = ("constant", "smooth_well", "radial_decreasing", "double_well")

# Below this threshold a field value is treated as exactly zero when
# raising to a non-integer power, so the tail never produces NaN.
_POWER_FLOOR = 1e-30


@dataclass(frozen=True)
class Potential:
    """Analytic potential family: smooth, positive, bounded away from zero.

    families (params):
      constant (lam):            V = lam
      smooth_well (center...):   V = 1 + r^2/(1+r^2),   r = |x - center|
      radial_decreasing ():      V = 1 + 1/(1+|x|^2)
      double_well (a):           V = 1 + (|x|^2-a^2)^2/(1+|x|^4)
    """

    family: str
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise ValueError(
                f"unknown potential family {self.family!r}; "
                f"expected one of {POTENTIAL_FAMILIES}"
            )
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.family == "constant":
            if len(self.params) != 1 or self.params[0] <= 0:
                raise ValueError("constant potential needs one positive value")
        elif self.family == "double_well":
            if len(self.params) != 1:
                raise ValueError("double_well potential needs the well radius a")
        elif self.family == "radial_decreasing":
            if self.params:
                raise ValueError("radial_decreasing potential takes no parameters")

    def _center(self, dim: int) -> np.ndarray:
        if self.family != "smooth_well":
            return np.zeros(dim)
        if len(self.params) == 0:
            return np.zeros(dim)
        if len(self.params) == dim:
            return np.asarray(self.params)
        raise ValueError(
            f"smooth_well center has {len(self.params)} components, expected {dim}"
        )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """V at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        dim = pts.shape[-1]
        if self.family == "constant":
            return np.full(pts.shape[:-1], self.params[0])
        if self.family == "smooth_well":
            rsq = np.sum((pts - self._center(dim)) ** 2, axis=-1)
            return 1.0 + rsq / (1.0 + rsq)
        if self.family == "radial_decreasing":
            rsq = np.sum(pts**2, axis=-1)
            return 1.0 + 1.0 / (1.0 + rsq)
        a = self.params[0]
        rsq = np.sum(pts**2, axis=-1)
        return 1.0 + (rsq - a**2) ** 2 / (1.0 + rsq**2)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """grad V at points of shape (..., dim); same trailing shape."""
        pts = np.asarray(points, dtype=float)
        dim = pts.shape[-1]
        if self.family == "constant":
            return np.zeros_like(pts)
        if self.family == "smooth_well":
            d = pts - self._center(dim)
            rsq = np.sum(d**2, axis=-1)[..., None]
            return 2.0 * d / (1.0 + rsq) ** 2
        if self.family == "radial_decreasing":
            rsq = np.sum(pts**2, axis=-1)[..., None]
            return -2.0 * pts / (1.0 + rsq) ** 2
        a = self.params[0]
        rsq = np.sum(pts**2, axis=-1)[..., None]
        t = rsq
        df = (2.0 * (t - a**2) * (1.0 + t**2) - (t - a**2) ** 2 * 2.0 * t) / (
            1.0 + t**2
        ) ** 2
        return df * 2.0 * pts

    @property
    def inf_value(self) -> float:
        """Infimum of V over all of space."""
        if self.family == "constant":
            return self.params[0]
        # smooth_well attains 1 at its center; radial_decreasing tends to 1
        # at infinity; double_well attains 1 on |x| = a.
        return 1.0

    @property
    def is_radial(self) -> bool:
        return self.family in ("constant", "radial_decreasing", "double_well") or (
            self.family == "smooth_well" and not any(self.params)
        )


def make_potential(family: str, params=()) -> Potential:
    return Potential(family, tuple(params))


def subcritical_exponent_ok(dim: int, s: float, p: float) -> bool:
    """Admissibility of the nonlinearity exponent.

    For N > 2s the range is 1 < p < (N+2s)/(N-2s); for N <= 2s every
    p > 1 is admissible.
    """
    if p <= 1:
        return False
    if dim > 2 * s:
        return p < (dim + 2 * s) / (dim - 2 * s)
    return True


@dataclass(frozen=True)
class ProblemParams:
    """One instance of the ground-state problem.

    eps = 0 is allowed and means the constant-coefficient limit frame
    where the rescaled potential freezes at V(x0).
    """

    dim: int
    s: float
    p: float
    eps: float
    x0: np.ndarray
    potential: Potential

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be in {{1, 2}}, got {self.dim}")
        if not (0.0 < self.s <= 1.0):
            raise ValueError(f"s must lie in (0, 1], got {self.s}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.dim,):
            raise ValueError(f"x0 must have {self.dim} components, got {x0.shape}")
        object.__setattr__(self, "x0", x0)
        if not subcritical_exponent_ok(self.dim, self.s, self.p):
            raise ValueError(
                f"exponent p = {self.p} is not subcritical for N = {self.dim}, "
                f"s = {self.s} (need 1 < p < (N+2s)/(N-2s) when N > 2s)"
            )


def check_subcritical(params_or_dim, s: float | None = None, p: float | None = None) -> bool:
    """Predicate behind ProblemParams validation.

    Accepts either a ProblemParams or the raw (dim, s, p) triple, so the
    rejected combinations can be probed without constructing the params.
    """
    if isinstance(params_or_dim, ProblemParams):
        q = params_or_dim
        return subcritical_exponent_ok(q.dim, q.s, q.p)
    return subcritical_exponent_ok(int(params_or_dim), float(s), float(p))


def rescaled_potential(params: ProblemParams, x) -> np.ndarray:
    """V(eps*x + x0) at rescaled-frame points x of shape (..., dim)."""
    pts = np.asarray(x, dtype=float)
    if pts.shape == () and params.dim == 1:
        pts = pts.reshape(1)
    if pts.shape[-1] != params.dim:
        raise ValueError(f"points must have {params.dim} trailing components")
    return params.potential.evaluate(params.eps * pts + params.x0)


def rescaled_potential_on_grid(params: ProblemParams, grid: Grid) -> np.ndarray:
    """V_eps sampled at every grid node, shaped like a field."""
    if grid.dim != params.dim:
        raise ValueError("grid dimension does not match problem dimension")
    return rescaled_potential(params, grid.points())


def positive_power(values: np.ndarray, p: float) -> np.ndarray:
    """u^p for nonnegative u, mapping entries below the floor to exactly 0."""
    v = np.asarray(values)
    out = np.zeros_like(v)
    mask = v > _POWER_FLOOR
    out[mask] = v[mask] ** p
    return out


def rayleigh_quotient(u: Field, params: ProblemParams, op: FracLapOperator) -> float:
    """(|u|_{D^{s,2}}^2 + int V_eps u^2) / |u|_{L^{p+1}}^2 in the rescaled frame."""
    denom = lp_norm(u, params.p + 1.0)
    if denom == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    v_eps = rescaled_potential_on_grid(params, u.grid)
    num = dsquare_seminorm(op, u) + integrate(u.grid, v_eps * u.values**2)
    return num / denom**2


def energy_J(u: Field, nu: float, params: ProblemParams, op: FracLapOperator) -> float:
    """(1/2)|u|_eps^2 - (nu/(p+1)) int |u|^{p+1}."""
    v_eps = rescaled_potential_on_grid(params, u.grid)
    quad = dsquare_seminorm(op, u) + integrate(u.grid, v_eps * u.values**2)
    pot = integrate(u.grid, np.abs(u.values) ** (params.p + 1.0))
    return 0.5 * quad - nu / (params.p + 1.0) * pot


def el_residual(u: Field, nu: float, params: ProblemParams, op: FracLapOperator) -> Field:
    """Stationarity defect (-Delta)^s u + V_eps u - nu u^p.

    Requires a nonnegative field (the solver maintains positivity); its L2
    norm is the convergence certificate.
    """
    if np.min(u.values) < 0:
        raise ValueError("el_residual requires a nonnegative field")
    v_eps = rescaled_potential_on_grid(params, u.grid)
    res = op.apply_values(u.values) + v_eps * u.values - nu * positive_power(
        u.values, params.p
    )
    return Field(u.grid, res)


def _field_half_width(v: Field) -> float:
    """Radius at which the field has dropped to half its maximum."""
    r = v.grid.radius(center=None).ravel()
    vals = v.values.ravel()
    peak_pos = np.unravel_index(np.argmax(v.values), v.grid.shape)
    center = [v.grid.axis_coordinates[i] for i in peak_pos]
    r = v.grid.radius(center=center).ravel()
    above = r[vals >= 0.5 * np.max(vals)]
    return float(np.max(above)) if above.size else v.grid.spacing


def _interpolate_zero_extended(v: Field, query: np.ndarray) -> np.ndarray:
    """Linear interpolation at arbitrary points, zero beyond the box.

    The decaying profile is treated as a function on the whole space, so
    queries outside the source box must not wrap onto the core again.
    """
    grid = v.grid
    L = grid.half_width
    if grid.dim == 1:
        xp = np.concatenate([grid.axis_coordinates, [L]])
        fp = np.concatenate([v.values, [v.values[0]]])
        return np.interp(query[..., 0], xp, fp, left=0.0, right=0.0)
    from scipy.interpolate import RegularGridInterpolator

    ax = np.concatenate([grid.axis_coordinates, [L]])
    padded = np.pad(v.values, ((0, 1), (0, 1)), mode="wrap")
    itp = RegularGridInterpolator(
        (ax, ax), padded, method="linear", bounds_error=False, fill_value=0.0
    )
    return itp(query.reshape(-1, 2)).reshape(query.shape[:-1])


def frame_transfer(v: Field, params: ProblemParams, target_grid: Grid | None = None) -> Field:
    """Map a rescaled-frame minimizer to the physical frame.

    Returns u(x) = v((x - x0)/eps) sampled on the target grid (default: the
    source grid) by linear interpolation.  Rejects configurations where the
    dilated profile would be unresolvable (fewer than ~6 nodes across the
    half-maximum width) or would overflow the box.
    """
    if params.eps <= 0:
        raise ValueError("frame_transfer needs eps > 0")
    grid = target_grid if target_grid is not None else v.grid
    if grid.dim != v.grid.dim:
        raise ValueError("target grid dimension mismatch")
    half_width = _field_half_width(v)
    if params.eps * half_width < 3.0 * grid.spacing:
        raise ValueError(
            "dilated field not resolvable on the target grid "
            f"(eps * half-width = {params.eps * half_width:.3g} < 3h = {3 * grid.spacing:.3g})"
        )
    if params.eps > 1.0 and params.eps * v.grid.half_width > grid.half_width:
        raise ValueError("dilated support exceeds the target box")
    query = (grid.points() - params.x0) / params.eps
    return Field(grid, _interpolate_zero_extended(v, query))


def physical_frame_quotient(u: Field, params: ProblemParams, op: FracLapOperator) -> float:
    """Physical-frame quotient with its eps^{N(1-p)/(1+p)} prefactor.

    eps^{N(1-p)/(1+p)} * (eps^{2s} |u|_{D^{s,2}}^2 + int V u^2) / |u|_{L^{p+1}}^2;
    on the transferred minimizer this reproduces the rescaled-frame value.
    """
    if params.eps <= 0:
        raise ValueError("physical frame quotient needs eps > 0")
    denom = lp_norm(u, params.p + 1.0)
    if denom == 0.0:
        raise ValueError("quotient of the zero field")
    v_phys = params.potential.evaluate(u.grid.points())
    num = params.eps ** (2.0 * params.s) * dsquare_seminorm(op, u) + integrate(
        u.grid, v_phys * u.values**2
    )
    prefactor = params.eps ** (params.dim * (1.0 - params.p) / (1.0 + params.p))
    return prefactor * num / denom**2
