"""Ground-state computation by normalized preconditioned descent.

The minimizer of the constrained Rayleigh quotient is found by projected
gradient descent on the manifold |u|_{L^{p+1}} = 1 with positivity
enforced through the positive part, preconditioned by the inverse of
(-Delta)^s + mean(V_eps) (diagonal in frequency space).  An optional
second-order stage solves the linearized stationarity system with MINRES
to push the residual to near round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .grid_spectral import Field, FracLapOperator, Grid, fourier_shift, integrate
from .model import Potential, ProblemParams, positive_power, rescaled_potential_on_grid

__all__ = [
    "SolverConfig",
    "SolveResult",
    "init_field",
    "minimize_rayleigh",
    "ground_state_constant",
    "newton_refine",
    "symmetrize_values",
]

INIT_KINDS = ("gaussian_bump", "random_positive", "warm_start")

# Abort threshold for obviously misconfigured starts.
_MAX_INITIAL_QUOTIENT = 1e6
_UNDERFLOW_FLOOR = 1e-150


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    step: float = 1.0
    tol_residual: float = 1e-6
    tol_stall: float = 1e-12
    init_kind: str = "gaussian_bump"
    rng_seed: int = 0
    refine: bool = False

    def __post_init__(self):
        if self.step <= 0 or self.tol_residual <= 0 or self.tol_stall <= 0:
            raise ValueError("step and tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init_kind not in INIT_KINDS:
            raise ValueError(f"init_kind must be one of {INIT_KINDS}")


@dataclass
class SolveResult:
    """Converged (or diagnosed) minimizer with its certificate.

    residual_l2 is the relative Euler-Lagrange defect
    |(-Delta)^s u + V_eps u - nu u^p|_{L^2} / |u|_{L^2}.
    """

    minimizer: Field
    nu: float
    residual_l2: float
    iters: int
    converged: bool
    energy_trace: list = dataclass_field(default_factory=list)
    stop_reason: str = ""
    symmetry_correction: float | None = None


def init_field(grid: Grid, kind: str, seed: int = 0, warm: Field | None = None) -> Field:
    """Strictly positive starting field.

    gaussian_bump: exp(-|x|^2); random_positive: the bump modulated by
    seeded noise, clipped from below at 0.1 of the bump; warm_start: copy
    of the provided field.
    """
    if kind == "warm_start":
        if warm is None:
            raise ValueError("warm_start requires a field")
        return warm.copy()
    # floor keeps the far tail strictly positive where exp underflows
    bump = np.maximum(np.exp(-(grid.radius() ** 2)), 1e-300)
    if kind == "gaussian_bump":
        return Field(grid, bump)
    if kind == "random_positive":
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(grid.shape)
        return Field(grid, np.maximum(bump * (1.0 + 0.3 * noise), 0.1 * bump))
    raise ValueError(f"unknown init kind {kind!r}")


class _QuotientProblem:
    """Shared state for one solve: potential samples and preconditioner."""

    def __init__(self, params: ProblemParams, op: FracLapOperator, grid: Grid):
        if not grid.compatible_with(op.grid):
            raise ValueError("operator grid mismatch")
        self.params = params
        self.op = op
        self.grid = grid
        self.v_eps = rescaled_potential_on_grid(params, grid)
        self.precond_symbol = op.symbol + float(np.mean(self.v_eps))

    def normalize(self, values: np.ndarray) -> np.ndarray:
        norm = (integrate(self.grid, np.abs(values) ** (self.params.p + 1.0))) ** (
            1.0 / (self.params.p + 1.0)
        )
        if not np.isfinite(norm) or norm < _UNDERFLOW_FLOOR:
            raise ValueError("field collapsed to zero: box or step misconfigured")
        return values / norm

    def quotient(self, values: np.ndarray) -> float:
        uh = np.fft.fftn(values)
        scale = self.grid.cell_measure / self.grid.node_count
        quad = float(np.sum(self.op.symbol * np.abs(uh) ** 2) * scale)
        quad += integrate(self.grid, self.v_eps * values**2)
        denom = integrate(self.grid, np.abs(values) ** (self.params.p + 1.0)) ** (
            2.0 / (self.params.p + 1.0)
        )
        return quad / denom

    def residual(self, values: np.ndarray, nu: float) -> np.ndarray:
        return (
            self.op.apply_values(values)
            + self.v_eps * values
            - nu * positive_power(values, self.params.p)
        )

    def precondition(self, values: np.ndarray) -> np.ndarray:
        out = np.fft.ifftn(np.fft.fftn(values) / self.precond_symbol)
        return out.real

    def relative_residual(self, values: np.ndarray, nu: float) -> float:
        res = self.residual(values, nu)
        unorm = np.sqrt(integrate(self.grid, values**2))
        return float(np.sqrt(integrate(self.grid, res**2)) / unorm)


def minimize_rayleigh(
    params: ProblemParams,
    op: FracLapOperator,
    cfg: SolverConfig,
    initial: Field | None = None,
    stop=None,
    projector=None,
) -> SolveResult:
    """Projected preconditioned descent for the constrained quotient.

    Accepted steps never increase the quotient (backtracking line search);
    iteration ends on the relative EL residual, on an energy stall, or at
    max_iters.  Non-convergence is reported, never papered over.

    An optional projector (values -> values) restricts the iteration to an
    invariant class, e.g. radial competitors; it is applied to the start
    and after every trial step, before the positive part.
    """
    prob = _QuotientProblem(params, op, op.grid)
    if initial is not None:
        u0 = initial.values
    else:
        u0 = init_field(op.grid, cfg.init_kind, cfg.rng_seed).values
    if projector is not None:
        u0 = projector(u0)
    u = prob.normalize(np.maximum(u0, 0.0))

    nu = prob.quotient(u)
    if not np.isfinite(nu) or nu > _MAX_INITIAL_QUOTIENT:
        raise ValueError(
            f"initial quotient {nu:.3g} exceeds {_MAX_INITIAL_QUOTIENT:.0e}: "
            "configuration error"
        )

    trace = [nu]
    step = cfg.step
    res_rel = prob.relative_residual(u, nu)
    reason = "max_iters"
    iters = 0
    stall_count = 0

    for iters in range(1, cfg.max_iters + 1):
        if stop is not None and stop():
            reason = "cancelled"
            break
        if res_rel <= cfg.tol_residual:
            reason = "residual"
            break

        grad = prob.precondition(prob.residual(u, nu))
        accepted = False
        for _ in range(40):
            trial = u - step * grad
            if projector is not None:
                trial = projector(trial)
            trial = np.maximum(trial, 0.0)
            try:
                trial = prob.normalize(trial)
            except ValueError:
                step *= 0.5
                continue
            nu_trial = prob.quotient(trial)
            if nu_trial <= nu:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            reason = "stall"
            break

        drop = nu - nu_trial
        u, nu = trial, nu_trial
        trace.append(nu)
        step = min(step * 1.25, cfg.step * 16.0)
        res_rel = prob.relative_residual(u, nu)

        if drop <= cfg.tol_stall * max(abs(nu), 1.0):
            stall_count += 1
            if stall_count >= 5:
                reason = "stall"
                break
        else:
            stall_count = 0
    else:
        iters = cfg.max_iters

    if res_rel <= cfg.tol_residual and reason == "max_iters":
        reason = "residual"
    converged = res_rel <= cfg.tol_residual
    return SolveResult(
        minimizer=Field(op.grid, u),
        nu=nu,
        residual_l2=res_rel,
        iters=iters,
        converged=converged,
        energy_trace=trace,
        stop_reason=reason,
    )


def newton_refine(
    u0: Field,
    params: ProblemParams,
    op: FracLapOperator,
    nu0: float,
    cfg: SolverConfig,
    max_steps: int = 12,
    target: float = 1e-12,
) -> SolveResult:
    """Second-order polish of a near-minimizer.

    Damped Newton iteration on the bordered stationarity system: the
    linearization (-Delta)^s + V_eps - p nu u^{p-1} acts matrix-free and
    each step solves it with preconditioned MINRES (relative tolerance
    1e-8), with the multiplier update pinned by the normalization
    constraint.  Falls back with converged=False when the inner solves
    stagnate.
    """
    prob = _QuotientProblem(params, op, op.grid)
    grid = op.grid
    n = grid.node_count
    p = params.p

    u = prob.normalize(np.maximum(u0.values, 0.0))
    nu = prob.quotient(u)
    res_rel = prob.relative_residual(u, nu)
    if res_rel > 5e-2:
        raise ValueError(
            f"newton_refine needs a near-minimizer (residual {res_rel:.2e} > 5e-2)"
        )

    trace = [nu]
    reason = "max_steps"
    inner_failed = False

    def solve_inner(matvec, rhs: np.ndarray):
        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        M = LinearOperator(
            (n, n),
            matvec=lambda z: prob.precondition(z.reshape(grid.shape)).ravel(),
            dtype=float,
        )
        sol, info = minres(A, rhs.ravel(), rtol=1e-8, maxiter=400, M=M)
        return sol.reshape(grid.shape), info

    steps = 0
    for steps in range(1, max_steps + 1):
        F = prob.residual(u, nu)
        res_rel = float(np.sqrt(integrate(grid, F**2) / integrate(grid, u**2)))
        if res_rel <= target:
            reason = "residual"
            break

        weight = p * nu * positive_power(u, p - 1.0)

        def matvec(z):
            zz = z.reshape(grid.shape)
            out = prob.op.apply_values(zz) + prob.v_eps * zz - weight * zz
            return out.ravel()

        up = positive_power(u, p)
        a, info_a = solve_inner(matvec, F)
        b, info_b = solve_inner(matvec, up)
        if info_a != 0 or info_b != 0:
            inner_failed = True
            reason = "inner_solve_stagnated"
            break

        denom = integrate(grid, up * b)
        c0 = (1.0 - integrate(grid, np.abs(u) ** (p + 1.0))) / (p + 1.0)
        if abs(denom) < 1e-300:
            inner_failed = True
            reason = "singular_constraint"
            break
        dnu = (c0 + integrate(grid, up * a)) / denom
        du = -a + dnu * b

        t = 1.0
        norm_F = np.sqrt(integrate(grid, F**2))
        accepted = False
        while t >= 1e-4:
            u_t = u + t * du
            nu_t = nu + t * dnu
            if np.min(u_t) < -1e-12 * np.max(np.abs(u_t)):
                u_t = np.maximum(u_t, 0.0)
            F_t = prob.residual(np.maximum(u_t, 0.0), nu_t)
            if np.sqrt(integrate(grid, F_t**2)) <= (1.0 - 0.5 * t) * norm_F:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            reason = "no_descent"
            break
        u = prob.normalize(np.maximum(u_t, 0.0))
        nu = prob.quotient(u)
        trace.append(nu)

    res_rel = prob.relative_residual(u, nu)
    converged = res_rel <= cfg.tol_residual and not inner_failed
    return SolveResult(
        minimizer=Field(grid, u),
        nu=nu,
        residual_l2=res_rel,
        iters=steps,
        converged=converged,
        energy_trace=trace,
        stop_reason=reason,
    )


def _recenter_to_origin(u: Field) -> Field:
    """Roll the argmax node to the origin node, then shift the refined
    maximum exactly onto it (spectral sub-node shift)."""
    # imported here: analysis depends on this module at load time
    from .analysis import locate_maximizer

    grid = u.grid
    idx = np.unravel_index(int(np.argmax(u.values)), grid.shape)
    origin = tuple(int(np.argmin(np.abs(grid.axis_coordinates))) for _ in range(grid.dim))
    rolled = np.roll(u.values, tuple(o - i for i, o in zip(idx, origin)),
                     axis=tuple(range(grid.dim)))
    centered = Field(grid, rolled)
    est = locate_maximizer(centered)
    return fourier_shift(centered, est.point)


def _reflect(values: np.ndarray, axis: int) -> np.ndarray:
    """Node reflection x -> -x along one axis (the -L node maps to itself)."""
    return np.roll(np.flip(values, axis=axis), 1, axis=axis)


def symmetrize_values(values: np.ndarray) -> np.ndarray:
    """Angular average over the exact lattice symmetries about the origin.

    N = 1: even part.  N = 2: mean over the dihedral orbit (per-axis
    reflections and the axis swap) -- the angular average the square
    lattice supports without mixing distinct radii; the result is exactly
    even in each coordinate.
    """
    if values.ndim == 1:
        return 0.5 * (values + _reflect(values, 0))
    images = []
    for base in (values, values.T):
        for flip_x in (False, True):
            for flip_y in (False, True):
                img = base
                if flip_x:
                    img = _reflect(img, 0)
                if flip_y:
                    img = _reflect(img, 1)
                images.append(img)
    return sum(images) / len(images)


def _symmetrize(u: Field) -> Field:
    return Field(u.grid, symmetrize_values(u.values))


def ground_state_constant(
    lam: float,
    dim: int,
    s: float,
    p: float,
    grid: Grid,
    cfg: SolverConfig,
) -> SolveResult:
    """Radial ground state of the constant-potential problem.

    Solves with V = lam, recenters the maximum at the origin, enforces
    radial symmetry a posteriori (even part for N = 1, angular averaging
    for N = 2) and re-polishes.  The relative size of the symmetrization
    correction is reported; corrections above 1e-4 flag a suspect solve.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    params = ProblemParams(
        dim=dim,
        s=s,
        p=p,
        eps=0.0,
        x0=np.zeros(dim),
        potential=Potential("constant", (lam,)),
    )
    op = FracLapOperator(grid, s)
    result = minimize_rayleigh(params, op, cfg)
    # an energy stall close to the minimizer is recoverable by the
    # second-order stage; anything farther out is a genuine failure
    if not result.converged and result.residual_l2 > 5e-2:
        return result

    prob = _QuotientProblem(params, op, grid)
    centered = _recenter_to_origin(result.minimizer)
    symmetric = _symmetrize(centered)
    correction = np.sqrt(
        integrate(grid, (symmetric.values - centered.values) ** 2)
        / integrate(grid, centered.values**2)
    )
    u = prob.normalize(np.maximum(symmetric.values, 0.0))
    nu = prob.quotient(u)
    polished = Field(grid, u)

    if cfg.refine:
        refined = newton_refine(polished, params, op, nu, cfg)
        if refined.converged:
            polished, nu = refined.minimizer, refined.nu

    res_rel = prob.relative_residual(polished.values, nu)
    return SolveResult(
        minimizer=polished,
        nu=nu,
        residual_l2=res_rel,
        iters=result.iters,
        converged=res_rel <= cfg.tol_residual,
        energy_trace=result.energy_trace,
        stop_reason=result.stop_reason,
        symmetry_correction=float(correction),
    )
