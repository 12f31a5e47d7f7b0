"""Diagnostics for the ground-state family: concentration location, tail
decay, criticality identity, limit convergence, profile expansion,
orthogonality relations, second-variation coercivity and multi-start
uniqueness.

All diagnostics are pure functions; sweep entries can be computed
concurrently and aggregated afterwards.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grid_spectral import (
    Field,
    FracLapOperator,
    dsquare_inner,
    fourier_shift,
    hs_norm,
    integrate,
    l2_inner,
    l2_norm,
    spectral_derivative,
)
from .model import (
    ProblemParams,
    positive_power,
    rescaled_potential_on_grid,
)
from .solver import (
    SolverConfig,
    ground_state_constant,
    init_field,
    minimize_rayleigh,
    newton_refine,
    symmetrize_values,
)

__all__ = [
    "MaximizerEstimate",
    "locate_maximizer",
    "criticality_residual",
    "criticality_envelope",
    "DecayFit",
    "decay_fit",
    "ProjectionBasis",
    "build_projection_basis",
    "second_variation",
    "OrthogonalityReport",
    "orthogonality_diagnostics",
    "ProfileGap",
    "profile_gap",
    "NuTrend",
    "nu_convergence",
    "CoercivityReport",
    "coercivity_check",
    "UniquenessReport",
    "multistart_uniqueness",
    "SweepReport",
    "run_eps_sweep",
]


@dataclass
class MaximizerEstimate:
    point: np.ndarray
    node_index: tuple
    multiple: bool = False


def locate_maximizer(u: Field) -> MaximizerEstimate:
    """Argmax node refined by a per-axis quadratic fit on the 3-node stencil.

    Ties within 1e-12 of the maximum are broken by the lowest flat index;
    non-adjacent ties raise the multiplicity flag.
    """
    grid = u.grid
    vals = u.values
    vmax = float(np.max(vals))
    if vmax <= 0 and np.min(vals) >= 0:
        raise ValueError("cannot locate the maximizer of an identically zero field")

    flat_ties = np.flatnonzero(vals.ravel() >= vmax - 1e-12 * max(abs(vmax), 1.0))
    idx = np.unravel_index(int(flat_ties[0]), grid.shape)
    multiple = False
    if len(flat_ties) > 1:
        tie_idx = np.array(np.unravel_index(flat_ties, grid.shape)).T
        n = grid.points_per_axis
        for other in tie_idx[1:]:
            hops = np.abs(other - np.array(idx))
            hops = np.minimum(hops, n - hops)
            if np.max(hops) > 1:
                multiple = True
                break

    point = np.empty(grid.dim)
    h = grid.spacing
    n = grid.points_per_axis
    for axis in range(grid.dim):
        sl = list(idx)
        sl[axis] = (idx[axis] - 1) % n
        um = vals[tuple(sl)]
        sl[axis] = (idx[axis] + 1) % n
        up = vals[tuple(sl)]
        u0 = vals[idx]
        curvature = um - 2.0 * u0 + up
        offset = 0.0 if curvature >= 0 else 0.5 * h * (um - up) / curvature
        offset = float(np.clip(offset, -0.5 * h, 0.5 * h))
        point[axis] = grid.axis_coordinates[idx[axis]] + offset
    return MaximizerEstimate(point=point, node_index=idx, multiple=multiple)


def criticality_residual(v: Field, params: ProblemParams) -> np.ndarray:
    """Components int dV_i(eps*x + x0) v^2 dx, normalized.

    Small values certify that the concentration point is a critical point
    of the potential.  Normalization is |grad V|_inf over the sampled
    window times |v|_{L^2}^2, so values are comparable across eps; for
    constant potentials the result is exactly zero.
    """
    grid = v.grid
    pts = params.eps * grid.points() + params.x0
    grads = params.potential.gradient(pts)
    sup = float(np.max(np.linalg.norm(grads, axis=-1)))
    if sup == 0.0:
        return np.zeros(params.dim)
    vsq = v.values**2
    comps = np.array(
        [integrate(grid, grads[..., i] * vsq) for i in range(params.dim)]
    )
    return comps / (sup * integrate(grid, vsq))


def criticality_envelope(v: Field, params: ProblemParams) -> float:
    """Normalized upper envelope int |grad V(eps*x + x0)| v^2 dx.

    Bounds how large the signed criticality residual could possibly be with
    the mass distribution of v; shrinks with eps as the potential gradient
    flattens in the rescaled frame.
    """
    grid = v.grid
    pts = params.eps * grid.points() + params.x0
    norms = np.linalg.norm(params.potential.gradient(pts), axis=-1)
    sup = float(np.max(norms))
    if sup == 0.0:
        return 0.0
    vsq = v.values**2
    return integrate(grid, norms * vsq) / (sup * integrate(grid, vsq))


@dataclass
class DecayFit:
    slope: float
    r2_stat: float
    n_bins: int
    log_r: np.ndarray
    log_u: np.ndarray


def decay_fit(u: Field, fit_window: tuple | None = None) -> DecayFit:
    """Least-squares slope of log u against log |x| over radial bin averages.

    The default window [0.3 L, 0.7 L] skips both the core (where the power
    law has not set in) and the wrap-around zone; r2 must stay below 0.8 L.
    A polynomial tail of order q shows up as slope -q with r2 close to 1;
    faster-than-polynomial decay gives a much steeper slope and a poor fit.
    """
    grid = u.grid
    L = grid.half_width
    if fit_window is None:
        fit_window = (0.3 * L, 0.7 * L)
    r1, r2 = fit_window
    if not (0 < r1 < r2):
        raise ValueError("fit window must satisfy 0 < r1 < r2")
    if r2 > 0.8 * L:
        raise ValueError(f"fit window end {r2} exceeds 0.8 L = {0.8 * L}")

    center = locate_maximizer(u).point
    r = grid.radius(center=center).ravel()
    vals = u.values.ravel()
    mask = (r >= r1) & (r <= r2)
    if np.any(vals[mask] <= 0):
        raise ValueError("fit window contains non-positive values")

    dr = grid.spacing
    bins = np.floor((r[mask] - r1) / dr).astype(int)
    sums = np.bincount(bins, weights=vals[mask])
    counts = np.bincount(bins)
    good = counts > 0
    if np.count_nonzero(good) < 8:
        raise ValueError("fewer than 8 radial bins in the fit window")
    radii = r1 + dr * (np.arange(len(sums)) + 0.5)
    prof = sums[good] / counts[good]
    log_r = np.log(radii[good])
    log_u = np.log(prof)

    A = np.stack([log_r, np.ones_like(log_r)], axis=1)
    coef, *_ = np.linalg.lstsq(A, log_u, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((log_u - pred) ** 2))
    ss_tot = float(np.sum((log_u - np.mean(log_u)) ** 2))
    r2_stat = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(
        slope=float(coef[0]),
        r2_stat=r2_stat,
        n_bins=int(np.count_nonzero(good)),
        log_r=log_r,
        log_u=log_u,
    )


class ProjectionBasis:
    """Span of the ground state and its translation generators, with the
    oblique projector onto its eps-orthogonal complement."""

    def __init__(self, base: Field, params: ProblemParams, op: FracLapOperator):
        self.base = base
        self.derivatives = [
            spectral_derivative(base, axis) for axis in range(base.grid.dim)
        ]
        self.params = params
        self.op = op
        self.v_eps = rescaled_potential_on_grid(params, base.grid)
        self.members = [base] + self.derivatives
        k = len(self.members)
        gram = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                gram[i, j] = gram[j, i] = self._inner(
                    self.members[i].values, self.members[j].values
                )
        self.gram = gram
        self.condition_number = float(np.linalg.cond(gram))

    def _inner(self, a: np.ndarray, b: np.ndarray) -> float:
        fa = Field(self.base.grid, a)
        fb = Field(self.base.grid, b)
        return dsquare_inner(self.op, fa, fb) + integrate(
            self.base.grid, self.v_eps * a * b
        )

    def inner(self, a: Field, b: Field) -> float:
        return self._inner(a.values, b.values)

    def project(self, v: Field) -> Field:
        """eps-orthogonal projection of v onto the complement of the span."""
        rhs = np.array([self._inner(v.values, m.values) for m in self.members])
        coeffs = np.linalg.solve(self.gram, rhs)
        out = v.values.copy()
        for c, m in zip(coeffs, self.members):
            out = out - c * m.values
        return Field(v.grid, out)


def build_projection_basis(
    base: Field, params: ProblemParams, op: FracLapOperator
) -> ProjectionBasis:
    return ProjectionBasis(base, params, op)


def second_variation(
    v: Field,
    w: Field,
    base: Field,
    nu: float,
    params: ProblemParams,
    op: FracLapOperator,
    v_eps: np.ndarray | None = None,
) -> float:
    """Quadratic form of the energy at the ground state:
    <v,w>_eps - p nu int base^{p-1} v w."""
    if v_eps is None:
        v_eps = rescaled_potential_on_grid(params, base.grid)
    quad = dsquare_inner(op, v, w) + integrate(base.grid, v_eps * v.values * w.values)
    weight = positive_power(base.values, params.p - 1.0)
    return quad - params.p * nu * integrate(base.grid, weight * v.values * w.values)


@dataclass
class OrthogonalityReport:
    gram_normalized: np.ndarray
    power_vector: np.ndarray
    basis_norms: np.ndarray


def orthogonality_diagnostics(
    U: Field, op: FracLapOperator, lam: float, p: float
) -> OrthogonalityReport:
    """Normalized Gram matrix of {U, dU_1, ..., dU_N} in the lam-weighted
    inner product <a,b> = <a,b>_{D^{s,2}} + lam <a,b>_{L^2}, plus the
    Cauchy-Schwarz-normalized couplings int U^p dU_i.

    Off-diagonal entries vanish for the recentered radial ground state;
    they are the diagnostics.
    """
    grid = U.grid
    members = [U] + [spectral_derivative(U, axis) for axis in range(grid.dim)]
    k = len(members)

    def inner(a: Field, b: Field) -> float:
        return dsquare_inner(op, a, b) + lam * l2_inner(a, b)

    gram = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            gram[i, j] = gram[j, i] = inner(members[i], members[j])
    norms = np.sqrt(np.diag(gram))
    normalized = gram / np.outer(norms, norms)

    up = Field(grid, positive_power(U.values, p))
    up_norm = l2_norm(up)
    power = np.array(
        [
            l2_inner(up, d) / (up_norm * l2_norm(d))
            for d in members[1:]
        ]
    )
    return OrthogonalityReport(
        gram_normalized=normalized,
        power_vector=power,
        basis_norms=norms,
    )


@dataclass
class ProfileGap:
    gap: float
    shift: np.ndarray
    wrap_flagged: bool


def profile_gap(v: Field, u_tilde: Field, op: FracLapOperator) -> ProfileGap:
    """H^s distance between the maximizer-aligned minimizer and the limit
    profile; the alignment shift realizes the composite translation of the
    expansion and is returned for the report."""
    if not v.grid.compatible_with(u_tilde.grid):
        raise ValueError("fields must share a grid")
    est = locate_maximizer(v)
    shift = est.point
    L = v.grid.half_width
    flagged = bool(np.any(np.abs(shift) > 0.5 * L))
    aligned = fourier_shift(v, shift)
    diff = Field(v.grid, aligned.values - u_tilde.values)
    return ProfileGap(gap=hs_norm(op, diff), shift=shift, wrap_flagged=flagged)


@dataclass
class NuTrend:
    verdict: bool
    gaps: list
    last_gap: float
    failing_pair: tuple | None = None


def nu_convergence(report: "SweepReport", nu_limit: float, threshold: float = 0.1) -> NuTrend:
    """Checks |nu(eps) - nu_limit| is non-increasing along the sweep and the
    final gap is below the threshold.  Non-converged entries are excluded."""
    eps, nus = [], []
    for e, nu, ok in zip(report.eps_list, report.nu_list, report.converged_flags):
        if ok:
            eps.append(e)
            nus.append(nu)
    if len(nus) < 3:
        raise ValueError("need at least 3 converged sweep entries")
    gaps = [abs(nu - nu_limit) for nu in nus]
    failing = None
    for i in range(len(gaps) - 1):
        if gaps[i + 1] > gaps[i]:
            failing = (eps[i], eps[i + 1])
            break
    verdict = failing is None and gaps[-1] <= threshold
    return NuTrend(verdict=verdict, gaps=gaps, last_gap=gaps[-1], failing_pair=failing)


@dataclass
class CoercivityReport:
    min_quotient: float
    neg_direction_value: float
    gram_condition: float
    probe_quotients: list


def coercivity_check(
    U_a: Field,
    nu: float,
    params: ProblemParams,
    op: FracLapOperator,
    n_probe: int = 8,
    seed: int = 0,
    descent_steps: int = 50,
) -> CoercivityReport:
    """Probe the second variation on the orthogonal complement W_eps.

    Random smooth fields are projected onto W_eps and their quadratic-form
    quotients J''[v,v]/|v|_eps^2 recorded; an inverse-power-style descent
    then drives the smallest probe further down.  Returns the minimum
    found (coercivity claims it stays positive) together with the quotient
    along the ground state itself (negative for small eps).
    """
    grid = U_a.grid
    basis = ProjectionBasis(U_a, params, op)
    if basis.condition_number > 1e12:
        raise ValueError(
            f"projection basis is ill-conditioned (cond = {basis.condition_number:.2e})"
        )
    v_eps = basis.v_eps
    rng = np.random.default_rng(seed)

    def eps_inner(a: Field, b: Field) -> float:
        return dsquare_inner(op, a, b) + integrate(grid, v_eps * a.values * b.values)

    def quotient(v: Field) -> float:
        return second_variation(v, v, U_a, nu, params, op, v_eps) / eps_inner(v, v)

    # Smooth random probes: white noise filtered to the resolved low band.
    ksq = grid.frequency_squares()
    filt = np.exp(-ksq / 18.0)
    probes = []
    for _ in range(n_probe):
        noise = rng.standard_normal(grid.shape)
        smooth = np.fft.ifftn(filt * np.fft.fftn(noise)).real
        probes.append(basis.project(Field(grid, smooth)))

    quotients = [quotient(v) for v in probes]
    v = probes[int(np.argmin(quotients))]
    q = min(quotients)

    weight = params.p * nu * positive_power(U_a.values, params.p - 1.0)
    step = 0.5
    for _ in range(descent_steps):
        hv = op.apply_values(v.values) + v_eps * v.values - weight * v.values
        bv = op.apply_values(v.values) + v_eps * v.values
        grad = Field(grid, hv - q * bv)
        cand = Field(grid, v.values - step * basis.project(grad).values)
        cand = basis.project(cand)
        norm = np.sqrt(eps_inner(cand, cand))
        if norm < 1e-300:
            break
        cand = Field(grid, cand.values / norm)
        q_cand = quotient(cand)
        if q_cand < q:
            v, q = cand, q_cand
            step = min(step * 1.2, 4.0)
        else:
            step *= 0.5
            if step < 1e-6:
                break

    neg_value = second_variation(U_a, U_a, U_a, nu, params, op, v_eps) / eps_inner(
        U_a, U_a
    )
    return CoercivityReport(
        min_quotient=float(q),
        neg_direction_value=float(neg_value),
        gram_condition=basis.condition_number,
        probe_quotients=[float(x) for x in quotients],
    )


@dataclass
class UniquenessReport:
    max_pairwise_gap: float
    all_converged: bool
    nus: list
    gaps: list


def multistart_uniqueness(
    params: ProblemParams,
    op: FracLapOperator,
    k: int = 5,
    seed: int = 0,
    cfg: SolverConfig | None = None,
    radial_class: bool = True,
) -> UniquenessReport:
    """Solve from k distinct random starts and measure the maximum pairwise
    H^s distance after maximizer alignment.

    By default the descent is restricted to the radial class of
    competitors, which also removes the translation drift that stalls free
    minimization for potentials without interior coercivity.  The verdict is withheld (gap
    reported as inf) when any start fails to converge.
    """
    if k < 3:
        raise ValueError("need k >= 3 starts")
    if cfg is None:
        cfg = SolverConfig(refine=True)
    projector = symmetrize_values if radial_class else None
    results = []
    for i in range(k):
        start = init_field(op.grid, "random_positive", seed=seed + i)
        res = minimize_rayleigh(params, op, cfg, initial=start, projector=projector)
        if cfg.refine and res.residual_l2 <= 5e-2:
            refined = newton_refine(res.minimizer, params, op, res.nu, cfg)
            if refined.converged:
                res = refined
        results.append(res)

    all_converged = all(r.converged for r in results)
    aligned = []
    for r in results:
        est = locate_maximizer(r.minimizer)
        aligned.append(fourier_shift(r.minimizer, est.point))

    gaps = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = Field(op.grid, aligned[i].values - aligned[j].values)
            gaps.append(hs_norm(op, diff))
    max_gap = float(max(gaps)) if all_converged else float("inf")
    return UniquenessReport(
        max_pairwise_gap=max_gap,
        all_converged=all_converged,
        nus=[r.nu for r in results],
        gaps=[float(g) for g in gaps],
    )


@dataclass
class SweepReport:
    """Per-eps record of the semiclassical family."""

    eps_list: list
    nu_list: list
    maximizer_list: list
    decay_slope_list: list
    criticality_list: list
    profile_gap_list: list
    converged_flags: list
    nu_limit: float | None = None
    envelope_constants: list = dataclass_field(default_factory=list)
    criticality_envelopes: list = dataclass_field(default_factory=list)
    minimizers: list = dataclass_field(default_factory=list)
    u_tilde: Field | None = None

    def __post_init__(self):
        n = len(self.eps_list)
        for name in (
            "nu_list",
            "maximizer_list",
            "decay_slope_list",
            "criticality_list",
            "profile_gap_list",
            "converged_flags",
        ):
            if len(getattr(self, name)) != n:
                raise ValueError(f"sweep report field {name} has mismatched length")
        diffs = np.diff(np.asarray(self.eps_list, dtype=float))
        if np.any(diffs >= 0):
            raise ValueError("eps_list must be strictly decreasing")


def _envelope_constant(v: Field, order: float) -> float:
    """Smallest C with v(z) <= C / (1 + |z - z_max|^order) on the lattice."""
    est = locate_maximizer(v)
    r = v.grid.radius(center=est.point)
    return float(np.max(v.values * (1.0 + r**order)))


def _sweep_entry(eps, base: ProblemParams, op, cfg, u_tilde, nu_limit, fit_window):
    params = ProblemParams(
        dim=base.dim,
        s=base.s,
        p=base.p,
        eps=eps,
        x0=base.x0,
        potential=base.potential,
    )
    res = minimize_rayleigh(params, op, cfg)
    if cfg.refine and res.residual_l2 <= 5e-2:
        refined = newton_refine(res.minimizer, params, op, res.nu, cfg)
        if refined.converged:
            res = refined
    entry = {"eps": eps, "converged": res.converged, "nu": res.nu, "result": res}
    v = res.minimizer
    est = locate_maximizer(v)
    entry["maximizer_physical"] = base.x0 + eps * est.point
    try:
        entry["decay_slope"] = decay_fit(v, fit_window).slope
    except ValueError:
        entry["decay_slope"] = float("nan")
    entry["criticality"] = float(
        np.linalg.norm(criticality_residual(v, params))
    )
    entry["criticality_envelope"] = criticality_envelope(v, params)
    entry["profile_gap"] = profile_gap(v, u_tilde, op).gap
    entry["envelope_constant"] = _envelope_constant(
        v, base.dim + 2.0 * base.s
    )
    return entry


def run_eps_sweep(
    base: ProblemParams,
    eps_list,
    op: FracLapOperator,
    cfg: SolverConfig,
    fit_window: tuple | None = None,
    max_workers: int | None = None,
) -> SweepReport:
    """Solve the family over a decreasing eps list and collect diagnostics.

    The constant-potential limit profile is solved once at lam = inf V.
    Entries run concurrently (bounded by FRACGROUND_THREADS or
    max_workers); aggregation preserves the eps order.
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")

    lam = base.potential.inf_value
    limit = ground_state_constant(lam, base.dim, base.s, base.p, op.grid, cfg)
    if not limit.converged:
        raise RuntimeError("constant-potential limit solve did not converge")

    if max_workers is None:
        env = os.environ.get("FRACGROUND_THREADS", "")
        max_workers = int(env) if env.strip() else (os.cpu_count() or 1)
    max_workers = max(1, min(max_workers, len(eps_list)))

    if max_workers == 1:
        entries = [
            _sweep_entry(e, base, op, cfg, limit.minimizer, limit.nu, fit_window)
            for e in eps_list
        ]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            entries = list(
                pool.map(
                    lambda e: _sweep_entry(
                        e, base, op, cfg, limit.minimizer, limit.nu, fit_window
                    ),
                    eps_list,
                )
            )

    return SweepReport(
        eps_list=eps_list,
        nu_list=[e["nu"] for e in entries],
        maximizer_list=[e["maximizer_physical"] for e in entries],
        decay_slope_list=[e["decay_slope"] for e in entries],
        criticality_list=[e["criticality"] for e in entries],
        profile_gap_list=[e["profile_gap"] for e in entries],
        converged_flags=[e["converged"] for e in entries],
        nu_limit=limit.nu,
        envelope_constants=[e["envelope_constant"] for e in entries],
        criticality_envelopes=[e["criticality_envelope"] for e in entries],
        minimizers=[e["result"].minimizer for e in entries],
        u_tilde=limit.minimizer,
    )
