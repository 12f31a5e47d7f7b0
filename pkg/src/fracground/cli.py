"""Experiment runner and persistence layer.

Each run parses a flat key=value config, executes one named experiment,
writes a JSON run record (plus a TSV table for sweeps) atomically, prints
one line per verdict, and exits 0 only if every executed verdict passed.

Sweep table column order is part of the external contract:
eps, nu, max_x[, max_y], decay_slope, crit_norm, profile_gap, converged.
Numbers in files are serialized in full-precision scientific notation;
console output uses 12 significant digits.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    coercivity_check,
    decay_fit,
    locate_maximizer,
    multistart_uniqueness,
    run_eps_sweep,
)
from .grid_spectral import (
    Field,
    FracLapOperator,
    apply_flap_quadrature,
    apply_flap_spectral,
    calibrate_cns,
    fourier_shift,
    l2_inner,
    lp_norm,
    make_grid,
)
from .model import ProblemParams, make_potential, subcritical_exponent_ok
from .solver import (
    SolverConfig,
    ground_state_constant,
    minimize_rayleigh,
    newton_refine,
)

EXPERIMENTS = (
    "solve",
    "sweep-eps",
    "uniqueness",
    "coercivity",
    "validate-operator",
    "decay",
)

_KNOWN_KEYS = {
    "experiment",
    "dim",
    "s",
    "p",
    "eps",
    "x0",
    "potential",
    "potential_params",
    "n",
    "L",
    "max_iters",
    "step",
    "tol_residual",
    "tol_stall",
    "init_kind",
    "rng_seed",
    "refine",
    "eps_list",
    "output_dir",
    "seed",
    "k_starts",
    "radial_class",
    "n_probe",
    "coercivity_offset",
    "fit_r1",
    "fit_r2",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    dim: int = 1
    s: float = 0.5
    p: float = 3.0
    eps: float = 0.25
    x0: list = field(default_factory=lambda: [0.0])
    potential: str = "constant"
    potential_params: list | None = None
    n: int = 2048
    L: float = 32.0
    max_iters: int = 2000
    step: float = 1.0
    tol_residual: float = 1e-6
    tol_stall: float = 1e-12
    init_kind: str = "gaussian_bump"
    rng_seed: int | None = None
    refine: bool = True
    eps_list: list = field(default_factory=list)
    output_dir: str = "runs"
    seed: int = 0
    k_starts: int = 5
    radial_class: bool = True
    n_probe: int = 8
    coercivity_offset: float = 2.0
    fit_r1: float | None = None
    fit_r2: float | None = None

    def solver_config(self) -> SolverConfig:
        rng_seed = self.seed if self.rng_seed is None else self.rng_seed
        return SolverConfig(
            max_iters=self.max_iters,
            step=self.step,
            tol_residual=self.tol_residual,
            tol_stall=self.tol_stall,
            init_kind=self.init_kind,
            rng_seed=rng_seed,
            refine=self.refine,
        )

    def resolved_potential_params(self) -> list:
        if self.potential_params is not None:
            return self.potential_params
        # family defaults: unit constant, origin-centered well, unit radius
        if self.potential == "constant":
            return [1.0]
        if self.potential == "smooth_well":
            return [0.0] * self.dim
        if self.potential == "double_well":
            return [1.0]
        return []

    def problem_params(self, eps: float | None = None) -> ProblemParams:
        return ProblemParams(
            dim=self.dim,
            s=self.s,
            p=self.p,
            eps=self.eps if eps is None else eps,
            x0=np.asarray(self.x0, dtype=float),
            potential=make_potential(self.potential, self.resolved_potential_params()),
        )

    def grid(self):
        return make_grid(self.dim, self.n, self.L)

    def fit_window(self):
        if self.fit_r1 is None and self.fit_r2 is None:
            return None
        if self.fit_r1 is None or self.fit_r2 is None:
            raise ConfigError("fit_r1 and fit_r2 must be given together")
        return (self.fit_r1, self.fit_r2)


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
        return [_parse_scalar(t.strip()) for t in text.split(",") if t.strip()]
    if "," in text:
        return [_parse_scalar(t.strip()) for t in text.split(",") if t.strip()]
    return _parse_scalar(text)


def load_config(path: str) -> RunConfig:
    """Parse a flat key = value config with strict unknown-key rejection."""
    entries = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    unknown = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KNOWN_KEYS:
            unknown.append(f"{key} (line {lineno})")
            continue
        if not value.strip():
            raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
        entries[key] = _parse_value(value)
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {', '.join(unknown)}")
    if "experiment" not in entries:
        raise ConfigError(f"{path}: missing required key 'experiment'")

    for list_key in ("x0", "potential_params", "eps_list"):
        if list_key in entries and not isinstance(entries[list_key], list):
            entries[list_key] = [entries[list_key]]

    try:
        cfg = RunConfig(**entries)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _validate(cfg, path)
    return cfg


def _validate(cfg: RunConfig, path: str) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(
            f"{path}: unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}"
        )
    if not subcritical_exponent_ok(cfg.dim, cfg.s, cfg.p):
        raise ConfigError(
            f"{path}: p = {cfg.p} violates the subcriticality requirement "
            f"1 < p < (N+2s)/(N-2s) for N = {cfg.dim}, s = {cfg.s}"
        )
    try:
        make_potential(cfg.potential, cfg.resolved_potential_params())
        cfg.grid()
        cfg.solver_config()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if len(cfg.x0) != cfg.dim:
        raise ConfigError(f"{path}: x0 needs {cfg.dim} components, got {len(cfg.x0)}")
    if cfg.experiment == "sweep-eps":
        if len(cfg.eps_list) < 3:
            raise ConfigError(f"{path}: sweep-eps needs eps_list with >= 3 entries")
        diffs = np.diff(np.asarray(cfg.eps_list, dtype=float))
        if np.any(diffs >= 0):
            raise ConfigError(f"{path}: eps_list must be strictly decreasing")


@dataclass
class RunRecord:
    config_echo: dict
    tool_version: str
    wall_time_s: float
    results: dict
    verdicts: dict


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _unique_path(directory: str, stem: str, suffix: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    for counter in range(10000):
        tag = f"{stamp}" if counter == 0 else f"{stamp}-{counter}"
        path = os.path.join(directory, f"{stem}-{tag}{suffix}")
        if not os.path.exists(path):
            return path
    raise RuntimeError("could not find a free output filename")


def _fmt(x: float) -> str:
    return f"{x:.17e}"


def _downsample(values: np.ndarray, limit: int = 512) -> list:
    flat = np.asarray(values).ravel()
    stride = max(1, len(flat) // limit)
    return [float(v) for v in flat[::stride]]


def _sweep_table(report, dim: int) -> str:
    cols = ["eps", "nu"] + [f"max_{ax}" for ax in "xy"[:dim]] + [
        "decay_slope",
        "crit_norm",
        "profile_gap",
        "converged",
    ]
    lines = ["\t".join(cols)]
    for i, eps in enumerate(report.eps_list):
        row = [_fmt(eps), _fmt(report.nu_list[i])]
        row += [_fmt(c) for c in np.atleast_1d(report.maximizer_list[i])]
        row += [
            _fmt(report.decay_slope_list[i]),
            _fmt(report.criticality_list[i]),
            _fmt(report.profile_gap_list[i]),
            "true" if report.converged_flags[i] else "false",
        ]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# experiment implementations


def _exp_solve(cfg: RunConfig) -> tuple[dict, dict]:
    params = cfg.problem_params()
    grid = cfg.grid()
    op = FracLapOperator(grid, cfg.s)
    scfg = cfg.solver_config()
    res = minimize_rayleigh(params, op, scfg)
    # monotonicity is a property of the descent stage only
    trace = np.asarray(res.energy_trace)
    if scfg.refine and res.residual_l2 <= 5e-2:
        refined = newton_refine(res.minimizer, params, op, res.nu, scfg)
        if refined.converged:
            res = refined
    est = locate_maximizer(res.minimizer)
    constraint = lp_norm(res.minimizer, cfg.p + 1.0)
    results = {
        "nu": res.nu,
        "residual_l2": res.residual_l2,
        "iters": res.iters,
        "converged": res.converged,
        "stop_reason": res.stop_reason,
        "maximizer": [float(v) for v in est.point],
        "constraint_norm": constraint,
        "energy_trace_head": [float(v) for v in trace[:20]],
    }
    verdicts = {
        "converged": bool(res.converged),
        "constraint_unit_norm": bool(abs(constraint - 1.0) <= 1e-10),
        "positive": bool(np.min(res.minimizer.values) >= 0.0),
        "descent_monotone": bool(np.all(np.diff(trace) <= 0)),
    }
    return results, verdicts


def _exp_uniqueness(cfg: RunConfig) -> tuple[dict, dict]:
    params = cfg.problem_params()
    op = FracLapOperator(cfg.grid(), cfg.s)
    rep = multistart_uniqueness(
        params,
        op,
        k=cfg.k_starts,
        seed=cfg.seed,
        cfg=cfg.solver_config(),
        radial_class=cfg.radial_class,
    )
    results = {
        "max_pairwise_gap": rep.max_pairwise_gap,
        "all_converged": rep.all_converged,
        "nus": rep.nus,
        "pairwise_gaps": rep.gaps,
    }
    verdicts = {"all_converged": bool(rep.all_converged)}
    # The uniqueness assertion is made for radial potential families;
    # for exploratory potentials the gap is reported only.
    pot = params.potential
    if pot.is_radial and pot.family != "double_well":
        verdicts["unique_minimizer"] = bool(rep.max_pairwise_gap <= 1e-5)
    return results, verdicts


def _exp_coercivity(cfg: RunConfig) -> tuple[dict, dict]:
    grid = cfg.grid()
    op = FracLapOperator(grid, cfg.s)
    lam = float(cfg.resolved_potential_params()[0]) if cfg.potential == "constant" else 1.0
    gs = ground_state_constant(lam, cfg.dim, cfg.s, cfg.p, grid, cfg.solver_config())
    if not gs.converged:
        return {"converged": False}, {"ground_state_converged": False}
    params = cfg.problem_params()

    results: dict = {"nu": gs.nu, "offsets": {}}
    verdicts: dict = {"ground_state_converged": True}
    for label, offset in (("centered", 0.0), ("offset", cfg.coercivity_offset)):
        shift = np.zeros(cfg.dim)
        shift[0] = -offset
        base = fourier_shift(gs.minimizer, shift) if offset else gs.minimizer
        rep = coercivity_check(
            base, gs.nu, params, op, n_probe=cfg.n_probe, seed=cfg.seed
        )
        results["offsets"][label] = {
            "min_quotient": rep.min_quotient,
            "neg_direction_value": rep.neg_direction_value,
            "gram_condition": rep.gram_condition,
            "probe_quotients": rep.probe_quotients,
        }
        verdicts[f"coercive_{label}"] = bool(rep.min_quotient > 0)
        verdicts[f"negative_direction_{label}"] = bool(rep.neg_direction_value < 0)
    return results, verdicts


def _exp_validate_operator(cfg: RunConfig) -> tuple[dict, dict]:
    grid = make_grid(1, 256, 8.0)
    results: dict = {}

    worst_pw = 0.0
    for s in (0.25, 0.5, 0.75, 1.0):
        op = FracLapOperator(grid, s)
        for k_index in range(1, 11):
            k = grid.axis_frequencies[k_index]
            wave = Field(grid, np.cos(k * grid.axis_coordinates))
            out = apply_flap_spectral(op, wave)
            lam = abs(k) ** (2.0 * s)
            worst_pw = max(
                worst_pw, float(np.max(np.abs(out.values - lam * wave.values)) / lam)
            )
    results["plane_wave_worst_rel"] = worst_pw

    rng = np.random.default_rng(cfg.seed)
    op = FracLapOperator(grid, cfg.s if 0 < cfg.s <= 1 else 0.5)
    worst_sym = 0.0
    for _ in range(20):
        a = Field(grid, rng.standard_normal(grid.shape))
        b = Field(grid, rng.standard_normal(grid.shape))
        lhs = l2_inner(apply_flap_spectral(op, a), b)
        rhs = l2_inner(a, apply_flap_spectral(op, b))
        worst_sym = max(worst_sym, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    results["symmetry_worst_rel"] = worst_sym

    gq = make_grid(1, 8192, 32.0)
    xq = gq.axis_coordinates
    gauss = Field(gq, np.exp(-(xq**2)))
    opq = FracLapOperator(gq, 0.5)
    spectral_out = apply_flap_spectral(opq, gauss)
    c = calibrate_cns(0.5, gq)
    results["calibrated_constant"] = c
    worst_or = 0.0
    for xv in (0.0, 0.5, 1.0):
        node = int(np.argmin(np.abs(xq - xv)))
        q = apply_flap_quadrature(gauss, 0.5, xq[node], 0.05, gq.half_width, cns=c)
        worst_or = max(worst_or, abs(q - spectral_out.values[node]) / abs(spectral_out.values[node]))
    results["oracle_worst_rel"] = worst_or

    verdicts = {
        "plane_wave_identity": bool(worst_pw <= 1e-10),
        "operator_symmetry": bool(worst_sym <= 1e-8),
        "oracle_equivalence": bool(worst_or <= 1e-3),
    }
    return results, verdicts


def _exp_decay(cfg: RunConfig) -> tuple[dict, dict]:
    grid = cfg.grid()
    lam = float(cfg.resolved_potential_params()[0]) if cfg.potential == "constant" else 1.0
    gs = ground_state_constant(lam, cfg.dim, cfg.s, cfg.p, grid, cfg.solver_config())
    if not gs.converged:
        return {"converged": False}, {"ground_state_converged": False}
    window = cfg.fit_window() or (8.0, 30.0)
    fit = decay_fit(gs.minimizer, window)
    expected = -(cfg.dim + 2.0 * cfg.s)
    dev = abs(fit.slope - expected) / abs(expected)

    x = grid.radius()
    synthetic = Field(grid, 1.0 / (1.0 + x ** abs(expected)))
    control = decay_fit(synthetic, window)
    control_dev = abs(control.slope - expected) / abs(expected)

    results = {
        "nu": gs.nu,
        "slope": fit.slope,
        "expected_slope": expected,
        "relative_deviation": dev,
        "r2": fit.r2_stat,
        "control_slope": control.slope,
        "control_deviation": control_dev,
        "fit_window": list(window),
        "bins": {"log_r": [float(v) for v in fit.log_r],
                 "log_u": [float(v) for v in fit.log_u]},
    }
    verdicts = {
        "ground_state_converged": True,
        "tail_exponent_within_15pct": bool(dev <= 0.15),
        "control_within_1pct": bool(control_dev <= 0.01),
    }
    return results, verdicts


# sweep-eps is dispatched directly in run_experiment (it also writes a table).
_RUNNERS = {
    "solve": _exp_solve,
    "uniqueness": _exp_uniqueness,
    "coercivity": _exp_coercivity,
    "validate-operator": _exp_validate_operator,
    "decay": _exp_decay,
}


def run_experiment(cfg: RunConfig) -> tuple[RunRecord, str, str | None]:
    """Execute the configured experiment and persist its artifacts.

    Returns the record plus the paths of the record file and (for sweeps)
    the table file.  Partial results are still written when verdicts fail.
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    start = time.perf_counter()
    if cfg.experiment == "sweep-eps":
        base = cfg.problem_params(eps=cfg.eps_list[0])
        op = FracLapOperator(cfg.grid(), cfg.s)
        report = run_eps_sweep(
            base, cfg.eps_list, op, cfg.solver_config(), fit_window=cfg.fit_window()
        )
        results, verdicts = _sweep_results(cfg, report)
        table_text = _sweep_table(report, cfg.dim)
        table_path = _unique_path(cfg.output_dir, cfg.experiment, ".sweep.tsv")
        _atomic_write(table_path, table_text)
    else:
        results, verdicts = _RUNNERS[cfg.experiment](cfg)
        table_path = None

    record = RunRecord(
        config_echo=asdict(cfg),
        tool_version=__version__,
        wall_time_s=time.perf_counter() - start,
        results=results,
        verdicts=verdicts,
    )
    record_path = _unique_path(cfg.output_dir, cfg.experiment, ".record.json")
    _atomic_write(record_path, json.dumps(asdict(record), indent=2) + "\n")
    return record, record_path, table_path


def _sweep_results(cfg: RunConfig, report) -> tuple[dict, dict]:
    """Results/verdicts for a precomputed sweep report (shared with
    run_experiment so the table and the record come from one run)."""
    gaps = [abs(nu - report.nu_limit) for nu in report.nu_list]
    conv = report.converged_flags
    grid_spacing = 2.0 * cfg.L / cfg.n
    target = np.asarray(cfg.x0, dtype=float)
    dists = [
        float(np.linalg.norm(np.atleast_1d(m) - target)) for m in report.maximizer_list
    ]
    fine = [(e, d) for e, d, c in zip(report.eps_list, dists, conv) if c][-2:]
    rate = sum(d * e for e, d in fine) / sum(e * e for e, d in fine)
    eps_last, dist_last = fine[-1]
    rate_ok = abs(dist_last - rate * eps_last) <= 2.0 * grid_spacing

    def strictly_decreasing(xs):
        ys = [x for x, c in zip(xs, conv) if c]
        return bool(all(b < a for a, b in zip(ys, ys[1:])))

    results = {
        "nu_limit": report.nu_limit,
        "eps": list(report.eps_list),
        "nu": list(report.nu_list),
        "nu_gaps": gaps,
        "criticality": list(report.criticality_list),
        "profile_gaps": list(report.profile_gap_list),
        "decay_slopes": list(report.decay_slope_list),
        "maximizer_distance": dists,
        "concentration_rate": rate,
        "envelope_constants": list(report.envelope_constants),
        "criticality_envelopes": list(report.criticality_envelopes),
        "converged": conv,
    }
    if cfg.dim == 1:
        grid = report.u_tilde.grid
        profiles = {
            "x": _downsample(grid.axis_coordinates),
            "u_tilde": _downsample(report.u_tilde.values),
        }
        for eps, m in zip(report.eps_list, report.minimizers):
            profiles[f"v_eps_{eps:g}"] = _downsample(m.values)
        results["profiles"] = profiles

    verdicts = {
        "all_converged": bool(all(conv)),
        "nu_gap_decreasing": strictly_decreasing(gaps),
        "criticality_decreasing": strictly_decreasing(report.criticality_list),
        "profile_gap_decreasing": strictly_decreasing(report.profile_gap_list),
        "maximizer_rate_linear": bool(rate_ok),
    }
    return results, verdicts


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracground",
        description="Ground-state experiments for the fractional semiclassical equation",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--output-dir", default=None, help="override the config output_dir")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment != args.experiment:
        print(
            f"config error: config declares experiment {cfg.experiment!r}, "
            f"command line says {args.experiment!r}",
            file=sys.stderr,
        )
        return 2
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed

    record, record_path, table_path = run_experiment(cfg)
    for name, ok in record.verdicts.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    for name, value in record.results.items():
        if isinstance(value, float):
            print(f"{name} = {value:.12g}")
    print(f"record: {record_path}")
    if table_path:
        print(f"table: {table_path}")

    failed = [name for name, ok in record.verdicts.items() if not ok]
    if failed:
        print(f"failed verdicts: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
