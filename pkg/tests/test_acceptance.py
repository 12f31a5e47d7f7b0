"""Acceptance suite: one test per top-level criterion, each printing a
pass/fail line with its measured numbers.

Run with `pytest tests/test_acceptance.py -v -s` to see every line.
"""

import numpy as np
import pytest

from fracground.analysis import (
    coercivity_check,
    decay_fit,
    multistart_uniqueness,
    orthogonality_diagnostics,
    run_eps_sweep,
)
from fracground.cli import load_config, run_experiment
from fracground.grid_spectral import (
    Field,
    FracLapOperator,
    apply_flap_quadrature,
    apply_flap_spectral,
    calibrate_cns,
    fourier_shift,
    l2_inner,
    make_grid,
)
from fracground.model import ProblemParams, make_potential
from fracground.solver import SolverConfig, ground_state_constant

# Frozen regression value for the smallest second-variation quotient on the
# orthogonal complement (N = 1, s = 0.5, p = 3, constant V = 1, eps = 0,
# probe seed 3).  The sign is the substantive claim; the value anchors the
# probe against silent regressions.
COERCIVITY_REFERENCE = 0.28394801518738516


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="module")
def workhorse_grid():
    return make_grid(1, 2048, 32.0)


@pytest.fixture(scope="module")
def ground_state_ref(workhorse_grid):
    res = ground_state_constant(
        1.0, 1, 0.5, 3.0, workhorse_grid, SolverConfig(refine=True)
    )
    assert res.converged
    return res


class TestOperatorCorrectness:
    def test_operator_correctness(self):
        grid = make_grid(1, 256, 8.0)
        worst_pw = 0.0
        for s in (0.25, 0.5, 0.75, 1.0):
            op = FracLapOperator(grid, s)
            for k_index in range(1, 11):
                k = grid.axis_frequencies[k_index]
                wave = Field(grid, np.cos(k * grid.axis_coordinates))
                lam = abs(k) ** (2.0 * s)
                out = apply_flap_spectral(op, wave)
                worst_pw = max(
                    worst_pw, float(np.max(np.abs(out.values - lam * wave.values)) / lam)
                )

        op = FracLapOperator(grid, 0.5)
        rng = np.random.default_rng(0)
        worst_sym = 0.0
        for _ in range(20):
            a = Field(grid, rng.standard_normal(grid.shape))
            b = Field(grid, rng.standard_normal(grid.shape))
            lhs = l2_inner(apply_flap_spectral(op, a), b)
            rhs = l2_inner(a, apply_flap_spectral(op, b))
            worst_sym = max(worst_sym, abs(lhs - rhs) / abs(lhs))

        gq = make_grid(1, 8192, 32.0)
        x = gq.axis_coordinates
        gauss = Field(gq, np.exp(-(x**2)))
        opq = FracLapOperator(gq, 0.5)
        spectral_out = apply_flap_spectral(opq, gauss)
        c = calibrate_cns(0.5, gq)
        worst_or = 0.0
        for xv in (0.0, 0.5, 1.0):
            node = int(np.argmin(np.abs(x - xv)))
            q = apply_flap_quadrature(gauss, 0.5, x[node], 0.05, 32.0, cns=c)
            worst_or = max(worst_or, abs(q - spectral_out.values[node]) / abs(spectral_out.values[node]))

        ok = worst_pw <= 1e-10 and worst_sym <= 1e-8 and worst_or <= 1e-3
        _report(
            "operator correctness",
            ok,
            f"plane-wave {worst_pw:.2e} (<=1e-10), symmetry {worst_sym:.2e} (<=1e-8), "
            f"oracle {worst_or:.2e} (<=1e-3)",
        )
        assert worst_pw <= 1e-10
        assert worst_sym <= 1e-8
        assert worst_or <= 1e-3


class TestScalingLaw:
    def test_constant_potential_scaling(self):
        grid = make_grid(1, 4096, 64.0)
        cfg = SolverConfig(refine=True)
        nu1 = ground_state_constant(1.0, 1, 0.5, 3.0, grid, cfg).nu
        nu2 = ground_state_constant(2.0, 1, 0.5, 3.0, grid, cfg).nu
        ratio = nu2 / nu1
        dev = abs(ratio - np.sqrt(2.0)) / np.sqrt(2.0)
        _report("scaling law", dev <= 1e-3, f"nu(2)/nu(1) = {ratio:.8f}, dev {dev:.2e} (<=1e-3)")
        assert dev <= 1e-3


class TestGroundStateContract:
    def test_ground_state_contract(self, workhorse_grid, ground_state_ref):
        from fracground.model import el_residual
        from fracground.solver import minimize_rayleigh

        params = ProblemParams(
            1, 0.5, 3.0, 0.0, np.zeros(1), make_potential("constant", (1.0,))
        )
        op = FracLapOperator(workhorse_grid, 0.5)
        raw = minimize_rayleigh(params, op, SolverConfig(init_kind="random_positive", rng_seed=7))
        res_ok = raw.converged and raw.residual_l2 <= 1e-6

        from fracground.analysis import locate_maximizer

        est = locate_maximizer(raw.minimizer)
        centered = fourier_shift(raw.minimizer, est.point)
        mirrored = np.roll(centered.values[::-1], 1)
        asym = float(
            np.sqrt(np.sum((centered.values - mirrored) ** 2) / np.sum(centered.values**2))
        )

        cfg = SolverConfig(refine=True)
        nu_a = ground_state_constant(1.0, 1, 0.5, 3.0, make_grid(1, 4096, 128.0), cfg).nu
        nu_b = ground_state_constant(1.0, 1, 0.5, 3.0, make_grid(1, 8192, 256.0), cfg).nu
        box_dev = abs(nu_a - nu_b) / abs(nu_b)

        ok = res_ok and asym <= 1e-4 and box_dev <= 1e-4
        _report(
            "ground-state contract",
            ok,
            f"residual {raw.residual_l2:.2e} (<=1e-6), evenness {asym:.2e} (<=1e-4), "
            f"box doubling {box_dev:.2e} (<=1e-4)",
        )
        assert res_ok
        assert asym <= 1e-4
        assert box_dev <= 1e-4


class TestDecayExponent:
    def test_tail_exponents(self):
        grid = make_grid(1, 4096, 64.0)
        cfg = SolverConfig(refine=True)
        window = (8.0, 30.0)
        devs = {}
        for s in (0.5, 0.75):
            res = ground_state_constant(1.0, 1, s, 3.0, grid, cfg)
            assert res.converged
            fit = decay_fit(res.minimizer, window)
            expected = -(1.0 + 2.0 * s)
            devs[s] = abs(fit.slope - expected) / abs(expected)

        synthetic = Field(grid, 1.0 / (1.0 + np.abs(grid.axis_coordinates) ** 2.0))
        control = decay_fit(synthetic, window)
        control_dev = abs(control.slope + 2.0) / 2.0

        ok = all(d <= 0.15 for d in devs.values()) and control_dev <= 0.01
        _report(
            "decay exponent",
            ok,
            f"s=0.5 dev {devs[0.5]:.3f}, s=0.75 dev {devs[0.75]:.3f} (<=0.15), "
            f"control dev {control_dev:.4f} (<=0.01)",
        )
        assert devs[0.5] <= 0.15
        assert devs[0.75] <= 0.15
        assert control_dev <= 0.01


@pytest.fixture(scope="module")
def concentration_sweep(workhorse_grid):
    base = ProblemParams(
        1, 0.5, 3.0, 0.5, np.zeros(1), make_potential("smooth_well", (0.0,))
    )
    op = FracLapOperator(workhorse_grid, 0.5)
    report = run_eps_sweep(
        base,
        [0.5, 0.25, 0.125],
        op,
        SolverConfig(refine=True),
        fit_window=(8.0, 25.0),
        max_workers=1,
    )
    assert all(report.converged_flags)
    return report


class TestConcentrationSweep:
    def test_nu_gap_strictly_decreasing(self, concentration_sweep):
        gaps = [abs(nu - concentration_sweep.nu_limit) for nu in concentration_sweep.nu_list]
        ok = all(b < a for a, b in zip(gaps, gaps[1:]))
        _report("concentration (a) nu gaps", ok, f"gaps {[f'{g:.3e}' for g in gaps]}")
        assert ok

    def test_criticality_strictly_decreasing(self, concentration_sweep):
        crit = concentration_sweep.criticality_list
        ok = all(b < a for a, b in zip(crit, crit[1:]))
        _report(
            "concentration (b) criticality",
            ok,
            f"normalized residuals {[f'{c:.3e}' for c in crit]} "
            "(identity certified at every eps; see ledger on the trend)",
        )
        assert ok

    def test_maximizer_within_linear_rate(self, concentration_sweep, workhorse_grid):
        target = np.zeros(1)
        dists = [
            float(np.linalg.norm(np.atleast_1d(m) - target))
            for m in concentration_sweep.maximizer_list
        ]
        eps = concentration_sweep.eps_list
        fine = list(zip(eps, dists))[-2:]
        rate = sum(d * e for e, d in fine) / sum(e * e for e, d in fine)
        pred_err = abs(dists[-1] - rate * eps[-1])
        ok = all(d <= max(rate, 1.0) * e for e, d in zip(eps, dists)) and (
            pred_err <= 2.0 * workhorse_grid.spacing
        )
        _report(
            "concentration (c) maximizer rate",
            ok,
            f"distances {[f'{d:.2e}' for d in dists]}, rate {rate:.2e}, "
            f"prediction error {pred_err:.2e} (<= 2h = {2 * workhorse_grid.spacing:.3f})",
        )
        assert ok

    def test_profile_gap_strictly_decreasing(self, concentration_sweep):
        gaps = concentration_sweep.profile_gap_list
        ok = all(b < a for a, b in zip(gaps, gaps[1:]))
        _report("concentration (d) profile gaps", ok, f"gaps {[f'{g:.3e}' for g in gaps]}")
        assert ok


class TestOrthogonality:
    def test_relations_in_both_dimensions(self, ground_state_ref):
        worst = 0.0
        op1 = FracLapOperator(ground_state_ref.minimizer.grid, 0.5)
        rep1 = orthogonality_diagnostics(ground_state_ref.minimizer, op1, 1.0, 3.0)
        worst = max(
            worst,
            float(np.max(np.abs(rep1.gram_normalized - np.eye(2)))),
            float(np.max(np.abs(rep1.power_vector))),
        )

        g2 = make_grid(2, 256, 20.0)
        res2 = ground_state_constant(1.0, 2, 0.5, 2.0, g2, SolverConfig(refine=True))
        assert res2.converged
        op2 = FracLapOperator(g2, 0.5)
        rep2 = orthogonality_diagnostics(res2.minimizer, op2, 1.0, 2.0)
        worst = max(
            worst,
            float(np.max(np.abs(rep2.gram_normalized - np.eye(3)))),
            float(np.max(np.abs(rep2.power_vector))),
        )

        ok = worst <= 1e-6
        _report("orthogonality", ok, f"worst normalized relation {worst:.2e} (<=1e-6)")
        assert ok


class TestSecondVariation:
    def test_coercivity_probe(self, workhorse_grid, ground_state_ref):
        params = ProblemParams(
            1, 0.5, 3.0, 0.0, np.zeros(1), make_potential("constant", (1.0,))
        )
        op = FracLapOperator(workhorse_grid, 0.5)
        rep = coercivity_check(
            ground_state_ref.minimizer, ground_state_ref.nu, params, op,
            n_probe=8, seed=3,
        )
        within_regression = abs(rep.min_quotient - COERCIVITY_REFERENCE) <= 0.2 * COERCIVITY_REFERENCE
        ok = rep.min_quotient > 0 and within_regression and rep.neg_direction_value < 0
        _report(
            "second variation",
            ok,
            f"min quotient {rep.min_quotient:.6f} (>0, regression {COERCIVITY_REFERENCE:.4f} +-20%), "
            f"ground-state direction {rep.neg_direction_value:.4f} (<0)",
        )
        assert rep.min_quotient > 0
        assert within_regression
        assert rep.neg_direction_value < 0


class TestUniqueness:
    def test_multistart_radial_decreasing(self, workhorse_grid):
        params = ProblemParams(
            1, 0.5, 3.0, 0.1, np.zeros(1), make_potential("radial_decreasing")
        )
        op = FracLapOperator(workhorse_grid, 0.5)
        rep = multistart_uniqueness(params, op, k=5, seed=11)
        ok = rep.all_converged and rep.max_pairwise_gap <= 1e-5
        _report(
            "uniqueness",
            ok,
            f"max pairwise H^s gap {rep.max_pairwise_gap:.2e} (<=1e-5), "
            f"all converged {rep.all_converged}",
        )
        assert rep.all_converged
        assert rep.max_pairwise_gap <= 1e-5


SWEEP_CONFIG = """
experiment = sweep-eps
dim = 1
s = 0.5
p = 3.0
potential = smooth_well
potential_params = 0.0
n = 1024
L = 32.0
eps_list = 0.5, 0.25, 0.125
fit_r1 = 8.0
fit_r2 = 25.0
seed = 0
"""


class TestCliReproducibility:
    def test_identical_sweep_tables(self, tmp_path):
        cfg_path = tmp_path / "sweep.cfg"
        cfg_path.write_text(SWEEP_CONFIG)
        cfg = load_config(str(cfg_path))
        cfg.output_dir = str(tmp_path / "a")
        _, _, table_a = run_experiment(cfg)
        cfg.output_dir = str(tmp_path / "b")
        _, _, table_b = run_experiment(cfg)
        bytes_a = open(table_a, "rb").read()
        bytes_b = open(table_b, "rb").read()
        ok = bytes_a == bytes_b
        _report(
            "CLI reproducibility",
            ok,
            f"two sweep tables byte-identical: {ok} ({len(bytes_a)} bytes)",
        )
        assert ok
