import json

import numpy as np
import pytest

from metastable.density import EXAMPLE_WEIGHTS
from metastable.errors import InfeasibleGateError, MetastableError
from metastable.experiments import (EngineConfig, MapFamily, SweepRecord, alpha_from_lhr,
                                    gates_for_target_alpha, l1_trend_ok, reproduce_example,
                                    run_convergence_sweep, run_extreme_limit, write_sweep_csv)
from metastable.orbit import OrbitConfig


class TestGatesForAlpha:
    def test_half(self, example):
        assert gates_for_target_alpha(0.5, 0.05, example.f_A, example.f_B) == (0.05, 0.05)

    def test_two_thirds(self, example):
        eps_a, eps_b = gates_for_target_alpha(2 / 3, 0.01, example.f_A, example.f_B)
        assert eps_a == 0.01 and eps_b == pytest.approx(0.02, rel=1e-14)

    def test_infeasible(self, example):
        with pytest.raises(InfeasibleGateError) as info:
            gates_for_target_alpha(0.9, 0.02, example.f_A, example.f_B)
        # eps_B capped at the 0.1 cell: lhr = 0.1 / 0.02 = 5
        assert info.value.max_alpha == pytest.approx(5 / 6)

    @pytest.mark.parametrize("alpha, scale", [(0.0, 0.02), (1.0, 0.02), (0.5, 0.0), (0.5, 0.2)])
    def test_rejects(self, example, alpha, scale):
        with pytest.raises(MetastableError):
            gates_for_target_alpha(alpha, scale, example.f_A, example.f_B)

    def test_zero_density_gate(self):
        fam = MapFamily([0.5, 0.5, 0.0], 0.5)
        with pytest.raises(InfeasibleGateError):
            gates_for_target_alpha(0.5, 0.05, fam.f_A, fam.f_B)

    @pytest.mark.parametrize("lhr, alpha", [(1.0, 0.5), (2.0, 2 / 3), (0.0, 0.0),
                                            (float("inf"), 1.0)])
    def test_alpha_from_lhr(self, lhr, alpha):
        assert alpha_from_lhr(lhr) == pytest.approx(alpha)


class TestSweeps:
    @pytest.fixture(scope="class")
    @classmethod
    def half(cls, example):
        return run_convergence_sweep(example, 0.5)

    def test_half_decreasing(self, half):
        l1 = [r.l1_to_limit for r in half]
        assert all(b < a for a, b in zip(l1, l1[1:]))
        assert l1[-1] <= 0.05
        assert all(r.alpha == pytest.approx(0.5) and r.converged for r in half)

    def test_record_fields(self, half):
        r = half[1]
        assert (r.eps_scale, r.eps_A, r.eps_B) == (0.02, 0.02, 0.02)
        assert r.mu_A_hole == pytest.approx(0.02 / 8)
        assert r.lhr == pytest.approx(1.0)
        assert r.engine == "ulam" and r.residual <= 1e-10

    def test_csv(self, half, tmp_path):
        write_sweep_csv(tmp_path / "s.csv", half)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == ("eps_scale,eps_A,eps_B,mu_A_hole,mu_B_hole,lhr,alpha,"
                            "l1_to_limit,engine,residual")
        assert len(lines) == 5

    def test_unconverged_flag(self):
        r = SweepRecord(0.01, 0.01, 0.01, 1e-3, 1e-3, 1.0, 0.5, 0.1, "ulam", 1e-3, False)
        assert r.csv_row()[8] == "ulam:unconverged"

    def test_unconverged_continues(self, example):
        recs = run_convergence_sweep(example, 0.5, (0.05, 0.02), EngineConfig(bins=400, max_iters=2))
        assert len(recs) == 2 and not any(r.converged for r in recs)

    def test_two_thirds(self, example):
        recs = run_convergence_sweep(example, 2 / 3)
        assert recs[-1].l1_to_limit <= 0.05
        assert all(r.eps_B == pytest.approx(2 * r.eps_A) for r in recs)

    @pytest.mark.parametrize("schedule", [(0.01, 0.02), (), (0.05, 0.05), (0.02, -0.01)])
    def test_bad_schedule(self, example, schedule):
        with pytest.raises(MetastableError):
            run_convergence_sweep(example, 0.5, schedule)

    def test_trend_helper(self, half):
        assert l1_trend_ok(half)
        assert not l1_trend_ok(half[::-1])

    def test_orbit_engine(self, example):
        cfg = EngineConfig("orbit", orbit=OrbitConfig(seed=7, steps=2_000_000))
        recs = run_convergence_sweep(example, 0.5, (0.05, 0.02), cfg)
        assert all(r.engine == "orbit" for r in recs)
        assert recs[-1].l1_to_limit < 0.1

    def test_engine_name(self):
        with pytest.raises(MetastableError):
            EngineConfig("exact")


class TestExtreme:
    @pytest.fixture(scope="class")
    @classmethod
    def to_fb(cls, example):
        return run_extreme_limit(example, "to_fB")

    def test_to_fb(self, to_fb):
        l1 = [r.l1_to_limit for r in to_fb]
        assert l1[0] > l1[1] > l1[2] and l1[2] <= 0.1

    def test_lhr_equals_eps(self, to_fb):
        np.testing.assert_allclose([r.lhr for r in to_fb], [0.1, 0.05, 0.02], rtol=1e-12)

    def test_to_fa_mirrors(self, example, to_fb):
        to_fa = run_extreme_limit(example, "to_fA")
        np.testing.assert_allclose([r.l1_to_limit for r in to_fa], [r.l1_to_limit for r in to_fb],
                                   rtol=1e-9)
        np.testing.assert_allclose([r.lhr for r in to_fa], [1 / r.lhr for r in to_fb], rtol=1e-12)

    def test_bad_mode(self, example):
        with pytest.raises(MetastableError):
            run_extreme_limit(example, "sideways")


class TestExample:
    def test_bundle(self, tmp_path):
        manifest = reproduce_example(tmp_path, steps=200_000, schedule=(0.05, 0.02))
        files = {a["file"] for a in manifest["artifacts"]}
        assert len(files) >= 6
        assert all((tmp_path / f).exists() for f in files)
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert on_disk["example"]["v_times_80"] == [0, 1, 2, 3, 4, 60, 4, 3, 2, 1]
        assert on_disk["cross_engine_l1"] < 0.2

    def test_peak_height(self, tmp_path):
        reproduce_example(tmp_path, steps=100_000, schedule=(0.05,))
        rows = (tmp_path / "f_B.csv").read_text().splitlines()[1:]
        assert rows[5].split(",")[2] == "7.5"

    def test_family_defaults(self):
        fam = MapFamily()
        np.testing.assert_array_equal(fam.v, EXAMPLE_WEIGHTS)
        assert fam.gate_slope == 2.0


class TestConcurrency:
    def test_workers_do_not_change_records(self, example):
        seq = run_convergence_sweep(example, 0.5, (0.05, 0.02, 0.01), EngineConfig(bins=600),
                                    workers=1)
        par = run_convergence_sweep(example, 0.5, (0.05, 0.02, 0.01), EngineConfig(bins=600),
                                    workers=3)
        assert seq == par

    def test_extreme_workers(self, example):
        cfg = EngineConfig(bins=400)
        assert run_extreme_limit(example, "to_fB", workers=1, cfg=cfg) == \
            run_extreme_limit(example, "to_fB", workers=3, cfg=cfg)
