import json

import numpy as np
import pytest

from hdqnn.grad_oracle import finite_diff_jacobian, parameter_shift_jacobian, shift_cost_report
from hdqnn.pqc_layer import PqcConfig

ONE = PqcConfig(num_qubits=1, num_layers=1)


def single(theta, phi=0.0):
    return np.array([theta, phi, 0.0, 0.0])


class TestFiniteDiff:
    def test_closed_form(self):
        d = finite_diff_jacobian(single(np.pi / 3), ONE)[0, 0]
        assert d == pytest.approx(np.sin(np.pi / 3) / 2, abs=1e-6)

    def test_zero_controls(self):
        cfg = PqcConfig(3, 2)
        assert np.allclose(finite_diff_jacobian(np.zeros(cfg.control_dim), cfg), 0, atol=1e-10)

    def test_shape_excludes_index_controls(self):
        cfg = PqcConfig(3, 2)
        assert finite_diff_jacobian(np.zeros(cfg.control_dim), cfg).shape == (3, 12)

    @pytest.mark.parametrize("h", [0.0, -1e-4])
    def test_bad_step(self, h):
        with pytest.raises(ValueError):
            finite_diff_jacobian(single(0.1), ONE, h=h)


class TestParameterShift:
    def test_closed_form(self):
        assert parameter_shift_jacobian(single(np.pi / 3), ONE)[0, 0] == pytest.approx(0.4330127, abs=1e-7)

    def test_machine_precision_over_angles(self):
        for theta in np.linspace(-np.pi, np.pi, 100):
            assert abs(parameter_shift_jacobian(single(theta), ONE)[0, 0] - np.sin(theta) / 2) < 1e-10

    def test_phi_derivative_vanishes(self, rng):
        for _ in range(10):
            jac = parameter_shift_jacobian(single(*rng.uniform(-np.pi, np.pi, 2)), ONE)
            assert abs(jac[0, 1]) < 1e-14

    def test_agrees_with_finite_diff(self, rng):
        cfg = PqcConfig(5, 5)
        for _ in range(3):
            q = np.concatenate([rng.uniform(-np.pi, np.pi, cfg.angle_dim), rng.normal(size=10)])
            diff = parameter_shift_jacobian(q, cfg) - finite_diff_jacobian(q, cfg)
            assert np.max(np.abs(diff)) < 1e-6

    def test_wrong_shift_is_detectable(self):
        wrong = parameter_shift_jacobian(single(np.pi / 3), ONE, shift=np.pi / 4)[0, 0]
        assert abs(wrong - np.sin(np.pi / 3) / 2) > 1e-2


class TestCostReport:
    def test_light_budget(self):
        r = shift_cost_report(220, 10, 10, 256, per_shot_time=0.6e-6)
        assert r.total_shots_per_update == 5_632_000
        assert r.total_seconds_per_update == pytest.approx(3.38, abs=5e-3)

    def test_heavy_budget_exact(self):
        r = shift_cost_report(220, 10, 1000, 256, per_shot_time=0.5e-6)
        assert r.total_seconds_per_update == 281.6

    def test_trivial(self):
        assert shift_cost_report(1, 1, 1, 1).total_shots_per_update == 1

    def test_full_run_and_qtdnn_side(self):
        r = shift_cost_report(220, 10, 100, 256, K=1000, per_shot_time=0.5e-6)
        assert r.total_seconds_full_run == pytest.approx(1000 * r.total_seconds_per_update)
        assert (r.qtdnn_pqc_calls, r.qtdnn_shots) == (1000, 100_000)
        assert r.shift_extra_shots == 220 * 10 * 100 * 256 * 1000

    def test_wide_integers(self):
        r = shift_cost_report(10**6, 10**6, 10**6, 10**6)
        assert r.total_shots_per_update == 10**24

    def test_monotone_in_each_argument(self):
        base = dict(I=3, O=4, S=5, N_b=6, K=7, per_shot_time=1e-6)
        ref = shift_cost_report(**base).total_seconds_full_run
        for key in base:
            bumped = dict(base)
            bumped[key] = base[key] * 2
            assert shift_cost_report(**bumped).total_seconds_full_run > ref

    @pytest.mark.parametrize("kw", [{"I": 0}, {"S": -1}, {"N_b": 2.5}, {"per_shot_time": 0.0}])
    def test_rejects_non_positive(self, kw):
        args = dict(I=1, O=1, S=1, N_b=1)
        args.update(kw)
        with pytest.raises(ValueError):
            shift_cost_report(**args)

    def test_json(self):
        d = json.loads(shift_cost_report(220, 10, 10, 256).to_json())
        assert d["total_shots_per_update"] == 5_632_000
