import json
import threading

import numpy as np
import pytest

from conftest import oracle_marginals, oracle_state
from hdqnn.pqc_layer import (
    CallCounter,
    Circuit,
    PqcConfig,
    build_circuit,
    decode_entangler,
    encode_controls,
    encode_controls_grad,
    exact_layer_map,
    modal_bitstring,
    run_quantum_layer,
)
from hdqnn.quantum_core import ConfigurationError, NoiseConfig, ShotRecord


def random_controls(config, rng):
    return np.concatenate(
        [rng.uniform(-np.pi, np.pi, config.angle_dim), rng.normal(0, 1.5, 2 * config.num_layers)]
    )


class TestConfig:
    def test_control_dim(self):
        assert PqcConfig(num_qubits=10, num_layers=10).control_dim == 220
        assert PqcConfig(num_qubits=5, num_layers=5).control_dim == 60

    @pytest.mark.parametrize("kw", [{"num_qubits": 0}, {"num_layers": 0}, {"shots": 0}, {"output_mode": "mean"}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            PqcConfig(**kw)

    def test_dict_round_trip(self):
        cfg = PqcConfig(3, 2, 50, NoiseConfig(1e-3, 2e-3), "most_probable_bitstring")
        assert PqcConfig.from_dict(cfg.to_dict()) == cfg


class TestEncoding:
    def test_zeros(self):
        cfg = PqcConfig(3, 2)
        assert np.array_equal(encode_controls(np.zeros(cfg.control_dim), cfg), np.zeros(cfg.control_dim))

    def test_saturation(self):
        cfg = PqcConfig(2, 1)
        raw = np.full(cfg.control_dim, 1e6)
        q = encode_controls(raw, cfg)
        assert np.allclose(q[: cfg.angle_dim], np.pi, atol=1e-9)
        assert np.array_equal(q[cfg.angle_dim :], raw[cfg.angle_dim :])

    def test_length_220(self):
        cfg = PqcConfig(10, 10)
        assert encode_controls(np.ones(220), cfg).shape == (220,)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            encode_controls(np.zeros(5), PqcConfig(2, 1))

    def test_batched_and_gradient(self, rng):
        cfg = PqcConfig(2, 2)
        raw = rng.normal(size=(3, cfg.control_dim))
        h = 1e-6
        numeric = (encode_controls(raw + h, cfg) - encode_controls(raw - h, cfg)) / (2 * h)
        assert np.allclose(encode_controls_grad(raw, cfg), numeric, atol=1e-8)


class TestDecodeEntangler:
    def test_midpoint_rounds_half_away(self):
        assert decode_entangler((0.0, 0.0), 10) == (5, 5)

    def test_extremes(self):
        assert decode_entangler((-1e6, 1e6), 10) == (0, 9)

    def test_single_qubit(self):
        assert decode_entangler((0.0, 0.0), 1) == (0, 0)

    def test_covers_every_index(self):
        hits = {decode_entangler((r, r), 5)[0] for r in np.linspace(-4, 4, 401)}
        assert hits == set(range(5))


class TestCircuit:
    def test_json_round_trip(self, rng):
        cfg = PqcConfig(3, 2)
        circ = build_circuit(random_controls(cfg, rng), cfg)
        back = Circuit.from_json(circ.to_json())
        assert back.pairs == circ.pairs
        assert np.array_equal(back.thetas, circ.thetas)
        assert json.loads(circ.to_json())["qubits"] == 3

    def test_layout(self):
        cfg = PqcConfig(2, 2)
        q = np.arange(cfg.control_dim, dtype=float)
        circ = build_circuit(q, cfg)
        assert np.array_equal(circ.thetas, [[0, 1], [2, 3]])
        assert np.array_equal(circ.phis, [[4, 5], [6, 7]])

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            build_circuit(np.zeros(3), PqcConfig(2, 1))

    @pytest.mark.parametrize("n,m", [(1, 1), (2, 3), (3, 2), (4, 3)])
    def test_exact_map_vs_dense_oracle(self, n, m, rng):
        cfg = PqcConfig(n, m)
        for _ in range(5):
            q = random_controls(cfg, rng)
            circ = build_circuit(q, cfg)
            psi = oracle_state(circ.thetas, circ.phis, circ.pairs, n)
            assert np.allclose(exact_layer_map(q, cfg), oracle_marginals(psi, n), atol=1e-12)


class TestRunQuantumLayer:
    def test_zero_controls(self, rng):
        cfg = PqcConfig(4, 3, shots=37)
        assert np.array_equal(run_quantum_layer(np.zeros(cfg.control_dim), cfg, rng), np.zeros(4))

    def test_pi_on_qubit_zero(self, rng):
        cfg = PqcConfig(3, 2, shots=20)
        q = np.zeros(cfg.control_dim)
        q[0] = np.pi
        assert np.array_equal(run_quantum_layer(q, cfg, rng), [1, 0, 0])

    def test_counter(self, rng):
        cfg = PqcConfig(2, 1, shots=17)
        counter = CallCounter()
        for _ in range(3):
            run_quantum_layer(np.zeros(cfg.control_dim), cfg, rng, counter)
        assert (counter.pqc_calls, counter.shot_executions) == (3, 51)

    def test_counter_threads(self):
        counter = CallCounter()
        threads = [threading.Thread(target=lambda: [counter.record(4) for _ in range(500)]) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert (counter.pqc_calls, counter.shot_executions) == (2000, 8000)

    def test_exact_map_does_not_count(self, rng):
        cfg = PqcConfig(2, 1)
        counter = CallCounter()
        exact_layer_map(np.zeros(cfg.control_dim), cfg)
        assert counter.pqc_calls == 0

    def test_marginals_are_shot_fractions(self, rng):
        cfg = PqcConfig(3, 2, shots=64)
        out = run_quantum_layer(random_controls(cfg, rng), cfg, rng)
        assert np.allclose(out * 64, np.round(out * 64))

    def test_converges_to_exact(self, rng):
        cfg = PqcConfig(4, 3, shots=100_000)
        q = random_controls(cfg, rng)
        assert np.max(np.abs(run_quantum_layer(q, cfg, rng) - exact_layer_map(q, cfg))) <= 0.01

    @pytest.mark.parametrize("shots,tol", [(100, 0.2), (10_000, 0.02), (1_000_000, 3e-3)])
    def test_shrinking_tolerance(self, shots, tol):
        rng = np.random.default_rng(shots)
        cfg = PqcConfig(3, 2, shots=shots)
        q = random_controls(cfg, rng)
        assert np.max(np.abs(run_quantum_layer(q, cfg, rng) - exact_layer_map(q, cfg))) <= tol

    def test_modal_mode(self, rng):
        cfg = PqcConfig(3, 2, shots=50, output_mode="most_probable_bitstring")
        out = run_quantum_layer(random_controls(cfg, rng), cfg, rng)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_noisy_layer_is_seeded(self):
        cfg = PqcConfig(3, 2, shots=40, noise=NoiseConfig(0.05, 0.05))
        q = random_controls(cfg, np.random.default_rng(0))
        a = run_quantum_layer(q, cfg, np.random.default_rng(9))
        b = run_quantum_layer(q, cfg, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_full_bit_flip_noise_on_identity_circuit(self, rng):
        # one rotation stage and no entangler per layer: X fires after each rotation
        cfg = PqcConfig(2, 1, shots=30, noise=NoiseConfig(1.0, 0.0))
        q = np.zeros(cfg.control_dim)
        q[cfg.angle_dim :] = -1e6  # p = k = 0, no CZ
        assert np.array_equal(run_quantum_layer(q, cfg, rng), [1.0, 1.0])


class TestModalBitstring:
    def test_majority(self):
        rec = ShotRecord(np.array([[1, 0], [1, 0], [0, 1]]))
        assert np.array_equal(modal_bitstring(rec), [1, 0])

    def test_tie_goes_to_lowest_index(self):
        # index of [1, 0] is 1; index of [0, 1] is 2
        rec = ShotRecord(np.array([[0, 1], [1, 0]]))
        assert np.array_equal(modal_bitstring(rec), [1, 0])
