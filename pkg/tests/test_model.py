"""Model container, initializer, optimizer state, batches, checkpoints."""

import numpy as np
import numpy.testing as npt
import pytest

from pppl.errors import ConfigError, DataError, ShapeError
from pppl.nn import (
    Batch,
    Model,
    init_model,
    load_checkpoint,
    make_optimizer,
    save_checkpoint,
)


class TestInitModel:
    def test_shapes_and_dtype(self):
        m = init_model([4, 3, 2], seed=0)
        assert m.layer_dims == [4, 3, 2]
        assert [w.shape for w in m.weights] == [(4, 3), (3, 2)]
        assert [b.shape for b in m.biases] == [(3,), (2,)]
        assert all(w.dtype == np.float32 for w in m.weights)
        assert all(b.dtype == np.float32 for b in m.biases)
        assert m.input_dim == 4 and m.output_dim == 2
        assert m.num_params == 4 * 3 + 3 + 3 * 2 + 2

    def test_biases_zero_weights_bounded(self):
        # weights drawn from U(-s, s), s = sqrt(6 / (fan_in + fan_out))
        for seed in range(20):
            m = init_model([7, 5, 3], seed=seed)
            for l, w in enumerate(m.weights):
                fan_in, fan_out = m.layer_dims[l], m.layer_dims[l + 1]
                s = np.sqrt(6.0 / (fan_in + fan_out))
                assert np.all(np.abs(w) <= s)
            for b in m.biases:
                assert np.all(b == 0.0)

    def test_seed_determinism(self):
        a = init_model([5, 4, 3], seed=7)
        b = init_model([5, 4, 3], seed=7)
        c = init_model([5, 4, 3], seed=8)
        for wa, wb in zip(a.weights, b.weights):
            npt.assert_array_equal(wa, wb)
        assert any(not np.array_equal(wa, wc)
                   for wa, wc in zip(a.weights, c.weights))

    def test_rejects_bad_dims(self):
        with pytest.raises(ConfigError):
            init_model([4], seed=0)
        with pytest.raises(ConfigError):
            init_model([4, 0, 2], seed=0)


class TestModel:
    def test_copy_is_independent(self):
        m = init_model([3, 2], seed=1)
        c = m.copy()
        c.weights[0][0, 0] += 1.0
        assert m.weights[0][0, 0] != c.weights[0][0, 0]
        c.biases[0][0] = 5.0
        assert m.biases[0][0] == 0.0

    def test_validate_catches_shape_drift(self):
        m = init_model([3, 2], seed=1)
        m.validate()
        m.weights[0] = np.zeros((3, 5), dtype=np.float32)
        with pytest.raises(ShapeError):
            m.validate()
        m = init_model([3, 2], seed=1)
        m.biases = []
        with pytest.raises(ShapeError):
            m.validate()


class TestOptimizerState:
    def test_velocities_zero_and_shaped(self):
        m = init_model([4, 3, 2], seed=0)
        opt = make_optimizer(m, 0.1, 0.9)
        assert opt.learning_rate == 0.1 and opt.momentum == 0.9
        for v, w in zip(opt.vel_weights, m.weights):
            assert v.shape == w.shape and np.all(v == 0.0)
        for v, b in zip(opt.vel_biases, m.biases):
            assert v.shape == b.shape and np.all(v == 0.0)

    def test_rejects_bad_hyperparameters(self):
        m = init_model([3, 2], seed=0)
        with pytest.raises(ConfigError):
            make_optimizer(m, -0.1)
        with pytest.raises(ConfigError):
            make_optimizer(m, 0.1, momentum=1.0)
        with pytest.raises(ConfigError):
            make_optimizer(m, 0.1, momentum=-0.2)


class TestBatch:
    def test_coerces_to_float32(self):
        b = Batch(np.zeros((2, 3)), np.eye(2)[[0, 1]], np.ones(2))
        assert b.features.dtype == np.float32
        assert b.targets.dtype == np.float32
        assert b.sample_weights.dtype == np.float32

    def test_rejects_non_one_hot_targets(self):
        with pytest.raises(ShapeError):
            Batch(np.zeros((2, 3)), np.full((2, 2), 0.5), np.ones(2))
        with pytest.raises(ShapeError):
            Batch(np.zeros((1, 3)), np.array([[2.0, -1.0]]), np.ones(1))

    def test_rejects_misaligned_and_negative(self):
        with pytest.raises(ShapeError):
            Batch(np.zeros((2, 3)), np.eye(2), np.ones(3))
        with pytest.raises(ShapeError):
            Batch(np.zeros((3, 3)), np.eye(2), np.ones(2))
        with pytest.raises(ShapeError):
            Batch(np.zeros((2, 3)), np.eye(2), np.array([1.0, -1.0]))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        for seed in range(5):
            m = init_model([6, 4, 3], seed=seed)
            path = tmp_path / f"m{seed}.ckpt"
            save_checkpoint(m, path, loss_kind="ce")
            loaded, loss_kind = load_checkpoint(path)
            assert loss_kind == "ce"
            assert loaded.layer_dims == m.layer_dims
            assert loaded.rng_seed == m.rng_seed
            for a, b in zip(m.weights + m.biases, loaded.weights + loaded.biases):
                npt.assert_array_equal(a, b)

    def test_loaded_arrays_are_writable(self, tmp_path):
        m = init_model([3, 2], seed=0)
        save_checkpoint(m, tmp_path / "m.ckpt")
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        loaded.weights[0][0, 0] = 9.0  # np.frombuffer views must be copied

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_rejects_corruption(self, tmp_path):
        m = init_model([3, 2], seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        blob = path.read_bytes()

        truncated = tmp_path / "trunc.ckpt"
        truncated.write_bytes(blob[:-4])
        with pytest.raises(DataError):
            load_checkpoint(truncated)

        bad_magic = tmp_path / "magic.ckpt"
        bad_magic.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(DataError):
            load_checkpoint(bad_magic)

        no_header = tmp_path / "nohdr.ckpt"
        no_header.write_bytes(blob.replace(b"---\n", b"===\n"))
        with pytest.raises(DataError):
            load_checkpoint(no_header)

    def test_rejects_wrong_version(self, tmp_path):
        m = init_model([3, 2], seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        blob = path.read_bytes().replace(b"PPPL-CKPT 1", b"PPPL-CKPT 9")
        path.write_bytes(blob)
        with pytest.raises(DataError):
            load_checkpoint(path)
