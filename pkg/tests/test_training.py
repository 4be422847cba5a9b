import numpy as np
import pytest

from mhenet import models, plant, training
from mhenet.models import ModelSpec
from mhenet.plant import Sequence


def toy_dataset(rng, n_train=4, n_test=2, T=60, n_u=2, n_y=1):
    """Sequences generated by a small known GRU (zero-noise teacher)."""
    spec = ModelSpec("gru", n_u, 3, n_y)
    teacher = models.init_params(spec, 99, "uniform")
    vals = teacher.values.copy()
    vals += 0.3 * rng.normal(size=len(vals))
    teacher = teacher.replace_values(vals)
    seqs = []
    for _ in range(n_train + n_test):
        u = rng.normal(size=(T, n_u))
        y, _ = models.simulate(spec, teacher, models.zero_state(spec), u)
        y = y + 0.5  # nonzero mean so the scaler has work to do
        seqs.append(Sequence(u=u, y=y, tau=0.1))
    cfg = plant.DatasetConfig(n_sequences=n_train + n_test, seq_len=T,
                              n_train=n_train, n_test=n_test)
    ds = plant.Dataset(seqs, list(range(n_train)),
                       list(range(n_train, n_train + n_test)), cfg, seed=0)
    return spec, teacher, ds


class TestScaler:
    def test_roundtrip(self, rng):
        s = training.Scaler(u_shift=np.array([1.0, -2.0]), u_scale=np.array([2.0, 0.5]),
                            y_shift=np.array([3.0]), y_scale=np.array([4.0]))
        u = rng.normal(size=(7, 2))
        y = rng.normal(size=(7, 1))
        assert np.allclose(s.unscale_u(s.scale_u(u)), u, atol=1e-12)
        assert np.allclose(s.unscale_y(s.scale_y(y)), y, atol=1e-12)

    def test_fit_normalizes_to_unit_moments(self, rng):
        seqs = [Sequence(u=rng.normal(loc=3.0, scale=2.0, size=(50, 2)),
                         y=rng.normal(loc=-1.0, scale=0.5, size=(50, 1)))
                for _ in range(3)]
        s = training.fit_scaler(seqs)
        U = np.concatenate([s_.u for s_ in seqs])
        Z = (U - s.u_shift) / s.u_scale
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Z.std(axis=0), 1.0, atol=1e-12)

    def test_zero_variance_rejected(self):
        seqs = [Sequence(u=np.ones((10, 2)), y=np.random.default_rng(0).normal(size=(10, 1)))]
        with pytest.raises(ValueError, match="zero-variance"):
            training.fit_scaler(seqs)

    def test_json_roundtrip(self):
        s = training.Scaler(np.array([1.0]), np.array([2.0]),
                            np.array([3.0]), np.array([4.0]))
        q = training.Scaler.from_json(s.to_json())
        assert np.array_equal(q.u_shift, s.u_shift)
        assert np.array_equal(q.y_scale, s.y_scale)


class TestTrainOffline:
    def test_loss_decreases_and_history_monotone(self, rng):
        spec, teacher, ds = toy_dataset(rng)
        cfg = training.TrainConfig(epochs=60, learning_rate=2e-2, washout=10,
                                   seed=2, patience=60)
        params, hist = training.train_offline(spec, ds, cfg)
        best = [h[1] for h in hist]
        assert best[-1] < best[0]
        assert all(b <= a + 1e-15 for a, b in zip(best, best[1:]))

    def test_deterministic_given_seed(self, rng):
        spec, teacher, ds = toy_dataset(rng)
        cfg = training.TrainConfig(epochs=10, washout=10, seed=5)
        a, _ = training.train_offline(spec, ds, cfg)
        b, _ = training.train_offline(spec, ds, cfg)
        assert np.array_equal(a.values, b.values)

    def test_recovers_teacher_predictions(self, rng):
        spec, teacher, ds = toy_dataset(rng, T=80)
        cfg = training.TrainConfig(epochs=800, learning_rate=2e-2, washout=10,
                                   seed=3, patience=800)
        params, hist = training.train_offline(spec, ds, cfg)
        scaler = training.fit_scaler(ds.train)
        rep = training.evaluate_mse(spec, params, ds.test, 10, scaler)
        assert rep.average < 1e-2

    def test_washout_longer_than_sequence_rejected(self, rng):
        spec, teacher, ds = toy_dataset(rng, T=20)
        with pytest.raises(ValueError, match="washout"):
            training.train_offline(spec, ds, training.TrainConfig(epochs=1, washout=20))

    def test_esn_trains_readout_only(self, rng):
        spec = ModelSpec("esn", 2, 10, 1, spectral_radius=0.9, leak_rate=0.8)
        teacher_spec, teacher, ds = toy_dataset(rng)
        cfg = training.TrainConfig(epochs=30, learning_rate=5e-2, washout=10, seed=4)
        params, _ = training.train_offline(spec, ds, cfg)
        init = models.init_params(spec, cfg.seed, cfg.init_scheme)
        frozen = ~models.trainable_mask(spec)
        assert np.array_equal(params.values[frozen], init.values[frozen])
        assert not np.array_equal(params.values[~frozen], init.values[~frozen])


class TestEvaluateMse:
    def test_washout_excluded(self, rng):
        spec = ModelSpec("linear", 1, 0, 1)
        p = models.ParamVector(spec, [2.0])
        # targets match the model except inside the washout
        u = np.ones((10, 1))
        y = 2.0 * u
        y[:3] = 99.0
        scaler = training.Scaler(np.zeros(1), np.ones(1), np.zeros(1), np.ones(1))
        rep = training.evaluate_mse(spec, p, [Sequence(u=u, y=y)], 3, scaler)
        assert rep.average == 0.0
        rep2 = training.evaluate_mse(spec, p, [Sequence(u=u, y=y)], 2, scaler)
        assert rep2.average > 0.0

    def test_channel_mse_hand_arithmetic(self):
        spec = ModelSpec("linear", 1, 0, 2)
        p = models.ParamVector(spec, [1.0, 0.0])  # y = [u, 0]
        u = np.array([[1.0], [1.0]])
        y = np.array([[2.0, 1.0], [2.0, 1.0]])  # errors: [-1, -1] per step
        scaler = training.Scaler(np.zeros(1), np.ones(1), np.zeros(2), np.ones(2))
        rep = training.evaluate_mse(spec, p, [Sequence(u=u, y=y)], 0, scaler)
        assert np.allclose(rep.channel_mse, [1.0, 1.0])
        assert rep.average == 1.0

    def test_empty_rejected(self):
        spec = ModelSpec("linear", 1, 0, 1)
        p = models.ParamVector(spec, [1.0])
        scaler = training.Scaler(np.zeros(1), np.ones(1), np.zeros(1), np.ones(1))
        with pytest.raises(ValueError):
            training.evaluate_mse(spec, p, [], 0, scaler)
