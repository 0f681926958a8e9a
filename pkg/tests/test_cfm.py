import numpy as np
import pytest

from fmsolve import analysis, cfm, nn
from fmsolve.data import DatasetSpec, generate
from fmsolve.numeric import Rng, gaussian_sample


def tiny_config(seed=0, kind="moons", **overrides):
    defaults = dict(
        epochs=overrides.pop("epochs", 5),
        batch_size=overrides.pop("batch_size", 64),
        mlp=overrides.pop("mlp", {"hidden": 16, "n_blocks": 1, "time_embed_dim": 8}),
    )
    dataset = DatasetSpec(kind, n=overrides.pop("n", 256), noise=0.05,
                          **({"dim": 2} if kind == "gaussian_nd" else {}))
    return cfm.TrainConfig.default(dataset, seed=seed, **defaults, **overrides)


class TestBatches:
    def test_interpolation_identities_bitwise(self):
        data = Rng(1).normal(size=(100, 2))
        batch = cfm.make_batch(data, Rng(2), 32)
        tt = batch.t[:, None]
        assert np.array_equal(batch.x_t, (1.0 - tt) * batch.x0 + tt * batch.x1)
        assert np.array_equal(batch.u_t, batch.x1 - batch.x0)
        # rearranged identity holds up to one rounding of the subtraction
        assert batch.u_t + batch.x0 == pytest.approx(batch.x1, rel=1e-15, abs=1e-15)

    def test_endpoint_semantics(self):
        # the interpolation formula pins t=0 to x0 and t=1 to x1 exactly
        x0 = Rng(3).normal(size=(8, 2))
        x1 = Rng(4).normal(size=(8, 2))
        for t, expect in ((0.0, x0), (1.0, x1)):
            x_t = (1.0 - t) * x0 + t * x1
            assert np.array_equal(x_t, expect)

    def test_batch_shapes_and_validation(self):
        data = Rng(1).normal(size=(50, 3))
        batch = cfm.make_batch(data, Rng(2), 17)
        assert batch.x_t.shape == (17, 3)
        assert np.all((batch.t >= 0) & (batch.t < 1))
        with pytest.raises(ValueError):
            cfm.make_batch(data, Rng(2), 0)


class TestTrain:
    def test_loss_decreases_on_moons(self):
        model = cfm.train(tiny_config(seed=1, epochs=30, n=1024, batch_size=256,
                                      mlp={"hidden": 32, "n_blocks": 2, "time_embed_dim": 8}))
        assert model.loss_curve[-1] < model.loss_curve[0]

    def test_validation(self):
        with pytest.raises(ValueError):
            tiny_config(epochs=0)
        with pytest.raises(ValueError):
            cfm.TrainConfig(
                dataset=DatasetSpec("gaussian_nd", n=10, dim=3),
                mlp=nn.MlpConfig(data_dim=2, hidden=4, n_blocks=1, time_embed_dim=2),
            )

    def test_deterministic_loss_curves(self):
        a = cfm.train(tiny_config(seed=7))
        b = cfm.train(tiny_config(seed=7))
        assert a.loss_curve == b.loss_curve
        for (_, x), (_, y) in zip(a.params.named(), b.params.named()):
            assert np.array_equal(x, y)

    def test_different_seeds_differ(self):
        a = cfm.train(tiny_config(seed=1, epochs=2))
        b = cfm.train(tiny_config(seed=2, epochs=2))
        assert a.loss_curve != b.loss_curve

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_loss_aborts_with_location(self):
        with pytest.raises(cfm.TrainingError) as exc_info:
            cfm.train(tiny_config(seed=3, epochs=2, lr=1e200))
        assert exc_info.value.epoch is not None
        assert exc_info.value.step is not None


class TestSample:
    def test_fixed_step_nfe(self):
        model = cfm.train(tiny_config(seed=5, epochs=1))
        _, trace = cfm.sample(model, cfm.SolverSpec("euler", 200), 50, Rng(0))
        assert trace.nfe_total == 200
        _, trace = cfm.sample(model, cfm.SolverSpec("rk4", 20), 50, Rng(0))
        assert trace.nfe_total == 80

    def test_deterministic(self):
        model = cfm.train(tiny_config(seed=5, epochs=1))
        a, _ = cfm.sample(model, cfm.SolverSpec("midpoint", 10), 64, Rng(9))
        b, _ = cfm.sample(model, cfm.SolverSpec("midpoint", 10), 64, Rng(9))
        assert np.array_equal(a, b)

    def test_zero_field_is_identity_flow(self):
        # untrained params (zero output layer): z(1) = z(0), so the samples
        # are exactly the de-standardized Gaussian starts
        config = tiny_config(seed=11, epochs=1)
        raw = generate(config.dataset, Rng(config.seed, stream=cfm.STREAM_DATASET))
        model = cfm.TrainedModel(
            params=nn.init_params(config.mlp, Rng(0)),
            config=config,
            data_mean=raw.mean(axis=0),
            data_std=raw.std(axis=0),
        )
        pts, trace = cfm.sample(model, cfm.SolverSpec("euler", 5), 40, Rng(21))
        z0 = gaussian_sample(Rng(21), 40, 2)
        assert pts == pytest.approx(z0 * model.data_std + model.data_mean, rel=1e-14)
        assert trace.nfe_total == 5

    def test_gaussian_target_stays_gaussian(self):
        # on a standard-normal dataset the learned flow should keep samples
        # near N(0, I): SWD to fresh draws within 1.5x the SWD between two
        # independent Gaussian batches
        config = tiny_config(seed=13, kind="gaussian_nd", epochs=30, n=512,
                             mlp={"hidden": 32, "n_blocks": 1, "time_embed_dim": 8})
        model = cfm.train(config)
        pts, _ = cfm.sample(model, cfm.SolverSpec("rk4", 25), 1000, Rng(31))
        fresh_a = gaussian_sample(Rng(41), 1000, 2)
        fresh_b = gaussian_sample(Rng(42), 1000, 2)
        d_model = analysis.swd(pts, fresh_a, 200, Rng(50))
        d_base = analysis.swd(fresh_b, fresh_a, 200, Rng(50))
        assert d_model < 1.5 * d_base

    def test_bad_args(self):
        model = cfm.train(tiny_config(seed=5, epochs=1))
        with pytest.raises(ValueError):
            cfm.sample(model, cfm.SolverSpec("euler", 10), 0, Rng(0))
        with pytest.raises(ValueError):
            cfm.SolverSpec("euler")  # missing steps
        with pytest.raises(ValueError):
            cfm.SolverSpec("rk44", 10)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        model = cfm.train(tiny_config(seed=17, epochs=2))
        path = tmp_path / "model.json"
        cfm.save_model(model, path)
        loaded = cfm.load_model(path)
        for (_, a), (_, b) in zip(model.params.named(), loaded.params.named()):
            assert np.array_equal(a, b)
        assert np.array_equal(loaded.data_mean, model.data_mean)
        assert np.array_equal(loaded.data_std, model.data_std)
        assert loaded.loss_curve == model.loss_curve
        assert loaded.config == model.config

    def test_save_is_reproducible(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        cfm.save_model(cfm.train(tiny_config(seed=19, epochs=2)), p1)
        cfm.save_model(cfm.train(tiny_config(seed=19, epochs=2)), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_check(self, tmp_path):
        model = cfm.train(tiny_config(seed=17, epochs=1))
        path = tmp_path / "model.json"
        cfm.save_model(model, path)
        doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(doc)
        with pytest.raises(ValueError, match="format_version"):
            cfm.load_model(path)
