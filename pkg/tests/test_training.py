import json

import numpy as np
import pytest

from radarid.errors import (
    CorruptCheckpointError,
    EmptyDatasetError,
    FractionOutOfRangeError,
    VersionMismatchError,
)
from radarid.datamodel import LabelSet
from radarid.features import ScalerParams
from radarid.models import GROUPS, build_cnn, build_fcl
from radarid.training import (
    DomainPair,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_ssda,
    train_supervised,
    train_uda,
    write_history_csv,
)


def two_blob_data(n_per_class=40, dim=8, gap=4.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_per_class, dim)) + gap
    b = rng.normal(size=(n_per_class, dim)) - gap
    x = np.concatenate([a, b])
    y = np.concatenate([np.zeros(n_per_class, int), np.ones(n_per_class, int)])
    return x, y


def all_params(model):
    return [p.copy() for g in GROUPS for p in model.group_params(g)]


def params_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


class TestTrainSupervised:
    def test_loss_decreases_on_separable_data(self):
        x, y = two_blob_data()
        model = build_fcl(8, 2, seed=0)
        run = train_supervised(model, x, y, TrainConfig(epochs=100, seed=0))
        assert run.history[-1].object_loss < run.history[0].object_loss
        assert run.history[-1].train_f1 > 0.95

    def test_zero_learning_rate_keeps_parameters(self):
        x, y = two_blob_data(n_per_class=8)
        model = build_fcl(8, 2, seed=1)
        before = all_params(model)
        train_supervised(model, x, y, TrainConfig(learning_rate=0.0, epochs=2, seed=0))
        after = all_params(model)
        assert params_equal(before, after)

    def test_negative_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-0.1)

    def test_same_seed_bit_identical_history(self):
        x, y = two_blob_data()
        run_a = train_supervised(build_fcl(8, 2, seed=3), x, y, TrainConfig(epochs=5, seed=3))
        run_b = train_supervised(build_fcl(8, 2, seed=3), x, y, TrainConfig(epochs=5, seed=3))
        assert [(s.object_loss, s.train_f1) for s in run_a.history] == [
            (s.object_loss, s.train_f1) for s in run_b.history
        ]
        assert params_equal(all_params(run_a.model), all_params(run_b.model))

    def test_history_length_equals_epochs(self):
        x, y = two_blob_data(n_per_class=8)
        run = train_supervised(build_fcl(8, 2, seed=0), x, y, TrainConfig(epochs=7, seed=0))
        assert [s.epoch for s in run.history] == list(range(7))
        assert all(s.domain_loss is None for s in run.history)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            train_supervised(
                build_fcl(8, 2, seed=0), np.zeros((0, 8)), np.zeros(0, int), TrainConfig()
            )

    def test_domain_head_untouched(self):
        x, y = two_blob_data(n_per_class=10)
        model = build_fcl(8, 2, seed=2, with_domain_head=True)
        before = [p.copy() for p in model.group_params("domain_classifier")]
        train_supervised(model, x, y, TrainConfig(epochs=3, seed=0))
        after = model.group_params("domain_classifier")
        assert params_equal(before, after)


def shifted_pair(seed=0, gap=4.0, shift=1.5, n=60, dim=8):
    rng = np.random.default_rng(seed)
    xs = np.concatenate(
        [rng.normal(size=(n, dim)) + gap, rng.normal(size=(n, dim)) - gap]
    )
    ys = np.concatenate([np.zeros(n, int), np.ones(n, int)])
    xt = np.concatenate(
        [rng.normal(size=(n, dim)) + gap + shift, rng.normal(size=(n, dim)) - gap + shift]
    )
    yt = ys.copy()
    return xs, ys, xt, yt


class TestTrainUda:
    def test_feature_gradient_decomposes_into_object_minus_domain(self):
        from radarid.training import _domain_gradients, _object_gradients

        xs, ys, xt, _ = shifted_pair()
        model = build_fcl(8, 2, seed=0, with_domain_head=True).to_dtype(np.float64)
        model.set_grl_lambda(1.0)
        xb, yb = xs[:16], ys[:16]
        union = np.concatenate([xb, xt[:16]])
        d = np.concatenate([np.zeros(16, int), np.ones(16, int)])

        _, g_obj = _object_gradients(model, xb, yb)
        _, g_dom = _domain_gradients(model, union, d)
        # raw domain gradient, reversal undone
        model.set_grl_lambda(-1.0)
        _, g_dom_raw = _domain_gradients(model, union, d)

        for combined, obj, raw in zip(
            (a + b for a, b in zip(g_obj.feature_extractor, g_dom.feature_extractor)),
            g_obj.feature_extractor,
            g_dom_raw.feature_extractor,
        ):
            assert np.allclose(combined, obj - raw, rtol=1e-10, atol=1e-12)

    def test_lambda_zero_matches_supervised_trajectory(self):
        xs, ys, xt, _ = shifted_pair()
        cfg = TrainConfig(epochs=4, seed=5, grl_lambda=0.0)
        adversarial = build_fcl(8, 2, seed=5, with_domain_head=True)
        supervised = build_fcl(8, 2, seed=5, with_domain_head=True)
        train_uda(adversarial, DomainPair.unsupervised(xs, ys, xt), cfg)
        train_supervised(supervised, xs, ys, cfg)
        for group in ("feature_extractor", "object_recognizer"):
            for a, b in zip(
                adversarial.group_params(group), supervised.group_params(group)
            ):
                assert np.array_equal(a, b)

    def test_object_head_never_sees_domain_loss(self):
        from radarid.training import _domain_gradients

        xs, ys, xt, _ = shifted_pair()
        model = build_fcl(8, 2, seed=1, with_domain_head=True)
        union = np.concatenate([xs[:8], xt[:8]])
        d = np.concatenate([np.zeros(8, int), np.ones(8, int)])
        _, grads = _domain_gradients(model, union, d)
        assert grads.object_recognizer is None

    def test_domain_head_never_sees_object_loss(self):
        from radarid.training import _object_gradients

        xs, ys, _, _ = shifted_pair()
        model = build_fcl(8, 2, seed=1, with_domain_head=True)
        _, grads = _object_gradients(model, xs[:8], ys[:8])
        assert grads.domain_classifier is None

    def test_requires_domain_head(self):
        xs, ys, xt, _ = shifted_pair()
        with pytest.raises(ValueError, match="domain head"):
            train_uda(
                build_fcl(8, 2, seed=0),
                DomainPair.unsupervised(xs, ys, xt),
                TrainConfig(epochs=1),
            )

    def test_empty_source_and_target(self):
        xs, ys, xt, _ = shifted_pair()
        model = build_fcl(8, 2, seed=0, with_domain_head=True)
        with pytest.raises(EmptyDatasetError, match="source"):
            train_uda(
                model,
                DomainPair.unsupervised(np.zeros((0, 8)), np.zeros(0, int), xt),
                TrainConfig(epochs=1),
            )
        with pytest.raises(EmptyDatasetError, match="target"):
            train_uda(
                model,
                DomainPair.unsupervised(xs, ys, np.zeros((0, 8))),
                TrainConfig(epochs=1),
            )

    def test_rejects_pair_with_revealed_fraction(self):
        xs, ys, xt, yt = shifted_pair()
        pair = DomainPair.semi_supervised(xs, ys, xt, yt, 0.2)
        with pytest.raises(ValueError, match="target labels"):
            train_uda(build_fcl(8, 2, seed=0, with_domain_head=True), pair, TrainConfig())

    def test_history_carries_domain_loss(self):
        xs, ys, xt, _ = shifted_pair()
        model = build_fcl(8, 2, seed=0, with_domain_head=True)
        run = train_uda(
            model, DomainPair.unsupervised(xs, ys, xt), TrainConfig(epochs=3, seed=0)
        )
        assert all(s.domain_loss is not None for s in run.history)


class TestTrainSsda:
    def test_revealed_counts_follow_stratified_rule(self):
        xs, ys, xt, yt = shifted_pair(n=50)
        pair = DomainPair.semi_supervised(xs, ys, xt, yt, 0.10)
        positions, labels = pair.reveal(seed=0)
        assert len(positions) == 10  # round(0.1 * 100)
        assert int(np.sum(labels == 0)) == 5 and int(np.sum(labels == 1)) == 5

    def test_revealed_subset_fixed_for_a_seed(self):
        xs, ys, xt, yt = shifted_pair()
        pair = DomainPair.semi_supervised(xs, ys, xt, yt, 0.2)
        a, _ = pair.reveal(seed=3)
        b, _ = pair.reveal(seed=3)
        assert np.array_equal(a, b)

    def test_fraction_out_of_range(self):
        xs, ys, xt, yt = shifted_pair()
        with pytest.raises(FractionOutOfRangeError):
            DomainPair.semi_supervised(xs, ys, xt, yt, 0.0)
        with pytest.raises(FractionOutOfRangeError):
            DomainPair.semi_supervised(xs, ys, xt, yt, 1.5)

    def test_full_reveal_uses_every_target_example(self):
        # degenerate contract: fraction 1.0 reveals the whole target set, so
        # the object loss consumes both datasets
        xs, ys, xt, yt = shifted_pair(n=20)
        pair = DomainPair.semi_supervised(xs, ys, xt, yt, 1.0)
        positions, labels = pair.reveal(seed=0)
        assert np.array_equal(np.sort(positions), np.arange(len(yt)))
        model = build_fcl(8, 2, seed=0, with_domain_head=True)
        run = train_ssda(model, pair, TrainConfig(epochs=2, seed=0))
        assert np.isfinite([s.object_loss for s in run.history]).all()

    def test_improves_on_shifted_target(self):
        xs, ys, xt, yt = shifted_pair(shift=3.0)
        cfg = TrainConfig(epochs=30, seed=0)
        source_only = build_fcl(8, 2, seed=0)
        train_supervised(source_only, xs, ys, cfg)
        adapted = build_fcl(8, 2, seed=0, with_domain_head=True)
        train_ssda(adapted, DomainPair.semi_supervised(xs, ys, xt, yt, 0.2), cfg)

        from radarid.evaluation import micro_f1, predict

        f_src = micro_f1(predict(source_only, xt), yt)
        f_ssda = micro_f1(predict(adapted, xt), yt)
        assert f_ssda >= f_src


class TestCheckpoints:
    def make_model(self):
        labelset = LabelSet(["dime", "quarter", "lead pencil", "plastic sheet", "wood"])
        scaler = ScalerParams(np.arange(16.0), np.ones(16), 1e-8)
        return build_cnn(5, seed=11, scaler=scaler, labelset=labelset)

    def test_round_trip_forward_bit_exact(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "checkpoint.json"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=640)
            a = model.forward(x)
            b = loaded.forward(x)
            assert np.array_equal(a.class_probs, b.class_probs)
            assert np.array_equal(a.domain_probs, b.domain_probs)
        assert loaded.labelset == model.labelset
        assert np.array_equal(loaded.scaler.mean, model.scaler.mean)

    def test_truncated_file_is_corrupt(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "checkpoint.json"
        save_checkpoint(model, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "checkpoint.json"
        save_checkpoint(model, path)
        payload = json.loads(path.read_text())
        payload["schema_version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_history_csv_format(self, tmp_path):
        x, y = two_blob_data(n_per_class=8)
        run = train_supervised(build_fcl(8, 2, seed=0), x, y, TrainConfig(epochs=2, seed=0))
        path = tmp_path / "history.csv"
        write_history_csv(run.history, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,object_loss,domain_loss,train_f1"
        assert len(lines) == 3
        assert lines[1].split(",")[2] == ""  # no domain loss when supervised
