"""Acceptance criteria, one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion. The learning criteria (5 and 6) train real models on the default
synthetic suite and take several minutes combined; everything else is fast.
"""

import copy
import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarid.cli import main
from radarid.datamodel import FEATURE_DIM, DomainTag
from radarid.evaluation import confusion, micro_f1, predict
from radarid.features import fit_scaler, make_windows, recording_features, scale_windows
from radarid.ingest import stratified_indices
from radarid.models import (
    build_cnn,
    conv_lengths,
    gradient_check,
    head_widths,
)
from radarid.neuralnet import softmax
from radarid.synthgen import default_suite, dynamic_suite
from radarid.training import (
    DomainPair,
    TrainConfig,
    _domain_gradients,
    _object_gradients,
    train_ssda,
    train_supervised,
    train_uda,
)

SPLIT_RATIO = 0.7
SPLIT_SEED = 1729


def report(criterion, detail):
    print(f"[criterion {criterion}] PASS - {detail}")


@pytest.fixture(scope="module")
def suite_windows():
    """Windows and labels per domain from the default synthetic suite."""
    collection = default_suite().build_collection()
    per_domain = {}
    for domain in collection.domains():
        xs, ys = [], []
        for recording in collection.by_domain(domain):
            rows = recording_features(recording.frames)
            windows = make_windows(rows)
            xs.append(windows)
            ys.append(np.full(len(windows), recording.label.index))
        per_domain[domain] = (np.concatenate(xs), np.concatenate(ys))
    return per_domain


def domain_split(per_domain, domain):
    x, y = per_domain[domain]
    train, test = stratified_indices(y, SPLIT_RATIO, SPLIT_SEED)
    return x[train], y[train], x[test], y[test]


class TestCriterion1Architecture:
    def test_cnn_matches_published_hyperparameters(self):
        start = time.perf_counter()
        model = build_cnn(5, seed=0)
        assert conv_lengths(model) == (311, 146, 64)
        assert head_widths(model, "object_recognizer") == (64, 32, 16, 5)
        assert head_widths(model, "domain_classifier") == (64, 32, 2)
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0
        report(1, f"conv lengths 311/146/64, heads 64/32/16/5 and 64/32/2 ({elapsed:.3f}s)")


class TestCriterion2Gradients:
    def test_finite_differences_over_full_cnn_with_grl(self):
        start = time.perf_counter()
        model = build_cnn(5, seed=0)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 640)) * 0.5
        error = gradient_check(model, x, [1, 3], domain_target=[0, 1], eps=1e-5)
        assert error < 1e-4

        # Instrumented adversarial update: the applied extractor step must
        # equal -mu * (g_object - g_domain) with the two gradients computed
        # by separate backward passes.
        mu = 0.05
        cfg = TrainConfig(learning_rate=mu, batch_size=1, epochs=1, seed=0, grl_lambda=1.0)
        model64 = build_cnn(5, seed=1, dtype=np.float64)
        xs = rng.normal(size=(1, 640)) * 0.5
        ys = np.array([2])
        xt = rng.normal(size=(1, 640)) * 0.5

        oracle = copy.deepcopy(model64)
        oracle.set_grl_lambda(1.0)
        _, g_obj = _object_gradients(oracle, xs, ys)
        union = np.concatenate([xs, xt])
        domains = np.array([0, 1])
        oracle.set_grl_lambda(-1.0)  # undo the reversal: raw domain gradient
        _, g_dom_raw = _domain_gradients(oracle, union, domains)

        before = [p.copy() for p in model64.group_params("feature_extractor")]
        train_uda(model64, DomainPair.unsupervised(xs, ys, xt), cfg)
        after = model64.group_params("feature_extractor")
        worst = 0.0
        for b, a, go, gd in zip(before, after, g_obj.feature_extractor,
                                g_dom_raw.feature_extractor):
            expected = b - mu * (go - gd)
            worst = max(worst, float(np.max(np.abs(a - expected))))
        assert worst < 1e-10
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0
        report(
            2,
            f"finite-difference max rel err {error:.2e} < 1e-4; "
            f"adversarial update matches -mu*(g_or - g_dc) within {worst:.1e} "
            f"({elapsed:.1f}s)",
        )


class TestCriterion3MetricOracle:
    def test_micro_f1_equals_independent_accuracy(self):
        rng = np.random.default_rng(42)
        for trial in range(1000):
            n = int(rng.integers(1, 40))
            n_classes = int(rng.integers(2, 8))
            pred = rng.integers(0, n_classes, size=n)
            truth = rng.integers(0, n_classes, size=n)
            accuracy = float(np.mean(pred == truth))
            f1 = micro_f1(pred, truth)
            assert f1 == accuracy
            matrix = confusion(pred, truth, n_classes)
            assert np.trace(matrix) / matrix.sum() == f1
        report(3, "micro-F1 == accuracy and trace/total on 1000 random vectors, exactly")


class TestCriterion4PipelineInvariants:
    @given(
        st.lists(
            st.floats(min_value=-15, max_value=15, allow_nan=False),
            min_size=2,
            max_size=10,
        )
    )
    @settings(max_examples=150, deadline=None)
    def test_softmax_normalization(self, logits):
        probabilities = softmax(np.array(logits, dtype=np.float64))
        assert abs(probabilities.sum() - 1.0) < 1e-12

    @given(
        n=st.integers(min_value=40, max_value=400),
        dim=st.integers(min_value=1, max_value=16),
    )
    @settings(max_examples=150, deadline=None)
    def test_window_count_is_n_minus_39(self, n, dim):
        assert make_windows(np.zeros((n, dim)), 40, 1).shape[0] == n - 39

    @given(
        data=st.lists(
            st.lists(
                st.floats(min_value=-100, max_value=100, allow_nan=False).map(
                    lambda v: round(v, 3)
                ),
                min_size=3,
                max_size=3,
            ),
            min_size=2,
            max_size=50,
        )
    )
    @settings(max_examples=150, deadline=None)
    def test_scaler_postconditions(self, data):
        rows = np.array(data)
        params = fit_scaler(rows)
        scaled = (rows - params.mean) / np.maximum(params.std, params.epsilon)
        assert np.all(np.abs(scaled.mean(axis=0)) < 1e-9)
        live = params.std > params.epsilon
        assert np.all(np.abs(scaled[:, live].std(axis=0) - 1.0) < 1e-9)

    @given(
        counts=st.lists(st.integers(min_value=2, max_value=60), min_size=1, max_size=6),
        ratio=st.floats(min_value=0.05, max_value=0.95),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=150, deadline=None)
    def test_stratified_split_counts_within_one(self, counts, ratio, seed):
        labels = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
        train, test = stratified_indices(labels, ratio, seed)
        assert len(train) + len(test) == len(labels)
        for c, n in enumerate(counts):
            assert abs(int(np.sum(labels[train] == c)) - ratio * n) <= 1.0

    def test_report_line(self):
        report(4, "softmax/windowing/scaler/split property suites, 150 cases each")


class TestCriterion5InDomainLearning:
    def test_cnn_reaches_090_on_held_out_split(self, suite_windows):
        start = time.perf_counter()
        x, y = suite_windows[DomainTag("sunny", 7)]
        assert len(np.unique(y)) == 5
        assert all(np.sum(y == c) >= 200 for c in range(5))

        x_train, y_train, x_test, y_test = domain_split(suite_windows, DomainTag("sunny", 7))
        scaler = fit_scaler(x_train.reshape(-1, FEATURE_DIM))
        model = build_cnn(5, seed=0, with_domain_head=False)
        cfg = TrainConfig(learning_rate=0.01, batch_size=32, epochs=300, seed=0)
        train_supervised(model, scale_windows(scaler, x_train), y_train, cfg)
        f1 = micro_f1(predict(model, scale_windows(scaler, x_test)), y_test)
        elapsed = time.perf_counter() - start
        assert f1 >= 0.90
        assert elapsed < 300.0
        report(5, f"in-domain held-out micro-F1 {f1:.3f} >= 0.90 ({elapsed:.0f}s)")


class TestCriterion6AdaptationTrend:
    def test_ssda_recovers_most_of_the_shift_uda_less(self, suite_windows):
        start = time.perf_counter()
        source = DomainTag("sunny", 7)
        target = DomainTag("night", 53)
        xs_train, ys_train, xs_test, ys_test = domain_split(suite_windows, source)
        xt_train, yt_train, xt_test, yt_test = domain_split(suite_windows, target)

        scaler = fit_scaler(xs_train.reshape(-1, FEATURE_DIM))
        xs_train = scale_windows(scaler, xs_train)
        xs_test = scale_windows(scaler, xs_test)
        target_pool = scale_windows(scaler, xt_train)
        xt_test = scale_windows(scaler, xt_test)

        scores = {"in": [], "src": [], "uda": [], "ssda10": [], "ssda20": []}
        for seed in (0, 1, 2):
            cfg = TrainConfig(learning_rate=0.01, batch_size=32, epochs=300, seed=seed)
            supervised = build_cnn(5, seed=seed, with_domain_head=False)
            train_supervised(supervised, xs_train, ys_train, cfg)
            scores["in"].append(micro_f1(predict(supervised, xs_test), ys_test))
            scores["src"].append(micro_f1(predict(supervised, xt_test), yt_test))

            adapted = build_cnn(5, seed=seed)
            train_uda(adapted, DomainPair.unsupervised(xs_train, ys_train, target_pool), cfg)
            scores["uda"].append(micro_f1(predict(adapted, xt_test), yt_test))

            for name, fraction in (("ssda10", 0.10), ("ssda20", 0.20)):
                semi = build_cnn(5, seed=seed)
                pair = DomainPair.semi_supervised(
                    xs_train, ys_train, target_pool, yt_train, fraction
                )
                train_ssda(semi, pair, cfg)
                scores[name].append(micro_f1(predict(semi, xt_test), yt_test))

        means = {name: float(np.mean(values)) for name, values in scores.items()}
        elapsed = time.perf_counter() - start

        assert means["src"] <= means["in"] - 0.15, means
        assert means["uda"] >= means["src"], means
        assert means["ssda10"] >= means["uda"], means
        assert means["ssda20"] >= means["ssda10"], means
        gap = means["in"] - means["src"]
        assert means["ssda20"] >= means["src"] + 0.5 * gap, means
        assert elapsed < 1200.0
        report(
            6,
            "3-seed means in={in:.3f} src={src:.3f} uda={uda:.3f} "
            "ssda10={ssda10:.3f} ssda20={ssda20:.3f}".format(**means)
            + f" ({elapsed:.0f}s)",
        )


def run_cli(argv):
    return main([str(a) for a in argv])


class TestCriterion7Determinism:
    def test_grid_reports_are_byte_identical(self, tmp_path):
        dataset_dir = tmp_path / "data"
        manifest = default_suite(frames_per_recording=59, seed=5).write_dataset(dataset_dir)
        outputs = []
        for name in ("first", "second"):
            out_dir = tmp_path / name
            config = tmp_path / f"{name}.json"
            config.write_text(json.dumps({
                "dataset": str(manifest),
                "rows": [{
                    "train_domain": {"ambience": "sunny", "placement": 7},
                    "test_domain": {"ambience": "night", "placement": 7},
                    "methods": ["FCL", "CNN", "UDA"],
                }],
                "seeds": [0, 1],
                "epochs": 3,
                "parallelism": 1,
                "out_dir": str(out_dir),
            }))
            assert run_cli(["grid", "--config", config]) == 0
            outputs.append({
                suffix: (out_dir / f"report.{suffix}").read_bytes()
                for suffix in ("csv", "json", "md")
            })
        assert outputs[0] == outputs[1]
        report(7, "two grid executions produced byte-identical csv/json/markdown reports")


class TestCriterion8StructuralReproduction:
    """The published absolute F1 values (for example 0.443 -> 0.822 across
    ambiences, or 0.238 -> 0.878 across heights) were measured on the
    authors' physical radar dataset and are NOT acceptance targets here.
    What is testable without that dataset is the experiment structure: the
    cross-height and cross-distance grids must have exactly six rows and the
    five method columns."""

    def check_structure(self, tmp_path, suite, preset, expected_state):
        dataset_dir = tmp_path / f"data_{preset}"
        manifest = suite.write_dataset(dataset_dir)
        out_dir = tmp_path / f"report_{preset}"
        config = tmp_path / f"{preset}.json"
        config.write_text(json.dumps({
            "dataset": str(manifest),
            "preset": preset,
            "seeds": [0],
            "epochs": 1,
            "out_dir": str(out_dir),
        }))
        assert run_cli(["grid", "--config", config]) == 0

        csv_lines = (out_dir / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 1 + 6 * 5  # 6 domain pairs x 5 methods

        markdown = (out_dir / "report.md").read_text().splitlines()
        assert markdown[0] == (
            "| Training domain | Testing domain | FCL | CNN | UDA | SSDA 10% | SSDA 20% |"
        )
        assert len(markdown) == 2 + 6

        table = json.loads((out_dir / "report.json").read_text())
        assert len(table["rows"]) == 6
        for row in table["rows"]:
            assert list(row["cells"]) == ["FCL", "CNN", "UDA", "SSDA10", "SSDA20"]
            assert row["train_domain"]["radar_state"] == expected_state
            assert row["train_domain"]["ambience"] == row["test_domain"]["ambience"]
            assert row["train_domain"]["placement"] != row["test_domain"]["placement"]

    def test_cross_height_table_structure(self, tmp_path):
        self.check_structure(
            tmp_path, default_suite(frames_per_recording=59, seed=2),
            "cross_height", "static",
        )
        report(8, "cross-height grid reproduces the 6-row x 5-method structure")

    def test_cross_distance_table_structure(self, tmp_path):
        self.check_structure(
            tmp_path, dynamic_suite(frames_per_recording=59, seed=2),
            "cross_distance", "dynamic",
        )
        report(8, "cross-distance grid reproduces the 6-row x 5-method structure")

    def test_absolute_values_documented_as_out_of_scope(self):
        readme = Path(__file__).resolve().parent.parent / "README.md"
        text = readme.read_text(encoding="utf-8")
        assert "not acceptance targets" in text.lower()
        report(8, "README states the published absolute F1 values are out of scope")
