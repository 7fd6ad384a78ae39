"""scikit-learn style classifiers wrapping the recognizer networks.

These estimators follow the usual conventions: constructor arguments are
stored verbatim (so ``get_params``/``set_params``/``clone`` work), ``fit``
validates inputs and sets trailing-underscore attributes, ``predict`` maps
argmax indices back through ``classes_``. They compose with pipelines
alongside :class:`radarid.features.FrameStatistics`,
:class:`radarid.features.FeatureScaler`, and
:class:`radarid.features.SlidingWindows`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .models import build_cnn, build_fcl
from .training import DomainPair, TrainConfig, train_ssda, train_supervised, train_uda


class _NetClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing for the network-backed classifiers."""

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
        )

    def _encode_labels(self, y):
        y = np.asarray(y)
        classes, encoded = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise ValueError(f"need at least 2 classes, got {len(classes)}")
        self.classes_ = classes
        return encoded

    def _build(self, n_features, n_classes):
        raise NotImplementedError

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        encoded = self._encode_labels(y)
        if len(encoded) != len(X):
            raise ValueError("X and y lengths differ")
        self.n_features_in_ = X.shape[1]
        self.model_ = self._build(X.shape[1], len(self.classes_))
        run = train_supervised(self.model_, X, encoded, self._train_config())
        self.history_ = run.history
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features; expected {self.n_features_in_}"
            )
        parts = [
            np.atleast_2d(self.model_.forward(X[start : start + 512]).class_probs)
            for start in range(0, len(X), 512)
        ]
        return np.concatenate(parts).astype(np.float64)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class FclClassifier(_NetClassifier):
    """Three-layer fully connected recognizer over per-frame feature rows.

    Parameters
    ----------
    hidden_units : int, default=16
        Width of the two hidden layers.
    learning_rate, batch_size, epochs : SGD schedule.
    random_state : int
        Seeds both parameter initialization and batch shuffling.
    """

    def __init__(
        self,
        hidden_units=16,
        learning_rate=0.01,
        batch_size=32,
        epochs=100,
        random_state=0,
    ):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _build(self, n_features, n_classes):
        return build_fcl(
            n_features, n_classes, self.random_state, hidden_units=self.hidden_units
        )


class CnnClassifier(_NetClassifier):
    """1-D convolutional recognizer over flattened feature windows.

    Defaults reproduce the published architecture on 640-long inputs:
    three kernel-20 stride-2 convolutions, then a 64 -> 32 -> 16 -> C head.
    """

    def __init__(
        self,
        kernel_size=20,
        stride=2,
        conv_channels=(1, 1, 1),
        learning_rate=0.01,
        batch_size=32,
        epochs=100,
        random_state=0,
    ):
        self.kernel_size = kernel_size
        self.stride = stride
        self.conv_channels = conv_channels
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _build(self, n_features, n_classes, with_domain_head=False, grl_lambda=1.0):
        return build_cnn(
            n_classes,
            self.random_state,
            input_length=n_features,
            kernel_size=self.kernel_size,
            stride=self.stride,
            conv_channels=tuple(self.conv_channels),
            with_domain_head=with_domain_head,
            grl_lambda=grl_lambda,
        )


class DomainAdversarialCnnClassifier(CnnClassifier):
    """CNN recognizer trained adversarially against a domain classifier.

    ``fit`` additionally takes the target-domain inputs. With
    ``labeled_fraction == 0`` the target stays unlabeled (unsupervised
    adaptation); a positive fraction reveals that stratified share of
    ``y_target`` to the object loss (semi-supervised adaptation).
    """

    def __init__(
        self,
        labeled_fraction=0.0,
        grl_lambda=1.0,
        kernel_size=20,
        stride=2,
        conv_channels=(1, 1, 1),
        learning_rate=0.01,
        batch_size=32,
        epochs=100,
        random_state=0,
    ):
        super().__init__(
            kernel_size=kernel_size,
            stride=stride,
            conv_channels=conv_channels,
            learning_rate=learning_rate,
            batch_size=batch_size,
            epochs=epochs,
            random_state=random_state,
        )
        self.labeled_fraction = labeled_fraction
        self.grl_lambda = grl_lambda

    def fit(self, X, y, X_target=None, y_target=None):
        if X_target is None:
            raise ValueError("adversarial adaptation requires X_target")
        X = check_array(X, dtype=np.float64)
        X_target = check_array(X_target, dtype=np.float64)
        if X_target.shape[1] != X.shape[1]:
            raise ValueError("source and target feature counts differ")
        encoded = self._encode_labels(y)
        self.n_features_in_ = X.shape[1]
        self.model_ = self._build(
            X.shape[1], len(self.classes_), with_domain_head=True,
            grl_lambda=self.grl_lambda,
        )
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            grl_lambda=self.grl_lambda,
        )
        if self.labeled_fraction == 0.0:
            if y_target is not None:
                raise ValueError(
                    "y_target given but labeled_fraction is 0; unsupervised "
                    "adaptation must not see target labels"
                )
            pair = DomainPair.unsupervised(X, encoded, X_target)
            run = train_uda(self.model_, pair, cfg)
        else:
            if y_target is None:
                raise ValueError("labeled_fraction > 0 requires y_target")
            y_target = np.asarray(y_target)
            known = np.isin(y_target, self.classes_)
            if not known.all():
                raise ValueError(
                    f"y_target contains labels not present in y: "
                    f"{np.unique(y_target[~known])!r}"
                )
            encoded_target = np.searchsorted(self.classes_, y_target)
            pair = DomainPair.semi_supervised(
                X, encoded, X_target, encoded_target, self.labeled_fraction
            )
            run = train_ssda(self.model_, pair, cfg)
        self.history_ = run.history
        return self
