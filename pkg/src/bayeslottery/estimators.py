"""scikit-learn compatible estimators over the training and ticket pipelines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .models import ModelConfig, build, predict_mean
from .optimizer import TrainConfig, train
from .tickets import imp


def _check_features(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 4:
        return check_array(X.reshape(len(X), -1), dtype=np.float32).reshape(X.shape)
    return check_array(X, dtype=np.float32)


def _encode(y) -> tuple[np.ndarray, np.ndarray]:
    classes = unique_labels(y)
    return classes, np.searchsorted(classes, y).astype(np.int64)


class VariationalClassifier(ClassifierMixin, BaseEstimator):
    """Mean-field Gaussian (or deterministic) MLP / mini-ResNet classifier.

    Parameters mirror :class:`TrainConfig` and :class:`ModelConfig`.
    ``hidden`` lists hidden widths for the MLP and stage widths for the
    ResNet. When ``validation_data`` is None the training set doubles as
    the evaluation set for per-epoch metrics.
    """

    def __init__(self, hidden=(64, 64), arch="mlp", blocks=(1, 1), bayesian=True,
                 epochs=30, lr=1e-3, milestones=(), gamma=0.1, warmup_epochs=0,
                 weight_decay=1e-4, batch_size=64, samples=10, eval_samples=10,
                 temperature=0.1, prior_sigma=1.0, random_state=0, validation_data=None):
        self.hidden = hidden
        self.arch = arch
        self.blocks = blocks
        self.bayesian = bayesian
        self.epochs = epochs
        self.lr = lr
        self.milestones = milestones
        self.gamma = gamma
        self.warmup_epochs = warmup_epochs
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.samples = samples
        self.eval_samples = eval_samples
        self.temperature = temperature
        self.prior_sigma = prior_sigma
        self.random_state = random_state
        self.validation_data = validation_data

    def _model_config(self, X: np.ndarray) -> ModelConfig:
        k = len(self.classes_)
        if self.arch == "mlp":
            widths = (X.shape[1], *self.hidden, k)
            return ModelConfig("mlp", widths, num_classes=k, bayesian=self.bayesian)
        return ModelConfig("mini_resnet", tuple(self.hidden), tuple(self.blocks), k,
                           in_channels=X.shape[1], bayesian=self.bayesian)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, milestones=tuple(self.milestones),
                           gamma=self.gamma, warmup_epochs=self.warmup_epochs,
                           weight_decay=self.weight_decay, batch_size=self.batch_size,
                           samples=self.samples, eval_samples=self.eval_samples,
                           temperature=self.temperature, prior_sigma=self.prior_sigma)

    def _datasets(self, X, y):
        if X.ndim == 4:
            check_X_y(X.reshape(len(X), -1), y)
        else:
            X, y = check_X_y(X, y, dtype=np.float32)
        X = _check_features(X)
        self.classes_, yi = _encode(y)
        self.n_features_in_ = X.shape[1]
        train_data = Dataset(X, yi)
        if self.validation_data is None:
            return train_data, train_data
        Xv, yv = self.validation_data
        return train_data, Dataset(_check_features(Xv),
                                   np.searchsorted(self.classes_, yv).astype(np.int64))

    def fit(self, X, y):
        X = np.asarray(X)
        train_data, eval_data = self._datasets(X, y)
        self.model_ = build(self._model_config(train_data.x), self.random_state)
        self.record_ = train(self.model_, train_data, eval_data, self._train_config(),
                             seed=self.random_state)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = _check_features(X)
        return predict_mean(self.model_, X, self.eval_samples, seed=self.random_state,
                            batch_size=1024)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]


class LotteryTicketClassifier(VariationalClassifier):
    """Runs iterative pruning on ``fit`` and predicts with the final-level ticket.

    ``prune_score`` selects the per-weight score (deterministic models always
    use magnitude); ``rewinding`` is ``"imp"`` or ``"lrr"``.

    Fitted attributes: ``tickets_`` and ``records_`` (one per level) and
    ``model_`` holding the last ticket at its best-epoch parameters.
    """

    def __init__(self, hidden=(64, 64), arch="mlp", blocks=(1, 1), bayesian=True,
                 epochs=30, lr=1e-3, milestones=(), gamma=0.1, warmup_epochs=0,
                 weight_decay=1e-4, batch_size=64, samples=10, eval_samples=10,
                 temperature=0.1, prior_sigma=1.0, random_state=0, validation_data=None,
                 levels=5, rate=0.2, prune_score="snr", rewinding="imp"):
        super().__init__(hidden=hidden, arch=arch, blocks=blocks, bayesian=bayesian,
                         epochs=epochs, lr=lr, milestones=milestones, gamma=gamma,
                         warmup_epochs=warmup_epochs, weight_decay=weight_decay,
                         batch_size=batch_size, samples=samples, eval_samples=eval_samples,
                         temperature=temperature, prior_sigma=prior_sigma,
                         random_state=random_state, validation_data=validation_data)
        self.levels = levels
        self.rate = rate
        self.prune_score = prune_score
        self.rewinding = rewinding

    def fit(self, X, y):
        X = np.asarray(X)
        train_data, eval_data = self._datasets(X, y)
        score = self.prune_score if self.bayesian else "magnitude"
        result = imp(self._model_config(train_data.x), train_data, eval_data,
                     self._train_config(), self.levels, self.rate, score, self.random_state,
                     lineage=self.rewinding)
        self.tickets_ = result.tickets
        self.records_ = result.records
        last = result.tickets[-1]
        self.model_ = last.model(last.trained_state)
        return self

    @property
    def remaining_fraction_(self) -> float:
        check_is_fitted(self, "tickets_")
        return self.tickets_[-1].remaining_fraction
