"""Network assembly per model kind and the trainable estimator wrapper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ..core import CLASSES, ModelKind, N_CLASSES, TEMPORAL_KINDS, TrainPreset, class_from_meters
from ..metrics import ContactRule, ndcf
from ..validation import ConfigurationError, check_array, check_labels, check_fitted
from .layers import (
    Conv1d,
    Flatten,
    GRULayer,
    Linear,
    MaxPool1d,
    ReLU,
    Reshape,
    Sequential,
    Transpose,
    mse_loss,
    softmax,
    softmax_cross_entropy,
)
from .optim import Adam

DILATIONS = (1, 2, 4)
KERNEL_SIZE = 3


def build_network(
    kind: ModelKind,
    preset: TrainPreset,
    input_shape: tuple[int, ...],
    n_outputs: int,
    rng: np.random.Generator,
) -> Sequential:
    """Assemble the layer stack for one model kind.

    ``input_shape`` is the per-sample shape: ``(n_features,)`` for the flat
    representation, ``(T, D)`` for the 150-step one.
    """
    h = preset.hidden_size
    layers: list = []
    if kind is ModelKind.FEEDFORWARD:
        (n_features,) = input_shape
        n_in = n_features
        for _ in range(preset.num_layers):
            layers += [Linear(n_in, h, rng), ReLU()]
            n_in = h
        layers.append(Linear(h, n_outputs, rng))
        return Sequential(layers)

    # temporal models run channels-last: the (T, D) sample feeds convolutions
    # and GRUs directly without layout shuffles
    steps, d = input_shape
    if kind is ModelKind.CONV1D:
        conv = Conv1d(d, h, KERNEL_SIZE, rng, channels_last=True)
        l_out = conv.out_length(steps)
        layers = [
            conv,
            ReLU(),
            Flatten(),
            Linear(h * l_out, h, rng),
            ReLU(),
            Linear(h, n_outputs, rng),
        ]
    elif kind is ModelKind.CONV1D_DILATED:
        layers = []
        ch, length = d, steps
        for dilation in DILATIONS:
            conv = Conv1d(ch, h, KERNEL_SIZE, rng, dilation=dilation, channels_last=True)
            length = conv.out_length(length)
            layers += [conv, ReLU()]
            ch = h
        layers += [Flatten(), Linear(h * length, h, rng), ReLU(), Linear(h, n_outputs, rng)]
    elif kind is ModelKind.CONV1D_MAXPOOL:
        layers = []
        ch, length = d, steps
        for _ in range(3):
            conv = Conv1d(ch, h, KERNEL_SIZE, rng, channels_last=True)
            length = conv.out_length(length) // 2
            layers += [conv, ReLU(), MaxPool1d(2, channels_last=True)]
            ch = h
        layers += [Flatten(), Linear(h * length, h, rng), ReLU(), Linear(h, n_outputs, rng)]
    elif kind is ModelKind.GRU:
        layers = _gru_stack(d, h, preset.num_layers, rng)
        layers.append(Linear(h, n_outputs, rng))
    elif kind is ModelKind.CONVGRU:
        layers = [Conv1d(d, h, KERNEL_SIZE, rng, channels_last=True), ReLU()]
        layers += _gru_stack(h, h, preset.num_layers, rng)
        layers.append(Linear(h, n_outputs, rng))
    elif kind is ModelKind.CONVGRU_NOLINEAR:
        layers = [Conv1d(d, h, KERNEL_SIZE, rng, channels_last=True), ReLU()]
        layers += _gru_stack(h, h, preset.num_layers, rng)
        # class-width 1x1 conv head on the final hidden state, no dense layer
        layers += [Reshape((1, h)), Conv1d(h, n_outputs, 1, rng, channels_last=True), Flatten()]
    else:
        raise ValueError(f"unhandled model kind {kind!r}")
    return Sequential(layers)


def _gru_stack(n_in: int, hidden: int, depth: int, rng: np.random.Generator) -> list:
    layers = []
    for i in range(depth):
        layers.append(
            GRULayer(
                n_in if i == 0 else hidden,
                hidden,
                rng,
                return_sequence=i < depth - 1,
            )
        )
    return layers


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    eval_ndcf: float  # NaN when no eval set was supplied or the rate is undefined


class NeuralNetModel(BaseEstimator):
    """Trainable wrapper: builds the network for a preset and runs Adam training.

    ``task="classify"`` trains 4-way softmax cross-entropy on class indices;
    ``task="regress"`` trains squared error on distances in meters and scores
    by rounding predictions to the nearest class.
    """

    def __init__(
        self,
        preset: TrainPreset | None = None,
        task: str = "classify",
        seed: int = 0,
        mixup_alpha: float | None = None,
        rule: ContactRule | None = None,
    ):
        self.preset = preset
        self.task = task
        self.seed = seed
        self.mixup_alpha = mixup_alpha
        self.rule = rule
        self.network_: Sequential | None = None

    def _check_input(self, X: np.ndarray) -> None:
        kind = self.preset.model_kind
        if kind in TEMPORAL_KINDS and X.ndim != 3:
            raise ConfigurationError(
                f"{kind.value} consumes the 150-step representation (3-D input), got shape {X.shape}"
            )
        if kind is ModelKind.FEEDFORWARD and X.ndim != 2:
            raise ConfigurationError(
                f"feedforward consumes the flat representation (2-D input), got shape {X.shape}"
            )

    def fit(self, X, y, eval_data: tuple[np.ndarray, np.ndarray] | None = None):
        """Train for the preset's epoch count; records per-epoch loss and eval cost.

        ``eval_data`` is an optional ``(X_eval, y_eval)`` pair scored with the
        contact rule after every epoch. ``y`` holds class indices for
        classification and meters for regression; so does ``y_eval``.
        """
        if self.preset is None:
            raise ConfigurationError("a TrainPreset is required to fit")
        if self.task not in ("classify", "regress"):
            raise ConfigurationError(f"unknown task {self.task!r}")
        X = check_array(X, "X")
        self._check_input(X)
        y = check_labels(y, X.shape[0])
        n_outputs = N_CLASSES if self.task == "classify" else 1
        rng = np.random.default_rng(self.seed)
        self.input_shape_ = X.shape[1:]
        self.n_outputs_ = n_outputs
        self.network_ = build_network(
            self.preset.model_kind, self.preset, self.input_shape_, n_outputs, rng
        )
        optimizer = Adam(self.network_.params(), lr=self.preset.learning_rate)
        if self.mixup_alpha is not None and (self.task != "classify" or X.ndim != 2):
            raise ConfigurationError("mix-up applies to flat-input classification only")

        targets = y.astype(np.int64) if self.task == "classify" else y.astype(np.float64)
        if eval_data is not None:
            x_eval = check_array(eval_data[0], "X_eval")
            truths = [CLASSES[i] for i in np.asarray(eval_data[1], dtype=np.int64)]
            eval_data = (x_eval, truths)
        n = X.shape[0]
        batch = self.preset.batch_size
        history: list[EpochRecord] = []
        for epoch in range(1, self.preset.epochs + 1):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                take = order[start : start + batch]
                xb, tb = X[take], targets[take]
                if self.mixup_alpha is not None:
                    xb, tb = self._mixup_batch(xb, tb, rng)
                optimizer.zero_grad()
                logits = self.network_.forward(xb)
                if self.task == "classify":
                    loss, grad = softmax_cross_entropy(logits, tb)
                else:
                    loss, grad = mse_loss(logits, tb)
                self.network_.backward(grad)
                optimizer.step()
                total += loss * len(take)
            history.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=total / n,
                    eval_ndcf=self._eval_ndcf(eval_data),
                )
            )
        self.history_ = history
        return self

    def _mixup_batch(self, xb: np.ndarray, tb: np.ndarray, rng: np.random.Generator):
        lam = rng.beta(self.mixup_alpha, self.mixup_alpha, size=(xb.shape[0], 1))
        partner = rng.permutation(xb.shape[0])
        hard = np.zeros((xb.shape[0], N_CLASSES))
        hard[np.arange(xb.shape[0]), tb] = 1.0
        x_mix = lam * xb + (1.0 - lam) * xb[partner]
        t_mix = lam * hard + (1.0 - lam) * hard[partner]
        return x_mix, t_mix

    def _eval_ndcf(self, eval_data) -> float:
        if eval_data is None:
            return float("nan")
        x_eval, truths = eval_data
        rule = self.rule if self.rule is not None else ContactRule()
        out = self._forward_batched(x_eval)
        if self.task == "classify":
            preds = [CLASSES[i] for i in out.argmax(axis=1)]
        else:
            preds = [class_from_meters(m) for m in out.reshape(-1)]
        try:
            return ndcf(preds, truths, rule).ndcf
        except ValueError:  # single-sided eval truth: the rate is undefined
            return float("nan")

    def _forward_batched(self, X: np.ndarray, batch: int = 64) -> np.ndarray:
        outs = [self.network_.forward(X[i : i + batch]) for i in range(0, X.shape[0], batch)]
        return np.concatenate(outs, axis=0)

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self, "network_")
        if self.task != "classify":
            raise ConfigurationError("predict_proba is only defined for classification")
        X = check_array(X, "X")
        return softmax(self._forward_batched(X))

    def predict(self, X) -> np.ndarray:
        """Class indices (classification) or meters (regression)."""
        check_fitted(self, "network_")
        X = check_array(X, "X")
        out = self._forward_batched(X)
        if self.task == "classify":
            return out.argmax(axis=1)
        return out.reshape(-1)

    def predict_classes(self, X) -> list:
        """Predictions as DistanceClass values, rounding regression output."""
        raw = self.predict(X)
        if self.task == "classify":
            return [CLASSES[i] for i in raw]
        return [class_from_meters(m) for m in raw]

    def evaluate_loss(self, X, y) -> float:
        """Training-objective loss of the current parameters on (X, y)."""
        check_fitted(self, "network_")
        X = check_array(X, "X")
        out = self._forward_batched(X)
        if self.task == "classify":
            loss, _ = softmax_cross_entropy(out, np.asarray(y, dtype=np.int64))
        else:
            loss, _ = mse_loss(out, y)
        return loss
