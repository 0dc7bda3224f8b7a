"""Folding-unfolding training of the terminal heads.

The model is trained with softmax cross-entropy on the normalized root
scores: first a folding phase (OR = MEAN, so every head receives
gradient), then an unfolding phase (OR = MAX) starting from the folding
parameters.  Plain SGD with momentum, deterministic per seed.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, NumericError, VersionError
from .grammar import Aog, Configuration, Kind, build_aog
from .parsing import (GradientMode, Mode, backward, collapse_configuration,
                      extract_parse_tree, forward)
from .scoremaps import (Roi, TerminalConvParams, finite_diff_check,
                        init_params, pooled_feature)
from .synthetic import Sample, config_match

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    folding_epochs: int = 1
    unfolding_epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    batch_size: int = 16
    gradient_mode: GradientMode = GradientMode.EXACT
    log_every: int = 1

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise DataError(f"lr must be non-negative, got {self.lr}")
        if self.folding_epochs < 0 or self.unfolding_epochs < 0:
            raise DataError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        return self


@dataclass
class Model:
    aog: Aog
    params: TerminalConvParams

    @property
    def num_classes(self) -> int:
        return self.params.num_classes

    @property
    def feature_channels(self) -> int:
        return self.params.feature_channels

    @staticmethod
    def new(aog: Aog, d: int, c: int, seed: int, stddev: float = 0.01) -> "Model":
        return Model(aog, init_params(aog, d, c, seed, stddev))


@dataclass
class EpochStats:
    epoch: int
    mode: str
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,mode,loss,accuracy"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.mode},{e.loss!r},{e.accuracy!r}")
        return "\n".join(lines) + "\n"


def softmax_xent(scores: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Numerically stable cross-entropy; grad = softmax - one_hot."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise NumericError(f"non-finite scores {scores}")
    if not 0 <= label < scores.shape[0]:
        raise DataError(f"label {label} out of range for C={scores.shape[0]}")
    shifted = scores - scores.max()
    logz = np.log(np.exp(shifted).sum())
    loss = float(logz - shifted[label])
    grad = np.exp(shifted - logz)
    grad[label] -= 1.0
    return loss, grad


def terminal_score_table(model: Model, feature: np.ndarray, roi: Roi
                         ) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Per-terminal score vectors for one RoI, plus the pooled features.

    Uses the pooled-feature shortcut, which is algebraically identical to
    pooling the 1x1-convolved score maps (both steps are linear over the
    same pixel span).
    """
    tids = model.params.terminal_ids
    xbar = np.stack([pooled_feature(feature, roi, model.aog, t) for t in tids])
    scores = np.einsum("tcd,td->tc", model.params.weight, xbar)
    scores += model.params.bias
    return {tid: scores[i] for i, tid in enumerate(tids)}, xbar


def sample_loss_and_grads(model: Model, sample: Sample, mode: Mode,
                          gradient_mode: GradientMode = GradientMode.EXACT):
    """Loss, predicted class, and parameter gradients for one sample."""
    table, xbar = terminal_score_table(model, sample.feature, sample.roi)
    state = forward(model.aog, table, mode)
    loss, g_root = softmax_xent(state.root_normalized, sample.label)
    pred = int(np.argmax(state.root_normalized))
    g_term = backward(model.aog, state, g_root, gradient_mode)
    g_stack = np.stack([g_term[t] for t in model.params.terminal_ids])  # (T,C)
    grad_w = np.einsum("tc,td->tcd", g_stack, xbar)
    grad_b = g_stack
    return loss, pred, grad_w, grad_b, state


def train(model: Model, dataset: list[Sample], cfg: TrainConfig
          ) -> tuple[Model, TrainHistory]:
    """Folding epochs first, then unfolding epochs from the same params."""
    cfg.validate()
    if not dataset:
        raise DataError("empty training dataset")
    model = Model(model.aog, model.params.copy())
    rng = np.random.default_rng(cfg.seed)
    vel_w = np.zeros_like(model.params.weight)
    vel_b = np.zeros_like(model.params.bias)
    history = TrainHistory()
    phases = ([(Mode.FOLDING, cfg.folding_epochs)]
              + [(Mode.UNFOLDING, cfg.unfolding_epochs)])
    epoch = 0
    for mode, n_epochs in phases:
        for _ in range(n_epochs):
            order = rng.permutation(len(dataset))
            losses, correct = [], 0
            for lo in range(0, len(order), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                gw = np.zeros_like(model.params.weight)
                gb = np.zeros_like(model.params.bias)
                for idx in batch:
                    loss, pred, grad_w, grad_b, _ = sample_loss_and_grads(
                        model, dataset[idx], mode, cfg.gradient_mode)
                    losses.append(loss)
                    correct += pred == dataset[idx].label
                    gw += grad_w
                    gb += grad_b
                gw /= len(batch)
                gb /= len(batch)
                vel_w = cfg.momentum * vel_w - cfg.lr * gw
                vel_b = cfg.momentum * vel_b - cfg.lr * gb
                model.params.weight = model.params.weight + vel_w
                model.params.bias = model.params.bias + vel_b
            mean_loss = float(np.mean(losses))
            if not np.isfinite(mean_loss):
                raise NumericError(f"loss diverged at epoch {epoch} ({mode.value})")
            history.epochs.append(EpochStats(
                epoch, mode.value, mean_loss, correct / len(dataset)))
            epoch += 1
    return model, history


@dataclass
class SampleResult:
    predicted: int
    label: int
    loss: float
    configuration: Configuration | None
    match: float | None


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    results: list[SampleResult]

    def mean_match(self) -> float | None:
        scores = [r.match for r in self.results if r.match is not None]
        return float(np.mean(scores)) if scores else None


def evaluate(model: Model, dataset: list[Sample], mode: Mode,
             jobs: int = 1) -> EvalResult:
    """Classify by argmax of normalized root scores; in unfolding mode
    also extract the predicted class's configuration and, when ground
    truth is present and the prediction is correct, score the match."""
    def one(sample: Sample) -> SampleResult:
        table, _ = terminal_score_table(model, sample.feature, sample.roi)
        state = forward(model.aog, table, mode)
        loss, _ = softmax_xent(state.root_normalized, sample.label)
        pred = int(np.argmax(state.root_normalized))
        configuration = match = None
        if mode == Mode.UNFOLDING and model.aog.root.kind != Kind.TERMINAL:
            tree = extract_parse_tree(model.aog, state, pred)
            configuration = collapse_configuration(model.aog, tree)
            if sample.config is not None and pred == sample.label:
                match = config_match(configuration, sample.config)
        return SampleResult(pred, sample.label, loss, configuration, match)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, dataset))  # order-preserving merge
    else:
        results = [one(s) for s in dataset]
    accuracy = float(np.mean([r.predicted == r.label for r in results]))
    mean_loss = float(np.mean([r.loss for r in results]))
    return EvalResult(accuracy, mean_loss, results)


def grad_check_end_to_end(model: Model, sample: Sample, mode: Mode,
                          step: float = 1e-3,
                          gradient_mode: GradientMode = GradientMode.EXACT,
                          max_coords: int | None = 200,
                          seed: int = 0) -> float:
    """Loss-vs-params central differences through the whole pipeline."""
    loss0, _, grad_w, grad_b, _ = sample_loss_and_grads(
        model, sample, mode, gradient_mode)
    if not np.isfinite(loss0):
        raise NumericError("non-finite loss at the linearization point")
    analytic = np.concatenate([grad_w.ravel(), grad_b.ravel()])
    probe = Model(model.aog, model.params.copy())

    def fn(flat: np.ndarray) -> float:
        probe.params.set_flat(flat)
        table, _ = terminal_score_table(probe, sample.feature, sample.roi)
        state = forward(probe.aog, table, mode)
        loss, _ = softmax_xent(state.root_normalized, sample.label)
        return loss

    return finite_diff_check(fn, analytic, model.params.flat(), step,
                             max_coords=max_coords, seed=seed)


def save_checkpoint(model: Model, path) -> None:
    obj = {
        "schema_version": CHECKPOINT_VERSION,
        "grid_w": model.aog.grid_w,
        "grid_h": model.aog.grid_h,
        "l_min": model.aog.l_min,
        "super_or_threshold": model.aog.super_or_threshold,
        "with_super_or": model.aog.root.kind == Kind.SUPER_OR,
        "num_classes": model.num_classes,
        "feature_channels": model.feature_channels,
        "terminal_ids": list(model.params.terminal_ids),
        "weight": model.params.weight.tolist(),
        "bias": model.params.bias.tolist(),
    }
    Path(path).write_text(json.dumps(obj) + "\n")


def load_checkpoint(path) -> Model:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot load checkpoint {path}: {exc}") from exc
    try:
        if obj["schema_version"] != CHECKPOINT_VERSION:
            raise VersionError(
                f"checkpoint version {obj['schema_version']} unsupported")
        aog = build_aog(obj["grid_w"], obj["grid_h"], obj["l_min"],
                        obj["super_or_threshold"], obj["with_super_or"])
        tids = tuple(obj["terminal_ids"])
        if tids != tuple(aog.terminal_ids):
            raise FormatError("checkpoint terminal ids do not match the graph")
        params = TerminalConvParams(
            tids, np.asarray(obj["weight"], dtype=float),
            np.asarray(obj["bias"], dtype=float))
        return Model(aog, params)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed checkpoint {path}: {exc!r}") from exc
