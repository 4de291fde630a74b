"""Feature assembly and the dense feed-forward scorer.

The classifier is a small rectifier MLP with a logistic output trained by
mini-batch adaptive-moment gradient descent on binary cross entropy; an
empty hidden-layer list reduces it to logistic regression.  Training keeps
the parameters from the epoch with the best validation loss and is fully
deterministic given the seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tabular import EncodedMatrix
from .textfeat import DocFeatures

_PROB_CLAMP = 1e-12
_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


def assemble(
    variant: str,
    structured: EncodedMatrix | None = None,
    texts: Sequence[Sequence[DocFeatures]] = (),
) -> EncodedMatrix:
    """Concatenate feature sources horizontally for one model variant.

    ``variant`` is ``"structured"``, ``"text"``, or ``"combined"``; the
    combined layout is structured columns followed by the text blocks in
    declared order.  All sources are aligned by record id (the structured
    block, or the first text block, fixes the row order) and column names
    are prefixed by their source.
    """
    if variant not in ("structured", "text", "combined"):
        raise ValueError(f"unknown variant {variant!r}")
    use_structured = variant in ("structured", "combined")
    use_text = variant in ("text", "combined")
    if use_structured and structured is None:
        raise ValueError(f"variant {variant!r} needs a structured block")
    if use_text and not texts:
        raise ValueError(f"variant {variant!r} needs at least one text source")

    blocks: list[tuple[tuple[str, ...], tuple[str, ...], np.ndarray]] = []
    if use_structured:
        cols = tuple(f"structured:{c}" for c in structured.columns)
        blocks.append((structured.ids, cols, structured.values))
    if use_text:
        for doc_list in texts:
            if not doc_list:
                raise ValueError("empty text source")
            source = doc_list[0].source
            ids = tuple(d.id for d in doc_list)
            mat = np.vstack([d.values for d in doc_list]).astype(np.float64)
            cols = tuple(f"{source}:{j}" for j in range(mat.shape[1]))
            blocks.append((ids, cols, mat))

    ref_ids = blocks[0][0]
    ref_set = set(ref_ids)
    aligned = []
    for ids, cols, mat in blocks:
        if set(ids) != ref_set or len(ids) != len(ref_ids):
            raise ValueError("feature sources cover different record ids")
        if ids != ref_ids:
            pos = {rid: i for i, rid in enumerate(ids)}
            mat = mat[[pos[rid] for rid in ref_ids], :]
        aligned.append((cols, mat))
    columns = tuple(c for cols, _ in aligned for c in cols)
    values = np.hstack([mat for _, mat in aligned]) if aligned else np.zeros((len(ref_ids), 0))
    return EncodedMatrix(ids=ref_ids, columns=columns, values=values)


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (64,)
    activation: str = "relu"
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.activation != "relu":
            raise ValueError("only the rectifier activation is supported")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    columns: tuple[str, ...]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class TrainReport:
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    best_epoch: int
    final_val_loss: float


def bce_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Binary cross entropy; each log argument is clamped at 1e-12 so only
    the boundary cases are perturbed (a perfect prediction scores exactly 0)."""
    return float(
        -np.mean(
            y * np.log(np.maximum(p, _PROB_CLAMP))
            + (1.0 - y) * np.log(np.maximum(1.0 - p, _PROB_CLAMP))
        )
    )


def _init_params(n_in: int, hidden: tuple[int, ...], rng: np.random.Generator):
    sizes = [n_in, *hidden, 1]
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / a) if a > 0 else 1.0
        weights.append(rng.standard_normal((a, b)) * scale)
        biases.append(np.zeros(b))
    return weights, biases


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(weights, biases, X):
    """Return (activations per layer, output probabilities)."""
    acts = [X]
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ W + b, 0.0)
        acts.append(a)
    z = a @ weights[-1] + biases[-1]
    return acts, _sigmoid(z[:, 0])


def _gradients(weights, biases, X, y):
    """Analytic gradients of mean BCE w.r.t. every parameter."""
    acts, p = _forward(weights, biases, X)
    n = len(y)
    delta = ((p - y) / n)[:, None]  # d(loss)/d(logit)
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        a_prev = acts[layer]
        grads_w[layer] = a_prev.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (acts[layer] > 0)
    return grads_w, grads_b, p


def _as_matrix(X) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(X, EncodedMatrix):
        return X.values, X.columns
    X = np.asarray(X, dtype=np.float64)
    return X, tuple(f"x{j}" for j in range(X.shape[1]))


def train(
    X_train, y_train, X_val, y_val, config: MlpConfig
) -> tuple[MlpModel, TrainReport]:
    """Train by mini-batch gradient descent on BCE; return the parameters of
    the best-validation-loss epoch.  Deterministic given ``config.seed``."""
    Xtr, columns = _as_matrix(X_train)
    Xv, _ = _as_matrix(X_val)
    ytr = np.asarray(y_train, dtype=np.float64)
    yv = np.asarray(y_val, dtype=np.float64)
    if len(Xtr) != len(ytr) or len(Xv) != len(yv):
        raise ValueError("row counts must match label counts")
    if len(np.unique(ytr)) < 2:
        raise ValueError("training labels are single-class")

    rng = np.random.default_rng(config.seed)
    weights, biases = _init_params(Xtr.shape[1], config.hidden, rng)
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    step = 0

    best_val = np.inf
    best_epoch = -1
    best_params = None
    train_losses: list[float] = []
    val_losses: list[float] = []
    since_best = 0
    n = len(Xtr)

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            gw, gb, p = _gradients(weights, biases, Xtr[batch], ytr[batch])
            if not np.all(np.isfinite(p)):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            if config.optimizer == "adam":
                step += 1
                corr1 = 1.0 - _ADAM_BETA1**step
                corr2 = 1.0 - _ADAM_BETA2**step
                for i in range(len(weights)):
                    m_w[i] = _ADAM_BETA1 * m_w[i] + (1 - _ADAM_BETA1) * gw[i]
                    v_w[i] = _ADAM_BETA2 * v_w[i] + (1 - _ADAM_BETA2) * gw[i] ** 2
                    m_b[i] = _ADAM_BETA1 * m_b[i] + (1 - _ADAM_BETA1) * gb[i]
                    v_b[i] = _ADAM_BETA2 * v_b[i] + (1 - _ADAM_BETA2) * gb[i] ** 2
                    weights[i] -= config.learning_rate * (m_w[i] / corr1) / (
                        np.sqrt(v_w[i] / corr2) + _ADAM_EPS
                    )
                    biases[i] -= config.learning_rate * (m_b[i] / corr1) / (
                        np.sqrt(v_b[i] / corr2) + _ADAM_EPS
                    )
            else:
                for i in range(len(weights)):
                    weights[i] -= config.learning_rate * gw[i]
                    biases[i] -= config.learning_rate * gb[i]

        _, p_tr = _forward(weights, biases, Xtr)
        tr_loss = bce_loss(ytr, p_tr)
        if len(Xv):
            _, p_v = _forward(weights, biases, Xv)
            val_loss = bce_loss(yv, p_v)
        else:
            val_loss = tr_loss
        if not (np.isfinite(tr_loss) and np.isfinite(val_loss)):
            raise RuntimeError(f"non-finite loss at epoch {epoch}")
        train_losses.append(tr_loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = (
                [w.copy() for w in weights],
                [b.copy() for b in biases],
            )
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    model = MlpModel(weights=best_params[0], biases=best_params[1], columns=columns)
    report = TrainReport(
        train_losses=tuple(train_losses),
        val_losses=tuple(val_losses),
        best_epoch=best_epoch,
        final_val_loss=float(best_val),
    )
    return model, report


def predict_proba(model: MlpModel, X) -> np.ndarray:
    """Default probabilities, strictly inside (0, 1) via the logistic link."""
    if isinstance(X, EncodedMatrix):
        if X.columns != model.columns:
            raise ValueError(
                "input columns do not match the model's training columns"
            )
        values = X.values
    else:
        values = np.asarray(X, dtype=np.float64)
        if values.shape[1] != model.n_inputs:
            raise ValueError(
                f"expected {model.n_inputs} input columns, got {values.shape[1]}"
            )
    _, p = _forward(model.weights, model.biases, values)
    return np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def grid_search(
    configs: Sequence[MlpConfig], X_train, y_train, X_val, y_val
) -> tuple[MlpConfig, MlpModel, list[TrainReport]]:
    """Train every config and keep the one with the lowest final validation
    BCE; ties go to the earliest config in list order."""
    if not configs:
        raise ValueError("need at least one config")
    best = None
    reports: list[TrainReport] = []
    errors: list[Exception] = []
    for idx, cfg in enumerate(configs):
        try:
            model, report = train(X_train, y_train, X_val, y_val, cfg)
        except (ValueError, RuntimeError) as err:
            errors.append(err)
            continue
        reports.append(report)
        if best is None or report.final_val_loss < best[2].final_val_loss:
            best = (cfg, model, report)
    if best is None:
        raise RuntimeError(f"every config failed to train: {errors}")
    return best[0], best[1], reports


def gradient_check(config: MlpConfig, X, y, eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central finite
    differences of the BCE loss over every parameter.

    Biases are drawn randomly (unlike training's zero init) so no rectifier
    pre-activation sits exactly on the kink, where one-sided subgradients
    and central differences legitimately disagree.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    weights, biases = _init_params(X.shape[1], config.hidden, rng)
    biases = [rng.standard_normal(b.shape) * 0.3 for b in biases]
    gw, gb, _ = _gradients(weights, biases, X, y)

    def loss() -> float:
        _, p = _forward(weights, biases, X)
        return bce_loss(y, p)

    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = np.asarray(grad).reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                up = loss()
                flat[k] = orig - eps
                down = loss()
                flat[k] = orig
                numeric = (up - down) / (2 * eps)
                denom = max(abs(gflat[k]), abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[k] - numeric) / denom)
    return worst


_MODEL_FORMAT_VERSION = 1


def model_to_json(model: MlpModel) -> str:
    payload = {
        "format_version": _MODEL_FORMAT_VERSION,
        "columns": list(model.columns),
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    return json.dumps(payload)


def model_from_json(text: str) -> MlpModel:
    payload = json.loads(text)
    if payload.get("format_version") != _MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
    weights = [np.asarray(layer["weights"], dtype=np.float64) for layer in payload["layers"]]
    biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in payload["layers"]]
    return MlpModel(weights=weights, biases=biases, columns=tuple(payload["columns"]))


def save_training_curves(path: str | Path, report: TrainReport) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tr, vl) in enumerate(zip(report.train_losses, report.val_losses)):
            writer.writerow([epoch, repr(tr), repr(vl)])
