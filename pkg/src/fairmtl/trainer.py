"""Two-head linear model and the multi-task debiasing objective.

The primary head is a softmax regression over summed word vectors.  The
auxiliary bias head is a single logistic unit whose input is, by default,
the primary head's predicted distribution (``bias_input='probs'``), so the
auxiliary signal can actually reshape the primary predictions; with
``bias_input='embedding'`` it reads the input vector directly and the two
heads are independent.

The scalar objective per instance is

    primary cross-entropy  +  bias term  +  beta * l2(primary weights)

where the bias term realises "predict the bias labels incorrectly" in one of
two forms: ``subtract`` (minus bias_weight times the bias head's
cross-entropy against the pseudo-labels, unbounded below) or ``invert``
(plus bias_weight times its cross-entropy against the flipped pseudo-labels,
bounded below, the default).

During training the bias head itself is always fitted as a detector, i.e.
descends its own cross-entropy against the true pseudo-labels, while the
primary parameters descend the scalar objective above.  Without this split
the head would simply chase whatever target relieves the objective and the
primary task would feel no pressure at all.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .bias import BiasLabeling
from .corpus import Corpus

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12

BIAS_OBJECTIVES = ("subtract", "invert")
L2_FORMS = ("squared", "plain")
BIAS_INPUTS = ("probs", "embedding")


@dataclass
class MultiTaskModel:
    """Primary softmax head plus optional logistic bias head."""

    primary_weights: np.ndarray      # (c, d)
    primary_intercept: np.ndarray    # (c,)
    bias_head_weights: np.ndarray | None = None   # (c,) for probs input, (d,) for embedding
    bias_head_intercept: float | None = None
    bias_input: str = "probs"

    @property
    def dims(self) -> tuple[int, int]:
        return self.primary_weights.shape  # type: ignore[return-value]

    @property
    def has_bias_head(self) -> bool:
        return self.bias_head_weights is not None

    def copy(self) -> "MultiTaskModel":
        return MultiTaskModel(
            self.primary_weights.copy(),
            self.primary_intercept.copy(),
            None if self.bias_head_weights is None else self.bias_head_weights.copy(),
            self.bias_head_intercept,
            self.bias_input,
        )


@dataclass
class TrainConfig:
    beta: float | Mapping[int, float] = 0.0
    bias_weight: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    bias_head: bool = True
    bias_objective: str = "invert"
    l2_form: str = "squared"
    bias_input: str = "probs"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if isinstance(self.beta, (int, float)) and self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.bias_weight < 0:
            raise ValueError("bias_weight must be >= 0")
        if self.bias_objective not in BIAS_OBJECTIVES:
            raise ValueError(f"bias_objective must be one of {BIAS_OBJECTIVES}")
        if self.l2_form not in L2_FORMS:
            raise ValueError(f"l2_form must be one of {L2_FORMS}")
        if self.bias_input not in BIAS_INPUTS:
            raise ValueError(f"bias_input must be one of {BIAS_INPUTS}")

    def beta_for(self, label: int) -> float:
        if isinstance(self.beta, Mapping):
            if label not in self.beta:
                raise ValueError(f"no beta entry for label {label}")
            return float(self.beta[label])
        return float(self.beta)


def init_model(
    c: int, d: int, seed: int, bias_head: bool = True, bias_input: str = "probs"
) -> MultiTaskModel:
    """Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero intercepts.

    The primary head is drawn first, so its initialisation is identical with
    and without a bias head under the same seed.
    """
    if c < 2 or d < 1:
        raise ValueError(f"invalid dims c={c}, d={d}")
    if bias_input not in BIAS_INPUTS:
        raise ValueError(f"bias_input must be one of {BIAS_INPUTS}")
    rng = np.random.default_rng(seed)
    primary = rng.uniform(-1.0, 1.0, size=(c, d)) / np.sqrt(d)
    intercept = np.zeros(c)
    if not bias_head:
        return MultiTaskModel(primary, intercept, None, None, bias_input)
    m = c if bias_input == "probs" else d
    head = rng.uniform(-1.0, 1.0, size=m) / np.sqrt(m)
    return MultiTaskModel(primary, intercept, head, 0.0, bias_input)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def forward_primary(model: MultiTaskModel, x: np.ndarray) -> np.ndarray:
    """Predicted class distribution for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input vector")
    if x.shape != (model.dims[1],):
        raise ValueError(f"expected input of length {model.dims[1]}, got {x.shape}")
    return softmax(model.primary_weights @ x + model.primary_intercept)


def _bias_features(model: MultiTaskModel, x: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs if model.bias_input == "probs" else x


def forward_bias(model: MultiTaskModel, x: np.ndarray) -> float:
    """Bias-head probability for one input vector."""
    if not model.has_bias_head:
        raise ValueError("model has no bias head")
    probs = forward_primary(model, x)
    v = _bias_features(model, np.asarray(x, dtype=np.float64), probs)
    assert model.bias_head_weights is not None and model.bias_head_intercept is not None
    return float(sigmoid(float(model.bias_head_weights @ v) + model.bias_head_intercept))


def _clamped_log(q: float, counter: list[int] | None = None) -> float:
    if q < LOG_CLAMP:
        if counter is not None:
            counter[0] += 1
        q = LOG_CLAMP
    return float(np.log(q))


def _l2_term(weights: np.ndarray, beta: float, form: str) -> float:
    ss = float((weights**2).sum())
    return beta * ss if form == "squared" else beta * float(np.sqrt(ss))


def _l2_grad(weights: np.ndarray, beta: float, form: str) -> np.ndarray:
    if form == "squared":
        return 2.0 * beta * weights
    norm = float(np.linalg.norm(weights))
    if norm == 0.0:
        return np.zeros_like(weights)
    return beta * weights / norm


def _bias_term_and_slope(
    q: float, b: int, objective: str, bias_weight: float, counter: list[int] | None = None
) -> tuple[float, float]:
    """Value of the bias term and its derivative w.r.t. the pre-sigmoid logit."""
    log_q = _clamped_log(q, counter)
    log_1q = _clamped_log(1.0 - q, counter)
    if objective == "subtract":
        # minus the detector cross-entropy against the true pseudo-label
        term = bias_weight * (b * log_q + (1 - b) * log_1q)
        slope = bias_weight * (b - q)
    else:
        # cross-entropy against the flipped pseudo-label
        term = -bias_weight * ((1 - b) * log_q + b * log_1q)
        slope = bias_weight * (q - (1 - b))
    return term, slope


def loss(
    model: MultiTaskModel, x: np.ndarray, a: int, b: int, config: TrainConfig
) -> float:
    """Scalar multi-task objective for one instance."""
    x = np.asarray(x, dtype=np.float64)
    logits = model.primary_weights @ x + model.primary_intercept
    shifted = logits - logits.max()
    primary_nll = float(np.log(np.exp(shifted).sum()) - shifted[a])
    total = primary_nll + _l2_term(model.primary_weights, config.beta_for(a), config.l2_form)
    if config.bias_head and model.has_bias_head:
        q = forward_bias(model, x)
        term, _ = _bias_term_and_slope(q, b, config.bias_objective, config.bias_weight)
        total += term
    return total


def loss_grad(
    model: MultiTaskModel, x: np.ndarray, a: int, b: int, config: TrainConfig
) -> dict[str, np.ndarray | float]:
    """Exact gradient of :func:`loss` for every parameter block."""
    x = np.asarray(x, dtype=np.float64)
    c, d = model.dims
    probs = forward_primary(model, x)
    g_logits = probs.copy()
    g_logits[a] -= 1.0

    grads: dict[str, np.ndarray | float] = {}
    beta = config.beta_for(a)
    if config.bias_head and model.has_bias_head:
        assert model.bias_head_weights is not None and model.bias_head_intercept is not None
        v = _bias_features(model, x, probs)
        z = float(model.bias_head_weights @ v) + model.bias_head_intercept
        q = float(sigmoid(z))
        _, slope = _bias_term_and_slope(q, b, config.bias_objective, config.bias_weight)
        grads["bias_head_weights"] = slope * v
        grads["bias_head_intercept"] = slope
        if model.bias_input == "probs":
            w = model.bias_head_weights
            # chain rule through the softmax: J^T w = p*w - p (p.w)
            g_logits += slope * (probs * w - probs * float(probs @ w))
    grads["primary_weights"] = np.outer(g_logits, x) + _l2_grad(
        model.primary_weights, beta, config.l2_form
    )
    grads["primary_intercept"] = g_logits
    return grads


@dataclass
class TrainResult:
    model: MultiTaskModel
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    clamp_events: int = 0


def _batch_step(
    model: MultiTaskModel,
    x: np.ndarray,
    y: np.ndarray,
    b: np.ndarray | None,
    config: TrainConfig,
    counter: list[int],
) -> tuple[float, float, float]:
    """One gradient step on a mini-batch; returns (primary, detector, total) means."""
    n = x.shape[0]
    c, _ = model.dims
    logits = x @ model.primary_weights.T + model.primary_intercept
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    primary_nll = float((log_norm - shifted[np.arange(n), y]).mean())
    probs = np.exp(shifted - log_norm[:, None])

    g_logits = probs.copy()
    g_logits[np.arange(n), y] -= 1.0
    g_logits /= n

    if isinstance(config.beta, Mapping):
        eff_beta = float(np.mean([config.beta_for(int(label)) for label in y]))
    else:
        eff_beta = float(config.beta)

    detector_nll = 0.0
    total = primary_nll + _l2_term(model.primary_weights, eff_beta, config.l2_form)
    head_grads = None
    if config.bias_head and model.has_bias_head:
        assert b is not None
        assert model.bias_head_weights is not None and model.bias_head_intercept is not None
        v = probs if model.bias_input == "probs" else x
        z = v @ model.bias_head_weights + model.bias_head_intercept
        q = np.asarray(sigmoid(z))
        ql = np.clip(q, LOG_CLAMP, 1.0 - LOG_CLAMP)
        counter[0] += int((q != ql).sum())
        detector_nll = float(-(b * np.log(ql) + (1 - b) * np.log(1.0 - ql)).mean())
        if config.bias_objective == "subtract":
            total -= config.bias_weight * detector_nll
            slope = config.bias_weight * (b - q)
        else:
            flipped = 1 - b
            total += config.bias_weight * float(
                -(flipped * np.log(ql) + (1 - flipped) * np.log(1.0 - ql)).mean()
            )
            slope = config.bias_weight * (q - (1 - b))
        slope = slope / n
        if model.bias_input == "probs":
            w = model.bias_head_weights
            g_logits += slope[:, None] * (probs * w - probs * (probs @ w)[:, None])
        # detector update: the head always learns the true pseudo-labels
        g_z = (q - b) / n
        head_grads = (v.T @ g_z, float(g_z.sum()))

    g_weights = g_logits.T @ x + _l2_grad(model.primary_weights, eff_beta, config.l2_form)
    g_intercept = g_logits.sum(axis=0)

    lr = config.learning_rate
    model.primary_weights -= lr * g_weights
    model.primary_intercept -= lr * g_intercept
    if head_grads is not None:
        assert model.bias_head_weights is not None and model.bias_head_intercept is not None
        model.bias_head_weights -= lr * head_grads[0]
        model.bias_head_intercept -= lr * head_grads[1]
    return primary_nll, detector_nll, total


def train(
    corpus: Corpus, bias_labels: BiasLabeling | None, config: TrainConfig
) -> TrainResult:
    """Mini-batch gradient descent over shuffled epochs; deterministic given
    the config seed.  ``bias_labels`` must cover every instance when the bias
    head is enabled."""
    n = len(corpus)
    if n == 0:
        raise ValueError("cannot train on an empty corpus")
    x = corpus.vectors()
    y = corpus.labels()
    c = corpus.label_count
    d = x.shape[1]
    b = None
    if config.bias_head:
        if bias_labels is None:
            raise ValueError("bias head enabled but no bias labels supplied")
        b = bias_labels.as_array(n).astype(np.float64)

    model = init_model(c, d, config.seed, bias_head=config.bias_head, bias_input=config.bias_input)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, 1)))
    counter = [0]
    result = TrainResult(model)
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            stats = _batch_step(
                model, x[idx], y[idx], None if b is None else b[idx], config, counter
            )
            sums += stats
            batches += 1
        mean = sums / batches
        result.trace.append((epoch, float(mean[0]), float(mean[1]), float(mean[2])))
    result.clamp_events = counter[0]
    if counter[0]:
        logger.warning("clamped %d log arguments during training", counter[0])
    return result


def predict(model: MultiTaskModel, corpus: Corpus) -> np.ndarray:
    """Argmax label per instance; ties go to the lowest label id."""
    x = corpus.vectors()
    if x.shape[1] != model.dims[1]:
        raise ValueError(f"dimension mismatch: corpus {x.shape[1]}, model {model.dims[1]}")
    logits = x @ model.primary_weights.T + model.primary_intercept
    return logits.argmax(axis=1)


CHECKPOINT_MAGIC = "fairmtl-checkpoint"
CHECKPOINT_VERSION = 1


def save_model(model: MultiTaskModel, path: str | Path) -> None:
    Path(path).write_text(dump_model(model), encoding="utf-8")


def dump_model(model: MultiTaskModel) -> str:
    """Plain-text checkpoint; float values round-trip exactly via repr."""
    c, d = model.dims
    head_kind = model.bias_input if model.has_bias_head else "none"
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}", f"c={c} d={d} bias_head={head_kind}"]
    for row in model.primary_weights:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in model.primary_intercept))
    if model.has_bias_head:
        assert model.bias_head_weights is not None and model.bias_head_intercept is not None
        lines.append(" ".join(repr(float(v)) for v in model.bias_head_weights))
        lines.append(repr(float(model.bias_head_intercept)))
    return "\n".join(lines) + "\n"


def load_model(path: str | Path) -> MultiTaskModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def parse_model(text: str) -> MultiTaskModel:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a fairmtl checkpoint")
    version = lines[0].split("v")[-1]
    if version != str(CHECKPOINT_VERSION):
        raise ValueError(f"unsupported checkpoint version {version}")
    header = dict(kv.split("=") for kv in lines[1].split())
    c, d = int(header["c"]), int(header["d"])
    head_kind = header["bias_head"]
    rows = lines[2:]
    if len(rows) < c + 1:
        raise ValueError("truncated checkpoint")
    weights = np.array([[float(v) for v in rows[i].split()] for i in range(c)])
    if weights.shape != (c, d):
        raise ValueError(f"weight block has shape {weights.shape}, expected ({c}, {d})")
    intercept = np.array([float(v) for v in rows[c].split()])
    if head_kind == "none":
        return MultiTaskModel(weights, intercept, None, None)
    head = np.array([float(v) for v in rows[c + 1].split()])
    head_intercept = float(rows[c + 2])
    return MultiTaskModel(weights, intercept, head, head_intercept, head_kind)


def render_loss_trace_csv(trace: list[tuple[int, float, float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "primary_loss", "bias_loss", "total"])
    for epoch, primary, bias_nll, total in trace:
        writer.writerow([epoch, f"{primary:.8f}", f"{bias_nll:.8f}", f"{total:.8f}"])
    return buf.getvalue()


def write_loss_trace_csv(trace: list[tuple[int, float, float, float]], path: str | Path) -> None:
    Path(path).write_text(render_loss_trace_csv(trace), encoding="utf-8")
