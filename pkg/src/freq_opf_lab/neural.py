"""ReLU frequency predictor: forward pass, MSE loss, backprop and Adam training.

Row-vector convention throughout: ``z = x @ W + b``.  Outputs are
``(rocof [Hz/s], fn [Hz])``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

OUTPUT_NAMES = ("rocof", "fn")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...] = (16, 16)
    output_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be >= 1")
        if self.output_dim != 2:
            raise ValueError("output_dim must be 2 (rocof, fn)")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.output_dim]


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {k}: weight/bias shapes {w.shape}/{b.shape} disagree")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input width {w.shape[0]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(self.weights[0].shape[0], tuple(w.shape[1] for w in self.weights[:-1]),
                       self.weights[-1].shape[1])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def unflat(self, v: np.ndarray) -> "MlpParams":
        ws, bs, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(v[k:k + w.size].reshape(w.shape)); k += w.size
            bs.append(v[k:k + b.size].copy()); k += b.size
        return MlpParams(ws, bs)


@dataclass(frozen=True)
class Normalizer:
    input_shift: np.ndarray
    input_scale: np.ndarray
    output_shift: np.ndarray
    output_scale: np.ndarray

    def __post_init__(self):
        for name in ("input_shift", "input_scale", "output_shift", "output_scale"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.input_scale <= 0) or np.any(self.output_scale <= 0):
            raise ValueError("normalizer scales must be strictly positive")

    @classmethod
    def identity(cls, n_in: int, n_out: int = 2) -> "Normalizer":
        return cls(np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out))

    @classmethod
    def fit(cls, X: np.ndarray, Y: np.ndarray) -> "Normalizer":
        """Min-max scaling to [0, 1]; constant columns keep unit scale."""
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
        ylo, yhi = Y.min(axis=0), Y.max(axis=0)
        yspan = np.where(yhi - ylo > 1e-12, yhi - ylo, 1.0)
        return cls(lo, span, ylo, yspan)

    def x(self, X):
        return (np.asarray(X, dtype=float) - self.input_shift) / self.input_scale

    def y(self, Y):
        return (np.asarray(Y, dtype=float) - self.output_shift) / self.output_scale

    def y_inverse(self, Yn):
        return np.asarray(Yn) * self.output_scale + self.output_shift


def init_params(spec: MlpSpec, seed: int = 0) -> MlpParams:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        ws.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
        bs.append(np.zeros(n_out))
    return MlpParams(ws, bs)


def _forward_cache(params: MlpParams, X: np.ndarray):
    a = X
    zs, acts = [], [X]
    n = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        zs.append(z)
        a = np.maximum(z, 0.0) if k < n - 1 else z
        acts.append(a)
    return zs, acts


def forward(params: MlpParams, x) -> np.ndarray:
    """Network output for one feature vector (shape ``(2,)``) or a batch (``(n, 2)``)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"expected {params.weights[0].shape[0]} features, got {X2.shape[1]}")
    out = _forward_cache(params, X2)[1][-1]
    return out[0] if single else out


def preactivations(params: MlpParams, x) -> list[np.ndarray]:
    """Hidden-layer pre-activations ``z_m`` for one input."""
    zs, _ = _forward_cache(params, np.asarray(x, dtype=float).reshape(1, -1))
    return [z[0] for z in zs[:-1]]


def activation_pattern(params: MlpParams, x) -> list[np.ndarray]:
    return [z > 0 for z in preactivations(params, x)]


def _check_slice(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty dataset slice")
    if Y.shape != (X.shape[0], 2):
        raise ValueError("labels must have shape (n, 2)")
    return X, Y


def loss(params: MlpParams, X, Y) -> float:
    """Mean over rows of the squared error summed over both outputs."""
    X, Y = _check_slice(X, Y)
    E = forward(params, X) - Y
    return float(np.sum(E * E) / X.shape[0])


def grad(params: MlpParams, X, Y) -> MlpParams:
    """Exact gradient of :func:`loss` (ReLU derivative at 0 taken as 0)."""
    X, Y = _check_slice(X, Y)
    zs, acts = _forward_cache(params, X)
    n = X.shape[0]
    delta = 2.0 * (acts[-1] - Y) / n
    gws = [None] * len(params.weights)
    gbs = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        gws[k] = acts[k].T @ delta
        gbs[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ params.weights[k].T) * (zs[k - 1] > 0)
    return MlpParams(gws, gbs)


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (16, 16)
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0
    lr_decay: float = 1.0  # multiplicative factor applied every epoch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val(self) -> float:
        return self.val_loss[self.best_epoch] if self.best_epoch >= 0 else math.inf


def train(spec: MlpSpec, X_train, Y_train, X_val, Y_val,
          config: TrainConfig | None = None) -> tuple[MlpParams, Normalizer, TrainHistory]:
    """Mini-batch Adam on normalised data; returns the best-validation parameters.

    Normalisation is fitted on the training split.  Returned parameters act on
    normalised inputs/outputs; see :func:`fold_normalization`.
    """
    cfg = config or TrainConfig()
    Xtr, Ytr = _check_slice(X_train, Y_train)
    Xva, Yva = _check_slice(X_val, Y_val)
    norm = Normalizer.fit(Xtr, Ytr)
    Xtr_n, Ytr_n = norm.x(Xtr), norm.y(Ytr)
    Xva_n, Yva_n = norm.x(Xva), norm.y(Yva)

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, cfg.seed)
    theta = params.flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    hist = TrainHistory()
    initial_val = loss(params, Xva_n, Yva_n)
    best = params.copy()
    best_val = math.inf
    lr = cfg.lr
    n = Xtr_n.shape[0]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            g = grad(params, Xtr_n[idx], Ytr_n[idx]).flat()
            step += 1
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
            mhat = m / (1 - cfg.beta1 ** step)
            vhat = v / (1 - cfg.beta2 ** step)
            theta = theta - lr * mhat / (np.sqrt(vhat) + cfg.eps)
            params = params.unflat(theta)
        lr *= cfg.lr_decay
        tr = loss(params, Xtr_n, Ytr_n)
        va = loss(params, Xva_n, Yva_n)
        hist.train_loss.append(tr)
        hist.val_loss.append(va)
        if not math.isfinite(va) or va > 10.0 * max(initial_val, 1e-12):
            raise TrainingDiverged(f"validation loss {va:.3e} at epoch {epoch} exceeds 10x "
                                   f"the initial {initial_val:.3e}")
        if va < best_val:
            best_val, best, hist.best_epoch = va, params.copy(), epoch
        elif epoch - hist.best_epoch >= cfg.patience:
            log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
            break
    return best, norm, hist


def fold_normalization(params: MlpParams, norm: Normalizer) -> MlpParams:
    """Absorb the input and output affine maps into the first and last layers."""
    if np.any(norm.input_scale == 0) or np.any(norm.output_scale == 0):
        raise ValueError("normalizer scale is zero")
    ws = [w.copy() for w in params.weights]
    bs = [b.copy() for b in params.biases]
    # x_n = (x - s)/c  =>  x_n W + b = x (W / c[:, None]) + (b - (s/c) W)
    bs[0] = bs[0] - (norm.input_shift / norm.input_scale) @ ws[0]
    ws[0] = ws[0] / norm.input_scale[:, None]
    # y = y_n * c + s
    ws[-1] = ws[-1] * norm.output_scale[None, :]
    bs[-1] = bs[-1] * norm.output_scale + norm.output_shift
    return MlpParams(ws, bs)


def predict_raw(params: MlpParams, norm: Normalizer, X) -> np.ndarray:
    return norm.y_inverse(forward(params, norm.x(X)))


# -- persistence -----------------------------------------------------------------

@dataclass
class TrainedModel:
    """Trained predictor with its feature layout and normalisation."""

    params: MlpParams
    normalizer: Normalizer
    feature_names: list[str]
    metadata: dict = field(default_factory=dict)

    def folded(self) -> MlpParams:
        return fold_normalization(self.params, self.normalizer)

    def predict(self, X) -> np.ndarray:
        return predict_raw(self.params, self.normalizer, X)

    def to_dict(self) -> dict:
        spec = self.params.spec
        return {
            "spec": {"input_dim": spec.input_dim, "hidden": list(spec.hidden),
                     "output_dim": spec.output_dim},
            "feature_names": list(self.feature_names),
            "weights": [w.tolist() for w in self.params.weights],
            "biases": [b.tolist() for b in self.params.biases],
            "normalizer": {k: getattr(self.normalizer, k).tolist()
                           for k in ("input_shift", "input_scale", "output_shift", "output_scale")},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        params = MlpParams(d["weights"], d["biases"])
        spec = MlpSpec(**d["spec"])
        if spec != params.spec:
            raise ValueError("model spec does not match weight shapes")
        names = list(d.get("feature_names", [f"x{i}" for i in range(spec.input_dim)]))
        if len(names) != spec.input_dim:
            raise ValueError("feature_names length does not match input_dim")
        return cls(params, Normalizer(**d["normalizer"]), names, dict(d.get("metadata", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- scenario dataset ------------------------------------------------------------

@dataclass
class ScenarioDataset:
    feature_names: list[str]
    X: np.ndarray
    Y: np.ndarray  # columns: rocof Hz/s, fn Hz
    split: np.ndarray  # "train" | "val" | "test"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_names))
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1, 2)
        self.split = np.asarray(self.split, dtype=object)
        if not (len(self.X) == len(self.Y) == len(self.split)):
            raise ValueError("rows of X, Y and split must agree")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.X)

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == name
        return self.X[mask], self.Y[mask]

    def validate_labels(self, f0: float) -> None:
        if np.any(self.Y[:, 1] > f0 + 1e-9):
            raise ValueError("frequency-nadir label above nominal frequency")
        if np.any(self.Y[:, 0] > 1e-9):
            raise ValueError("positive RoCoF label for a generation-loss event")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, "label_rocof", "label_fn", "split"])
            for x, y, s in zip(self.X, self.Y, self.split):
                w.writerow([*(repr(float(v)) for v in x), repr(float(y[0])), repr(float(y[1])), s])

    @classmethod
    def read_csv(cls, path: str | Path) -> "ScenarioDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty dataset file")
        header = rows[0]
        if header[-3:] != ["label_rocof", "label_fn", "split"]:
            raise ValueError(f"{path}: header must end with label_rocof,label_fn,split")
        names = header[:-3]
        body = rows[1:]
        X = np.array([[float(v) for v in r[:-3]] for r in body]).reshape(-1, len(names))
        Y = np.array([[float(r[-3]), float(r[-2])] for r in body]).reshape(-1, 2)
        return cls(names, X, Y, np.array([r[-1] for r in body], dtype=object))


def r2_score(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
