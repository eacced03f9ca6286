"""Single-layer LSTM classifier over per-asset return sequences.

Each asset's return history is one univariate sequence; the final hidden
state goes through a fully connected layer and a softmax over two classes
(0 = never held on the frontier, 1 = held for some lambda). Training uses
Adam on a class-weighted cross entropy with L2 decay on the weights.
Everything is plain numpy with hand-written backpropagation through time.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericalOverflow, TrainingDiverged
from .market_data import AssetMask, ReturnMatrix

N_CLASSES = 2
PROB_FLOOR = 1e-15
MAGIC = b"PODSLSTM"
FORMAT_VERSION = 1
PARAM_NAMES = ("Wx", "Wh", "b", "Wfc", "bfc")
WEIGHT_NAMES = ("Wx", "Wh", "Wfc")


def sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LstmParams:
    """Gate blocks are stacked input, forget, cell candidate, output."""

    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray
    Wfc: np.ndarray
    bfc: np.ndarray
    input_scale: float = 1.0

    @property
    def hidden(self):
        return self.Wh.shape[1]

    def arrays(self):
        return [getattr(self, k) for k in PARAM_NAMES]

    def copy(self):
        return LstmParams(*(a.copy() for a in self.arrays()), input_scale=self.input_scale)

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, v):
        out, k = [], 0
        for a in self.arrays():
            out.append(v[k:k + a.size].reshape(a.shape).copy())
            k += a.size
        return LstmParams(*out, input_scale=self.input_scale)

    def equals(self, other):
        return self.input_scale == other.input_scale and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def init_lstm(hidden=150, seed=0, input_dim=1) -> LstmParams:
    """Glorot-uniform input and FC weights, orthogonal recurrent weights.

    Biases are zero except the forget gate, which starts at one.
    """
    if hidden < 1:
        raise ValueError("hidden size must be positive")
    rng = np.random.default_rng(seed)
    H = hidden

    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, (rows, cols))

    Wx = glorot(4 * H, input_dim)
    q, r = np.linalg.qr(rng.standard_normal((4 * H, H)))
    Wh = q * np.sign(np.diag(r))
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0
    Wfc = glorot(N_CLASSES, H)
    bfc = np.zeros(N_CLASSES)
    return LstmParams(Wx, Wh, b, Wfc, bfc)


def _step(p, xt, h, c):
    H = p.hidden
    a = xt @ p.Wx.T + h @ p.Wh.T + p.b
    i = sigmoid(a[:, :H])
    f = sigmoid(a[:, H:2 * H])
    g = np.tanh(a[:, 2 * H:3 * H])
    o = sigmoid(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (h, c, i, f, g, o, tc)


def _run(p: LstmParams, X, checkpoint=0):
    """Forward pass over a batch ``X`` of shape (B, L).

    Returns the probabilities, the scaled inputs, the last hidden state and,
    when ``checkpoint`` > 0, the (h, c) states at every multiple of it.
    """
    X = np.asarray(X, dtype=float) / p.input_scale
    B, L = X.shape
    h = np.zeros((B, p.hidden))
    c = np.zeros((B, p.hidden))
    saved = {}
    for t in range(L):
        if checkpoint and t % checkpoint == 0:
            saved[t] = (h, c)
        h, c, _ = _step(p, X[:, t:t + 1], h, c)
    probs = softmax(h @ p.Wfc.T + p.bfc)
    if not np.all(np.isfinite(probs)):
        raise NumericalOverflow("non-finite value in LSTM forward pass")
    return probs, X, h, saved


def forward(p: LstmParams, sequence):
    """Class probabilities ``(p0, p1)`` for one return sequence."""
    seq = np.asarray(sequence, dtype=float).ravel()
    if seq.size < 1:
        raise DimensionError("sequence must be non-empty")
    if not np.all(np.isfinite(seq)):
        raise NumericalOverflow("non-finite input")
    return _run(p, seq[None, :])[0][0]


def forward_batch(p: LstmParams, X):
    return _run(p, X)[0]


@dataclass(frozen=True)
class ClassWeights:
    beta0: float = 1.0
    beta1: float = 1.0

    @property
    def vector(self):
        return np.array([self.beta0, self.beta1])

    @classmethod
    def from_labels(cls, labels):
        """Inverse-prior weights normalized to sum to 2; equal if a class is absent."""
        y = np.asarray(labels).astype(int)
        counts = np.bincount(y, minlength=N_CLASSES).astype(float)
        if np.any(counts == 0):
            return cls(1.0, 1.0)
        inv = counts.sum() / counts
        inv *= 2.0 / inv.sum()
        return cls(float(inv[0]), float(inv[1]))


def one_hot(labels):
    y = np.asarray(labels).astype(int)
    out = np.zeros((y.size, N_CLASSES))
    out[np.arange(y.size), y] = 1.0
    return out


def loss(beta: ClassWeights, labels, probs):
    """Weighted cross entropy ``-(1/n) sum_i sum_k beta_k y_ik ln p_ik``.

    ``labels`` may be class indices or one-hot rows.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    Y = np.atleast_2d(np.asarray(labels, dtype=float))
    if Y.shape != probs.shape:
        Y = one_hot(np.asarray(labels).ravel())
    picked = np.where(Y > 0, probs, 1.0)
    if np.any(picked <= 0):
        warnings.warn("zero probability at a true class; clamped", RuntimeWarning, stacklevel=2)
        picked = np.maximum(picked, PROB_FLOOR)
    return float(-(Y * beta.vector * np.log(picked)).sum() / probs.shape[0])


def objective_and_grad(p: LstmParams, X, labels, beta: ClassWeights, l2=0.0):
    """Loss (with ``l2/2 * ||W||^2`` on weights) and its gradient as an ``LstmParams``."""
    Y = one_hot(labels)
    L = np.shape(X)[1]
    # recompute activations chunk by chunk on the way back; memory ~ sqrt(L) steps
    chunk = max(1, int(np.ceil(np.sqrt(L))))
    probs, Xs, hL, saved = _run(p, X, checkpoint=chunk)
    n, H = Xs.shape[0], p.hidden
    value = loss(beta, Y, probs) + 0.5 * l2 * sum(float(np.sum(getattr(p, k) ** 2)) for k in WEIGHT_NAMES)

    wy = (Y * beta.vector).sum(axis=1, keepdims=True)
    ds = wy * (probs - Y) / n
    g = LstmParams(np.zeros_like(p.Wx), np.zeros_like(p.Wh), np.zeros_like(p.b),
                   ds.T @ hL, ds.sum(axis=0), p.input_scale)
    dh = ds @ p.Wfc
    dc = np.zeros((n, H))
    da = np.empty((n, 4 * H))
    for start in sorted(saved, reverse=True):
        h, c = saved[start]
        cache = []
        for t in range(start, min(start + chunk, L)):
            h, c, step = _step(p, Xs[:, t:t + 1], h, c)
            cache.append(step)
        for t in range(min(start + chunk, L) - 1, start - 1, -1):
            h_prev, c_prev, i, f, gg, o, tc = cache[t - start]
            dc = dc + dh * o * (1.0 - tc * tc)
            da[:, 3 * H:] = dh * tc * o * (1.0 - o)
            da[:, :H] = dc * gg * i * (1.0 - i)
            da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            g.Wx += da.T @ Xs[:, t:t + 1]
            g.Wh += da.T @ h_prev
            g.b += da.sum(axis=0)
            dh = da @ p.Wh
            dc = dc * f
    if l2:
        for k in WEIGHT_NAMES:
            getattr(g, k)[...] += l2 * getattr(p, k)
    return value, g


@dataclass(frozen=True)
class TrainConfig:
    grad_decay: float = 0.9
    sq_grad_decay: float = 0.999
    learning_rate: float = 0.00025
    l2: float = 1e-5
    max_epochs: int = 60
    batch_size: int = 187
    epsilon: float = 1e-8
    seed: int = 0
    hidden: int = 150
    normalize: bool = True
    class_weights: ClassWeights | None = None

    def __post_init__(self):
        if not (0 < self.grad_decay < 1 and 0 < self.sq_grad_decay < 1):
            raise ValueError("decay factors must lie in (0, 1)")
        if self.learning_rate < 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("invalid training configuration")


@dataclass
class TrainResult:
    params: LstmParams
    epoch_loss: list = field(default_factory=list)
    class_weights: ClassWeights = field(default_factory=ClassWeights)
    n_batches: int = 0

    def loss_curve_csv(self, dest):
        lines = ["epoch,loss"] + [f"{k + 1},{v!r}" for k, v in enumerate(self.epoch_loss)]
        Path(dest).write_text("\n".join(lines) + "\n", encoding="utf-8")


def n_minibatches(n_samples, batch_size):
    return -(-n_samples // batch_size)


def train(x_train: ReturnMatrix, y: AssetMask, cfg: TrainConfig = TrainConfig(), init=None) -> TrainResult:
    """Fit the classifier with one sequence per asset (column of ``x_train``)."""
    X = np.ascontiguousarray(x_train.returns.T)
    labels = y.bits.astype(int)
    if labels.size != X.shape[0]:
        raise DimensionError("labels must match the number of assets")
    params = init.copy() if init is not None else init_lstm(cfg.hidden, cfg.seed)
    if cfg.normalize and init is None:
        sd = float(np.std(X))
        params = replace(params, input_scale=sd if sd > 0 else 1.0)
    beta = cfg.class_weights or ClassWeights.from_labels(labels)
    rng = np.random.default_rng(cfg.seed + 1)
    mom = [np.zeros_like(a) for a in params.arrays()]
    vel = [np.zeros_like(a) for a in params.arrays()]
    step = 0
    n = X.shape[0]
    nb = n_minibatches(n, cfg.batch_size)
    history = []
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for k in range(nb):
            idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
            value, grad = objective_and_grad(params, X[idx], labels[idx], beta, cfg.l2)
            if not np.isfinite(value):
                raise TrainingDiverged("loss became non-finite")
            total += value * idx.size
            step += 1
            c1 = 1.0 - cfg.grad_decay**step
            c2 = 1.0 - cfg.sq_grad_decay**step
            for a, g, m_, v_ in zip(params.arrays(), grad.arrays(), mom, vel):
                m_ *= cfg.grad_decay
                m_ += (1.0 - cfg.grad_decay) * g
                v_ *= cfg.sq_grad_decay
                v_ += (1.0 - cfg.sq_grad_decay) * g * g
                a -= cfg.learning_rate * (m_ / c1) / (np.sqrt(v_ / c2) + cfg.epsilon)
        history.append(total / n)
    return TrainResult(params, history, beta, nb)


def predict_mask(p: LstmParams, x: ReturnMatrix) -> AssetMask:
    """Class 1 only where its probability strictly exceeds class 0."""
    probs = forward_batch(p, x.returns.T)
    return AssetMask(probs[:, 1] > probs[:, 0], x.tickers)


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[a, p]`` = number of samples with actual class a predicted as p."""

    counts: np.ndarray

    @classmethod
    def from_counts(cls, c00, c01, c10, c11):
        return cls(np.array([[c00, c01], [c10, c11]], dtype=int))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    @property
    def recall(self):
        rows = self.counts.sum(axis=1)
        return tuple(float(self.counts[k, k] / rows[k]) if rows[k] else float("nan") for k in range(2))

    def as_dict(self):
        return {
            "actual0_pred0": int(self.counts[0, 0]),
            "actual0_pred1": int(self.counts[0, 1]),
            "actual1_pred0": int(self.counts[1, 0]),
            "actual1_pred1": int(self.counts[1, 1]),
            "accuracy": self.accuracy,
            "recall0": self.recall[0],
            "recall1": self.recall[1],
        }


def confusion(predicted: AssetMask, actual: AssetMask) -> ConfusionMatrix:
    if len(predicted) != len(actual):
        raise DimensionError("masks differ in length")
    a = actual.bits.astype(int)
    p = predicted.bits.astype(int)
    counts = np.zeros((2, 2), dtype=int)
    np.add.at(counts, (a, p), 1)
    return ConfusionMatrix(counts)


def save_params(p: LstmParams, dest):
    """Write the versioned binary container (little-endian, row-major float64)."""
    arrays = p.arrays() + [np.array([p.input_scale])]
    head = MAGIC + struct.pack("<IIII", FORMAT_VERSION, p.hidden, p.Wx.shape[1], len(arrays))
    for a in arrays:
        head += struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    Path(dest).write_bytes(head + body)


def load_params(src) -> LstmParams:
    raw = Path(src).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError("not an LSTM parameter file")
    off = len(MAGIC)
    version, hidden, _, count = struct.unpack_from("<IIII", raw, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    off += 16
    shapes = []
    for _ in range(count):
        (nd,) = struct.unpack_from("<I", raw, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{nd}I", raw, off))
        off += 4 * nd
    arrays = []
    for shp in shapes:
        size = int(np.prod(shp))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shp).copy())
        off += 8 * size
    p = LstmParams(*arrays[:5], input_scale=float(arrays[5][0]))
    if p.hidden != hidden:
        raise ValueError("header hidden size does not match weights")
    return p
