"""Single-layer LSTM sequence classifier with backpropagation through time.

Gate pre-activations are stacked column-wise in the order input, forget,
output, candidate: ``z_t = x_t W + h_{t-1} U + b`` with ``W`` of shape
``(d, 4h)`` and ``U`` of shape ``(h, 4h)``.  The last hidden state feeds one
sigmoid output unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .svm import DivergenceError

GATES = ("input", "forget", "output", "candidate")
PARAMS = ("W", "U", "b", "v", "c")
CLIP_NORM = 5.0


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softplus(z):
    return np.logaddexp(0.0, z)


@dataclass
class LstmModel:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    v: np.ndarray
    c: float
    config: dict = field(default_factory=dict)
    # per-feature input standardization, applied before the first gate
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(W_name, U_name, b_name)`` views for one gate."""
        h = self.hidden
        k = GATES.index(name)
        sl = slice(k * h, (k + 1) * h)
        return self.W[:, sl], self.U[:, sl], self.b[sl]

    def params(self) -> dict:
        return {"W": self.W, "U": self.U, "b": self.b, "v": self.v, "c": np.array(self.c)}

    def copy(self) -> "LstmModel":
        return LstmModel(self.W.copy(), self.U.copy(), self.b.copy(), self.v.copy(), float(self.c),
                         dict(self.config), self.x_mean, self.x_scale)

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        if self.x_mean is None:
            return X
        return (X - self.x_mean) / self.x_scale

    def predict_proba(self, X, batch_size: int = 64) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        out = [forward_batch(self, X[i:i + batch_size])[0] for i in range(0, len(X), batch_size)]
        return np.concatenate(out)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_json(self) -> dict:
        return {"W": self.W.tolist(), "U": self.U.tolist(), "b": self.b.tolist(),
                "v": self.v.tolist(), "c": self.c, "config": self.config,
                "x_mean": None if self.x_mean is None else self.x_mean.tolist(),
                "x_scale": None if self.x_scale is None else self.x_scale.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "LstmModel":
        opt = {k: None if d.get(k) is None else np.asarray(d[k]) for k in ("x_mean", "x_scale")}
        return cls(np.asarray(d["W"]), np.asarray(d["U"]), np.asarray(d["b"]),
                   np.asarray(d["v"]), float(d["c"]), dict(d.get("config", {})), **opt)


def init_lstm(input_size: int, hidden: int, seed: int = 0, forget_bias: float = 1.0) -> LstmModel:
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(hidden)
    W = rng.uniform(-s, s, size=(input_size, 4 * hidden))
    U = rng.uniform(-s, s, size=(hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias
    v = rng.uniform(-s, s, size=hidden)
    return LstmModel(W, U, b, v, 0.0)


def forward_batch(model: LstmModel, X: np.ndarray):
    """Run sequences ``X`` of shape ``(B, T, d)``; returns ``(probability, logit, cache)``."""
    B, T, d = X.shape
    if d != model.input_size:
        raise ValueError(f"input size {d} does not match model input size {model.input_size}")
    if T == 0:
        raise ValueError("sequence must contain at least one step")
    X = model.scale_inputs(X)
    h = model.hidden
    gates = np.empty((T, B, 4 * h))  # activated i, f, o, g
    cells = np.empty((T + 1, B, h))
    hiddens = np.empty((T + 1, B, h))
    cells[0] = 0.0
    hiddens[0] = 0.0
    xw = X.transpose(1, 0, 2) @ model.W + model.b  # (T, B, 4h)
    for t in range(T):
        z = xw[t] + hiddens[t] @ model.U
        a = gates[t]
        a[:, :3 * h] = sigmoid(z[:, :3 * h])
        a[:, 3 * h:] = np.tanh(z[:, 3 * h:])
        i, f, o, g = a[:, :h], a[:, h:2 * h], a[:, 2 * h:3 * h], a[:, 3 * h:]
        cells[t + 1] = f * cells[t] + i * g
        hiddens[t + 1] = o * np.tanh(cells[t + 1])
    logit = hiddens[T] @ model.v + model.c
    return sigmoid(logit), logit, (X, gates, cells, hiddens)


def lstm_forward(model: LstmModel, sequence) -> tuple[float, dict]:
    """Probability of the malicious class for one ``(n, d)`` sequence."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2:
        raise ValueError("sequence must be a 2-D (steps, features) matrix")
    p, logit, (X, gates, cells, hiddens) = forward_batch(model, seq[None])
    h = model.hidden
    cache = {
        "input": gates[:, 0, :h], "forget": gates[:, 0, h:2 * h],
        "output": gates[:, 0, 2 * h:3 * h], "candidate": gates[:, 0, 3 * h:],
        "c": cells[1:, 0], "h": hiddens[1:, 0], "logit": float(logit[0]),
    }
    return float(p[0]), cache


def bce_loss(logit, y) -> float:
    return float(np.mean(softplus(logit) - y * logit))


def loss_and_grads(model: LstmModel, X: np.ndarray, y: np.ndarray, pos_weight: float = 1.0):
    """Mean (weighted) binary cross-entropy and its gradient by BPTT."""
    y = np.asarray(y, dtype=np.float64)
    p, logit, (X, gates, cells, hiddens) = forward_batch(model, X)
    B, T, _ = X.shape
    h = model.hidden
    wts = np.where(y > 0, pos_weight, 1.0)
    loss = float(np.sum(wts * (softplus(logit) - y * logit)) / B)
    dlogit = wts * (p - y) / B
    grads = {"v": hiddens[T].T @ dlogit, "c": np.array(dlogit.sum())}
    dW = np.zeros_like(model.W)
    dU = np.zeros_like(model.U)
    db = np.zeros_like(model.b)
    dh = np.outer(dlogit, model.v)
    dc = np.zeros((B, h))
    dz = np.empty((B, 4 * h))
    Xt = X.transpose(1, 0, 2)
    for t in range(T - 1, -1, -1):
        a = gates[t]
        i, f, o, g = a[:, :h], a[:, h:2 * h], a[:, 2 * h:3 * h], a[:, 3 * h:]
        tc = np.tanh(cells[t + 1])
        dc = dc + dh * o * (1.0 - tc ** 2)
        dz[:, :h] = dc * g * i * (1.0 - i)
        dz[:, h:2 * h] = dc * cells[t] * f * (1.0 - f)
        dz[:, 2 * h:3 * h] = dh * tc * o * (1.0 - o)
        dz[:, 3 * h:] = dc * i * (1.0 - g ** 2)
        dW += Xt[t].T @ dz
        dU += hiddens[t].T @ dz
        db += dz.sum(axis=0)
        dh = dz @ model.U.T
        dc = dc * f
    grads.update(W=dW, U=dU, b=db)
    return loss, grads


def clip_gradients(grads: dict, max_norm: float = CLIP_NORM) -> float:
    norm = float(np.sqrt(sum(np.sum(g ** 2) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.s: dict = {}
        self.t = 0

    def step(self, model: LstmModel, grads: dict) -> None:
        self.t += 1
        for name in PARAMS:
            g = grads[name]
            m = self.m.get(name, 0.0) * self.beta1 + (1 - self.beta1) * g
            s = self.s.get(name, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[name], self.s[name] = m, s
            mh = m / (1 - self.beta1 ** self.t)
            sh = s / (1 - self.beta2 ** self.t)
            update = self.lr * mh / (np.sqrt(sh) + self.eps)
            if name == "c":
                model.c = float(model.c - update)
            else:
                getattr(model, name)[...] -= update


def lstm_fit(X, y, epochs: int = 10, learning_rate: float = 0.01, hidden: int = 32, seed: int = 0,
             batch_size: int = 32, balance: bool = True, standardize: bool = True,
             history: list | None = None) -> LstmModel:
    """Train on padded sequences ``X`` of shape ``(samples, n, d)``.

    Minibatch Adam on mean binary cross-entropy, gradients clipped to global
    norm 5.  With ``standardize`` each input feature is shifted and scaled by
    its mean and standard deviation over all training steps; the statistics are
    stored on the model and reused at prediction time.  With ``balance`` the positive class is weighted by the
    negative/positive ratio of the training labels.  Per-epoch mean losses are
    appended to ``history`` when given.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    model = init_lstm(X.shape[2], hidden, seed=int(rng.integers(2 ** 32)))
    model.config = {"epochs": epochs, "learning_rate": learning_rate, "hidden": hidden,
                    "seed": seed, "batch_size": batch_size, "balance": balance,
                    "standardize": standardize}
    if standardize:
        flat = X.reshape(-1, X.shape[2])
        sd = flat.std(axis=0)
        model.x_mean = flat.mean(axis=0)
        model.x_scale = np.where(sd > 0, sd, 1.0)
    n_pos = float(y.sum())
    pos_weight = (len(y) - n_pos) / n_pos if balance and 0 < n_pos < len(y) else 1.0
    opt = Adam(learning_rate)
    for _ in range(epochs):
        losses = []
        perm = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = perm[start:start + batch_size]
            loss, grads = loss_and_grads(model, X[idx], y[idx], pos_weight)
            if not np.isfinite(loss):
                raise DivergenceError("LSTM loss became non-finite")
            clip_gradients(grads)
            opt.step(model, grads)
            losses.append(loss * len(idx))
        if history is not None:
            history.append(sum(losses) / len(y))
    return model


def lstm_predict(model: LstmModel, sequences) -> np.ndarray:
    return model.predict(sequences)
