"""Differentiable building blocks on plain numpy arrays.

Parameter holders, affine maps, LSTM layers (single direction and
bidirectional), inverted dropout, global-norm gradient clipping, and Adam.
Layers are functional: forward returns (output, cache); backward consumes the
cache, accumulates parameter gradients in place, and returns the gradient
with respect to the layer input.
"""

from __future__ import annotations

import numpy as np


class ParamTensor:
    """A named parameter array with a same-shape gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    """Uniform init on [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Affine:
    """y = x @ W.T + b applied row-wise to a (m, n_in) input."""

    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_in = n_in
        self.n_out = n_out
        self.w = ParamTensor(name + ".W", glorot_uniform(rng, n_out, n_in))
        self.b = ParamTensor(name + ".b", np.zeros(n_out))

    def params(self) -> list[ParamTensor]:
        return [self.w, self.b]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"{self.w.name}: input must be (m, {self.n_in}), got {x.shape}")
        return x @ self.w.value.T + self.b.value, x

    def backward(self, cache, d_out):
        x = cache
        d_out = np.asarray(d_out, dtype=np.float64)
        self.w.grad += d_out.T @ x
        self.b.grad += d_out.sum(axis=0)
        return d_out @ self.w.value


# Gate order used everywhere an LSTM direction stores or reads its weights.
GATE_NAMES = ("input", "forget", "output", "candidate")


class LstmDirection:
    """One LSTM direction over a (m, n_in) sequence.

    Each gate has a weight of shape (h, n_in + h) acting on the concatenation
    [x_t; h_{t-1}] plus a bias of shape (h,). Gates input/forget/output use
    the logistic squashing, the candidate uses tanh:

        c_t = f_t * c_{t-1} + i_t * g_t,  h_t = o_t * tanh(c_t)

    with h_0 = c_0 = 0. A reverse direction consumes the input back to front
    and returns its hidden states re-aligned to the original positions.
    """

    def __init__(self, name, n_in, n_hidden, rng, reverse: bool = False):
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.reverse = reverse
        self.w = {}
        self.b = {}
        for gate in GATE_NAMES:
            self.w[gate] = ParamTensor(f"{name}.W_{gate}", glorot_uniform(rng, n_hidden, n_in + n_hidden))
            bias = np.zeros(n_hidden)
            if gate == "forget":
                bias += 1.0
            self.b[gate] = ParamTensor(f"{name}.b_{gate}", bias)

    def params(self) -> list[ParamTensor]:
        return [self.w[g] for g in GATE_NAMES] + [self.b[g] for g in GATE_NAMES]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"LSTM input must be (m, {self.n_in}), got {x.shape}")
        m, h = x.shape[0], self.n_hidden
        if m == 0:
            return np.zeros((0, h)), None
        seq = x[::-1] if self.reverse else x

        d = self.n_in
        in_proj = {g: seq @ self.w[g].value[:, :d].T + self.b[g].value for g in GATE_NAMES}
        rec = {g: self.w[g].value[:, d:] for g in GATE_NAMES}

        gates = {g: np.empty((m, h)) for g in GATE_NAMES}
        cells = np.empty((m, h))
        tanh_c = np.empty((m, h))
        hidden = np.empty((m, h))
        h_prev = np.zeros(h)
        c_prev = np.zeros(h)
        for t in range(m):
            i = sigmoid(in_proj["input"][t] + rec["input"] @ h_prev)
            f = sigmoid(in_proj["forget"][t] + rec["forget"] @ h_prev)
            o = sigmoid(in_proj["output"][t] + rec["output"] @ h_prev)
            g = np.tanh(in_proj["candidate"][t] + rec["candidate"] @ h_prev)
            c = f * c_prev + i * g
            tc = np.tanh(c)
            gates["input"][t], gates["forget"][t], gates["output"][t], gates["candidate"][t] = i, f, o, g
            cells[t] = c
            tanh_c[t] = tc
            hidden[t] = o * tc
            h_prev, c_prev = hidden[t], c

        out = hidden[::-1] if self.reverse else hidden
        cache = (seq, gates, cells, tanh_c, hidden)
        return out, cache

    def backward(self, cache, d_out):
        if cache is None:
            return np.zeros((0, self.n_in))
        seq, gates, cells, tanh_c, hidden = cache
        d_out = np.asarray(d_out, dtype=np.float64)
        d_seq_out = d_out[::-1] if self.reverse else d_out
        m, h = seq.shape[0], self.n_hidden
        d = self.n_in

        rec = {g: self.w[g].value[:, d:] for g in GATE_NAMES}
        d_pre = {g: np.empty((m, h)) for g in GATE_NAMES}
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(m - 1, -1, -1):
            i, f, o, g = (gates[name][t] for name in GATE_NAMES)
            tc = tanh_c[t]
            c_prev = cells[t - 1] if t > 0 else np.zeros(h)
            dh = d_seq_out[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            d_pre["output"][t] = dh * tc * o * (1.0 - o)
            d_pre["input"][t] = dc * g * i * (1.0 - i)
            d_pre["forget"][t] = dc * c_prev * f * (1.0 - f)
            d_pre["candidate"][t] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = sum(rec[name].T @ d_pre[name][t] for name in GATE_NAMES)

        h_prev_rows = np.vstack([np.zeros((1, h)), hidden[:-1]])
        dx = np.zeros_like(seq)
        for name in GATE_NAMES:
            self.w[name].grad[:, :d] += d_pre[name].T @ seq
            self.w[name].grad[:, d:] += d_pre[name].T @ h_prev_rows
            self.b[name].grad += d_pre[name].sum(axis=0)
            dx += d_pre[name] @ self.w[name].value[:, :d]
        return dx[::-1] if self.reverse else dx


class BiLstm:
    """Forward and reverse LSTM over the same input; outputs concatenated.

    Position j of the output is [forward hidden at j; reverse hidden at j],
    so the last row's first half and the first row's second half are the two
    directions' final states.
    """

    def __init__(self, name, n_in, n_hidden, rng):
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.fwd = LstmDirection(name + ".fwd", n_in, n_hidden, rng, reverse=False)
        self.bwd = LstmDirection(name + ".bwd", n_in, n_hidden, rng, reverse=True)

    def params(self) -> list[ParamTensor]:
        return self.fwd.params() + self.bwd.params()

    @property
    def n_out(self) -> int:
        return 2 * self.n_hidden

    def forward(self, x):
        out_f, cache_f = self.fwd.forward(x)
        out_b, cache_b = self.bwd.forward(x)
        return np.concatenate([out_f, out_b], axis=1), (cache_f, cache_b)

    def backward(self, cache, d_out):
        h = self.n_hidden
        d_out = np.asarray(d_out, dtype=np.float64)
        dx_f = self.fwd.backward(cache[0], d_out[:, :h])
        dx_b = self.bwd.backward(cache[1], d_out[:, h:])
        return dx_f + dx_b


def dropout(x, rate: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns (output, mask); backward is d_out * mask.

    Train mode zeroes each entry with probability rate and scales survivors
    by 1/(1-rate) so the expectation is unchanged. Eval mode is the identity
    (mask of ones).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not train or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def clip_global_norm(params: list[ParamTensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if total > max_norm > 0.0:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return float(total)


class Adam:
    """Bias-corrected Adam over a list of ParamTensors.

    The configured lr is the epoch-zero rate; lr_at_epoch(e) applies the
    per-epoch multiplicative decay. step() consumes the accumulated
    gradients (without zeroing them).
    """

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, decay=0.9):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def lr_at_epoch(self, epoch: int) -> float:
        return self.lr * self.decay**epoch

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        rate = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if not np.all(np.isfinite(p.grad)):
                raise ValueError(f"non-finite gradient for parameter {p.name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= rate * (m / c1) / (np.sqrt(v / c2) + self.eps)
