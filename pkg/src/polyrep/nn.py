"""Minimal dense neural stack in numpy: MLP blocks with batch normalization,
cross-entropy, Adam, a reduce-on-plateau schedule, and finite-difference
gradient checking.  Everything is double precision and deterministic, which
is what makes the tight gradient checks feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class BatchTooSmallError(ValueError):
    """Train-mode batch normalization needs at least two rows."""


def kaiming_uniform(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng, fan_in, fan_out):
        self.w = kaiming_uniform(rng, fan_in, fan_out)
        self.b = np.zeros(fan_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.gw += self._x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.w.T


class BatchNorm:
    """Per-feature normalization; batch statistics in train mode, running
    statistics in eval mode.  Running variance uses the unbiased batch
    estimate; normalization the biased one."""

    def __init__(self, dim, eps=1e-5, momentum=0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x, train, update_stats=True):
        if train:
            n = x.shape[0]
            if n < 2:
                raise BatchTooSmallError(
                    f"batchnorm needs a batch of >= 2 in train mode, got {n}"
                )
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            if update_stats:
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mean
                self.running_var = (1 - m) * self.running_var + m * var * n / (n - 1)
            self._cache = (xhat, inv_std, n)
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
            self._cache = None
        return self.gamma * xhat + self.beta

    def backward(self, dy):
        if self._cache is None:
            raise ValueError("backward requires a preceding train-mode forward")
        xhat, inv_std, n = self._cache
        self.ggamma += (dy * xhat).sum(axis=0)
        self.gbeta += dy.sum(axis=0)
        dxhat = dy * self.gamma
        # Standard batch-statistics terms folded into one expression.
        dx = (
            dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)
        ) * inv_std
        return dx


class DenseBlock:
    """Affine -> optional batchnorm -> optional ReLU."""

    def __init__(self, rng, fan_in, fan_out, batchnorm=True, relu=True):
        self.linear = Linear(rng, fan_in, fan_out)
        self.bn = BatchNorm(fan_out) if batchnorm else None
        self.relu = relu
        self._pre = None

    def forward(self, x, train, update_stats=True):
        y = self.linear.forward(x)
        if self.bn is not None:
            y = self.bn.forward(y, train, update_stats)
        if self.relu:
            self._pre = y
            y = np.maximum(y, 0.0)
        return y

    def backward(self, dy):
        if self.relu:
            dy = dy * (self._pre > 0)
        if self.bn is not None:
            dy = self.bn.backward(dy)
        return self.linear.backward(dy)


class Mlp:
    """Chain of dense blocks; ReLU on hidden blocks, identity on the output.

    ``batchnorm_output`` controls whether the final affine also gets a
    batchnorm (message/guide nets: yes; classifier heads: no).
    """

    def __init__(self, rng, dims, batchnorm_output=True):
        if len(dims) < 2:
            raise ValueError("an MLP needs at least input and output dims")
        self.dims = tuple(int(d) for d in dims)
        self.blocks = []
        last = len(dims) - 2
        for idx, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            self.blocks.append(
                DenseBlock(
                    rng,
                    fan_in,
                    fan_out,
                    batchnorm=batchnorm_output if idx == last else True,
                    relu=idx != last,
                )
            )

    @property
    def in_dim(self):
        return self.dims[0]

    @property
    def out_dim(self):
        return self.dims[-1]

    def forward(self, x, train, update_stats=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected (n, {self.in_dim}) input, got {x.shape}")
        for block in self.blocks:
            x = block.forward(x, train, update_stats)
        return x

    def backward(self, dy):
        for block in reversed(self.blocks):
            dy = block.backward(dy)
        return dy

    def named_parameters(self, prefix=""):
        out = []
        for idx, block in enumerate(self.blocks):
            out.append((f"{prefix}{idx}.w", block.linear.w))
            out.append((f"{prefix}{idx}.b", block.linear.b))
            if block.bn is not None:
                out.append((f"{prefix}{idx}.bn.gamma", block.bn.gamma))
                out.append((f"{prefix}{idx}.bn.beta", block.bn.beta))
        return out

    def named_grads(self, prefix=""):
        out = []
        for idx, block in enumerate(self.blocks):
            out.append((f"{prefix}{idx}.w", block.linear.gw))
            out.append((f"{prefix}{idx}.b", block.linear.gb))
            if block.bn is not None:
                out.append((f"{prefix}{idx}.bn.gamma", block.bn.ggamma))
                out.append((f"{prefix}{idx}.bn.beta", block.bn.gbeta))
        return out

    def named_state(self, prefix=""):
        """Parameters plus batchnorm running statistics."""
        out = self.named_parameters(prefix)
        for idx, block in enumerate(self.blocks):
            if block.bn is not None:
                out.append((f"{prefix}{idx}.bn.running_mean", block.bn.running_mean))
                out.append((f"{prefix}{idx}.bn.running_var", block.bn.running_var))
        return out

    def zero_grads(self):
        for _, g in self.named_grads():
            g[...] = 0.0


def cross_entropy(logits, labels):
    """Mean negative log softmax at the labels, and the gradient wrt logits.

    Stabilized by a per-row max shift; gradient rows are (softmax - onehot)
    divided by the batch size, so they sum to zero.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


@dataclass
class AdamState:
    """First/second moments aligned with a fixed parameter list."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must align")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m[...] = b1 * m + (1 - b1) * g
        v[...] = b2 * v + (1 - b2) * g * g
        p[...] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class PlateauState:
    """Reduce-on-plateau bookkeeping, min mode."""

    lr: float
    factor: float = 0.5
    patience: int = 10
    min_lr: float = 1e-6
    best: float = math.inf
    bad_epochs: int = 0


def plateau_step(state: PlateauState, metric: float) -> float:
    """Halve (by ``factor``) after ``patience`` epochs without improvement."""
    if metric < state.best:
        state.best = metric
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            state.lr = max(state.lr * state.factor, state.min_lr)
            state.bad_epochs = 0
    return state.lr


def grad_check(loss_fn, params, grads, step=1e-5, max_entries=10000, seed=0, atol=1e-10):
    """Max relative error of analytic grads vs central finite differences.

    ``loss_fn`` re-evaluates the loss from the current parameter values (it
    must be deterministic); ``grads`` are the analytic gradients already
    computed for those values.  Above ``max_entries`` total parameters, a
    seeded subsample is probed.  Relative error is |a - n| / max(|a|, |n|,
    1e-8); differences below ``atol`` count as agreement, since central
    differences in double precision cannot resolve gradients beneath
    eps * |loss| / step (~1e-11 here), which would otherwise read as noise.
    """
    entries = [(a, idx) for a, p in enumerate(params) for idx in range(p.size)]
    if len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[c] for c in sorted(chosen)]
    worst = 0.0
    for a, idx in entries:
        flat = params[a].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + step
        up = loss_fn()
        flat[idx] = orig - step
        down = loss_fn()
        flat[idx] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[a].reshape(-1)[idx]
        diff = abs(analytic - numeric)
        if diff <= atol:
            continue
        worst = max(worst, diff / max(abs(analytic), abs(numeric), 1e-8))
    return worst
