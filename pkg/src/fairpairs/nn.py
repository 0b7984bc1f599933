"""Minimal numpy building blocks for the trainable classification heads.

The learned models in this package share one head shape: a linear layer,
optional dropout, tanh, a second linear layer down to a single logit,
optional dropout, sigmoid.  Dropout masks are sampled explicitly so that
Monte-Carlo uncertainty estimates can fix a mask and reuse it across inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["sigmoid", "binary_entropy", "MlpHead", "BilinearHead", "AdamState"]


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def binary_entropy(p):
    """Entropy (nats) of a Bernoulli(p), with 0*log0 := 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    if h.ndim == 0:
        return float(h)
    return h


@dataclass
class AdamState:
    """Per-parameter Adam accumulators."""

    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * (g * g)
            mhat = self.m[k] / (1 - self.beta1**self.t)
            vhat = self.v[k] / (1 - self.beta2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class MlpHead:
    """linear -> dropout -> tanh -> linear -> dropout, single logit output.

    ``dropout`` is the drop probability applied after each linear layer.
    A rate of 0 makes every sampled mask the identity, so mask-averaged
    predictions coincide exactly with the dropout-off prediction.
    """

    def __init__(self, in_dim: int, hidden: int = 32, dropout: float = 0.0, seed: int = 0, lr: float = 0.05):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.hidden = hidden
        self.dropout = dropout
        self.params = {
            "W1": rng.normal(0.0, scale, size=(in_dim, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, 1)),
            "b2": np.zeros(1),
        }
        self.adam = AdamState(lr=lr)

    # ---- dropout masks -------------------------------------------------
    def sample_mask(self, seed) -> tuple[np.ndarray, np.ndarray]:
        """One fixed mask per dropout layer, shared across inputs.

        With dropout == 0 the mask keeps every unit (identity).
        """
        if self.dropout == 0.0:
            return np.ones(self.hidden), np.ones(1)
        rng = np.random.default_rng(seed)
        keep = 1.0 - self.dropout
        m1 = (rng.random(self.hidden) < keep) / keep
        m2 = (rng.random(1) < keep) / keep
        return m1, m2

    # ---- forward / backward --------------------------------------------
    def logits(self, X: np.ndarray, mask: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
        out, _ = self._forward(X, mask)
        return out

    def probs(self, X: np.ndarray, mask=None) -> np.ndarray:
        return sigmoid(self.logits(X, mask))

    def _forward(self, X, mask):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m1, m2 = mask if mask is not None else (1.0, 1.0)
        z1 = X @ self.params["W1"] + self.params["b1"]
        d1 = z1 * m1
        a1 = np.tanh(d1)
        z2 = a1 @ self.params["W2"] + self.params["b2"]
        d2 = z2 * m2
        cache = (X, m1, a1, m2)
        return d2[:, 0], cache

    def _backward(self, cache, dlogit: np.ndarray) -> dict:
        X, m1, a1, m2 = cache
        dz2 = (dlogit[:, None] * m2)  # (n, 1)
        gW2 = a1.T @ dz2
        gb2 = dz2.sum(axis=0)
        da1 = dz2 @ self.params["W2"].T
        dd1 = da1 * (1.0 - a1**2)
        dz1 = dd1 * m1
        gW1 = X.T @ dz1
        gb1 = dz1.sum(axis=0)
        return {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}

    def _train_mask(self, rng, n: int):
        """Per-sample masks used while fitting (standard inverted dropout)."""
        if self.dropout == 0.0:
            return 1.0, 1.0
        keep = 1.0 - self.dropout
        m1 = (rng.random((n, self.hidden)) < keep) / keep
        m2 = (rng.random((n, 1)) < keep) / keep
        return m1, m2

    def fit_epochs(
        self,
        X: np.ndarray,
        y: np.ndarray,
        *,
        epochs: int,
        batch_size: int,
        rng: np.random.Generator,
        sample_weights: np.ndarray | None = None,
    ) -> None:
        """Minimize (weighted) binary cross-entropy with Adam.

        ``y`` may contain soft targets (e.g. 0.5 for tied votes).
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(X)
        if sample_weights is None:
            sample_weights = np.ones(n)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                xb, yb, wb = X[idx], y[idx], sample_weights[idx]
                mask = self._train_mask(rng, len(idx))
                logit, cache = self._forward(xb, mask)
                p = sigmoid(logit)
                # d/dlogit of BCE is (p - y); averaged over the batch
                dlogit = wb * (p - yb) / len(idx)
                grads = self._backward(cache, dlogit)
                self.adam.step(self.params, grads)

    def clone_shape(self, seed: int) -> "MlpHead":
        return MlpHead(self.in_dim, self.hidden, self.dropout, seed=seed, lr=self.adam.lr)


class BilinearHead:
    """logit = (U a) . (V b) + c for feature pairs (a, b); ablation variant."""

    def __init__(self, in_dim: int, hidden: int = 32, seed: int = 0, lr: float = 0.05):
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.hidden = hidden
        self.dropout = 0.0
        self.params = {
            "U": rng.normal(0.0, scale, size=(in_dim, hidden)),
            "V": rng.normal(0.0, scale, size=(in_dim, hidden)),
            "c": np.zeros(1),
        }
        self.adam = AdamState(lr=lr)

    def sample_mask(self, seed):
        return None

    def logits(self, AB, mask=None) -> np.ndarray:
        A, B = AB
        u = np.atleast_2d(A) @ self.params["U"]
        v = np.atleast_2d(B) @ self.params["V"]
        return (u * v).sum(axis=1) + self.params["c"][0]

    def probs(self, AB, mask=None) -> np.ndarray:
        return sigmoid(self.logits(AB, mask))

    def fit_epochs(self, AB, y, *, epochs, batch_size, rng, sample_weights=None):
        A, B = (np.asarray(m, dtype=float) for m in AB)
        y = np.asarray(y, dtype=float)
        n = len(A)
        if sample_weights is None:
            sample_weights = np.ones(n)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                a, b, yb, wb = A[idx], B[idx], y[idx], sample_weights[idx]
                u = a @ self.params["U"]
                v = b @ self.params["V"]
                logit = (u * v).sum(axis=1) + self.params["c"][0]
                dlogit = (wb * (sigmoid(logit) - yb) / len(idx))[:, None]
                grads = {
                    "U": a.T @ (dlogit * v),
                    "V": b.T @ (dlogit * u),
                    "c": np.array([dlogit.sum()]),
                }
                self.adam.step(self.params, grads)
