"""Fully connected ReLU networks: evaluation, sparsity accounting, coordinate
thresholding, and exact reverse-mode gradients of the Gaussian log-likelihood.

Parameter flattening order is part of the checkpoint contract: layer-major,
weights before biases within a layer, weight matrices in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkShape",
    "NetworkParams",
    "forward",
    "membership",
    "truncate",
    "loglik_and_grad",
]


@dataclass(frozen=True)
class NetworkShape:
    """Widths of an MLP with scalar output: d_in -> hidden_widths -> 1."""

    d_in: int
    hidden_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if self.d_in < 1 or len(self.hidden_widths) < 1:
            raise ValueError("need d_in >= 1 and at least one hidden layer")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("all widths must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return (self.d_in, *self.hidden_widths, 1)

    @property
    def n_params(self) -> int:
        p = self.layer_widths
        return sum(p[i] * p[i + 1] + p[i + 1] for i in range(len(p) - 1))

    def to_dict(self) -> dict:
        return {"d_in": self.d_in, "hidden_widths": list(self.hidden_widths)}

    @staticmethod
    def from_dict(obj: dict) -> "NetworkShape":
        return NetworkShape(d_in=obj["d_in"], hidden_widths=tuple(obj["hidden_widths"]))


class NetworkParams:
    """Immutable weights and biases of an MLP, flattenable to a vector."""

    def __init__(self, shape: NetworkShape, weights, biases):
        p = shape.layer_widths
        if len(weights) != len(p) - 1 or len(biases) != len(p) - 1:
            raise ValueError("layer count mismatch")
        self.shape = shape
        self.weights = []
        self.biases = []
        for l, (w, b) in enumerate(zip(weights, biases)):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != (p[l], p[l + 1]) or b.shape != (p[l + 1],):
                raise ValueError(
                    f"layer {l}: expected W {(p[l], p[l + 1])} and b {(p[l + 1],)}, "
                    f"got {w.shape} and {b.shape}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def n_params(self) -> int:
        return self.shape.n_params

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @staticmethod
    def from_flat(shape: NetworkShape, theta) -> "NetworkParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (shape.n_params,):
            raise ValueError(
                f"expected flat vector of length {shape.n_params}, got {theta.shape}"
            )
        p = shape.layer_widths
        weights, biases = [], []
        pos = 0
        for l in range(len(p) - 1):
            nw = p[l] * p[l + 1]
            weights.append(theta[pos : pos + nw].reshape(p[l], p[l + 1]).copy())
            pos += nw
            biases.append(theta[pos : pos + p[l + 1]].copy())
            pos += p[l + 1]
        return NetworkParams(shape, weights, biases)

    @staticmethod
    def zeros(shape: NetworkShape) -> "NetworkParams":
        return NetworkParams.from_flat(shape, np.zeros(shape.n_params))

    def sparsity(self) -> int:
        return int(np.count_nonzero(self.flatten()))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.flatten())))


def forward(params: NetworkParams, x) -> np.ndarray | float:
    """Evaluate the network; x may be a single point (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    h = np.atleast_2d(x)
    if h.shape[1] != params.shape.d_in:
        if single and h.shape[1] == 1 and params.shape.d_in == h.size:
            h = h.reshape(1, -1)
        else:
            raise ValueError(
                f"input dimension {h.shape[1]} != d_in {params.shape.d_in}"
            )
    n_layers = len(params.weights)
    for l in range(n_layers - 1):
        h = np.maximum(h @ params.weights[l] + params.biases[l], 0.0)
    out = (h @ params.weights[-1] + params.biases[-1])[:, 0]
    return float(out[0]) if single else out


def membership(params: NetworkParams, L: int, W: int, S: int, B: float) -> bool:
    """True iff params lie in the sparse bounded space: depth L, widths all W,
    at most S nonzeros, sup norm at most B."""
    if params.shape.depth != L or any(w != W for w in params.shape.hidden_widths):
        return False
    return params.sparsity() <= S and params.sup_norm() <= B


def truncate(params: NetworkParams, a: float) -> NetworkParams:
    """Zero every coordinate with |theta_i| <= a (ties at |theta_i| = a zeroed)."""
    if a < 0:
        raise ValueError("need a >= 0")
    if a == 0:
        return params
    theta = params.flatten()
    theta = np.where(np.abs(theta) > a, theta, 0.0)
    return NetworkParams.from_flat(params.shape, theta)


def loglik_and_grad(params: NetworkParams, x, y, sigma: float):
    """Gaussian log-likelihood sum_i log N(y_i | f(x_i), sigma^2) and its exact
    gradient in the flattened parameters by reverse accumulation.

    The ReLU subgradient at exactly 0 is taken to be 0.
    """
    if sigma <= 0:
        raise ValueError("need sigma > 0")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if x.shape[0] != n:
        raise ValueError("x and y length mismatch")
    n_layers = len(params.weights)

    # Forward pass, keeping post-activation values per layer.
    acts = [x]
    pre_acts = []
    h = x
    for l in range(n_layers - 1):
        z = h @ params.weights[l] + params.biases[l]
        pre_acts.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    f = (h @ params.weights[-1] + params.biases[-1])[:, 0]

    resid = y - f
    loglik = float(
        -0.5 * n * np.log(2.0 * np.pi * sigma**2) - 0.5 * np.sum(resid**2) / sigma**2
    )

    # Backward pass: dL/df = resid / sigma^2.
    delta = (resid / sigma**2)[:, None]
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (pre_acts[l - 1] > 0.0)

    parts = []
    for gw, gb in zip(grad_w, grad_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return loglik, np.concatenate(parts)
