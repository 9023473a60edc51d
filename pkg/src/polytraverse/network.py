"""ReLU network container, forward pass, activation codes and local linear models."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .lp import as_matrix, as_vector


@dataclass(frozen=True, eq=False)
class LayerSpec:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weights, name="layer weights")
        b = as_vector(self.bias, name="layer bias")
        if w.shape[0] != b.shape[0]:
            raise InvalidInputError(
                f"weight rows ({w.shape[0]}) do not match bias length ({b.shape[0]})")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise InvalidInputError(f"empty layer of shape {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def shape(self):
        return self.weights.shape

    def __eq__(self, other):
        return (isinstance(other, LayerSpec)
                and self.weights.shape == other.weights.shape
                and self.weights.tobytes() == other.weights.tobytes()
                and self.bias.tobytes() == other.bias.tobytes())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Normalization:
    """Per-feature affine map ``(v - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, name="normalization mean")
        scale = as_vector(self.scale, mean.shape[0], name="normalization scale")
        if np.any(scale == 0.0):
            raise InvalidInputError("normalization scale contains zeros")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    def is_identity(self) -> bool:
        return not self.mean.any() and bool(np.all(self.scale == 1.0))

    def __eq__(self, other):
        return (isinstance(other, Normalization)
                and self.mean.tobytes() == other.mean.tobytes()
                and self.scale.tobytes() == other.scale.tobytes())

    __hash__ = None


def _norm_eq(a: Optional[Normalization], b: Optional[Normalization]) -> bool:
    if a is None or a.is_identity():
        return b is None or b.is_identity()
    return a == b


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """Fully connected ReLU network; immutable after construction.

    ``normalization`` is applied to inputs before the first layer.
    ``output_normalization`` and ``input_bounds`` are carried for file
    round-trips (NNet) and are never applied by :func:`forward`.
    """

    hidden: tuple
    output: LayerSpec
    normalization: Optional[Normalization] = None
    labels: Optional[tuple] = None
    input_bounds: Optional[tuple] = None
    output_normalization: Optional[Normalization] = None

    def __post_init__(self):
        hidden = tuple(self.hidden)
        if not hidden:
            raise InvalidInputError("network needs at least one hidden layer")
        object.__setattr__(self, "hidden", hidden)
        width = hidden[0].shape[1]
        for idx, layer in enumerate(hidden[1:] + (self.output,), start=1):
            if layer.shape[1] != hidden[idx - 1].shape[0]:
                name = "output layer" if idx == len(hidden) else f"hidden layer {idx}"
                raise InvalidInputError(
                    f"{name} expects {layer.shape[1]} inputs but previous layer has "
                    f"{hidden[idx - 1].shape[0]} neurons")
        if self.normalization is not None and self.normalization.mean.shape[0] != width:
            raise InvalidInputError("normalization length does not match input dimension")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.output.shape[0]:
                raise InvalidInputError("label count does not match output dimension")
            object.__setattr__(self, "labels", labels)
        if self.input_bounds is not None:
            # infinite entries mean "unbounded"; NaN is rejected
            lo, hi = (np.asarray(v, dtype=np.float64).reshape(-1) for v in self.input_bounds)
            if lo.shape != (width,) or hi.shape != (width,):
                raise InvalidInputError("input bounds do not match input dimension")
            if np.isnan(lo).any() or np.isnan(hi).any() or np.any(lo > hi):
                raise InvalidInputError("input bounds must satisfy lower <= upper")
            object.__setattr__(self, "input_bounds", (lo, hi))

    @property
    def input_dim(self) -> int:
        return self.hidden[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.output.shape[0]

    @property
    def depth(self) -> int:
        """Number of hidden layers ``L``."""
        return len(self.hidden)

    @property
    def widths(self) -> tuple:
        return tuple(layer.shape[0] for layer in self.hidden)

    @cached_property
    def first_layer(self) -> tuple:
        """First-layer weights and bias with the input normalisation folded in."""
        W, b = self.hidden[0].weights, self.hidden[0].bias
        if self.normalization is None or self.normalization.is_identity():
            return W, b
        inv = 1.0 / self.normalization.scale
        return W * inv, b - W @ (self.normalization.mean * inv)

    def __eq__(self, other):
        if not isinstance(other, ReluNetwork):
            return NotImplemented
        return (self.hidden == other.hidden and self.output == other.output
                and _norm_eq(self.normalization, other.normalization)
                and _norm_eq(self.output_normalization, other.output_normalization)
                and self.labels == other.labels)

    __hash__ = None

    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON encoding."""
        from .netio import network_to_dict

        payload = json.dumps(network_to_dict(self), separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def make_network(hidden: Sequence, output, **kwargs) -> ReluNetwork:
    """Build a network from ``[(W, b), ...]`` pairs."""
    layers = tuple(LayerSpec(w, b) for w, b in hidden)
    return ReluNetwork(layers, LayerSpec(*output), **kwargs)


@dataclass(frozen=True)
class ActivationCode:
    """Hierarchical on/off pattern ``c^1 c^2 ... c^l``; one bit tuple per level."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(tuple(int(v) for v in lvl) for lvl in self.levels)
        for lvl in levels:
            if any(v not in (0, 1) for v in lvl):
                raise InvalidInputError(f"activation bits must be 0/1, got {lvl}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_arrays(cls, arrays: Iterable) -> "ActivationCode":
        return cls(tuple(tuple(int(v) for v in np.asarray(a).reshape(-1)) for a in arrays))

    @classmethod
    def parse(cls, text: str) -> "ActivationCode":
        return cls(tuple(tuple(int(ch) for ch in part) for part in text.split("|")))

    def __str__(self):
        return "|".join("".join(str(v) for v in lvl) for lvl in self.levels)

    def __len__(self):
        return len(self.levels)

    def level(self, l: int) -> np.ndarray:
        """Bits of level ``l`` (1-based) as a uint8 array."""
        return np.array(self.levels[l - 1], dtype=np.uint8)

    def prefix(self, n: int) -> "ActivationCode":
        return ActivationCode(self.levels[:n])

    def extend(self, bits) -> "ActivationCode":
        return ActivationCode(self.levels + (tuple(int(v) for v in bits),))

    def flip(self, m: int, level: Optional[int] = None) -> "ActivationCode":
        """Flip bit ``m`` (0-based) of ``level`` (default: last level)."""
        li = (level or len(self.levels)) - 1
        lvl = list(self.levels[li])
        lvl[m] = 1 - lvl[m]
        return ActivationCode(self.levels[:li] + (tuple(lvl),) + self.levels[li + 1:])


@dataclass(frozen=True, eq=False)
class LevelCoefficients:
    level: int
    effective_weights: np.ndarray
    effective_bias: np.ndarray
    masked_weights: Optional[np.ndarray] = None
    masked_bias: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class LocalLinearModel:
    weights: np.ndarray
    bias: np.ndarray

    def __call__(self, x):
        return self.weights @ np.asarray(x, dtype=np.float64) + self.bias


def zero_mask(W: np.ndarray, b: np.ndarray, bits) -> tuple:
    """Zero the rows of switched-off neurons."""
    keep = np.asarray(bits, dtype=np.float64)
    return W * keep[:, None], b * keep


def next_level(net: ReluNetwork, level: int, W_hat: np.ndarray, b_hat: np.ndarray, bits) -> tuple:
    """Effective coefficients of level ``level + 1`` from those of ``level``."""
    Wm, bm = zero_mask(W_hat, b_hat, bits)
    layer = net.hidden[level] if level < net.depth else net.output
    return layer.weights @ Wm, layer.weights @ bm + layer.bias


def _check_x(net: ReluNetwork, x) -> np.ndarray:
    return as_vector(x, net.input_dim, name="input")


def forward(net: ReluNetwork, x) -> np.ndarray:
    """Plain forward pass; no output link function is applied."""
    h = _check_x(net, x)
    if net.normalization is not None:
        h = (h - net.normalization.mean) / net.normalization.scale
    for layer in net.hidden:
        h = np.maximum(layer.weights @ h + layer.bias, 0.0)
    return net.output.weights @ h + net.output.bias


def forward_batch(net: ReluNetwork, X) -> np.ndarray:
    H = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if net.normalization is not None:
        H = (H - net.normalization.mean) / net.normalization.scale
    for layer in net.hidden:
        H = np.maximum(H @ layer.weights.T + layer.bias, 0.0)
    return H @ net.output.weights.T + net.output.bias


def encode(net: ReluNetwork, x, up_to_level: Optional[int] = None) -> ActivationCode:
    """Activation code of ``x``; a pre-activation of exactly zero gives bit 1."""
    x = _check_x(net, x)
    L = net.depth if up_to_level is None else up_to_level
    if not 1 <= L <= net.depth:
        raise InvalidInputError(f"up_to_level must lie in [1, {net.depth}], got {L}")
    W_hat, b_hat = net.first_layer
    levels = []
    for l in range(1, L + 1):
        bits = (W_hat @ x + b_hat >= 0.0).astype(np.uint8)
        levels.append(tuple(int(v) for v in bits))
        if l < L:
            W_hat, b_hat = next_level(net, l, W_hat, b_hat, bits)
    return ActivationCode(tuple(levels))


def level_coefficients(net: ReluNetwork, code: ActivationCode, level: int) -> LevelCoefficients:
    if not 1 <= level <= net.depth:
        raise InvalidInputError(f"level must lie in [1, {net.depth}], got {level}")
    if len(code) < level - 1:
        raise InvalidInputError(f"code has {len(code)} levels; level {level} needs {level - 1}")
    _check_code(net, code)
    W_hat, b_hat = net.first_layer
    for l in range(1, level):
        W_hat, b_hat = next_level(net, l, W_hat, b_hat, code.levels[l - 1])
    if len(code) >= level:
        Wm, bm = zero_mask(W_hat, b_hat, code.levels[level - 1])
        return LevelCoefficients(level, W_hat, b_hat, Wm, bm)
    return LevelCoefficients(level, W_hat, b_hat)


def local_linear_model(net: ReluNetwork, code: ActivationCode) -> LocalLinearModel:
    if len(code) != net.depth:
        raise InvalidInputError(f"local model needs a full code of {net.depth} levels, got {len(code)}")
    coeffs = level_coefficients(net, code, net.depth)
    W = net.output.weights @ coeffs.masked_weights
    b = net.output.weights @ coeffs.masked_bias + net.output.bias
    return LocalLinearModel(W, b)


def _check_code(net: ReluNetwork, code: ActivationCode) -> None:
    for l, bits in enumerate(code.levels, start=1):
        if l > net.depth:
            raise InvalidInputError(f"code has {len(code)} levels, network has {net.depth}")
        if len(bits) != net.widths[l - 1]:
            raise InvalidInputError(
                f"level {l} of the code has {len(bits)} bits, layer has {net.widths[l - 1]} neurons")


def random_network(rng: np.random.Generator, input_dim: int, widths: Sequence[int],
                   output_dim: int = 1, scale: float = 1.0) -> ReluNetwork:
    """Gaussian weights and biases; used by tests, benchmarks and the CLI demo."""
    dims = [input_dim, *widths]
    hidden = [(rng.normal(0.0, scale, (dims[i + 1], dims[i])), rng.normal(0.0, scale, dims[i + 1]))
              for i in range(len(widths))]
    out = (rng.normal(0.0, scale, (output_dim, dims[-1])), rng.normal(0.0, scale, output_dim))
    return make_network(hidden, out)
