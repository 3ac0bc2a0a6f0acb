"""Parameter containers and a sequential model built from the ops."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from ..errors import DimensionError
from . import ops
from .core import Tensor, get_default_dtype, no_grad


@dataclass
class LayerParams:
    weights: Tensor
    bias: Tensor
    name: str

    def __post_init__(self):
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[0]:
            raise DimensionError(
                f"{self.name}: bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output channels"
            )

    @classmethod
    def glorot(cls, name: str, shape: Sequence[int], rng: np.random.Generator, dtype=None) -> "LayerParams":
        """Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero bias."""
        shape = tuple(int(s) for s in shape)
        receptive = math.prod(shape[2:])
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        dtype = dtype or get_default_dtype()
        w = rng.uniform(-limit, limit, size=shape).astype(dtype)
        return cls(Tensor(w, requires_grad=True, dtype=dtype),
                   Tensor(np.zeros(shape[0], dtype), requires_grad=True, dtype=dtype), name)

    def tensors(self) -> tuple[Tensor, Tensor]:
        return self.weights, self.bias

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size


class Layer:
    params: Optional[LayerParams] = None

    def __call__(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError


def _conv_extent(n, k, s, p):
    lo, hi = p
    return (n + lo + hi - k) // s + 1


class Conv(Layer):
    def __init__(self, params: LayerParams, stride=1, padding="valid"):
        self.params = params
        self.nd = params.weights.ndim - 2
        self.stride = ops._tuple(stride, self.nd, "stride")
        self.padding = padding

    def __call__(self, x, train=False, rng=None):
        return ops.conv_forward(x, self.params, self.stride, self.padding)

    def output_shape(self, shape):
        kernel = self.params.weights.shape[2:]
        pads = ops._pad_widths(self.padding, kernel)
        spatial = tuple(_conv_extent(n, k, s, p) for n, k, s, p in zip(shape[1:], kernel, self.stride, pads))
        return (self.params.weights.shape[0], *spatial)

    def __repr__(self):
        return f"Conv({self.params.name}, {self.params.weights.shape}, padding={self.padding!r})"


class MaxPool(Layer):
    def __init__(self, window, stride=None):
        self.window = tuple(window)
        self.stride = self.window if stride is None else tuple(stride)

    def __call__(self, x, train=False, rng=None):
        return ops.maxpool_forward(x, self.window, self.stride)

    def output_shape(self, shape):
        nd = len(self.window)
        head, spatial = shape[: len(shape) - nd], shape[len(shape) - nd :]
        return (*head, *((n - k) // s + 1 for n, k, s in zip(spatial, self.window, self.stride)))

    def __repr__(self):
        return f"MaxPool({self.window})"


class Dense(Layer):
    def __init__(self, params: LayerParams):
        self.params = params

    def __call__(self, x, train=False, rng=None):
        return ops.dense_forward(x, self.params)

    def output_shape(self, shape):
        return (self.params.weights.shape[0],)

    def __repr__(self):
        return f"Dense({self.params.name}, {self.params.weights.shape})"


class ReLU(Layer):
    def __call__(self, x, train=False, rng=None):
        return ops.relu(x)

    def output_shape(self, shape):
        return shape

    def __repr__(self):
        return "ReLU()"


class Dropout(Layer):
    def __init__(self, rate: float):
        self.rate = rate

    def __call__(self, x, train=False, rng=None):
        return ops.dropout(x, self.rate, train, rng)

    def output_shape(self, shape):
        return shape

    def __repr__(self):
        return f"Dropout({self.rate})"


class Flatten(Layer):
    def __call__(self, x, train=False, rng=None):
        return ops.flatten(x, batched=True)

    def output_shape(self, shape):
        return (math.prod(shape),)

    def __repr__(self):
        return "Flatten()"


class Sequential:
    """Layers applied in order to a batch ``(B, *input_shape)``.

    The last layer emits logits; :meth:`predict_proba` applies softmax.
    """

    def __init__(self, layers: Sequence[Layer], input_shape: tuple[int, ...], spec=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.spec = spec

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def params(self) -> list[LayerParams]:
        return [layer.params for layer in self.layers if layer.params is not None]

    def tensors(self) -> list[Tensor]:
        return [t for p in self.params() for t in p.tensors()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes for one unbatched sample."""
        shape, out = self.input_shape, []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            out.append(shape)
        return out

    def forward(self, x, train: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(f"model expects batches of {self.input_shape}, got {x.shape}")
        for layer in self.layers:
            x = layer(x, train=train, rng=rng)
        return x

    __call__ = forward

    def predict_proba(self, x, batch_size: int = 32) -> np.ndarray:
        """Eval-mode class probabilities for a batch of inputs."""
        x = np.asarray(x)
        out = []
        with no_grad():
            for i in range(0, len(x), batch_size):
                logits = self.forward(Tensor(x[i : i + batch_size]), train=False)
                out.append(ops.softmax(logits.data.astype(np.float64)))
        return np.concatenate(out) if out else np.zeros((0, self.shapes()[-1][0]))

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def astype(self, dtype) -> "Sequential":
        """Cast all parameters in place (e.g. to float64 for gradient audits)."""
        for p in self.params():
            for attr in ("weights", "bias"):
                t = getattr(p, attr)
                setattr(p, attr, Tensor(t.data.astype(dtype), requires_grad=True, dtype=dtype))
        return self

    def __repr__(self):
        body = "\n".join(f"  {layer!r}" for layer in self.layers)
        return f"Sequential(input={self.input_shape}\n{body}\n)"
