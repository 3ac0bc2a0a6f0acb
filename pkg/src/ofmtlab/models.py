"""The two stream architectures and their weight files.

Weight file layout (all integers u32 little-endian)::

    b"OFMT" | version | tensor count |
    per tensor: name length | name (utf-8) | rank | dims... | float32 LE data

The model spec is stored next to the weights as ``<file>.spec.json`` and
carries a fingerprint that :func:`load_weights` checks.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptWeightsError, FormatError, IncompatibleWeightsError, SpecError
from .tensor import Conv, Dense, Dropout, Flatten, LayerParams, MaxPool, ReLU, Sequential, Tensor

MAGIC = b"OFMT"
FORMAT_VERSION = 1

C3D_CHANNELS = (64, 128, 256, 256, 256)
C3D_DENSE = (2048, 1024)
LENET_CHANNELS = (32, 64)
LENET_KERNELS = (3, 5)
LENET_DENSE = 1024


def hwt_pool(h: int, w: int, t: int) -> tuple[int, int, int]:
    """Reorder an ``H x W x T`` pool size into tensor axis order ``(T, H, W)``."""
    return (t, h, w)


def scaled(n: int, multiplier: float) -> int:
    return max(1, int(round(n * multiplier)))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_shape: tuple[int, ...]
    width_multiplier: float = 1.0
    num_classes: int = 10
    dropout_rate: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.kind not in ("C3D", "LeNet2D"):
            raise SpecError(f"unknown model kind {self.kind!r}")
        if not 0 < self.width_multiplier <= 1:
            raise SpecError(f"width_multiplier must be in (0, 1], got {self.width_multiplier}")
        if self.num_classes < 2:
            raise SpecError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0 <= self.dropout_rate < 1:
            raise SpecError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        rank = 4 if self.kind == "C3D" else 3
        if len(self.input_shape) != rank:
            raise SpecError(f"{self.kind} input_shape needs rank {rank}, got {self.input_shape}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], tuple(d["input_shape"]), float(d["width_multiplier"]),
                   int(d["num_classes"]), float(d["dropout_rate"]))

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


PRESETS = {
    "c3d-desk": ModelSpec("C3D", (3, 16, 32, 32), 1 / 8),
    "c3d-full": ModelSpec("C3D", (3, 16, 112, 112), 1.0),
    "lenet-desk": ModelSpec("LeNet2D", (1, 64, 64), 1 / 4),
    "lenet-full": ModelSpec("LeNet2D", (1, 64, 64), 1.0),
}


def preset(name: str, **overrides) -> ModelSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, **overrides) if overrides else spec


def build_c3d(spec: ModelSpec, seed: int = 0) -> Sequential:
    """Five 3x3x3 conv + ReLU + pool blocks, two dense layers, classifier.

    Convolutions use "same" padding. The first pool is 2x2 spatial only,
    the other four halve time as well.
    """
    if spec.kind != "C3D":
        raise SpecError(f"build_c3d needs a C3D spec, got {spec.kind}")
    c, t, h, w = spec.input_shape
    if t // 16 < 1:
        raise SpecError(f"temporal extent {t} collapses below 1 before the final pool (need >= 16)")
    if min(h, w) // 32 < 1:
        raise SpecError(f"spatial extent {(h, w)} collapses below 1 before the final pool (need >= 32)")
    rng = np.random.default_rng(seed)
    m = spec.width_multiplier
    layers = []
    in_c = c
    for i, out_c in enumerate(C3D_CHANNELS):
        out_c = scaled(out_c, m)
        layers += [
            Conv(LayerParams.glorot(f"conv{i + 1}", (out_c, in_c, 3, 3, 3), rng), stride=1, padding="same"),
            ReLU(),
            MaxPool(hwt_pool(2, 2, 1) if i == 0 else hwt_pool(2, 2, 2)),
        ]
        in_c = out_c
    layers.append(Flatten())
    feat = math.prod(Sequential(layers, spec.input_shape).shapes()[-1])
    for j, units in enumerate(C3D_DENSE):
        units = scaled(units, m)
        layers += [Dense(LayerParams.glorot(f"fc{j + 6}", (units, feat), rng)), ReLU(), Dropout(spec.dropout_rate)]
        feat = units
    layers.append(Dense(LayerParams.glorot("fc8", (spec.num_classes, feat), rng)))
    return Sequential(layers, spec.input_shape, spec)


def build_lenet2d(spec: ModelSpec, seed: int = 0) -> Sequential:
    """Two conv layers (3x3, 5x5) with 2x2 pools, a dense layer, classifier."""
    if spec.kind != "LeNet2D":
        raise SpecError(f"build_lenet2d needs a LeNet2D spec, got {spec.kind}")
    c, h, w = spec.input_shape
    k1, k2 = LENET_KERNELS
    after = [((n - k1 + 1) // 2 - k2 + 1) // 2 for n in (h, w)]
    if min(after) < 1:
        raise SpecError(f"input {(h, w)} too small for two conv + pool stages")
    rng = np.random.default_rng(seed)
    m = spec.width_multiplier
    c1, c2 = (scaled(n, m) for n in LENET_CHANNELS)
    layers = [
        Conv(LayerParams.glorot("conv1", (c1, c, k1, k1), rng)), ReLU(), MaxPool((2, 2)),
        Conv(LayerParams.glorot("conv2", (c2, c1, k2, k2), rng)), ReLU(), MaxPool((2, 2)),
        Flatten(),
    ]
    feat = c2 * after[0] * after[1]
    units = scaled(LENET_DENSE, m)
    layers += [
        Dense(LayerParams.glorot("fc3", (units, feat), rng)), ReLU(), Dropout(spec.dropout_rate),
        Dense(LayerParams.glorot("fc4", (spec.num_classes, units), rng)),
    ]
    return Sequential(layers, spec.input_shape, spec)


def build_model(spec: ModelSpec, seed: int = 0) -> Sequential:
    return build_c3d(spec, seed) if spec.kind == "C3D" else build_lenet2d(spec, seed)


def expected_parameter_count(spec: ModelSpec) -> int:
    """Closed-form parameter count from the layer recipe."""
    m = spec.width_multiplier
    classes = spec.num_classes
    if spec.kind == "C3D":
        c, t, h, w = spec.input_shape
        total, in_c = 0, c
        for ch in C3D_CHANNELS:
            ch = scaled(ch, m)
            total += ch * in_c * 27 + ch
            in_c = ch
        # Flattened features after the five pools.
        feat = in_c * (t // 16) * (h // 32) * (w // 32)
        d1, d2 = (scaled(n, m) for n in C3D_DENSE)
        return total + feat * d1 + d1 + d1 * d2 + d2 + d2 * classes + classes
    c, h, w = spec.input_shape
    c1, c2 = (scaled(n, m) for n in LENET_CHANNELS)
    sp = [((n - 2) // 2 - 4) // 2 for n in (h, w)]
    d = scaled(LENET_DENSE, m)
    return (c1 * c * 9 + c1) + (c2 * c1 * 25 + c2) + (c2 * sp[0] * sp[1] * d + d) + (d * classes + classes)


@dataclass
class ModelWeights:
    tensors: list[tuple[str, np.ndarray]]
    fingerprint: Optional[str] = None
    spec: Optional[ModelSpec] = field(default=None, compare=False)

    @classmethod
    def from_model(cls, model: Sequential) -> "ModelWeights":
        tensors = []
        for p in model.params():
            tensors.append((f"{p.name}.weight", p.weights.data.copy()))
            tensors.append((f"{p.name}.bias", p.bias.data.copy()))
        spec = model.spec
        return cls(tensors, spec.fingerprint() if spec else None, spec)

    def apply_to(self, model: Sequential) -> Sequential:
        check_compatible(self, model)
        it = iter(self.tensors)
        for p in model.params():
            for attr in ("weights", "bias"):
                _, arr = next(it)
                old = getattr(p, attr)
                setattr(p, attr, Tensor(arr.astype(old.dtype), requires_grad=True, dtype=old.dtype))
        return model


def check_compatible(weights: ModelWeights, model: Sequential) -> None:
    expected = [(f"{p.name}.{suffix}", t.shape) for p in model.params()
                for suffix, t in (("weight", p.weights), ("bias", p.bias))]
    for (name, shape), (got_name, arr) in zip(expected, weights.tensors):
        layer = name.split(".")[0]
        if name != got_name or tuple(arr.shape) != tuple(shape):
            raise IncompatibleWeightsError(
                f"layer {layer}: expected {name} with shape {tuple(shape)}, "
                f"file has {got_name} with shape {tuple(arr.shape)}"
            )
    if len(expected) != len(weights.tensors):
        raise IncompatibleWeightsError(
            f"model has {len(expected)} tensors, file has {len(weights.tensors)}"
        )


def spec_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".spec.json")


def save_weights(weights: ModelWeights, path) -> Path:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(weights.tensors))]
    for name, arr in weights.tensors:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    path.write_bytes(b"".join(chunks))
    if weights.spec is not None:
        meta = {"spec": weights.spec.to_dict(), "fingerprint": weights.spec.fingerprint()}
        spec_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_weight_file(path) -> list[tuple[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: not a weight file (bad magic {buf[:4]!r})")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CorruptWeightsError(f"{path}: truncated at byte {pos} (needed {n} more)")
        out = buf[pos : pos + n]
        pos += n
        return out

    version, count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    tensors = []
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptWeightsError(f"{path}: tensor name is not utf-8") from exc
        (rank,) = struct.unpack("<I", take(4))
        if rank > 8:
            raise CorruptWeightsError(f"{path}: implausible tensor rank {rank}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        data = np.frombuffer(take(4 * math.prod(dims)), dtype="<f4").reshape(dims).copy()
        tensors.append((name, data))
    if pos != len(buf):
        raise CorruptWeightsError(f"{path}: {len(buf) - pos} trailing bytes")
    return tensors


def read_spec(path) -> Optional[tuple[ModelSpec, str]]:
    sp = spec_path(path)
    if not sp.exists():
        return None
    meta = json.loads(sp.read_text())
    return ModelSpec.from_dict(meta["spec"]), meta["fingerprint"]


def load_weights(path, spec: ModelSpec) -> ModelWeights:
    """Read weights and verify them against ``spec``.

    Raises
    ------
    IncompatibleWeightsError
        A tensor shape differs (the message names the first offending
        layer) or the stored spec fingerprint does not match.
    """
    tensors = read_weight_file(path)
    weights = ModelWeights(tensors, spec.fingerprint(), spec)
    check_compatible(weights, build_model(spec))
    stored = read_spec(path)
    if stored is not None and stored[1] != spec.fingerprint():
        raise IncompatibleWeightsError(
            f"{path}: stored spec fingerprint {stored[1]} does not match requested {spec.fingerprint()}"
        )
    return weights


def load_model(path, spec: Optional[ModelSpec] = None) -> Sequential:
    """Build a model from the sidecar spec (or ``spec``) and load its weights."""
    if spec is None:
        stored = read_spec(path)
        if stored is None:
            raise FormatError(f"{path}: no {spec_path(path).name} next to the weights; pass a spec")
        spec = stored[0]
    weights = load_weights(path, spec)
    return weights.apply_to(build_model(spec))
