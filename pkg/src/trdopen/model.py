"""Three-branch projection classifier and its single-branch spectrogram baseline.

Each projected plane enters its own EfficientNet-style branch as a one-channel
image. Branch feature vectors are concatenated in the fixed order
(range-Doppler, time-Doppler, time-range) and classified by a one-hidden-layer
MLP.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .nn import functional as F
from .nn.layers import (BatchNorm2d, Conv2d, Dense, DepthwiseConv2d, GlobalAvgPool, Module,
                        Residual, Sequential, SiLU, SqueezeExcitation)
from .projection import NormStats, ProjectionTriple


@dataclass(frozen=True)
class StageSpec:
    expansion: int
    kernel: int
    stride: int
    channels: int
    repeats: int = 1
    kind: str = "mbconv"

    def __post_init__(self):
        if self.kind != "mbconv":
            raise ValueError(f"unsupported block kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ValueError(f"stage stride must be 1 or 2, got {self.stride}")
        if self.repeats < 1 or self.expansion < 1 or self.channels < 1:
            raise ValueError("repeats, expansion and channels must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")


@dataclass(frozen=True)
class BranchSpec:
    stem_channels: int = 16
    stages: tuple[StageSpec, ...] = (
        StageSpec(1, 3, 1, 16, 1),
        StageSpec(4, 3, 2, 24, 2),
        StageSpec(4, 5, 2, 40, 2),
    )
    se_reduction: int = 4

    @property
    def out_channels(self) -> int:
        return self.stages[-1].channels if self.stages else self.stem_channels

    def feature_dims(self, height: int, width: int) -> list[tuple[int, int]]:
        """Spatial size after the stem and after every block."""
        dims = [(F.conv_out_size(height, 3, 2, 1), F.conv_out_size(width, 3, 2, 1))]
        for st in self.stages:
            for r in range(st.repeats):
                s = st.stride if r == 0 else 1
                h, w = dims[-1]
                pad = st.kernel // 2
                dims.append((F.conv_out_size(h, st.kernel, s, pad),
                             F.conv_out_size(w, st.kernel, s, pad)))
        return dims

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BranchSpec":
        return cls(d["stem_channels"], tuple(StageSpec(**s) for s in d["stages"]),
                   d["se_reduction"])


DEFAULT_BRANCH = BranchSpec()
DEFAULT_HIDDEN = 128


def mbconv(in_ch: int, out_ch: int, expansion: int, kernel: int, stride: int,
           se_reduction: int, rng: np.random.Generator) -> Module:
    """Inverted bottleneck; expansion 1 skips the 1x1 expand conv."""
    mid = in_ch * expansion
    layers: list[Module] = []
    if expansion != 1:
        layers += [Conv2d(in_ch, mid, 1, rng=rng), BatchNorm2d(mid), SiLU()]
    layers += [
        DepthwiseConv2d(mid, kernel, stride, rng=rng), BatchNorm2d(mid), SiLU(),
        SqueezeExcitation(mid, se_reduction, rng=rng),
        Conv2d(mid, out_ch, 1, rng=rng), BatchNorm2d(out_ch),
    ]
    body = Sequential(*layers)
    if stride == 1 and in_ch == out_ch:
        return Residual(body)
    return body


def build_branch(spec: BranchSpec, input_dims: tuple[int, int], rng_seed) -> Sequential:
    """Stem + MBConv stages + global average pool over a 1-channel image."""
    dims = spec.feature_dims(*input_dims)
    if min(min(d) for d in dims) < 1:
        raise ValueError(f"branch spec reduces input {input_dims} below 1 pixel: {dims}")
    rng = np.random.default_rng(rng_seed)
    layers: list[Module] = [Conv2d(1, spec.stem_channels, 3, stride=2, padding=1, rng=rng),
                            BatchNorm2d(spec.stem_channels), SiLU()]
    ch = spec.stem_channels
    for st in spec.stages:
        for r in range(st.repeats):
            layers.append(mbconv(ch, st.channels, st.expansion, st.kernel,
                                 st.stride if r == 0 else 1, spec.se_reduction, rng))
            ch = st.channels
    layers.append(GlobalAvgPool())
    return Sequential(*layers)


class BranchOutputs(NamedTuple):
    o_rd: np.ndarray
    o_td: np.ndarray
    o_tr: np.ndarray


class MultiBranchNet(Module):
    """Parallel image branches -> concatenation -> Dense/SiLU/Dense head.

    ``kind`` is ``"open3d"`` (three projected planes) or ``"baseline2d"``
    (one spectrogram). ``norm_stats`` holds one :class:`NormStats` per input.
    """

    def __init__(self, kind: str, branch_specs: Sequence[BranchSpec],
                 input_dims: Sequence[tuple[int, int]], num_classes: int,
                 hidden: int = DEFAULT_HIDDEN, seed: int = 0, norm_stats=None):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if len(branch_specs) != len(input_dims):
            raise ValueError("one branch spec per input plane")
        self.kind = kind
        self.branch_specs = tuple(branch_specs)
        self.input_dims = tuple(tuple(int(v) for v in d) for d in input_dims)
        self.num_classes = num_classes
        self.hidden = hidden
        self.seed = seed
        self.norm_stats = tuple(norm_stats) if norm_stats is not None else None
        self.branches = [build_branch(s, d, [seed, i])
                         for i, (s, d) in enumerate(zip(self.branch_specs, self.input_dims))]
        self.widths = [s.out_channels for s in self.branch_specs]
        head_rng = np.random.default_rng([seed, len(self.branches)])
        self.head = Sequential(Dense(sum(self.widths), hidden, rng=head_rng), SiLU(),
                               Dense(hidden, num_classes, rng=head_rng))

    def named_children(self):
        return [(f"branch{i}", b) for i, b in enumerate(self.branches)] + [("head", self.head)]

    def branch_features(self, planes: Sequence[np.ndarray], train: bool = False) -> list[np.ndarray]:
        if len(planes) != len(self.branches):
            raise ValueError(f"expected {len(self.branches)} input planes, got {len(planes)}")
        feats = []
        for b, x, dims in zip(self.branches, planes, self.input_dims):
            x = np.asarray(x, dtype=np.float64)
            if x.ndim == 3:
                x = x[:, None]
            if x.shape[1:] != (1, *dims):
                raise ValueError(f"input plane shape {x.shape[1:]} != model dims (1, {dims})")
            feats.append(b.forward(x, train))
        return feats

    def forward(self, planes, train: bool = False) -> np.ndarray:
        return self.forward_with_features(planes, train)[0]

    def forward_with_features(self, planes, train: bool = False):
        feats = self.branch_features(planes, train)
        return self.head.forward(np.concatenate(feats, axis=1), train), feats

    def backward(self, dlogits):
        dfused = self.head.backward(dlogits)
        splits = np.cumsum(self.widths)[:-1]
        return [b.backward(d) for b, d in zip(self.branches, np.split(dfused, splits, axis=1))]

    def predict(self, planes) -> np.ndarray:
        return self.forward(planes, train=False).argmax(axis=1)

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def normalize_inputs(self, planes: Sequence[np.ndarray]) -> list[np.ndarray]:
        if self.norm_stats is None:
            raise ValueError("model has no fitted normalization statistics")
        return [(np.asarray(p, dtype=np.float64) - s.mean) / s.std
                for p, s in zip(planes, self.norm_stats)]


def build_open3d(plane_dims: tuple[int, int, int], num_classes: int,
                 branch_spec: BranchSpec | Sequence[BranchSpec] = DEFAULT_BRANCH,
                 hidden: int = DEFAULT_HIDDEN, seed: int = 0, norm_stats=None) -> MultiBranchNet:
    """Three-branch model for cubes of size ``(T, M, N)``."""
    t, m, n = plane_dims
    specs = [branch_spec] * 3 if isinstance(branch_spec, BranchSpec) else list(branch_spec)
    return MultiBranchNet("open3d", specs, [(m, n), (t, n), (t, m)], num_classes,
                          hidden, seed, norm_stats)


def build_baseline_2d(spectrogram_dims: tuple[int, int], num_classes: int,
                      branch_spec: BranchSpec = DEFAULT_BRANCH, hidden: int = DEFAULT_HIDDEN,
                      seed: int = 0, norm_stats=None) -> MultiBranchNet:
    """Single-branch model over a ``(time, Doppler)`` spectrogram."""
    return MultiBranchNet("baseline2d", [branch_spec], [tuple(spectrogram_dims)], num_classes,
                          hidden, seed, norm_stats)


def stack_triples(triples: Sequence[ProjectionTriple]) -> list[np.ndarray]:
    """Batch a list of triples into three ``(B, 1, H, W)`` arrays."""
    return [np.stack([t.planes()[i] for t in triples])[:, None] for i in range(3)]


def open3d_forward(model: MultiBranchNet, triples: Sequence[ProjectionTriple],
                   train: bool = False) -> tuple[np.ndarray, BranchOutputs]:
    logits, feats = model.forward_with_features(stack_triples(triples), train)
    return logits, BranchOutputs(*feats)


def loss_and_grad(model: MultiBranchNet, planes, labels) -> tuple[float, dict[str, np.ndarray]]:
    """Train-mode cross-entropy and gradients of every trainable parameter."""
    model.zero_grad()
    logits = model.forward(planes, train=True)
    loss, dlogits = F.softmax_cross_entropy(logits, labels)
    model.backward(dlogits)
    return loss, {name: p.grad.copy() for name, p in model.named_parameters()}


def open3d_loss_and_grad(model: MultiBranchNet, triples: Sequence[ProjectionTriple], labels):
    return loss_and_grad(model, stack_triples(triples), labels)


TINY_BRANCH = BranchSpec(stem_channels=4, stages=(StageSpec(2, 3, 1, 4, 1),), se_reduction=2)


def gradcheck_model(model: MultiBranchNet, planes, labels, eps: float = 1e-5) -> float:
    """Finite-difference check of :func:`loss_and_grad` over every parameter."""
    from .nn.gradcheck import grad_check

    planes = [np.asarray(p, dtype=np.float64) for p in planes]
    _, grads = loss_and_grad(model, planes, labels)
    named = list(model.named_parameters())

    def loss():
        return F.softmax_cross_entropy(model.forward(planes, train=True), labels)[0]

    return grad_check(loss, [p.value for _, p in named], [grads[n] for n, _ in named], eps)


def tiny_open3d_gradcheck(seed: int = 0, batch: int = 2, size: int = 8,
                          num_classes: int = 3) -> float:
    """End-to-end check on a one-stage model over ``size`` x ``size`` planes."""
    rng = np.random.default_rng(seed)
    model = build_open3d((size, size, size), num_classes, TINY_BRANCH, hidden=8, seed=seed)
    planes = [rng.standard_normal((batch, 1, size, size)) for _ in range(3)]
    labels = rng.integers(0, num_classes, batch)
    return gradcheck_model(model, planes, labels)


def tiny_baseline_gradcheck(seed: int = 0, batch: int = 2, size: int = 8,
                            num_classes: int = 3) -> float:
    rng = np.random.default_rng(seed)
    model = build_baseline_2d((size, size), num_classes, TINY_BRANCH, hidden=8, seed=seed)
    planes = [rng.standard_normal((batch, 1, size, size))]
    labels = rng.integers(0, num_classes, batch)
    return gradcheck_model(model, planes, labels)


# -- serialization ------------------------------------------------------------

MODEL_MAGIC = b"OPEN"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _architecture(model: MultiBranchNet) -> dict:
    return {
        "kind": model.kind,
        "branch_specs": [s.to_dict() for s in model.branch_specs],
        "input_dims": [list(d) for d in model.input_dims],
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "seed": model.seed,
    }


def encode_model(model: MultiBranchNet) -> bytes:
    """``OPEN | version | arch JSON | NormStats | float32 state | crc32``.

    Header fields are little-endian u32; the CRC covers everything between the
    version word and itself.
    """
    arch = json.dumps(_architecture(model), sort_keys=True).encode()
    stats = model.norm_stats or ()
    parts = [struct.pack("<I", len(arch)), arch, struct.pack("<I", len(stats))]
    parts += [struct.pack("<dd", s.mean, s.std) for s in stats]
    state = list(model.named_state())
    parts.append(struct.pack("<I", len(state)))
    for _, p in state:
        parts.append(struct.pack("<I", p.value.size))
        parts.append(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return (MODEL_MAGIC + struct.pack("<I", MODEL_VERSION) + payload
            + struct.pack("<I", zlib.crc32(payload)))


def decode_model(data: bytes) -> MultiBranchNet:
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    payload, (crc,) = data[8:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ModelFormatError("model checksum mismatch")
    try:
        off = 0
        (alen,) = struct.unpack_from("<I", payload, off)
        off += 4
        arch = json.loads(payload[off:off + alen])
        off += alen
        (nstats,) = struct.unpack_from("<I", payload, off)
        off += 4
        stats = []
        for _ in range(nstats):
            stats.append(NormStats(*struct.unpack_from("<dd", payload, off)))
            off += 16
        model = MultiBranchNet(arch["kind"],
                               [BranchSpec.from_dict(s) for s in arch["branch_specs"]],
                               [tuple(d) for d in arch["input_dims"]], arch["num_classes"],
                               arch["hidden"], arch["seed"], stats or None)
        state = list(model.named_state())
        (narrays,) = struct.unpack_from("<I", payload, off)
        off += 4
        if narrays != len(state):
            raise ModelFormatError(f"file has {narrays} arrays, architecture needs {len(state)}")
        for name, p in state:
            (size,) = struct.unpack_from("<I", payload, off)
            off += 4
            if size != p.value.size:
                raise ModelFormatError(f"array {name}: {size} values, expected {p.value.size}")
            p.value[...] = np.frombuffer(payload, dtype="<f4", count=size,
                                         offset=off).reshape(p.value.shape)
            off += 4 * size
        if off != len(payload):
            raise ModelFormatError("trailing bytes in model payload")
    except (struct.error, KeyError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    return model


def save_model(model: MultiBranchNet, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> MultiBranchNet:
    return decode_model(Path(path).read_bytes())
