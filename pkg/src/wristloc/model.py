"""The adapted vision-language regressor and its conditional router.

Architecture, desk-scale throughout:

* ``ToyBackbone`` -- frozen feature extractor: a small random-weight
  convolutional stack over the RGB frame plus a hashed bag-of-tokens
  embedding of the prompt (numeric tokens contribute their parsed value
  into per-ordinal slots, so the gripper pose stated in the prompt is
  recoverable), concatenated into one feature vector.
* ``QuantizedLinear`` -- the frozen fusion projection, stored as signed
  4-bit blockwise absmax codes.
* ``LoRAAdapter`` -- trainable low-rank delta on the fusion projection;
  B starts at zero so the adapted layer initially equals the base layer.
* regression head -- trainable two-layer perceptron emitting (x, y, z) in
  mm through a fixed affine output calibration to the workspace.

Prompts containing the routing signifier as a whole word are dispatched to
the frozen general path and never touch trainable parameters.
"""

from __future__ import annotations

import enum
import hashlib
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IOFailure, RoutingViolation, SchemaError, VersionError

ROUTING_SIGNIFIER = "question"


# --------------------------------------------------------------------------
# routing
# --------------------------------------------------------------------------

class Route(enum.Enum):
    GENERAL = "general"
    REGRESSION = "regression"


@dataclass(frozen=True)
class RouteDecision:
    path: Route
    matched_signifier: str | None = None

    def __post_init__(self):
        if (self.path is Route.GENERAL) != (self.matched_signifier is not None):
            raise ValueError("matched_signifier must be present exactly on the general path")


def signifier_pattern(signifier: str = ROUTING_SIGNIFIER) -> re.Pattern:
    return re.compile(rf"\b{re.escape(signifier)}\b", re.IGNORECASE)


def route(prompt: str, signifier: str = ROUTING_SIGNIFIER) -> RouteDecision:
    """Dispatch a prompt: whole-word signifier -> general path, else regression."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    match = signifier_pattern(signifier).search(prompt)
    if match:
        return RouteDecision(Route.GENERAL, match.group(0))
    return RouteDecision(Route.REGRESSION, None)


# --------------------------------------------------------------------------
# blockwise 4-bit quantization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedLinear:
    """A linear layer's weights as signed 4-bit codes with per-block scales.

    ``codes`` holds one int8 in [-7, 7] per weight (flattened row-major);
    ``scales`` holds absmax/7 per block of ``block_size`` weights.
    """

    codes: np.ndarray
    scales: np.ndarray
    shape: tuple[int, int]
    block_size: int

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.int8)
        scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        n = int(np.prod(self.shape))
        if codes.shape != (n,):
            raise ValueError(f"codes must hold {n} entries, got {codes.shape}")
        if codes.min(initial=0) < -7 or codes.max(initial=0) > 7:
            raise ValueError("codes must lie in [-7, 7]")
        expected_blocks = -(-n // self.block_size)
        if scales.shape != (expected_blocks,):
            raise ValueError(f"expected {expected_blocks} scales, got {scales.shape}")
        codes.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "scales", scales)

    @property
    def d_out(self) -> int:
        return self.shape[0]

    @property
    def d_in(self) -> int:
        return self.shape[1]


def quantize_linear(weights: np.ndarray, block_size: int = 64) -> QuantizedLinear:
    """Blockwise symmetric absmax quantization to signed 4-bit codes."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weights must be a 2-d matrix")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if block_size < 1:
        raise ValueError("block_size must be at least 1")
    flat = w.ravel()
    n = flat.size
    n_blocks = -(-n // block_size)
    padded = np.zeros(n_blocks * block_size, dtype=np.float64)
    padded[:n] = flat
    blocks = padded.reshape(n_blocks, block_size)
    scales = np.abs(blocks).max(axis=1) / 7.0
    safe = np.where(scales > 0.0, scales, 1.0)
    codes = np.clip(np.rint(blocks / safe[:, None]), -7, 7).astype(np.int8)
    return QuantizedLinear(codes=codes.ravel()[:n], scales=scales,
                           shape=(w.shape[0], w.shape[1]), block_size=block_size)


def dequantize(q: QuantizedLinear) -> np.ndarray:
    """codes * scale per block, reshaped to the original matrix."""
    n = int(np.prod(q.shape))
    padded = np.zeros(q.scales.size * q.block_size, dtype=np.float64)
    padded[:n] = q.codes
    blocks = padded.reshape(q.scales.size, q.block_size)
    return (blocks * q.scales[:, None]).ravel()[:n].reshape(q.shape)


# --------------------------------------------------------------------------
# LoRA adapter
# --------------------------------------------------------------------------

@dataclass
class LoRAAdapter:
    """Trainable low-rank delta: output offset = (alpha/rank) * B @ (A @ x)."""

    A: np.ndarray
    B: np.ndarray
    rank: int
    alpha: float

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


def init_lora_adapter(d_in: int, d_out: int, rank: int = 8, alpha: float = 16.0,
                      rng: np.random.Generator | None = None) -> LoRAAdapter:
    """A from a centered uniform scaled by 1/sqrt(d_in); B all zeros."""
    if rank < 1 or rank > min(d_in, d_out):
        raise ValueError(f"rank {rank} must be in [1, {min(d_in, d_out)}]")
    rng = rng or np.random.default_rng(0)
    a = rng.uniform(-1.0, 1.0, size=(rank, d_in)) / math.sqrt(d_in)
    b = np.zeros((d_out, rank), dtype=np.float64)
    return LoRAAdapter(A=a, B=b, rank=rank, alpha=float(alpha))


def lora_forward(base: QuantizedLinear, adapter: LoRAAdapter, x: np.ndarray) -> np.ndarray:
    """Adapted layer output: dequantized base plus the scaled low-rank delta."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != base.d_in:
        raise DimensionMismatch(f"input dim {x.shape[-1]} != layer d_in {base.d_in}")
    if adapter.A.shape != (adapter.rank, base.d_in) or adapter.B.shape != (base.d_out, adapter.rank):
        raise DimensionMismatch("adapter shape does not match the base layer")
    w = dequantize(base)
    return x @ w.T + adapter.scale * ((x @ adapter.A.T) @ adapter.B.T)


# --------------------------------------------------------------------------
# frozen backbone
# --------------------------------------------------------------------------

def _stable_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


_TOKEN_RE = re.compile(r"-?\d+(?:\.\d+)?|[a-z]+")


@dataclass(frozen=True)
class BackboneConfig:
    image_size: int = 64
    conv_channels: tuple[int, ...] = (8, 12, 12)
    pool_grid: int = 4
    text_dim: int = 64
    numeric_slots: int = 16
    numeric_scale: float = 200.0
    weight_seed: int = 1234

    def __post_init__(self):
        reduced = self.image_size >> len(self.conv_channels)
        if reduced * (1 << len(self.conv_channels)) != self.image_size or reduced % self.pool_grid:
            raise ValueError("image_size must reduce to a multiple of pool_grid")
        if not 0 < self.numeric_slots < self.text_dim:
            raise ValueError("numeric_slots must leave room for word buckets")

    @property
    def image_dim(self) -> int:
        return self.pool_grid * self.pool_grid * self.conv_channels[-1]

    @property
    def feature_dim(self) -> int:
        return self.image_dim + self.text_dim


def _conv3x3(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    h, w, c_in = x.shape
    padded = np.zeros((h + 2, w + 2, c_in), dtype=np.float64)
    padded[1:-1, 1:-1] = x
    s0, s1, s2 = padded.strides
    patches = np.lib.stride_tricks.as_strided(
        padded, shape=(h, w, 3, 3, c_in), strides=(s0, s1, s0, s1, s2), writeable=False)
    flat = patches.reshape(h * w, 9 * c_in)
    k_mat = kernels.transpose(0, 2, 3, 1).reshape(kernels.shape[0], 9 * c_in)
    return (flat @ k_mat.T).reshape(h, w, kernels.shape[0])


def _avgpool2(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    return x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


class ToyBackbone:
    """Frozen multimodal feature extractor; deterministic for a fixed config."""

    def __init__(self, config: BackboneConfig | None = None):
        self.config = config or BackboneConfig()
        rng = np.random.default_rng(np.random.SeedSequence([self.config.weight_seed, 7]))
        chans = (3, *self.config.conv_channels)
        self.kernels: list[np.ndarray] = []
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            k = rng.normal(0.0, math.sqrt(2.0 / (9 * c_in)), size=(c_out, c_in, 3, 3))
            k.flags.writeable = False
            self.kernels.append(k)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        expected = (self.config.image_size, self.config.image_size, 3)
        if image.shape != expected:
            raise DimensionMismatch(f"image shape {image.shape} != expected {expected}")
        x = image - 0.5
        for k in self.kernels:
            x = np.maximum(_conv3x3(x, k), 0.0)
            x = _avgpool2(x)
        g = self.config.pool_grid
        cell = x.shape[0] // g
        grid = x.reshape(g, cell, g, cell, x.shape[2]).mean(axis=(1, 3))
        return 2.0 * grid.ravel()

    def encode_prompt(self, prompt: str) -> np.ndarray:
        vec = np.zeros(self.config.text_dim, dtype=np.float64)
        word_buckets = self.config.text_dim - self.config.numeric_slots
        numeric_index = 0
        for token in _TOKEN_RE.findall(prompt.lower()):
            if token[0].isdigit() or token[0] == "-":
                if numeric_index < self.config.numeric_slots:
                    vec[numeric_index] = float(token) / self.config.numeric_scale
                numeric_index += 1
            else:
                bucket = self.config.numeric_slots + _stable_hash(token) % word_buckets
                vec[bucket] += 0.5
        return vec

    def encode(self, image: np.ndarray, prompt: str) -> np.ndarray:
        return np.concatenate([self.encode_image(image), self.encode_prompt(prompt)])

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(repr(self.config).encode())
        for k in self.kernels:
            digest.update(k.tobytes())
        return digest.hexdigest()


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    rank: int = 8
    alpha: float = 16.0
    hidden_dim: int = 96
    block_size: int = 64
    seed: int = 0
    # fixed affine output calibration: prediction = center + scale * raw
    out_center: tuple[float, float, float] = (0.0, 0.0, 45.0)
    out_scale: tuple[float, float, float] = (120.0, 120.0, 55.0)

    def to_dict(self) -> dict:
        return {
            "backbone": {
                "image_size": self.backbone.image_size,
                "conv_channels": list(self.backbone.conv_channels),
                "pool_grid": self.backbone.pool_grid,
                "text_dim": self.backbone.text_dim,
                "numeric_slots": self.backbone.numeric_slots,
                "numeric_scale": self.backbone.numeric_scale,
                "weight_seed": self.backbone.weight_seed,
            },
            "rank": self.rank,
            "alpha": self.alpha,
            "hidden_dim": self.hidden_dim,
            "block_size": self.block_size,
            "seed": self.seed,
            "out_center": list(self.out_center),
            "out_scale": list(self.out_scale),
        }

    @staticmethod
    def from_dict(data: dict) -> "ModelConfig":
        backbone = data["backbone"]
        return ModelConfig(
            backbone=BackboneConfig(
                image_size=int(backbone["image_size"]),
                conv_channels=tuple(backbone["conv_channels"]),
                pool_grid=int(backbone["pool_grid"]),
                text_dim=int(backbone["text_dim"]),
                numeric_slots=int(backbone["numeric_slots"]),
                numeric_scale=float(backbone["numeric_scale"]),
                weight_seed=int(backbone["weight_seed"]),
            ),
            rank=int(data["rank"]),
            alpha=float(data["alpha"]),
            hidden_dim=int(data["hidden_dim"]),
            block_size=int(data["block_size"]),
            seed=int(data["seed"]),
            out_center=tuple(data["out_center"]),
            out_scale=tuple(data["out_scale"]),
        )


class PositionRegressor:
    """Frozen quantized base plus trainable LoRA adapter and regression head."""

    kind = "lora_regressor"

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.backbone = ToyBackbone(self.config.backbone)
        d = self.config.backbone.feature_dim

        base_rng = np.random.default_rng(
            np.random.SeedSequence([self.config.backbone.weight_seed, 11]))
        base = base_rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, d))
        self.projection = quantize_linear(base, self.config.block_size)
        self._proj_dense = dequantize(self.projection)
        self._proj_dense.flags.writeable = False

        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 13]))
        self.adapter = init_lora_adapter(d, d, self.config.rank, self.config.alpha, rng)
        h = self.config.hidden_dim
        self.head_w1 = rng.uniform(-1.0, 1.0, size=(h, d)) / math.sqrt(d)
        self.head_b1 = np.zeros(h, dtype=np.float64)
        self.head_w2 = 0.1 * rng.uniform(-1.0, 1.0, size=(3, h)) / math.sqrt(h)
        self.head_b2 = np.zeros(3, dtype=np.float64)
        self.out_center = np.asarray(self.config.out_center, dtype=np.float64)
        self.out_scale = np.asarray(self.config.out_scale, dtype=np.float64)
        self.out_center.flags.writeable = False
        self.out_scale.flags.writeable = False

    # feature paths ---------------------------------------------------------

    def features(self, image: np.ndarray, prompt: str) -> np.ndarray:
        return self.backbone.encode(image, prompt)

    def base_project(self, z: np.ndarray) -> np.ndarray:
        """Fusion projection with no adapter contribution."""
        return np.asarray(z, dtype=np.float64) @ self._proj_dense.T

    def project(self, z: np.ndarray) -> np.ndarray:
        """LoRA-adapted fusion projection."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.projection.d_in:
            raise DimensionMismatch(
                f"feature dim {z.shape[-1]} != projection d_in {self.projection.d_in}")
        delta = (z @ self.adapter.A.T) @ self.adapter.B.T
        return z @ self._proj_dense.T + self.adapter.scale * delta

    def head(self, projected: np.ndarray) -> np.ndarray:
        hidden = np.tanh(projected @ self.head_w1.T + self.head_b1)
        raw = hidden @ self.head_w2.T + self.head_b2
        return self.out_center + self.out_scale * raw

    # forward / backward ----------------------------------------------------

    def predict_from_features(self, z: np.ndarray) -> np.ndarray:
        return self.head(self.project(z))

    def forward_train(self, z: np.ndarray):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        xa = z @ self.adapter.A.T
        projected = z @ self._proj_dense.T + self.adapter.scale * (xa @ self.adapter.B.T)
        hidden = np.tanh(projected @ self.head_w1.T + self.head_b1)
        raw = hidden @ self.head_w2.T + self.head_b2
        out = self.out_center + self.out_scale * raw
        return out, (z, xa, projected, hidden)

    def backward(self, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        z, xa, projected, hidden = cache
        draw = grad_out * self.out_scale[None, :]
        g_w2 = draw.T @ hidden
        g_b2 = draw.sum(axis=0)
        d_hidden = draw @ self.head_w2
        d_pre = d_hidden * (1.0 - hidden * hidden)
        g_w1 = d_pre.T @ projected
        g_b1 = d_pre.sum(axis=0)
        d_proj = d_pre @ self.head_w1
        g_b = self.adapter.scale * (d_proj.T @ xa)
        g_a = self.adapter.scale * ((d_proj @ self.adapter.B).T @ z)
        return {"adapter.A": g_a, "adapter.B": g_b,
                "head.w1": g_w1, "head.b1": g_b1,
                "head.w2": g_w2, "head.b2": g_b2}

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        return {"adapter.A": self.adapter.A, "adapter.B": self.adapter.B,
                "head.w1": self.head_w1, "head.b1": self.head_b1,
                "head.w2": self.head_w2, "head.b2": self.head_b2}

    def frozen_fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.backbone.fingerprint().encode())
        digest.update(self.projection.codes.tobytes())
        digest.update(self.projection.scales.tobytes())
        digest.update(self.out_center.tobytes())
        digest.update(self.out_scale.tobytes())
        return digest.hexdigest()


class LinearBaseline:
    """Single linear regression layer over frozen backbone features."""

    kind = "linear_baseline"

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.backbone = ToyBackbone(self.config.backbone)
        d = self.config.backbone.feature_dim
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 17]))
        self.weight = 0.1 * rng.uniform(-1.0, 1.0, size=(3, d)) / math.sqrt(d)
        self.bias = np.zeros(3, dtype=np.float64)
        self.out_center = np.asarray(self.config.out_center, dtype=np.float64)
        self.out_scale = np.asarray(self.config.out_scale, dtype=np.float64)
        self.out_center.flags.writeable = False
        self.out_scale.flags.writeable = False

    def features(self, image: np.ndarray, prompt: str) -> np.ndarray:
        return self.backbone.encode(image, prompt)

    def predict_from_features(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return self.out_center + self.out_scale * (z @ self.weight.T + self.bias)

    def forward_train(self, z: np.ndarray):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        out = self.out_center + self.out_scale * (z @ self.weight.T + self.bias)
        return out, (z,)

    def backward(self, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        (z,) = cache
        draw = grad_out * self.out_scale[None, :]
        return {"linear.w": draw.T @ z, "linear.b": draw.sum(axis=0)}

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        return {"linear.w": self.weight, "linear.b": self.bias}

    def frozen_fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.backbone.fingerprint().encode())
        digest.update(self.out_center.tobytes())
        digest.update(self.out_scale.tobytes())
        return digest.hexdigest()


def trainable_parameter_count(model) -> int:
    return sum(arr.size for arr in model.trainable_parameters().values())


# --------------------------------------------------------------------------
# the two inference paths
# --------------------------------------------------------------------------

def predict_position(model, image: np.ndarray, prompt: str) -> np.ndarray:
    """Regress the named object's 3D position (mm, base frame) from one frame."""
    decision = route(prompt)
    if decision.path is Route.GENERAL:
        raise RoutingViolation(
            f"prompt matched signifier {decision.matched_signifier!r}; "
            "general queries must not reach the regression path")
    z = model.features(image, prompt)
    return np.asarray(model.predict_from_features(z[None, :])[0])


def general_answer(model, image: np.ndarray, prompt: str) -> str:
    """Answer a general query using only frozen components."""
    decision = route(prompt)
    if decision.path is not Route.GENERAL:
        raise RoutingViolation("prompt lacks the signifier; it belongs on the regression path")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB raster, got shape {image.shape}")
    channel_means = image.mean(axis=(0, 1))
    dominant = ("red", "green", "blue")[int(np.argmax(channel_means))]
    return f"General visual query received. The view is dominated by {dominant} tones."


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"WLCK"
CHECKPOINT_VERSION = 1
_DTYPE_TAGS = {"<f8": np.dtype("<f8"), "<i1": np.dtype("<i1")}


def _model_arrays(model) -> dict[str, np.ndarray]:
    arrays = {f"backbone.k{i}": k for i, k in enumerate(model.backbone.kernels)}
    if isinstance(model, PositionRegressor):
        arrays["projection.codes"] = model.projection.codes
        arrays["projection.scales"] = model.projection.scales
    arrays.update(model.trainable_parameters())
    return arrays


def save_checkpoint(model, path) -> None:
    """Single-file checkpoint: JSON header + raw little-endian arrays.

    Layout: magic ``WLCK``, uint32-LE checkpoint version, uint32-LE header
    length, UTF-8 canonical-JSON header, then each array's bytes at the
    offsets recorded in the header.  All multi-byte values little-endian.
    """
    from .dataset import PROMPT_TEMPLATE_VERSION
    from .serialize import canonical_json

    arrays = _model_arrays(model)
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = arrays[name]
        tag = "<i1" if arr.dtype == np.int8 else "<f8"
        blob = np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes()
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = canonical_json({
        "kind": model.kind,
        "model_config": model.config.to_dict(),
        "prompt_template_version": PROMPT_TEMPLATE_VERSION,
        "arrays": entries,
    }).encode("utf-8")
    try:
        with open(path, "wb") as handle:
            handle.write(CHECKPOINT_MAGIC)
            handle.write(struct.pack("<I", CHECKPOINT_VERSION))
            handle.write(struct.pack("<I", len(header)))
            handle.write(header)
            for blob in blobs:
                handle.write(blob)
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Rebuild a model from a checkpoint, verifying its frozen components."""
    import json

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise SchemaError(f"{path} is not a wristloc checkpoint")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    body = raw[12 + header_len:]

    config = ModelConfig.from_dict(header["model_config"])
    kind = header["kind"]
    if kind == PositionRegressor.kind:
        model = PositionRegressor(config)
    elif kind == LinearBaseline.kind:
        model = LinearBaseline(config)
    else:
        raise SchemaError(f"unknown model kind {kind!r}")

    stored = {}
    for entry in header["arrays"]:
        dtype = _DTYPE_TAGS.get(entry["dtype"])
        if dtype is None:
            raise SchemaError(f"unknown dtype tag {entry['dtype']!r}")
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(body[start:start + nbytes], dtype=dtype).reshape(entry["shape"])
        stored[entry["name"]] = arr.astype(np.float64) if dtype.kind == "f" else arr

    expected = _model_arrays(model)
    if set(stored) != set(expected):
        raise SchemaError("checkpoint arrays do not match the model configuration")
    trainable = model.trainable_parameters()
    for name, arr in stored.items():
        if name in trainable:
            np.copyto(trainable[name], arr)
        elif not np.array_equal(np.asarray(expected[name]), arr):
            raise SchemaError(f"frozen array {name!r} differs from its configured value")
    return model
