"""Encoder and classifier.

The encoder treats a multichannel series as a 2-D plane (sensor channels x
time) carrying a growing stack of feature channels; internal activations have
shape (batch, sensors, features, time). Each block applies four convolutions

    1. pointwise 1x1 feature mixing,
    2. dilated 3-tap convolution along time,
    3. 3-tap convolution across the sensor axis,
    4. depthwise temporal convolution with depth multiplier 2,

with relu after every layer, then halves the temporal axis with a window-2
average pool. Factoring the temporal/cross pair replaces a dense 3x3 kernel
(9 weights per channel pair) with 3 + 3 = 6, a one-third parameter saving.
For univariate input the cross-sensor convolution degenerates to a pointwise
map (kernel extent 1); this is documented behavior, not an error.

After the blocks the temporal axis is collapsed by global average pooling and
a linear layer maps the flattened (sensor, feature) plane to the embedding.
The classifier is a single linear layer from embedding to class logits; no
projection head sits between the encoder output and the losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DimensionError, InputLengthError, SchemaError
from .rng import stream

CHECKPOINT_MAGIC = "semicl-checkpoint v1"


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture hyperparameters of the encoder."""

    in_channels: int = 1
    num_blocks: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    feature_channels: int = 8
    embed_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if len(self.dilations) != self.num_blocks:
            raise ConfigError(
                f"need one dilation per block: {self.num_blocks} blocks but "
                f"{len(self.dilations)} dilations"
            )
        for name in ("in_channels", "feature_channels", "embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(d < 1 for d in self.dilations):
            raise ConfigError(f"dilations must all be >= 1, got {self.dilations}")

    @property
    def min_length(self) -> int:
        """Shortest series that survives one pooling per block."""
        return 2 ** self.num_blocks

    @property
    def block_out_channels(self) -> int:
        return 2 * self.feature_channels

    @property
    def cross_kernel(self) -> int:
        # Degenerates to a pointwise map when there is no sensor axis to mix.
        return 3 if self.in_channels >= 2 else 1


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def factored_pair_weight_count(c_in: int, c_mid: int, c_out: int) -> int:
    """Weights in a 3-tap temporal + 3-tap cross convolution pair."""
    return 3 * c_in * c_mid + 3 * c_mid * c_out


def dense_3x3_weight_count(c_in: int, c_out: int) -> int:
    """Weights in the equivalent single 3x3 convolution."""
    return 9 * c_in * c_out


class EncoderClassifier:
    """Encoder f plus linear classifier g with a flat parameter registry."""

    def __init__(self, config: EncoderConfig, num_classes: int, seed: int = 0):
        if num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {num_classes}")
        self.config = config
        self.num_classes = int(num_classes)
        self.seed = int(seed)
        self._params: dict[str, Tensor] = {}
        self._init_params(stream(self.seed, "init"))

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        f = cfg.feature_channels
        f_in = 1
        for i in range(cfg.num_blocks):
            pre = f"enc.b{i}"
            self._add(f"{pre}.pw.w", kaiming_uniform(rng, (f, f_in, 1), fan_in=f_in))
            self._add(f"{pre}.pw.b", np.zeros(f))
            self._add(f"{pre}.temporal.w", kaiming_uniform(rng, (f, f, 3), fan_in=3 * f))
            self._add(f"{pre}.temporal.b", np.zeros(f))
            ks = cfg.cross_kernel
            self._add(f"{pre}.cross.w", kaiming_uniform(rng, (f, f, ks), fan_in=ks * f))
            self._add(f"{pre}.cross.b", np.zeros(f))
            self._add(f"{pre}.depthwise.w", kaiming_uniform(rng, (f, 2, 3), fan_in=3))
            self._add(f"{pre}.depthwise.b", np.zeros(2 * f))
            f_in = 2 * f
        head_in = cfg.in_channels * cfg.block_out_channels
        self._add("enc.head.w", kaiming_uniform(rng, (head_in, cfg.embed_dim), fan_in=head_in))
        self._add("enc.head.b", np.zeros(cfg.embed_dim))
        self._add("clf.w", kaiming_uniform(rng, (cfg.embed_dim, self.num_classes), fan_in=cfg.embed_dim))
        self._add("clf.b", np.zeros(self.num_classes))

    def parameters(self) -> dict[str, Tensor]:
        """Every trainable tensor, each exactly once, in creation order."""
        return dict(self._params)

    def encoder_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self._params.items() if k.startswith("enc.")}

    def classifier_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self._params.items() if k.startswith("clf.")}

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def encode(self, x) -> Tensor:
        """Map a batch (B, in_channels, L) to embeddings (B, embed_dim)."""
        x = ad.as_tensor(x)
        cfg = self.config
        if x.ndim != 3:
            raise DimensionError(f"encode: expected (B, channels, L), got shape {x.shape}")
        if x.shape[1] != cfg.in_channels:
            raise DimensionError(
                f"encode: input has {x.shape[1]} channels, model expects {cfg.in_channels}"
            )
        if x.shape[2] < cfg.min_length:
            raise InputLengthError(
                f"encode: series length {x.shape[2]} is below the minimum {cfg.min_length} "
                f"needed for {cfg.num_blocks} pooling stages"
            )
        b, s, length = x.shape
        h = ad.reshape(x, (b, s, 1, length))
        p = self._params
        for i in range(cfg.num_blocks):
            pre = f"enc.b{i}"
            h = ad.relu(ad.conv1d(h, p[f"{pre}.pw.w"], p[f"{pre}.pw.b"]))
            d = cfg.dilations[i]
            h = ad.relu(ad.conv1d(h, p[f"{pre}.temporal.w"], p[f"{pre}.temporal.b"],
                                  dilation=d, padding=d))
            if cfg.cross_kernel == 3:
                ht = ad.transpose(h, (0, 3, 2, 1))
                ht = ad.conv1d(ht, p[f"{pre}.cross.w"], p[f"{pre}.cross.b"], padding=1)
                h = ad.relu(ad.transpose(ht, (0, 3, 2, 1)))
            else:
                h = ad.relu(ad.conv1d(h, p[f"{pre}.cross.w"], p[f"{pre}.cross.b"]))
            h = ad.relu(ad.depthwise_conv1d(h, p[f"{pre}.depthwise.w"], p[f"{pre}.depthwise.b"],
                                            padding=1))
            h = ad.avg_pool(h, 2)
        h = ad.mean(h, axis=3)
        h = ad.reshape(h, (b, s * cfg.block_out_channels))
        return ad.add(ad.matmul(h, p["enc.head.w"]), p["enc.head.b"])

    def classify(self, z: Tensor) -> Tensor:
        """Linear logits (B, num_classes) from embeddings (B, embed_dim); no activation."""
        z = ad.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.config.embed_dim:
            raise DimensionError(
                f"classify: expected (B, {self.config.embed_dim}) embeddings, got {z.shape}"
            )
        return ad.add(ad.matmul(z, self._params["clf.w"]), self._params["clf.b"])


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(model: EncoderClassifier, path) -> None:
    """Write a bit-exact checkpoint: text header + raw float64 parameter data."""
    cfg = model.config
    lines = [
        CHECKPOINT_MAGIC,
        f"in_channels={cfg.in_channels}",
        f"num_blocks={cfg.num_blocks}",
        "dilations=" + ",".join(str(d) for d in cfg.dilations),
        f"feature_channels={cfg.feature_channels}",
        f"embed_dim={cfg.embed_dim}",
        f"num_classes={model.num_classes}",
        f"tensors={len(model._params)}",
    ]
    for name, t in model._params.items():
        lines.append(name + " " + " ".join(str(d) for d in t.shape))
    lines.append("DATA")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for t in model._params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> EncoderClassifier:
    """Rebuild a model from `save_checkpoint` output, bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"DATA\n"
    cut = blob.find(marker)
    if cut < 0:
        raise SchemaError(f"checkpoint {path}: missing DATA marker")
    header = blob[:cut].decode("ascii").splitlines()
    payload = blob[cut + len(marker):]
    if not header or header[0] != CHECKPOINT_MAGIC:
        raise SchemaError(f"checkpoint {path}: bad magic line")
    fields = {}
    idx = 1
    while "=" in header[idx]:
        key, val = header[idx].split("=", 1)
        fields[key] = val
        idx += 1
        if idx >= len(header):
            break
    try:
        cfg = EncoderConfig(
            in_channels=int(fields["in_channels"]),
            num_blocks=int(fields["num_blocks"]),
            dilations=tuple(int(d) for d in fields["dilations"].split(",")),
            feature_channels=int(fields["feature_channels"]),
            embed_dim=int(fields["embed_dim"]),
        )
        num_classes = int(fields["num_classes"])
        count = int(fields["tensors"])
    except (KeyError, ValueError) as e:
        raise SchemaError(f"checkpoint {path}: bad header field ({e})") from e
    specs = []
    for line in header[idx:]:
        parts = line.split()
        specs.append((parts[0], tuple(int(d) for d in parts[1:])))
    if len(specs) != count:
        raise SchemaError(f"checkpoint {path}: expected {count} tensors, header lists {len(specs)}")

    model = EncoderClassifier(cfg, num_classes)
    if [s[0] for s in specs] != list(model._params):
        raise SchemaError(f"checkpoint {path}: parameter names do not match this architecture")
    offset = 0
    for name, shape in specs:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += n * 8
        if model._params[name].shape != shape:
            raise SchemaError(
                f"checkpoint {path}: tensor {name} has shape {shape}, expected {model._params[name].shape}"
            )
        model._params[name].data = arr.astype(np.float64)
    return model
