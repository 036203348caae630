"""Classifier architecture: a small inception-style backbone with batch
normalization everywhere, global average pooling, and a configurable
fully-connected head ending in a 3-way softmax.

Two backbone profiles matter in practice: the full profile (299x299 input,
width multiplier 1.0) and the desk profile returned by
:func:`desk_backbone` (75x75 input, width multiplier 0.25), which keeps the
same topology at a fraction of the cost so the whole training pipeline runs
on a CPU in minutes.

Parameter names are stable dotted paths ("backbone.stem.0.conv.weight",
"head.fc1.bias", ...) shared by the checkpoint format and the freeze /
unfreeze machinery.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, ParameterError, ShapeError, UsageError
from .rng import SplitMix64


def _scaled(base: int, mult: float) -> int:
    """Channel width under a multiplier, never rounded below 1."""
    return max(1, int(round(base * mult)))


def _he_uniform(rng: SplitMix64, fan_in: int, shape: tuple) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, shape=shape).astype(np.float32)


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class InceptionWidths:
    """Output channels of each branch of one inception block (before the
    width multiplier is applied)."""

    b1x1: int = 32
    b3x3_reduce: int = 24
    b3x3: int = 48
    b5x5_reduce: int = 16
    b5x5: int = 24
    b7x7_reduce: int = 16
    b7x7: int = 24
    pool_proj: int = 16


@dataclass(frozen=True)
class BackboneConfig:
    """Shape of the convolutional feature extractor.

    The stem is a chain of 3x3 conv+norm+relu units (first one stride 2);
    after it come ``num_blocks`` inception blocks.  Blocks listed in
    ``factorized_blocks`` (1-based) carry the extra 1x7/7x1 branch.
    """

    input_size: int = 299
    in_channels: int = 3
    width_mult: float = 1.0
    stem_channels: tuple = (32, 32, 64)
    stem_strides: tuple = (2, 1, 2)
    num_blocks: int = 4
    factorized_blocks: tuple = (2, 4)
    widths: InceptionWidths = field(default_factory=InceptionWidths)

    def validate(self) -> None:
        if self.input_size < 8:
            raise ConfigError(f"input_size must be >= 8, got {self.input_size}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.width_mult <= 0:
            raise ConfigError(f"width_mult must be positive, got {self.width_mult}")
        if len(self.stem_channels) != len(self.stem_strides) or not self.stem_channels:
            raise ConfigError(
                f"stem_channels {self.stem_channels} and stem_strides {self.stem_strides} "
                "must be non-empty and the same length"
            )
        if any(s < 1 for s in self.stem_strides):
            raise ConfigError(f"stem strides must be >= 1, got {self.stem_strides}")
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        bad = [b for b in self.factorized_blocks if not 1 <= b <= self.num_blocks]
        if bad:
            raise ConfigError(
                f"factorized_blocks {self.factorized_blocks} outside 1..{self.num_blocks}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        d = dict(d)
        if "widths" in d and isinstance(d["widths"], dict):
            d["widths"] = InceptionWidths(**d["widths"])
        for key in ("stem_channels", "stem_strides", "factorized_blocks"):
            if key in d:
                d[key] = tuple(d[key])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def desk_backbone() -> BackboneConfig:
    """Quarter-width 75x75 profile: same topology, CPU-friendly cost."""
    return BackboneConfig(input_size=75, width_mult=0.25)


@dataclass(frozen=True)
class HeadConfig:
    """Fully-connected classifier head on top of pooled features."""

    hidden_units: int = 128
    hidden_layers: int = 2
    dropout_rate: float = 0.5
    num_classes: int = 3

    def validate(self) -> None:
        if self.hidden_layers < 0:
            raise ConfigError(f"hidden_layers must be >= 0, got {self.hidden_layers}")
        if self.hidden_layers > 0 and self.hidden_units < 1:
            raise ConfigError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


# -- layers -----------------------------------------------------------------------


class Conv2d:
    """Convolution with bias; weights drawn He-uniform from the given stream."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: tuple,
                 stride: int, padding, rng: SplitMix64):
        kh, kw = kernel
        self.stride = stride
        self.padding = padding
        self.weight = T.Parameter(
            name + ".weight",
            T.Tensor(_he_uniform(rng, in_ch * kh * kw, (out_ch, in_ch, kh, kw))),
        )
        self.bias = T.Parameter(name + ".bias", T.Tensor(np.zeros(out_ch, dtype=np.float32)))

    def forward(self, x: T.Tensor) -> T.Tensor:
        return T.conv2d(x, self.weight.tensor, self.bias.tensor, self.stride, self.padding)

    def parameters(self) -> list:
        return [self.weight, self.bias]


class BatchNorm2d:
    """Per-channel normalization layer.

    When its parameters are frozen the layer normalizes by the running
    statistics even in train mode and stops updating them, so a frozen
    feature extractor behaves exactly as it will at inference time.
    """

    def __init__(self, name: str, channels: int):
        self.name = name
        self.gamma = T.Parameter(name + ".gamma", T.Tensor(np.ones(channels, dtype=np.float32)))
        self.beta = T.Parameter(name + ".beta", T.Tensor(np.zeros(channels, dtype=np.float32)))
        self.state = T.BatchNormState(channels, np.float32)

    def forward(self, x: T.Tensor, mode: str) -> T.Tensor:
        effective = "train" if (mode == "train" and self.gamma.trainable) else "eval"
        return T.batch_norm2d(x, self.gamma.tensor, self.beta.tensor, self.state, effective)

    def parameters(self) -> list:
        return [self.gamma, self.beta]

    def buffers(self) -> list:
        return [
            (self.name + ".running_mean", self.state.running_mean),
            (self.name + ".running_var", self.state.running_var),
        ]


class ConvBnRelu:
    """conv -> batch norm -> relu, the unit every backbone path is built from."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: tuple,
                 stride: int, padding, rng: SplitMix64):
        self.conv = Conv2d(name + ".conv", in_ch, out_ch, kernel, stride, padding, rng)
        self.bn = BatchNorm2d(name + ".bn", out_ch)

    def forward(self, x: T.Tensor, mode: str) -> T.Tensor:
        return T.relu(self.bn.forward(self.conv.forward(x), mode))

    def parameters(self) -> list:
        return self.conv.parameters() + self.bn.parameters()

    def buffers(self) -> list:
        return self.bn.buffers()


class Linear:
    """Affine layer; weight is [in_features, out_features]."""

    def __init__(self, name: str, in_features: int, out_features: int, rng: SplitMix64):
        self.weight = T.Parameter(
            name + ".weight", T.Tensor(_he_uniform(rng, in_features, (in_features, out_features)))
        )
        self.bias = T.Parameter(name + ".bias", T.Tensor(np.zeros(out_features, dtype=np.float32)))

    def forward(self, x: T.Tensor) -> T.Tensor:
        return T.linear(x, self.weight.tensor, self.bias.tensor)

    def parameters(self) -> list:
        return [self.weight, self.bias]


class InceptionBlock:
    """Parallel conv branches concatenated along channels.

    Branch order in the output is fixed: 1x1, 3x3 (behind a 1x1 reduce),
    5x5 (behind a reduce), optionally 1x7 then 7x1 (behind a reduce), and
    an averaging pool followed by a 1x1 projection.  Spatial size is
    preserved by every branch.
    """

    def __init__(self, name: str, in_ch: int, widths: InceptionWidths,
                 mult: float, factorized: bool, rng: SplitMix64):
        s = lambda v: _scaled(v, mult)
        self.factorized = factorized
        self.b1 = ConvBnRelu(name + ".b1x1", in_ch, s(widths.b1x1), (1, 1), 1, 0, rng)
        self.b3_reduce = ConvBnRelu(name + ".b3x3.reduce", in_ch, s(widths.b3x3_reduce),
                                    (1, 1), 1, 0, rng)
        self.b3 = ConvBnRelu(name + ".b3x3.conv", s(widths.b3x3_reduce), s(widths.b3x3),
                             (3, 3), 1, 1, rng)
        self.b5_reduce = ConvBnRelu(name + ".b5x5.reduce", in_ch, s(widths.b5x5_reduce),
                                    (1, 1), 1, 0, rng)
        self.b5 = ConvBnRelu(name + ".b5x5.conv", s(widths.b5x5_reduce), s(widths.b5x5),
                             (5, 5), 1, 2, rng)
        if factorized:
            self.b7_reduce = ConvBnRelu(name + ".b7x7.reduce", in_ch, s(widths.b7x7_reduce),
                                        (1, 1), 1, 0, rng)
            self.b7_row = ConvBnRelu(name + ".b7x7.row", s(widths.b7x7_reduce), s(widths.b7x7),
                                     (1, 7), 1, (0, 3), rng)
            self.b7_col = ConvBnRelu(name + ".b7x7.col", s(widths.b7x7), s(widths.b7x7),
                                     (7, 1), 1, (3, 0), rng)
        self.pool_proj = ConvBnRelu(name + ".pool.proj", in_ch, s(widths.pool_proj),
                                    (1, 1), 1, 0, rng)
        self.out_channels = (
            s(widths.b1x1) + s(widths.b3x3) + s(widths.b5x5) + s(widths.pool_proj)
            + (s(widths.b7x7) if factorized else 0)
        )

    def forward(self, x: T.Tensor, mode: str) -> T.Tensor:
        branches = [
            self.b1.forward(x, mode),
            self.b3.forward(self.b3_reduce.forward(x, mode), mode),
            self.b5.forward(self.b5_reduce.forward(x, mode), mode),
        ]
        if self.factorized:
            branches.append(
                self.b7_col.forward(self.b7_row.forward(self.b7_reduce.forward(x, mode), mode),
                                    mode)
            )
        branches.append(self.pool_proj.forward(T.pool2d(x, "avg", 3, 1, padding=1), mode))
        return T.concat_channels(branches)

    def _units(self) -> list:
        units = [self.b1, self.b3_reduce, self.b3, self.b5_reduce, self.b5]
        if self.factorized:
            units += [self.b7_reduce, self.b7_row, self.b7_col]
        units.append(self.pool_proj)
        return units

    def parameters(self) -> list:
        return [p for u in self._units() for p in u.parameters()]

    def buffers(self) -> list:
        return [b for u in self._units() for b in u.buffers()]


# -- full model ---------------------------------------------------------------------


class Model:
    """Backbone + pooled features + fully-connected head.

    ``forward`` returns class probabilities; ``forward_logits`` stops
    before the softmax so the fused cross-entropy can consume it.  Dropout
    (train mode only) needs an explicit generator.
    """

    def __init__(self, backbone_config: BackboneConfig, head_config: HeadConfig, seed: int):
        backbone_config.validate()
        head_config.validate()
        self.backbone_config = backbone_config
        self.head_config = head_config
        self.seed = seed
        rng = SplitMix64(seed).derive("init")

        bc = backbone_config
        self.stem = []
        in_ch = bc.in_channels
        for i, (ch, stride) in enumerate(zip(bc.stem_channels, bc.stem_strides)):
            out_ch = _scaled(ch, bc.width_mult)
            self.stem.append(
                ConvBnRelu(f"backbone.stem.{i}", in_ch, out_ch, (3, 3), stride, 1, rng)
            )
            in_ch = out_ch
        self.blocks = []
        for b in range(1, bc.num_blocks + 1):
            block = InceptionBlock(f"backbone.block{b}", in_ch, bc.widths, bc.width_mult,
                                   b in bc.factorized_blocks, rng)
            self.blocks.append(block)
            in_ch = block.out_channels
        self.feature_dim = in_ch

        hc = head_config
        self.fcs = []
        f_in = self.feature_dim
        for i in range(1, hc.hidden_layers + 1):
            self.fcs.append(Linear(f"head.fc{i}", f_in, hc.hidden_units, rng))
            f_in = hc.hidden_units
        self.out = Linear("head.out", f_in, hc.num_classes, rng)
        self.dropout_rate = hc.dropout_rate

        names = [p.name for p in self.parameters()]
        assert len(names) == len(set(names)), "parameter names must be unique"

    # -- inference ------------------------------------------------------------

    def _check_input(self, x: T.Tensor) -> None:
        bc = self.backbone_config
        if x.data.ndim != 4 or x.shape[1] != bc.in_channels or \
                x.shape[2] != bc.input_size or x.shape[3] != bc.input_size:
            raise ShapeError(
                f"model input must be [N,{bc.in_channels},{bc.input_size},{bc.input_size}], "
                f"got {x.shape}"
            )
        if x.dtype != np.float32:
            raise ParameterError(f"model input must be float32, got {x.dtype}")

    def features(self, x: T.Tensor, mode: str = "eval") -> T.Tensor:
        self._check_input(x)
        if mode not in ("train", "eval"):
            raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
        y = x
        for unit in self.stem:
            y = unit.forward(y, mode)
        for block in self.blocks:
            y = block.forward(y, mode)
        return T.global_avg_pool(y)

    def forward_logits(self, x: T.Tensor, mode: str = "eval",
                       rng: Optional[SplitMix64] = None) -> T.Tensor:
        y = self.features(x, mode)
        for fc in self.fcs:
            y = T.relu(fc.forward(y))
        if self.fcs and self.dropout_rate > 0.0:
            if mode == "train" and rng is None:
                raise UsageError("train-mode forward with dropout needs a generator")
            y = T.dropout(y, self.dropout_rate, mode, rng)
        return self.out.forward(y)

    def forward(self, x: T.Tensor, mode: str = "eval",
                rng: Optional[SplitMix64] = None) -> T.Tensor:
        return T.softmax(self.forward_logits(x, mode, rng))

    # -- parameter plumbing ------------------------------------------------------

    def _units(self) -> list:
        return list(self.stem) + list(self.blocks)

    def parameters(self) -> list:
        params = [p for u in self._units() for p in u.parameters()]
        for fc in self.fcs:
            params += fc.parameters()
        params += self.out.parameters()
        return params

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def buffers(self) -> list:
        return [b for u in self._units() for b in u.buffers()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.tensor.zero_grad()

    def set_trainable(self, prefix: str, flag: bool) -> int:
        """Toggle every parameter whose name starts with ``prefix``.

        Returns how many parameters changed state; asking for a prefix that
        matches nothing is almost always a typo, so that raises.
        """
        matched = [p for p in self.parameters() if p.name.startswith(prefix)]
        if not matched:
            raise ParameterError(f"no parameter names start with {prefix!r}")
        changed = 0
        for p in matched:
            if p.trainable != flag:
                p.trainable = flag
                changed += 1
        return changed

    def trainable_parameters(self) -> list:
        return [p for p in self.parameters() if p.trainable]

    def num_parameters(self, trainable_only: bool = False) -> int:
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return int(sum(p.data.size for p in params))


def build_model(backbone_config: Optional[BackboneConfig] = None,
                head_config: Optional[HeadConfig] = None, seed: int = 0) -> Model:
    """Construct a model with seeded He-uniform weights.

    Defaults give the full-size profile; pass :func:`desk_backbone` for the
    CPU-scale variant.  The same (configs, seed) triple always yields
    bit-identical initial weights.
    """
    return Model(backbone_config or BackboneConfig(), head_config or HeadConfig(), seed)
