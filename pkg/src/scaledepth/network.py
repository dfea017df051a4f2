"""Toy-scale attention depth network and pose network.

Encoder: four strided stages of large-kernel-attention blocks. A dual
attention head bridges into a decoder of five attention blocks (spatial
attention on skips, channel attention on the fused features), with sigmoid
depth heads on the top four. Everything is sized for desk-scale training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class NetConfig:
    stage_widths: tuple[int, ...] = (16, 32, 64, 96)
    blocks_per_stage: int = 1
    num_scales: int = 4
    min_depth: float = 0.1
    max_depth: float = 100.0
    cam_reduction: int = 4
    lka_kernel: int = 5
    lka_dilated_kernel: int = 7
    lka_dilation: int = 3
    sam_kernel: int = 7
    mlp_ratio: int = 2
    pose_widths: tuple[int, ...] = (16, 32, 64)

    def __post_init__(self):
        if len(self.stage_widths) != 4:
            raise ShapeError("encoder uses exactly four stages")
        if self.num_scales > 4:
            raise ShapeError("at most four decoder blocks carry depth heads")


class Module:
    """Tiny layer container: tracks parameter tensors and child modules."""

    def named_params(self, prefix: str = ""):
        out = []
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                out.append((name, val))
            elif isinstance(val, Module):
                out.extend(val.named_params(prefix=name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_params(prefix=f"{name}.{i}."))
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params()))

    def load_state(self, state: dict):
        for name, p in self.named_params():
            if name not in state:
                raise KeyError(f"missing parameter {name}")
            arr = np.asarray(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != {p.shape}")
            p.data = arr

    def state(self) -> dict:
        return {name: p.data for name, p in self.named_params()}


def _param(arr: np.ndarray) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, rng, stride=1, padding=0, dilation=1, groups=1, bias=True, dtype=np.float32):
        fan_in = cin // groups * kernel * kernel
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = _param(rng.uniform(-bound, bound, (cout, cin // groups, kernel, kernel)).astype(dtype))
        self.bias = _param(np.zeros((cout, 1, 1), dtype=dtype)) if bias else None
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv2d(x, self.weight, self.stride, self.padding, self.dilation, self.groups)
        return out + self.bias if self.bias is not None else out


class Linear(Module):
    def __init__(self, cin, cout, rng, zero_init=False, dtype=np.float32):
        if zero_init:
            w = np.zeros((cout, cin), dtype=dtype)
        else:
            bound = 1.0 / np.sqrt(cin)
            w = rng.uniform(-bound, bound, (cout, cin)).astype(dtype)
        self.weight = _param(w)
        self.bias = _param(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight, self.bias)


class ChannelNorm(Module):
    """Per-sample, per-channel normalization over the spatial extent."""

    EPS = 1e-5

    def __init__(self, channels, dtype=np.float32):
        self.gamma = _param(np.ones((channels, 1, 1), dtype=dtype))
        self.beta = _param(np.zeros((channels, 1, 1), dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        mu = ad.tmean(x, axis=(2, 3), keepdims=True)
        centered = x - mu
        var = ad.tmean(centered * centered, axis=(2, 3), keepdims=True)
        return centered / ad.sqrt(var + self.EPS) * self.gamma + self.beta


def gelu(x: Tensor) -> Tensor:
    inner = 0.7978845608028654 * (x + 0.044715 * (x * x * x))
    return 0.5 * x * (1.0 + ad.tanh(inner))


class LargeKernelAttention(Module):
    """Depthwise 5x5, depthwise dilated 7x7, pointwise 1x1; gates the input."""

    def __init__(self, channels, rng, cfg: NetConfig, dtype=np.float32):
        k, kd, dil = cfg.lka_kernel, cfg.lka_dilated_kernel, cfg.lka_dilation
        self.dw = Conv2d(channels, channels, k, rng, padding=k // 2, groups=channels, dtype=dtype)
        self.dw_dilated = Conv2d(
            channels, channels, kd, rng, padding=dil * (kd - 1) // 2, dilation=dil, groups=channels, dtype=dtype
        )
        self.pw = Conv2d(channels, channels, 1, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.pw(self.dw_dilated(self.dw(x))) * x


class VanBlock(Module):
    """Pre-norm residual block: gated large-kernel attention, then an MLP."""

    LAYER_SCALE_INIT = 1e-2

    def __init__(self, channels, rng, cfg: NetConfig, dtype=np.float32):
        hidden = channels * cfg.mlp_ratio
        self.norm1 = ChannelNorm(channels, dtype)
        self.proj_in = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.lka = LargeKernelAttention(channels, rng, cfg, dtype)
        self.proj_out = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.scale1 = _param(np.full((channels, 1, 1), self.LAYER_SCALE_INIT, dtype=dtype))
        self.norm2 = ChannelNorm(channels, dtype)
        self.mlp_in = Conv2d(channels, hidden, 1, rng, dtype=dtype)
        self.mlp_dw = Conv2d(hidden, hidden, 3, rng, padding=1, groups=hidden, dtype=dtype)
        self.mlp_out = Conv2d(hidden, channels, 1, rng, dtype=dtype)
        self.scale2 = _param(np.full((channels, 1, 1), self.LAYER_SCALE_INIT, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        a = self.proj_out(self.lka(gelu(self.proj_in(self.norm1(x)))))
        x = x + self.scale1 * a
        m = self.mlp_out(gelu(self.mlp_dw(self.mlp_in(self.norm2(x)))))
        return x + self.scale2 * m


class Encoder(Module):
    """Four stages of strided-conv downsampling followed by attention blocks;
    emits feature maps at 1/2, 1/4, 1/8, 1/16 resolution."""

    def __init__(self, rng, cfg: NetConfig, in_channels=3, dtype=np.float32):
        self.downs = []
        self.stages = []
        cin = in_channels
        for width in cfg.stage_widths:
            self.downs.append(Conv2d(cin, width, 3, rng, stride=2, padding=1, dtype=dtype))
            self.stages.append([VanBlock(width, rng, cfg, dtype) for _ in range(cfg.blocks_per_stage)])
            cin = width

    def named_params(self, prefix: str = ""):
        out = []
        for i, d in enumerate(self.downs):
            out.extend(d.named_params(prefix=f"{prefix}down{i}."))
        for i, blocks in enumerate(self.stages):
            for j, b in enumerate(blocks):
                out.extend(b.named_params(prefix=f"{prefix}stage{i}.{j}."))
        return out

    def __call__(self, x: Tensor) -> list[Tensor]:
        if x.shape[-2] % 16 or x.shape[-1] % 16:
            raise ShapeError("input height/width must be divisible by 16")
        feats = []
        for down, blocks in zip(self.downs, self.stages):
            x = down(x)
            for b in blocks:
                x = b(x)
            feats.append(x)
        return feats


class DualAttention(Module):
    """Position and channel self-attention branches summed with the input.

    Both branch gains start at zero, so the module is the identity at
    initialization and learns how much attention to blend in.
    """

    def __init__(self, channels, rng, dtype=np.float32):
        self.query = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.key = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.value = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.gain_pos = _param(np.zeros((), dtype=dtype))
        self.gain_chan = _param(np.zeros((), dtype=dtype))

    def position_attention(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        q = ad.reshape(self.query(x), (n, c, h * w))
        k = ad.reshape(self.key(x), (n, c, h * w))
        v = ad.reshape(self.value(x), (n, c, h * w))
        affinity = ad.matmul(ad.transpose(q, (0, 2, 1)), k)  # (N, HW, HW)
        attn = ad.softmax(affinity, axis=-1)
        mixed = ad.matmul(attn, ad.transpose(v, (0, 2, 1)))  # (N, HW, C)
        return ad.reshape(ad.transpose(mixed, (0, 2, 1)), (n, c, h, w))

    def channel_attention_map(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        f = ad.reshape(x, (n, c, h * w))
        energy = ad.matmul(f, ad.transpose(f, (0, 2, 1)))  # (N, C, C)
        attn = ad.softmax(energy, axis=-1)
        return ad.reshape(ad.matmul(attn, f), (n, c, h, w))

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.gain_pos * self.position_attention(x) + self.gain_chan * self.channel_attention_map(x)


class SpatialAttention(Module):
    """Gate from channel-max and channel-mean maps through a 7x7 conv."""

    def __init__(self, rng, kernel=7, dtype=np.float32):
        self.conv = Conv2d(2, 1, kernel, rng, padding=kernel // 2, dtype=dtype)

    def attention_map(self, x: Tensor) -> Tensor:
        pooled = ad.concat([ad.channel_max(x), ad.channel_mean(x)], axis=1)
        return ad.sigmoid(self.conv(pooled))

    def __call__(self, x: Tensor) -> Tensor:
        return x * self.attention_map(x)


class ChannelAttention(Module):
    """Squeeze-excite gate: global average pool, FC+ReLU, FC+sigmoid."""

    def __init__(self, channels, rng, reduction=4, dtype=np.float32):
        if channels % reduction:
            raise ShapeError("channel count must be divisible by the reduction")
        self.squeeze = Linear(channels, channels // reduction, rng, dtype=dtype)
        self.excite = Linear(channels // reduction, channels, rng, dtype=dtype)

    def attention_vector(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        pooled = ad.reshape(ad.global_avg_pool(x), (n, c))
        return ad.sigmoid(self.excite(ad.relu(self.squeeze(pooled))))

    def __call__(self, x: Tensor) -> Tensor:
        n, c = x.shape[0], x.shape[1]
        return x * ad.reshape(self.attention_vector(x), (n, c, 1, 1))


class DecoderBlock(Module):
    """Decoder step: conv (+2x nearest upsample), spatial-attention skip
    fusion, channel attention over the concatenation, output conv.

    The spatial-attention path is dropped when no encoder skip exists, and
    the bottom block keeps its resolution instead of upsampling.
    """

    def __init__(self, cin, cskip, cout, rng, cfg: NetConfig, upsample=True, dtype=np.float32):
        self.upsample = upsample
        self.cskip = cskip
        self.conv_in = Conv2d(cin, cout, 3, rng, padding=1, dtype=dtype)
        self.sam = SpatialAttention(rng, cfg.sam_kernel, dtype) if cskip else None
        fused = cout + (cskip or 0)
        self.cam = ChannelAttention(fused, rng, cfg.cam_reduction, dtype)
        self.conv_out = Conv2d(fused, cout, 3, rng, padding=1, dtype=dtype)

    def __call__(self, x: Tensor, skip: Tensor | None = None) -> Tensor:
        if (skip is None) != (self.sam is None):
            raise ShapeError("skip features must match the block configuration")
        d = ad.relu(self.conv_in(x))
        if self.upsample:
            d = ad.upsample_nearest_2x(d)
        if skip is not None:
            if skip.shape[-2:] != d.shape[-2:]:
                raise ShapeError("encoder skip resolution must be 2x the decoder input")
            d = ad.concat([self.sam(skip), d], axis=1)
        return ad.relu(self.conv_out(self.cam(d)))


def sigmoid_to_disparity(sig: Tensor, min_depth: float, max_depth: float) -> Tensor:
    """Map a sigmoid activation to inverse depth in [1/max_depth, 1/min_depth]."""
    a = 1.0 / min_depth - 1.0 / max_depth
    b = 1.0 / max_depth
    return a * sig + b


def depth_from_sigmoid(sig: Tensor, min_depth: float = 0.1, max_depth: float = 100.0) -> Tensor:
    """D = 1/(a*sigma + b): monotone decreasing, bounded in (min_depth, max_depth)."""
    return 1.0 / sigmoid_to_disparity(sig, min_depth, max_depth)


class DepthNet(Module):
    """Encoder -> dual attention -> five decoder blocks; sigmoid heads on the
    top four give maps at 1/1, 1/2, 1/4 and 1/8 resolution."""

    # head bias shifts the initial sigmoid so training starts at mid-range
    # depth instead of min_depth-scale outputs
    HEAD_BIAS = -2.5

    def __init__(self, rng, cfg: NetConfig | None = None, dtype=np.float32):
        self.cfg = cfg = cfg or NetConfig()
        w1, w2, w3, w4 = cfg.stage_widths
        self.encoder = Encoder(rng, cfg, dtype=dtype)
        self.dam = DualAttention(w4, rng, dtype=dtype)
        self.blocks = [
            DecoderBlock(w4, None, w4, rng, cfg, upsample=False, dtype=dtype),
            DecoderBlock(w4, w3, w3, rng, cfg, dtype=dtype),
            DecoderBlock(w3, w2, w2, rng, cfg, dtype=dtype),
            DecoderBlock(w2, w1, w1, rng, cfg, dtype=dtype),
            DecoderBlock(w1, None, w1, rng, cfg, dtype=dtype),
        ]
        self.heads = [Conv2d(c, 1, 3, rng, padding=1, dtype=dtype) for c in (w3, w2, w1, w1)]
        for head in self.heads:
            head.bias.data = head.bias.data + np.asarray(self.HEAD_BIAS, dtype=dtype)

    def named_params(self, prefix: str = ""):
        out = self.encoder.named_params(prefix=f"{prefix}encoder.")
        out.extend(self.dam.named_params(prefix=f"{prefix}dam."))
        for i, b in enumerate(self.blocks):
            out.extend(b.named_params(prefix=f"{prefix}block{i}."))
        for i, h in enumerate(self.heads):
            out.extend(h.named_params(prefix=f"{prefix}head{i}."))
        return out

    def __call__(self, image: Tensor) -> list[Tensor]:
        """Returns sigmoid maps ordered fine to coarse: scale i at 1/2^i."""
        feats = self.encoder(image)
        x = self.dam(feats[3])
        x = self.blocks[0](x)
        sigmoids = []
        skips = [feats[2], feats[1], feats[0], None]
        for block, head, skip in zip(self.blocks[1:], [self.heads[0], self.heads[1], self.heads[2], self.heads[3]], skips):
            x = block(x, skip)
            sigmoids.append(ad.sigmoid(head(x)))
        sigmoids.reverse()
        return sigmoids[: self.cfg.num_scales]

    def disparities(self, image: Tensor) -> list[Tensor]:
        return [
            sigmoid_to_disparity(s, self.cfg.min_depth, self.cfg.max_depth) for s in self(image)
        ]


class PoseNet(Module):
    """Strided conv stack over a concatenated image pair; emits a 6-vector
    (axis-angle, translation) per sample, pre-scaled by 0.01."""

    OUTPUT_SCALE = 0.01

    def __init__(self, rng, widths=(16, 32, 64), dtype=np.float32):
        self.convs = []
        cin = 6
        for w in widths:
            self.convs.append(Conv2d(cin, w, 3, rng, stride=2, padding=1, dtype=dtype))
            cin = w
        self.head = Linear(cin, 6, rng, zero_init=True, dtype=dtype)

    def named_params(self, prefix: str = ""):
        out = []
        for i, c in enumerate(self.convs):
            out.extend(c.named_params(prefix=f"{prefix}conv{i}."))
        out.extend(self.head.named_params(prefix=f"{prefix}head."))
        return out

    def __call__(self, target: Tensor, source: Tensor) -> Tensor:
        x = ad.concat([target, source], axis=1)
        for conv in self.convs:
            x = ad.relu(conv(x))
        n, c = x.shape[0], x.shape[1]
        pooled = ad.reshape(ad.global_avg_pool(x), (n, c))
        return self.head(pooled) * self.OUTPUT_SCALE
