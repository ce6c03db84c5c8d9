"""Noise-prediction U-Net.

Consumes the channel concatenation of the noisy target latent (c channels)
and the context block (3c channels), conditioned on the timestep through
per-block projections of a sinusoidal embedding and on the semantic vector
through single-token cross-attention at the coarse levels. Cross-attention
projections are bias-free so a zero (null) embedding contributes exactly
nothing, which keeps the unconditional pathway well-defined.
"""

import dataclasses
import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import IncompatibleCheckpointError, ShapeMismatchError


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 4  # c; input layer sees 4c
    base_width: int = 64
    depth: int = 3
    channel_mults: tuple = (1, 2, 4)
    res_blocks_per_level: int = 2
    attention_levels: tuple = (1, 2)  # level 0 is full resolution
    time_embed_dim: int = 256
    semantic_dim: int = 512
    cross_attention: bool = True

    @property
    def in_channels(self):
        return 4 * self.latent_channels

    @property
    def out_channels(self):
        return self.latent_channels

    def __post_init__(self):
        if len(self.channel_mults) != self.depth:
            raise ValueError("channel_mults length must equal depth")
        if any(l >= self.depth for l in self.attention_levels):
            raise ValueError("attention level beyond depth")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["channel_mults"] = list(self.channel_mults)
        d["attention_levels"] = list(self.attention_levels)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["channel_mults"] = tuple(d["channel_mults"])
        d["attention_levels"] = tuple(d["attention_levels"])
        return DenoiserConfig(**d)


def timestep_features(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of (possibly fractional) timesteps; t shape (B,)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / (half - 1))
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _norm(ch):
    return nn.GroupNorm(min(8, ch), ch)


def _damp_residual(layer, scale=0.1):
    """Shrink a residual branch's final layer: near-noop at init while keeping
    every upstream parameter reachable by nonzero gradients."""
    with torch.no_grad():
        layer.weight.mul_(scale)
        if layer.bias is not None:
            layer.bias.zero_()


class ResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, time_dim):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        _damp_residual(self.conv2)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    """Self-attention over pixels plus optional cross-attention on the
    semantic embedding. The embedding enters as a single token, so softmax
    attention over it degenerates to broadcasting its value projection;
    the projections are bias-free so a null (zero) embedding is a no-op.
    """

    def __init__(self, ch, semantic_dim, cross=True):
        super().__init__()
        self.norm = _norm(ch)
        self.qkv = nn.Conv2d(ch, 3 * ch, 1)
        self.proj = nn.Conv2d(ch, ch, 1)
        _damp_residual(self.proj)
        self.cross = cross
        if cross:
            self.to_v = nn.Linear(semantic_dim, ch, bias=False)
            self.cross_proj = nn.Conv2d(ch, ch, 1, bias=False)
            _damp_residual(self.cross_proj)

    def forward(self, x, emb):
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, c, h * w)
        q, k, v = qkv.unbind(1)
        attn = torch.softmax(torch.einsum("bci,bcj->bij", q, k) / math.sqrt(c), dim=-1)
        out = torch.einsum("bij,bcj->bci", attn, v).reshape(b, c, h, w)
        x = x + self.proj(out)
        if self.cross and emb is not None:
            v_tok = self.to_v(emb)[:, :, None, None]
            x = x + self.cross_proj(v_tok.expand(b, c, h, w))
        return x


class UNetDenoiser(nn.Module):
    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cw = config.base_width
        time_dim = config.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim),
            nn.SiLU(),
            nn.Linear(time_dim, time_dim),
        )
        widths = [cw * m for m in config.channel_mults]

        self.stem = nn.Conv2d(config.in_channels, widths[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.down_attns = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chs = [widths[0]]
        ch = widths[0]
        for level, w in enumerate(widths):
            blocks, attns = nn.ModuleList(), nn.ModuleList()
            for _ in range(config.res_blocks_per_level):
                blocks.append(ResBlock(ch, w, time_dim))
                ch = w
                attns.append(
                    AttentionBlock(w, config.semantic_dim, cross=config.cross_attention)
                    if level in config.attention_levels
                    else None
                )
                skip_chs.append(ch)
            self.down_blocks.append(blocks)
            self.down_attns.append(attns)
            if level < config.depth - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chs.append(ch)
            else:
                self.downsamples.append(None)

        self.mid_block1 = ResBlock(ch, ch, time_dim)
        self.mid_attn = AttentionBlock(ch, config.semantic_dim, cross=config.cross_attention)
        self.mid_block2 = ResBlock(ch, ch, time_dim)

        self.up_blocks = nn.ModuleList()
        self.up_attns = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(config.depth)):
            w = widths[level]
            blocks, attns = nn.ModuleList(), nn.ModuleList()
            for _ in range(config.res_blocks_per_level + 1):
                blocks.append(ResBlock(ch + skip_chs.pop(), w, time_dim))
                ch = w
                attns.append(
                    AttentionBlock(w, config.semantic_dim, cross=config.cross_attention)
                    if level in config.attention_levels
                    else None
                )
            self.up_blocks.append(blocks)
            self.up_attns.append(attns)
            self.upsamples.append(
                nn.ConvTranspose2d(ch, ch, 4, stride=2, padding=1) if level > 0 else None
            )

        self.out_norm = _norm(ch)
        self.out_conv = nn.Conv2d(ch, config.out_channels, 3, padding=1)

    def forward(self, z_cat: torch.Tensor, i: torch.Tensor, emb: torch.Tensor | None = None):
        """z_cat: (B, 4c, h, w); i: (B,) 1-based timesteps; emb: (B, d) or None."""
        cfg = self.config
        if z_cat.shape[1] != cfg.in_channels:
            raise ShapeMismatchError(f"expected {cfg.in_channels} input channels, got {z_cat.shape[1]}")
        stride = 2 ** (cfg.depth - 1)
        if z_cat.shape[-1] % stride or z_cat.shape[-2] % stride:
            raise ShapeMismatchError(f"spatial dims {tuple(z_cat.shape[-2:])} not divisible by {stride}")
        if emb is None:
            emb = torch.zeros(z_cat.shape[0], cfg.semantic_dim, dtype=z_cat.dtype)

        t = self.time_mlp(timestep_features(i, cfg.time_embed_dim))
        h = self.stem(z_cat)
        skips = [h]
        for level in range(cfg.depth):
            for block, attn in zip(self.down_blocks[level], self.down_attns[level]):
                h = block(h, t)
                if attn is not None:
                    h = attn(h, emb)
                skips.append(h)
            if self.downsamples[level] is not None:
                h = self.downsamples[level](h)
                skips.append(h)

        h = self.mid_block1(h, t)
        h = self.mid_attn(h, emb)
        h = self.mid_block2(h, t)

        for stage in range(cfg.depth):
            for block, attn in zip(self.up_blocks[stage], self.up_attns[stage]):
                h = block(torch.cat([h, skips.pop()], dim=1), t)
                if attn is not None:
                    h = attn(h, emb)
            if self.upsamples[stage] is not None:
                h = self.upsamples[stage](h)

        return self.out_conv(F.silu(self.out_norm(h)))

    def param_count(self):
        return sum(p.numel() for p in self.parameters())


def init_denoiser(config: DenoiserConfig, init_mode: str = "random", seed: int = 0, state_dict=None):
    """Build a denoiser deterministically; 'from_checkpoint' loads given weights."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = UNetDenoiser(config)
    if init_mode == "from_checkpoint":
        if state_dict is None:
            raise IncompatibleCheckpointError("from_checkpoint requires a state dict")
        try:
            net.load_state_dict(state_dict)
        except RuntimeError as e:
            raise IncompatibleCheckpointError(str(e)) from e
    elif init_mode != "random":
        raise ValueError(f"unknown init mode {init_mode!r}")
    return net
