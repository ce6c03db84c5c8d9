"""Diffusion mathematics: schedule, forward noising, conditioning assembly,
conditioning dropout, training loss, classifier-free guidance, and sampling.

Timesteps are 1-based: i runs over {1..T} and alpha_bar(0) is defined as 1.
All stochastic decisions are drawn from explicitly passed numpy Generators;
torch is used only for deterministic tensor math, so fixed seeds give
bit-identical results across runs.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import torch

from .codec import Codec, LatentCode, image_to_tensor, mask_to_signed_tensor
from .errors import (
    InvalidTimestepCountError,
    ShapeMismatchError,
    TimestepOutOfRangeError,
)

DEFAULT_T = 1000
DEFAULT_GUIDANCE = 2.5


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    kind: str
    betas: np.ndarray  # index i-1 holds beta_i
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def _check(self, i):
        if not 1 <= i <= self.T:
            raise TimestepOutOfRangeError(f"timestep {i} outside [1, {self.T}]")

    def beta(self, i):
        self._check(i)
        return float(self.betas[i - 1])

    def alpha(self, i):
        self._check(i)
        return float(self.alphas[i - 1])

    def alpha_bar(self, i):
        if i == 0:
            return 1.0
        self._check(i)
        return float(self.alpha_bars[i - 1])

    def to_dict(self):
        return {"T": self.T, "kind": self.kind}


def make_schedule(T: int, kind: str = "linear", beta_start=None, beta_end=None) -> NoiseSchedule:
    """Build a noise schedule; defaults scale the classic linear endpoints
    (1e-4, 0.02 at T=1000) so terminal alpha_bar stays < 0.01 for any T."""
    if T < 10:
        raise InvalidTimestepCountError(f"T={T} must be >= 10")
    if kind == "linear":
        scale = 1000.0 / T
        bs = 1e-4 * scale if beta_start is None else beta_start
        be = 0.02 * scale if beta_end is None else beta_end
        bs = min(bs, 0.5)
        be = min(be, 0.999)
        betas = np.linspace(bs, be, T, dtype=np.float64)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1, dtype=np.float64) / T
        bars = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        bars /= bars[0]
        betas = np.clip(1.0 - bars[1:] / bars[:-1], 1e-8, 0.999)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    sched = NoiseSchedule(T=T, kind=kind, betas=betas, alphas=alphas, alpha_bars=alpha_bars)
    if not (0.0 < betas[0] < betas[-1] < 1.0):
        raise InvalidTimestepCountError(f"degenerate beta range for T={T}")
    if not (np.diff(alpha_bars) < 0).all() or alpha_bars[-1] >= 0.01:
        raise InvalidTimestepCountError(f"schedule invariants violated for T={T} kind={kind}")
    return sched


def _gather_coeffs(schedule, i, like: torch.Tensor):
    """sqrt(abar_i), sqrt(1-abar_i) broadcast against a (B, ...) tensor."""
    idx = np.atleast_1d(np.asarray(i, dtype=np.int64))
    if idx.min() < 1 or idx.max() > schedule.T:
        raise TimestepOutOfRangeError(f"timesteps {idx} outside [1, {schedule.T}]")
    bars = schedule.alpha_bars[idx - 1]
    shape = (-1,) + (1,) * (like.dim() - 1)
    a = torch.from_numpy(np.sqrt(bars)).float().reshape(shape)
    b = torch.from_numpy(np.sqrt(1.0 - bars)).float().reshape(shape)
    return a, b


def q_sample(z0: torch.Tensor, i, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Forward process: sqrt(abar_i) * z0 + sqrt(1 - abar_i) * eps.

    Accepts a single (c, h, w) latent with scalar i, or a batch (B, c, h, w)
    with per-element timesteps.
    """
    if z0.shape != eps.shape:
        raise ShapeMismatchError(f"z0 {tuple(z0.shape)} vs eps {tuple(eps.shape)}")
    batched = z0.dim() == 4
    zb = z0 if batched else z0.unsqueeze(0)
    eb = eps if batched else eps.unsqueeze(0)
    a, b = _gather_coeffs(schedule, i, zb)
    out = a * zb + b * eb
    return out if batched else out[0]


# ---------------------------------------------------------------------------
# conditioning


@dataclass
class ContextBlock:
    data: torch.Tensor  # (3c, h, w)
    null: bool = False


@dataclass
class SemanticEmbedding:
    vector: torch.Tensor  # (d,)
    null: bool = False


@dataclass(frozen=True)
class SampleConfig:
    steps: int = 50
    guidance_scale: float = DEFAULT_GUIDANCE
    seed: int = 0
    sampler: str = "deterministic"  # deterministic | ancestral

    def to_dict(self):
        return dataclasses.asdict(self)


def null_context(c: int, h: int, w: int) -> ContextBlock:
    return ContextBlock(data=torch.zeros(3 * c, h, w), null=True)


def null_embedding(d: int) -> SemanticEmbedding:
    return SemanticEmbedding(vector=torch.zeros(d), null=True)


def assemble_context_batch(x_t, h_t, h_t1, codec: Codec, embedder=None):
    """Batched tensors in, (B, 3c, h, w) context and (B, d) embedding out.

    x_t: (B, 3, H, W) in [-1, 1]; h_t, h_t1: (B, 1, H, W) in {0, 1}.
    Channel order is fixed: image latent, current mask, query mask.
    """
    with torch.no_grad():
        zi = codec.encode_batch(x_t)
        zm = codec.encode_mask_batch(h_t)
        zq = codec.encode_mask_batch(h_t1)
        ctx = torch.cat([zi, zm, zq], dim=1)
        if embedder is None:
            emb = torch.zeros(x_t.shape[0], 0)
        else:
            emb = embedder.embed_batch(x_t)
    return ctx, emb


def assemble_context(x_t: np.ndarray, h_t: np.ndarray, h_t1: np.ndarray, codec: Codec, embedder=None):
    """Single-sample context assembly from numpy arrays (spec contract path)."""
    if x_t.shape[:2] != h_t.shape or x_t.shape[:2] != h_t1.shape:
        raise ShapeMismatchError("image and masks must share H x W")
    mask_to_signed_tensor(h_t)  # binarity check
    mask_to_signed_tensor(h_t1)
    xb = image_to_tensor(x_t).unsqueeze(0)
    hb = torch.from_numpy(np.asarray(h_t)).unsqueeze(0).unsqueeze(0)
    qb = torch.from_numpy(np.asarray(h_t1)).unsqueeze(0).unsqueeze(0)
    ctx, emb = assemble_context_batch(xb, hb, qb, codec, embedder)
    if embedder is None:
        embedding = SemanticEmbedding(vector=torch.zeros(0), null=True)
    else:
        embedding = SemanticEmbedding(vector=emb[0], null=False)
    return ContextBlock(data=ctx[0], null=False), embedding


def drop_conditioning(ctx: ContextBlock, emb: SemanticEmbedding, p: float, rng) -> tuple:
    """With probability p, jointly replace both signals by their null forms."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    if rng.random() < p:
        c3, h, w = ctx.data.shape
        return null_context(c3 // 3, h, w), null_embedding(emb.vector.shape[0])
    return ctx, emb


def drop_conditioning_batch(ctx: torch.Tensor, emb: torch.Tensor, p: float, rng):
    """One coin per example; dropped rows are zeroed in both tensors.

    Returns (ctx, emb, dropped) where dropped is a (B,) bool array.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    dropped = rng.random(ctx.shape[0]) < p
    if dropped.any():
        keep = torch.from_numpy(~dropped).float().reshape(-1, 1, 1, 1)
        ctx = ctx * keep
        emb = emb * keep.reshape(-1, 1)
    return ctx, emb, dropped


# ---------------------------------------------------------------------------
# training loss


def loss_from_latents(z0, ctx, emb, denoiser, schedule, p_drop, rng):
    """Core epsilon-prediction MSE on precomputed latents (B, c, h, w)."""
    bsz = z0.shape[0]
    i = rng.integers(1, schedule.T + 1, size=bsz)
    eps = torch.from_numpy(rng.standard_normal(tuple(z0.shape))).float()
    ctx, emb, dropped = drop_conditioning_batch(ctx, emb, p_drop, rng)
    z_i = q_sample(z0, i, eps, schedule)
    pred = denoiser(torch.cat([z_i, ctx], dim=1), torch.from_numpy(i), emb)
    return torch.mean((pred - eps) ** 2), dropped


def training_loss(samples, denoiser, codec: Codec, schedule: NoiseSchedule, p_drop: float, rng, embedder=None):
    """Batch objective: E || eps - eps_theta(z_i ++ c_i, i, tau) ||^2 / n_elements.

    ``samples`` is a nonempty sequence of FramePairSample. Differentiable
    w.r.t. denoiser parameters; codec and embedder stay frozen.
    """
    if len(samples) == 0:
        raise ValueError("empty batch")
    x_t = torch.from_numpy(np.stack([s.x_t for s in samples]).transpose(0, 3, 1, 2)).float()
    x_t1 = torch.from_numpy(np.stack([s.x_t1 for s in samples]).transpose(0, 3, 1, 2)).float()
    h_t = torch.from_numpy(np.stack([s.h_t for s in samples])).unsqueeze(1)
    h_t1 = torch.from_numpy(np.stack([s.h_t1 for s in samples])).unsqueeze(1)
    with torch.no_grad():
        z0 = codec.encode_batch(x_t1)
    ctx, emb = assemble_context_batch(x_t, h_t, h_t1, codec, embedder)
    if embedder is None:
        emb = torch.zeros(z0.shape[0], denoiser.config.semantic_dim)
    loss, _ = loss_from_latents(z0, ctx, emb, denoiser, schedule, p_drop, rng)
    return loss


# ---------------------------------------------------------------------------
# guidance and sampling


def cfg_predict(denoiser, z_i: torch.Tensor, ctx: torch.Tensor, emb: torch.Tensor, i, s: float) -> torch.Tensor:
    """eps_uncond + s * (eps_cond - eps_uncond), batched.

    s=1 and s=0 evaluate only the branch they need, so those degeneracies are
    exact. The null conditioning is all-zero context and embedding.
    """
    if s < 0:
        raise ValueError("guidance scale must be >= 0")
    it = torch.as_tensor(np.atleast_1d(np.asarray(i, dtype=np.int64)))
    if it.numel() == 1 and z_i.shape[0] > 1:
        it = it.expand(z_i.shape[0])

    def cond():
        return denoiser(torch.cat([z_i, ctx], dim=1), it, emb)

    def uncond():
        return denoiser(torch.cat([z_i, torch.zeros_like(ctx)], dim=1), it, torch.zeros_like(emb))

    if s == 1.0:
        return cond()
    if s == 0.0:
        return uncond()
    eps_u = uncond()
    return eps_u + s * (cond() - eps_u)


def _deterministic_timesteps(T: int, steps: int):
    ts = np.unique(np.round(np.linspace(T, 1, steps)).astype(np.int64))[::-1]
    return [int(t) for t in ts]


def sample_latents(denoiser, ctx: torch.Tensor, emb: torch.Tensor, schedule: NoiseSchedule,
                   cfg: SampleConfig, seeds=None) -> torch.Tensor:
    """Reverse-process sampling for a batch of contexts; returns (B, c, h, w).

    Per-element noise streams are seeded independently (seed, seed+1, ...) so
    each returned sample depends only on its own seed and inputs, regardless
    of how the batch was assembled.
    """
    if not 1 <= cfg.steps <= schedule.T:
        raise ValueError(f"steps={cfg.steps} outside [1, {schedule.T}]")
    if cfg.sampler not in ("deterministic", "ancestral"):
        raise ValueError(f"unknown sampler {cfg.sampler!r}")
    bsz = ctx.shape[0]
    c = ctx.shape[1] // 3
    h, w = ctx.shape[2], ctx.shape[3]
    if seeds is None:
        seeds = [cfg.seed + j for j in range(bsz)]
    rngs = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(s)))) for s in seeds]

    def draw():
        return torch.from_numpy(np.stack([r.standard_normal((c, h, w)) for r in rngs])).float()

    z = draw()
    s = cfg.guidance_scale
    with torch.no_grad():
        if cfg.sampler == "ancestral":
            for i in range(schedule.T, 0, -1):
                eps_hat = cfg_predict(denoiser, z, ctx, emb, i, s)
                beta = schedule.beta(i)
                abar = schedule.alpha_bar(i)
                mean = (z - beta / math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(schedule.alpha(i))
                if i > 1:
                    var = (1.0 - schedule.alpha_bar(i - 1)) / (1.0 - abar) * beta
                    z = mean + math.sqrt(var) * draw()
                else:
                    z = mean
        else:
            ts = _deterministic_timesteps(schedule.T, cfg.steps)
            for k, i in enumerate(ts):
                eps_hat = cfg_predict(denoiser, z, ctx, emb, i, s)
                abar = schedule.alpha_bar(i)
                abar_next = schedule.alpha_bar(ts[k + 1]) if k + 1 < len(ts) else 1.0
                x0 = (z - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
                z = math.sqrt(abar_next) * x0 + math.sqrt(1.0 - abar_next) * eps_hat
    return z


def sample(denoiser, ctx: ContextBlock, emb: SemanticEmbedding, schedule: NoiseSchedule,
           cfg: SampleConfig, codec_id: str = "") -> LatentCode:
    """Single-context sampling; wraps the batched path."""
    d = emb.vector.shape[0] if emb is not None else denoiser.config.semantic_dim
    emb_t = emb.vector.unsqueeze(0) if emb is not None else torch.zeros(1, d)
    z = sample_latents(denoiser, ctx.data.unsqueeze(0), emb_t, schedule, cfg)
    return LatentCode(data=z[0], codec_id=codec_id)


def predict_future(x_t: np.ndarray, h_t: np.ndarray, h_t1: np.ndarray,
                   denoiser, codec: Codec, embedder, schedule: NoiseSchedule,
                   cfg: SampleConfig) -> np.ndarray:
    """Full f(x_t, h_t, h_t+1): assemble conditioning, sample, decode."""
    ctx, emb = assemble_context(x_t, h_t, h_t1, codec, embedder)
    if embedder is None:
        emb = SemanticEmbedding(vector=torch.zeros(denoiser.config.semantic_dim), null=True)
    z = sample(denoiser, ctx, emb, schedule, cfg, codec_id=codec.codec_id)
    return codec.decode(z)
