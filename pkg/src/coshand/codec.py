"""Fixed encoder/decoder between image space and the latent space the
diffusion runs in.

Two modes share one interface: ``identity_pixel`` passes pixels through
unchanged (f=1, c=3) so tests can see latents exactly, and ``learned`` is a
small convolutional autoencoder (default f=4, c=4) pretrained once with
``pretrain_codec`` and frozen afterwards. ``encode`` always returns the
posterior mean, so both modes are deterministic.

Masks enter the same encoder: {0,1} -> {-1,+1}, replicated to 3 channels.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import (
    arrays_to_state,
    fingerprint_of,
    load_archive,
    params_hash,
    require_kind,
    save_archive,
    state_to_arrays,
)
from .errors import (
    CodecMismatchError,
    InsufficientDataError,
    NonBinaryInputError,
    ShapeMismatchError,
)

CODEC_KIND = "codec"


@dataclass(frozen=True)
class CodecConfig:
    mode: str = "learned"  # identity_pixel | learned
    f: int = 4
    c: int = 4
    base_width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode == "identity_pixel":
            if self.f != 1 or self.c != 3:
                raise ValueError("identity_pixel requires f=1, c=3")
        elif self.mode == "learned":
            if self.f != 4:
                raise ValueError("learned codec is built for f=4")
        else:
            raise ValueError(f"unknown codec mode {self.mode!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d):
        return CodecConfig(**d)


@dataclass
class LatentCode:
    data: torch.Tensor  # (c, h, w) float32
    codec_id: str


def image_to_tensor(x: np.ndarray) -> torch.Tensor:
    if x.ndim != 3 or x.shape[2] != 3:
        raise ShapeMismatchError(f"expected (H, W, 3), got {x.shape}")
    return torch.from_numpy(np.ascontiguousarray(np.transpose(x, (2, 0, 1)))).float()

def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    return np.transpose(t.detach().cpu().numpy(), (1, 2, 0))


def mask_to_signed_tensor(mask: np.ndarray) -> torch.Tensor:
    """{0,1} mask -> 3-channel tensor with values {-1,+1}."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ShapeMismatchError(f"expected (H, W) mask, got {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise NonBinaryInputError("mask must contain only {0, 1}")
    signed = m.astype(np.float32) * 2.0 - 1.0
    return torch.from_numpy(signed).unsqueeze(0).repeat(3, 1, 1)


class Codec:
    """Shared single-sample API over the batched tensor paths."""

    config: CodecConfig
    codec_id: str

    @property
    def f(self):
        return self.config.f

    @property
    def c(self):
        return self.config.c

    def encode_batch(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode_batch(self, z: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _check_divisible(self, x: torch.Tensor):
        if x.shape[-1] % self.f or x.shape[-2] % self.f:
            raise ShapeMismatchError(f"H, W must be divisible by f={self.f}, got {tuple(x.shape[-2:])}")

    def encode(self, x: np.ndarray) -> LatentCode:
        t = image_to_tensor(x)
        self._check_divisible(t)
        with torch.no_grad():
            z = self.encode_batch(t.unsqueeze(0))[0]
        return LatentCode(data=z, codec_id=self.codec_id)

    def decode(self, z: LatentCode) -> np.ndarray:
        if z.codec_id != self.codec_id:
            raise CodecMismatchError(f"latent from {z.codec_id!r}, codec is {self.codec_id!r}")
        with torch.no_grad():
            x = self.decode_batch(z.data.unsqueeze(0))[0]
        return np.clip(tensor_to_image(x), -1.0, 1.0)

    def encode_mask(self, mask: np.ndarray) -> LatentCode:
        t = mask_to_signed_tensor(mask)
        self._check_divisible(t)
        with torch.no_grad():
            z = self.encode_batch(t.unsqueeze(0))[0]
        return LatentCode(data=z, codec_id=self.codec_id)

    def encode_mask_batch(self, masks: torch.Tensor) -> torch.Tensor:
        """masks: (B, 1, H, W) in {0,1} -> latents (B, c, h, w)."""
        signed = masks.float() * 2.0 - 1.0
        return self.encode_batch(signed.repeat(1, 3, 1, 1))


class IdentityCodec(Codec):
    def __init__(self):
        self.config = CodecConfig(mode="identity_pixel", f=1, c=3)
        self.codec_id = "identity_pixel"

    def encode_batch(self, x):
        return x.float()

    def decode_batch(self, z):
        return z.clamp(-1.0, 1.0)

    def param_hash(self):
        return "identity"


class ConvAutoencoder(nn.Module):
    """f=4 convolutional VAE backbone; encode uses the posterior mean only.

    Stage widths grow with downsampling (w/2 at full res, w at f=2, 2w at
    f=4): most capacity sits at the latent resolution, keeping the full-res
    convolutions cheap.
    """

    def __init__(self, c=4, width=64):
        super().__init__()
        w0, w1, w2 = max(8, width // 2), width, 2 * width

        def gn(ch):
            return nn.GroupNorm(min(8, ch), ch)

        self.encoder = nn.Sequential(
            nn.Conv2d(3, w0, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w0, w1, 4, stride=2, padding=1),
            gn(w1),
            nn.SiLU(),
            nn.Conv2d(w1, w1, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w1, w2, 4, stride=2, padding=1),
            gn(w2),
            nn.SiLU(),
            nn.Conv2d(w2, w2, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w2, 2 * c, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(c, w2, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w2, w2, 3, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(w2, w1, 4, stride=2, padding=1),
            gn(w1),
            nn.SiLU(),
            nn.Conv2d(w1, w1, 3, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(w1, w0, 4, stride=2, padding=1),
            gn(w0),
            nn.SiLU(),
            nn.Conv2d(w0, w0, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w0, 3, 3, padding=1),
            nn.Tanh(),
        )

    def moments(self, x):
        mu, logvar = torch.chunk(self.encoder(x), 2, dim=1)
        return mu, logvar.clamp(-30.0, 20.0)

    def decode(self, z):
        return self.decoder(z)


class LearnedCodec(Codec):
    def __init__(self, config: CodecConfig, net: ConvAutoencoder, latent_scale: float = 1.0):
        self.config = config
        self.net = net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.latent_scale = float(latent_scale)
        self.codec_id = f"learned-{fingerprint_of({'config': config.to_dict(), 'params': params_hash(net)})}"

    def encode_batch(self, x):
        mu, _ = self.net.moments(x.float())
        return mu / self.latent_scale

    def decode_batch(self, z):
        return self.net.decode(z.float() * self.latent_scale).clamp(-1.0, 1.0)

    def param_hash(self):
        return params_hash(self.net)


def build_codec(config: CodecConfig) -> Codec:
    """Construct a codec; learned mode starts from seed-deterministic random init."""
    if config.mode == "identity_pixel":
        return IdentityCodec()
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        net = ConvAutoencoder(c=config.c, width=config.base_width)
    return LearnedCodec(config, net)


def save_codec(path, codec: LearnedCodec) -> str:
    arrays = state_to_arrays(codec.net.state_dict(), "net")
    configs = {
        "codec": codec.config.to_dict(),
        "latent_scale": codec.latent_scale,
        "version": 1,
    }
    return save_archive(path, arrays, configs, kind=CODEC_KIND)


def load_codec(path) -> Codec:
    arrays, manifest = load_archive(path)
    require_kind(manifest, CODEC_KIND)
    config = CodecConfig.from_dict(manifest["configs"]["codec"])
    net = ConvAutoencoder(c=config.c, width=config.base_width)
    net.load_state_dict(arrays_to_state(arrays, "net"))
    return LearnedCodec(config, net, latent_scale=manifest["configs"]["latent_scale"])


def pretrain_codec(
    manifest,
    config: CodecConfig,
    out_path,
    steps: int = 3000,
    batch_size: int = 32,
    lr: float = 2e-3,
    kl_weight: float = 1e-6,
    holdout: int = 64,
    seed: int = 0,
    log_every: int = 200,
    log_fn=print,
):
    """Train the learned codec on a dataset's images, then freeze and save it.

    Uses both frames of every pair. The last ``holdout`` images are excluded
    from training and used to report reconstruction PSNR. Returns
    (codec, held-out PSNR in dB).
    """
    from .data.samples import load_sample
    from .metrics import psnr as psnr_metric

    if config.mode != "learned":
        raise ValueError("pretraining applies to the learned codec only")
    images = []
    for sid in manifest.sample_ids:
        s = load_sample(manifest.root, manifest.split, sid)
        images.append(s.x_t)
        images.append(s.x_t1)
    if len(images) < 500:
        raise InsufficientDataError(f"need >= 500 images, found {len(images)}")
    data = torch.from_numpy(np.stack(images).transpose(0, 3, 1, 2)).float()
    train_data, held = data[:-holdout], data[-holdout:]

    def holdout_psnr_now(codec_net, n=32):
        codec_net.eval()
        with torch.no_grad():
            mu, _ = codec_net.moments(held[:n])
            rec = codec_net.decode(mu)
            mse = torch.mean(((rec - held[:n]) / 2.0) ** 2).item()
        codec_net.train()
        return 10.0 * np.log10(1.0 / max(mse, 1e-12))

    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        net = ConvAutoencoder(c=config.c, width=config.base_width)
    opt = torch.optim.AdamW(net.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=steps, eta_min=0.05 * lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    net.train()
    for step in range(1, steps + 1):
        idx = torch.from_numpy(rng.integers(0, len(train_data), size=batch_size))
        x = train_data[idx]
        mu, logvar = net.moments(x)
        noise = torch.from_numpy(rng.standard_normal(mu.shape)).float()
        z = mu + noise * torch.exp(0.5 * logvar)
        recon = net.decode(z)
        rec_loss = torch.mean((recon - x) ** 2)
        kl = 0.5 * torch.mean(mu**2 + torch.exp(logvar) - 1.0 - logvar)
        loss = rec_loss + kl_weight * kl
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if log_every and step % log_every == 0:
            log_fn(
                f"codec step {step}: rec {rec_loss.item():.5f} kl {kl.item():.2f} "
                f"holdout_psnr {holdout_psnr_now(net):.2f}"
            )

    net.eval()
    with torch.no_grad():
        mu, _ = net.moments(train_data[: min(512, len(train_data))])
        latent_scale = float(mu.std().clamp_min(1e-3))
    codec = LearnedCodec(config, net, latent_scale=latent_scale)
    with torch.no_grad():
        scores = []
        for i in range(len(held)):
            x = tensor_to_image(held[i])
            rec = codec.decode(codec.encode(x))
            scores.append(psnr_metric(x, rec))
    holdout_psnr = float(np.mean(scores))
    save_codec(out_path, codec)
    return codec, holdout_psnr
