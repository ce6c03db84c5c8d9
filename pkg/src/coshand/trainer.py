"""Training loop wiring data, codec, diffusion math, and the denoiser.

Reproducibility scheme: every stochastic decision of step k (batch indices,
timesteps, noise, conditioning dropout) is drawn from a fresh Generator
seeded by (config.seed, k). Streams are therefore stateless across restarts,
so resuming from a checkpoint at step k produces bitwise the same run as an
uninterrupted one.
"""

import copy
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import (
    arrays_to_state,
    fingerprint_of,
    load_archive,
    params_hash,
    require_kind,
    save_archive,
    state_to_arrays,
)
from .codec import CodecConfig, IdentityCodec, build_codec, load_codec
from .data.samples import load_manifest, load_sample
from .denoiser import DenoiserConfig, init_denoiser
from .diffusion import assemble_context_batch, loss_from_latents, make_schedule
from .embedder import SemanticEmbedder
from .errors import (
    DivergedError,
    IncompatibleCheckpointError,
    InsufficientDataError,
)

MODEL_KIND = "denoiser-train"


@dataclass
class TrainConfig:
    dataset_root: str = "data/toy"
    split: str = "train"
    out_dir: str = "runs/default"
    # model
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    codec_mode: str = "learned"  # identity_pixel | learned
    codec_path: str | None = None  # pretrained codec checkpoint (learned mode)
    codec_width: int = 64
    codec_seed: int = 0
    schedule_T: int = 1000
    schedule_kind: str = "linear"
    embed_dim: int = 512
    embedder_seed: int = 7001
    # optimization
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 0.01
    p_drop: float = 0.05
    max_steps: int = 2000
    seed: int = 0
    ema_decay: float = 0.999
    checkpoint_every: int = 500
    init_from: str | None = None
    # ablation switches
    no_pretrained_codec: bool = False
    no_semantic_cond: bool = False
    data_fraction: float = 1.0
    ucg_mode: bool = False  # zero both masks at conditioning time

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["denoiser"] = self.denoiser.to_dict()
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["denoiser"] = DenoiserConfig.from_dict(d["denoiser"])
        return TrainConfig(**d)

    def ablation_dict(self):
        return {
            "no_pretrained_codec": self.no_pretrained_codec,
            "no_semantic_cond": self.no_semantic_cond,
            "data_fraction": self.data_fraction,
            "ucg_mode": self.ucg_mode,
        }


def _build_codec_for(config: TrainConfig):
    if config.codec_mode == "identity_pixel":
        return IdentityCodec()
    if config.no_pretrained_codec or config.codec_path is None:
        return build_codec(
            CodecConfig(mode="learned", base_width=config.codec_width, seed=config.codec_seed)
        )
    return load_codec(config.codec_path)


def select_subset(sample_ids, fraction: float, seed: int):
    """Deterministic data subset: exactly floor(fraction * N) unique ids."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("data_fraction must be in (0, 1]")
    if fraction == 1.0:
        return list(sample_ids)
    n = int(len(sample_ids) * fraction)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xDA7A))))
    order = rng.permutation(len(sample_ids))[:n]
    return [sample_ids[i] for i in sorted(order)]


def _encode_dataset(manifest, ids, codec, embedder, ucg: bool, batch: int = 64):
    """Pre-encode the frozen-codec latents and embeddings for every sample."""
    z0s, ctxs, embs = [], [], []
    for lo in range(0, len(ids), batch):
        chunk = [load_sample(manifest.root, manifest.split, sid) for sid in ids[lo : lo + batch]]
        x_t = torch.from_numpy(np.stack([s.x_t for s in chunk]).transpose(0, 3, 1, 2)).float()
        x_t1 = torch.from_numpy(np.stack([s.x_t1 for s in chunk]).transpose(0, 3, 1, 2)).float()
        h_t = torch.from_numpy(np.stack([s.h_t for s in chunk])).unsqueeze(1)
        h_t1 = torch.from_numpy(np.stack([s.h_t1 for s in chunk])).unsqueeze(1)
        if ucg:
            h_t = torch.zeros_like(h_t)
            h_t1 = torch.zeros_like(h_t1)
        with torch.no_grad():
            z0 = codec.encode_batch(x_t1)
            ctx, emb = assemble_context_batch(x_t, h_t, h_t1, codec, embedder)
        z0s.append(z0)
        ctxs.append(ctx)
        embs.append(emb)
    return torch.cat(z0s), torch.cat(ctxs), torch.cat(embs)


def step_rng(seed: int, step: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, step))))


class TrainRun:
    """Owns the mutable training state; ``train``/``resume`` drive it."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.codec = _build_codec_for(config)
        if self.codec.c != config.denoiser.latent_channels:
            raise IncompatibleCheckpointError(
                f"codec c={self.codec.c} but denoiser expects {config.denoiser.latent_channels}"
            )
        self.embedder = (
            None
            if config.no_semantic_cond
            else SemanticEmbedder(dim=config.embed_dim, seed=config.embedder_seed)
        )
        self.schedule = make_schedule(config.schedule_T, config.schedule_kind)

        manifest = load_manifest(config.dataset_root, config.split)
        ids = select_subset(manifest.sample_ids, config.data_fraction, config.seed)
        if len(ids) < config.batch_size:
            raise InsufficientDataError(
                f"{len(ids)} samples < batch size {config.batch_size}"
            )
        self.sample_ids = ids
        first = load_sample(manifest.root, manifest.split, ids[0])
        self.resolution = int(first.x_t.shape[0])
        self.z0, self.ctx, self.emb = _encode_dataset(
            manifest, ids, self.codec, self.embedder, config.ucg_mode
        )
        if self.embedder is None:
            self.emb = torch.zeros(len(ids), config.denoiser.semantic_dim)

        init_state = None
        init_mode = "random"
        if config.init_from:
            arrays, man = load_archive(config.init_from)
            require_kind(man, MODEL_KIND)
            init_state = arrays_to_state(arrays, "model")
            init_mode = "from_checkpoint"
        self.denoiser = init_denoiser(config.denoiser, init_mode, seed=config.seed, state_dict=init_state)
        self.optimizer = torch.optim.AdamW(
            self.denoiser.parameters(), lr=config.lr, weight_decay=config.weight_decay
        )
        self.ema = {k: v.detach().clone() for k, v in self.denoiser.state_dict().items()}
        self.step = 0
        self.codec_hash_before = self.codec.param_hash()
        os.makedirs(config.out_dir, exist_ok=True)
        self.log_path = os.path.join(config.out_dir, "train_log.jsonl")
        self.last_checkpoint = None

    # -- fingerprints ------------------------------------------------------

    def arch_config(self):
        return {
            "denoiser": self.config.denoiser.to_dict(),
            "schedule": self.schedule.to_dict(),
            "codec_id": self.codec.codec_id,
            "embedder": None if self.embedder is None else self.embedder.config_dict(),
            "ablations": self.config.ablation_dict(),
            "resolution": self.resolution,
        }

    def checkpoint_configs(self):
        arch = self.arch_config()
        cfg = {
            "step": self.step,
            "arch": arch,
            "arch_fingerprint": fingerprint_of(arch),
            "train": self.config.to_dict(),
            "codec": {
                "mode": self.codec.config.mode,
                "config": self.codec.config.to_dict(),
                "latent_scale": getattr(self.codec, "latent_scale", 1.0),
            },
        }
        return cfg

    # -- checkpointing -----------------------------------------------------

    def save_checkpoint(self, path=None):
        path = path or os.path.join(self.config.out_dir, f"step_{self.step:07d}.ckpt")
        arrays = {}
        arrays.update(state_to_arrays(self.denoiser.state_dict(), "model"))
        arrays.update({f"ema/{k}": v.numpy() for k, v in self.ema.items()})
        opt_state = self.optimizer.state_dict()
        for idx, st in opt_state["state"].items():
            for key, val in st.items():
                arrays[f"opt/{idx}/{key}"] = val.detach().cpu().numpy()
        if not isinstance(self.codec, IdentityCodec):
            arrays.update(state_to_arrays(self.codec.net.state_dict(), "codec"))
        save_archive(path, arrays, self.checkpoint_configs(), kind=MODEL_KIND)
        self.last_checkpoint = path
        return path

    def load_optimizer_state(self, arrays):
        opt_state = self.optimizer.state_dict()
        state = {}
        for name, arr in arrays.items():
            if not name.startswith("opt/"):
                continue
            _, idx, key = name.split("/", 2)
            state.setdefault(int(idx), {})[key] = torch.from_numpy(np.array(arr))
        opt_state["state"] = state
        self.optimizer.load_state_dict(opt_state)

    # -- the loop ----------------------------------------------------------

    def run(self, log_fn=None):
        cfg = self.config
        n = self.z0.shape[0]
        t_start = time.time()
        with open(self.log_path, "a") as log:
            while self.step < cfg.max_steps:
                self.step += 1
                rng = step_rng(cfg.seed, self.step)
                idx = torch.from_numpy(rng.integers(0, n, size=cfg.batch_size))
                loss, dropped = loss_from_latents(
                    self.z0[idx], self.ctx[idx], self.emb[idx],
                    self.denoiser, self.schedule, cfg.p_drop, rng,
                )
                if not torch.isfinite(loss):
                    raise DivergedError(
                        f"loss became non-finite at step {self.step}; "
                        f"last good checkpoint: {self.last_checkpoint}"
                    )
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()
                with torch.no_grad():
                    for k, v in self.denoiser.state_dict().items():
                        self.ema[k].mul_(cfg.ema_decay).add_(v, alpha=1.0 - cfg.ema_decay)
                record = {
                    "step": self.step,
                    "loss": round(float(loss.item()), 6),
                    "lr": cfg.lr,
                    "drop_frac": round(float(np.mean(dropped)), 4),
                    "wallclock": round(time.time() - t_start, 3),
                }
                log.write(json.dumps(record) + "\n")
                if log_fn:
                    log_fn(record)
                if cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    self.save_checkpoint()
        final = self.save_checkpoint(os.path.join(cfg.out_dir, "final.ckpt"))
        if self.codec.param_hash() != self.codec_hash_before:
            raise RuntimeError("codec parameters changed during training")
        return final


def train(config: TrainConfig, log_fn=None) -> str:
    """Run training to max_steps; returns the final checkpoint path."""
    return TrainRun(config).run(log_fn=log_fn)


_RESUMABLE = {"max_steps", "lr", "checkpoint_every", "out_dir", "dataset_root"}


def resume(checkpoint_path: str, overrides: dict | None = None, log_fn=None) -> str:
    """Continue a run from a checkpoint; only non-architectural overrides allowed."""
    arrays, manifest = load_archive(checkpoint_path)
    require_kind(manifest, MODEL_KIND)
    saved = manifest["configs"]
    overrides = dict(overrides or {})
    bad = set(overrides) - _RESUMABLE
    if bad:
        raise IncompatibleCheckpointError(f"cannot override {sorted(bad)} on resume")
    cfg_dict = dict(saved["train"])
    cfg_dict.update(overrides)
    config = TrainConfig.from_dict(cfg_dict)

    run = TrainRun(config)
    if fingerprint_of(run.arch_config()) != saved["arch_fingerprint"]:
        raise IncompatibleCheckpointError(
            "architecture/schedule/codec/ablation fingerprint mismatch on resume"
        )
    run.denoiser.load_state_dict(arrays_to_state(arrays, "model"))
    run.ema = {k[4:]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith("ema/")}
    run.load_optimizer_state(arrays)
    run.step = int(saved["step"])
    run.last_checkpoint = checkpoint_path
    return run.run(log_fn=log_fn)
