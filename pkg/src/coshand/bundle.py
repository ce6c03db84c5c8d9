"""Runnable model bundle: everything needed for inference from one archive.

Training checkpoints embed the frozen codec parameters alongside the
denoiser (raw + EMA) weights and all configs, so a single file fully
determines prediction behavior. Evaluation and serving must load through
here; fingerprint checks make config mismatches loud, never silent.
"""

from dataclasses import dataclass

import numpy as np

from .checkpoint import arrays_to_state, fingerprint_of, load_archive, require_kind
from .codec import Codec, CodecConfig, ConvAutoencoder, IdentityCodec, LearnedCodec
from .denoiser import DenoiserConfig, UNetDenoiser, init_denoiser
from .diffusion import NoiseSchedule, SampleConfig, make_schedule, predict_future
from .embedder import SemanticEmbedder
from .errors import IncompatibleCheckpointError

MODEL_KIND = "denoiser-train"


@dataclass
class ModelBundle:
    denoiser: UNetDenoiser
    codec: Codec
    embedder: SemanticEmbedder | None
    schedule: NoiseSchedule
    resolution: int
    fingerprint: str  # full config fingerprint of the archive
    arch_fingerprint: str
    configs: dict
    step: int
    uses_ema: bool

    def predict(self, x_t, h_t, h_t1, cfg: SampleConfig):
        return predict_future(
            x_t, h_t, h_t1, self.denoiser, self.codec, self.embedder, self.schedule, cfg
        )

    @property
    def ucg_mode(self):
        return bool(self.configs["arch"]["ablations"].get("ucg_mode", False))


def load_bundle(path, use_ema: bool = True) -> ModelBundle:
    arrays, manifest = load_archive(path)
    require_kind(manifest, MODEL_KIND)
    cfgs = manifest["configs"]
    arch = cfgs["arch"]
    if fingerprint_of(arch) != cfgs["arch_fingerprint"]:
        raise IncompatibleCheckpointError("stored arch fingerprint does not match configs")

    den_cfg = DenoiserConfig.from_dict(arch["denoiser"])
    prefix = "ema" if use_ema and any(k.startswith("ema/") for k in arrays) else "model"
    denoiser = init_denoiser(
        den_cfg, "from_checkpoint", seed=0, state_dict=arrays_to_state(arrays, prefix)
    ).eval()

    codec_info = cfgs["codec"]
    if codec_info["mode"] == "identity_pixel":
        codec = IdentityCodec()
    else:
        cc = CodecConfig.from_dict(codec_info["config"])
        net = ConvAutoencoder(c=cc.c, width=cc.base_width)
        net.load_state_dict(arrays_to_state(arrays, "codec"))
        codec = LearnedCodec(cc, net, latent_scale=codec_info["latent_scale"])
    if codec.codec_id != arch["codec_id"]:
        raise IncompatibleCheckpointError(
            f"embedded codec id {codec.codec_id} != recorded {arch['codec_id']}"
        )

    emb_cfg = arch.get("embedder")
    embedder = None if emb_cfg is None else SemanticEmbedder(dim=emb_cfg["dim"], seed=emb_cfg["seed"])
    schedule = make_schedule(arch["schedule"]["T"], arch["schedule"]["kind"])
    return ModelBundle(
        denoiser=denoiser,
        codec=codec,
        embedder=embedder,
        schedule=schedule,
        resolution=int(arch["resolution"]),
        fingerprint=manifest["fingerprint"],
        arch_fingerprint=cfgs["arch_fingerprint"],
        configs=cfgs,
        step=int(cfgs["step"]),
        uses_ema=prefix == "ema",
    )
