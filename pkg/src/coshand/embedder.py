"""Frozen semantic image embedder.

A fixed-seed, randomly initialized convolutional network standing in for a
pretrained contrastive image encoder: it is never trained, ships as a seed
rather than weights, and its only job is to provide a stable global
descriptor of the input frame for cross-attention conditioning.
"""

import numpy as np
import torch
import torch.nn as nn

from .codec import image_to_tensor

DEFAULT_EMBED_DIM = 512
DEFAULT_EMBEDDER_SEED = 7001


class SemanticEmbedder(nn.Module):
    def __init__(self, dim: int = DEFAULT_EMBED_DIM, seed: int = DEFAULT_EMBEDDER_SEED):
        super().__init__()
        self.dim = dim
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.features = nn.Sequential(
                nn.Conv2d(3, 32, 4, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(32, 64, 4, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(64, 128, 4, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(128, 256, 3, padding=1),
                nn.SiLU(),
            )
            self.proj = nn.Linear(256, dim)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @torch.no_grad()
    def embed_batch(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) in [-1, 1] -> (B, dim) unit-normalized."""
        h = self.features(x.float())
        pooled = h.mean(dim=(2, 3))
        e = self.proj(pooled)
        return e / e.norm(dim=-1, keepdim=True).clamp_min(1e-8)

    def embed(self, image: np.ndarray) -> torch.Tensor:
        return self.embed_batch(image_to_tensor(image).unsqueeze(0))[0]

    def config_dict(self):
        return {"dim": self.dim, "seed": self.seed}
