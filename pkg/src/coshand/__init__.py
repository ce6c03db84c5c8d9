"""coshand: mask-conditioned latent diffusion for interaction outcome prediction."""

__version__ = "0.1.0"
