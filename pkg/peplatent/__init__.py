"""Receptor-conditioned latent diffusion over peptide embeddings"""

__version__ = "0.1.0"
