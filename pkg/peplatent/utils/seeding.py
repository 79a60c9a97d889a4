"""Derived seeds for reproducible per-item randomness"""
import hashlib

import numpy as np


def derive_seed(master_seed: int, index: int, stream: str = "") -> int:
    """
    Derives a 63-bit seed from (master_seed, index, stream).

    The seed of item i does not depend on how many items are drawn, so a
    run of N samples is a prefix of a run of M > N samples.
    """
    digest = hashlib.sha256(f"{stream}:{master_seed}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def make_rng(master_seed: int, index: int = 0, stream: str = "") -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, index, stream))
