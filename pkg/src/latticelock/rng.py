"""Deterministic, named random substreams.

Every stochastic entry point in this package takes an integer seed.  When a
single run needs several independent streams (drift vs. readout, one stream
per scan point, ...), the streams are derived from the master seed plus a
tuple of string labels, so results never depend on evaluation order and are
reproducible across runs and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(seed: int, *labels: str) -> int:
    """Derive a 64-bit child seed from a master seed and string labels."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")


def substream(seed: int, *labels: str) -> np.random.Generator:
    """Generator for the named substream of ``seed``."""
    return np.random.default_rng(child_seed(seed, *labels))
