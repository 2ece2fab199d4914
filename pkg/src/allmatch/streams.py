"""Keyed RNG streams.

Every source of randomness in the package is a fresh `numpy` Generator
derived from an integer key tuple, so any view, shape, or shuffle can be
replayed in isolation without running anything that came before it.
"""
from __future__ import annotations

import numpy as np

# Domain tags keep independent uses of the same seed from colliding.
DOM_SHAPE_TRAIN = 1
DOM_SHAPE_TEST = 2
DOM_SPLIT = 3
DOM_UNLABELED_ORDER = 4
DOM_LABELED_ORDER = 5
DOM_VIEW = 6
DOM_MODEL_INIT = 7

# View tags used with DOM_VIEW: (seed, DOM_VIEW, epoch, view_tag, sample_id).
VIEW_LABELED_WEAK = 0
VIEW_LABELED_STRONG = 1
VIEW_UNLABELED_WEAK = 2
VIEW_UNLABELED_STRONG = 3


def stream(*key: int) -> np.random.Generator:
    """Return a Generator keyed by a tuple of non-negative integers."""
    parts = [int(k) for k in key]
    if any(k < 0 for k in parts):
        raise ValueError(f"stream key must be non-negative, got {parts}")
    return np.random.default_rng(np.random.SeedSequence(parts))


def view_stream(seed: int, epoch: int, view_tag: int, sample_id: int) -> np.random.Generator:
    """Stream for one augmented view of one sample in one epoch."""
    return stream(seed, DOM_VIEW, epoch, view_tag, sample_id)
