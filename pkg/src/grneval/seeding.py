"""Deterministic RNG derivation.

Every random choice in the package draws from a generator derived from a
master seed plus a path of string/integer labels. Substreams are independent
of scheduling, so parallel sections can be reordered or resized without
changing any output.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _as_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    """SeedSequence of the substream identified by ``(seed, *labels)``."""
    return np.random.SeedSequence([int(seed)] + [_as_word(lab) for lab in labels])


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Generator over the substream identified by ``(seed, *labels)``."""
    return np.random.default_rng(derive_seed_sequence(seed, *labels))


def derive_seed(seed: int, *labels) -> int:
    """Stable 32-bit child seed for APIs that take a plain integer."""
    return int(derive_seed_sequence(seed, *labels).generate_state(1)[0])
