"""Counter-based uniform streams for common random numbers.

Path i's draws of a given kind occupy a fixed block of Philox counters
derived from (seed, kind, i) alone, so any subset of paths can be generated
in any order or chunking and still see the same numbers.
"""

from __future__ import annotations

import numpy as np

PRODUCT, ACCEPT, SURVIVAL = 0, 1, 2
KIND_NAMES = {PRODUCT: "product", ACCEPT: "accept", SURVIVAL: "survival"}


def _key(seed: int, kind: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(kind)]).generate_state(2, np.uint64)


def uniforms(seed: int, kind: int, start: int, count: int, width: int) -> np.ndarray:
    """Uniforms in [0, 1) of shape (count, width) for paths start..start+count-1."""
    blocks = -(-width // 4)  # Philox emits 4 words per counter step
    bg = np.random.Philox(key=_key(seed, kind), counter=[start * blocks, 0, 0, 0])
    raw = bg.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :width]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
