"""Counter-based seed derivation.

Every random draw in the library is tied to an explicit integer path
(master seed plus coordinates such as sweep index and trial number), so
results never depend on execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def derive_rng(*path: int) -> np.random.Generator:
    """Generator keyed by an integer path, e.g. (master_seed, sweep, trial)."""
    if not path:
        raise ValueError("seed path must contain at least one integer")
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in path]))


def derive_seed(*path: int) -> int:
    """Collapse an integer path to a single nonnegative int seed."""
    if not path:
        raise ValueError("seed path must contain at least one integer")
    state = np.random.SeedSequence([int(p) for p in path]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def as_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Accept an int seed, an existing Generator, or None (fresh entropy)."""
    return np.random.default_rng(seed)
