"""Deterministic random streams for reproducible simulations.

Every random draw in this package comes from a counter-based Philox
generator keyed by (seed, role, index, ...) through numpy's
SeedSequence.  A stream's output depends only on its key, never on how
many draws other streams have made, so agents can be processed serially
or in parallel with identical results.
"""

from __future__ import annotations

import numpy as np

# Role tags keep independent uses of the same seed from colliding.
ROLE_XSTAR = 0
ROLE_DESIGN = 1
ROLE_MEASURE = 2
ROLE_INIT = 3
ROLE_GRADIENT = 4

__all__ = [
    "ROLE_XSTAR",
    "ROLE_DESIGN",
    "ROLE_MEASURE",
    "ROLE_INIT",
    "ROLE_GRADIENT",
    "substream",
    "gradient_stream",
]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for one (seed, key...) cell.

    Repeated calls with the same arguments produce generators that
    yield identical draws.
    """
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(int(k) for k in key)
    )
    return np.random.Generator(np.random.Philox(sequence))


def gradient_stream(seed: int, agent: int, iteration: int) -> np.random.Generator:
    """Stream for one agent's stochastic-gradient draw at one iteration."""
    return substream(seed, ROLE_GRADIENT, agent, iteration)
