"""Counter-based random streams keyed by (master seed, domain, index).

Each stream is a Philox generator seeded from an entropy tuple, so draws on
one stream never depend on how many draws other streams made. That makes
per-device generation order-independent and reproducible across thread
counts.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DOMAIN_PARAMS",
    "DOMAIN_DEVICE",
    "DOMAIN_GRAPH",
    "DOMAIN_BATCH",
    "DOMAIN_AVAILABILITY",
    "DOMAIN_EXPERIMENT",
    "DOMAIN_CV",
    "substream",
]

DOMAIN_PARAMS = 1
DOMAIN_DEVICE = 2
DOMAIN_GRAPH = 3
DOMAIN_BATCH = 4
DOMAIN_AVAILABILITY = 5
DOMAIN_EXPERIMENT = 6
DOMAIN_CV = 7


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the stream addressed by ``path``."""
    entropy = (int(master_seed),) + tuple(int(x) for x in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
