"""Named, splittable random streams derived from one scenario seed.

Every consumer of randomness asks for a stream by name. The stream is a
``numpy.random.Generator`` (PCG64) seeded with ``SeedSequence(seed,
spawn_key=(crc32(name),))``, so streams are independent of each other and of
the order in which they are requested.

Stream names in use:

``world``
    procedural world layout and fire placement
``sensor``
    optional Gaussian range noise
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("ascii"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))
