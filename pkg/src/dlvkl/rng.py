"""Seeded, splittable random streams.

Every stream is a ``numpy.random.Generator`` over the counter-based Philox
bit generator. A stream is identified by ``(seed, name)``: the name is
hashed with CRC-32 into the ``SeedSequence`` spawn key, so streams for
different purposes (``"init"``, ``"minibatch"``, ``"noise"``, ``"split"``,
...) are independent and stable across runs and platforms.
"""

import zlib

import numpy as np


def stream(seed, name, *extra):
    """Generator for the named sub-stream of ``seed``.

    ``extra`` integers further split the stream (e.g. a repeat index).
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
