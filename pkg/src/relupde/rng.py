"""Deterministic random streams.

Every random draw in the toolkit comes from a Philox4x64-10 counter-based
generator keyed as ``seed * 2**16 + stream``, so identical (seed, stream)
pairs reproduce identical values in any language with a Philox
implementation.  Stream ids in use:

====  =========================================
  0   contingent-cone direction sampling
  1   mollifier-study sequences
  2   network training initialization
  3   Hoelder seminorm pair sampling
  4   generic test/demo noise
====  =========================================
"""

import numpy as np

STREAM_DIRECTIONS = 0
STREAM_MOLLIFIER_STUDY = 1
STREAM_TRAINING = 2
STREAM_HOLDER_PAIRS = 3
STREAM_NOISE = 4


def rng_stream(seed, stream):
    """Philox generator for the given (seed, stream) pair."""
    key = int(seed) * 2**16 + int(stream)
    return np.random.Generator(np.random.Philox(key=key))
