"""
Deterministic random streams.

Every draw in the laboratory comes from a counter-based Philox generator keyed
by a 64-bit seed and a stream id, so independent experiments never share state
and a seed reproduces a run bit for bit.
"""

import logging

import numpy as np

from sigma2lab.exceptions import ParameterError

logger = logging.getLogger(__name__)

# Stream ids of the experiments that draw random numbers
STREAM_GAMMA2 = 0
STREAM_QFORM = 1
STREAM_SEMINORM_PAIRS = 2


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; the key packs seed in the low word and stream in the high word."""
    if not 0 <= int(seed) < 2 ** 64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if not 0 <= int(stream) < 2 ** 64:
        raise ParameterError(f"stream id must be a 64-bit unsigned integer, got {stream}")
    key = int(seed) + (int(stream) << 64)
    logger.debug(f"Philox stream seed={seed} stream={stream}")
    return np.random.Generator(np.random.Philox(key=key))
