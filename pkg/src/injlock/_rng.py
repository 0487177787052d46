"""Deterministic random substreams.

Every random draw in the toolkit comes from a generator keyed by the
master seed plus a tuple of integer task keys.  The keys are mixed by
numpy's ``SeedSequence`` hash, so a stream depends only on
``(seed, keys)`` and never on the order in which tasks are scheduled.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# task keys
PHASES = 1
LO_DRIFT = 2
NOISE = 3
BOOTSTRAP = 4
SPD = 5
SWEEP_POINT = 6
SCAN_POINT = 7
LO_OFFSET = 8
SCAN_OPTIMUM = 9


def substream(seed, *keys):
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def child_seed(seed, *keys):
    """A 64-bit seed for a nested job, derived like :func:`substream`."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])
