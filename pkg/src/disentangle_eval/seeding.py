"""Derivation of sub-seeds from one master seed.

Every random sub-computation gets its own seed from
``SeedSequence([master, stream, *counters])``: ``stream`` is a fixed integer
per purpose (see `STREAMS`) and the counters are positional indices such as
factor, dimension and run. A sub-computation can therefore be replayed alone
without running anything before it.
"""

import numpy as np

STREAMS = {
    "explicitness-split": 1,
    "explicitness-init": 2,
    "probe-split": 3,
    "probe-init": 4,
    "synth": 5,
}

ALL_DIMS = 1 << 20  # counter value standing for the "All" scope


def derive_seed(master, stream, *counters):
    ss = np.random.SeedSequence([int(master), STREAMS[stream], *(int(c) for c in counters)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
