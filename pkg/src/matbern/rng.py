"""Counter-based random streams keyed by (master seed, stream, trial).

Each trial gets its own Philox generator whose key is the master seed (and a
stream tag) and whose counter starts at a block reserved for the trial.
Draws inside a trial advance the counter in step order, so a trial's
randomness never depends on which worker ran it or in what order.
"""

import numpy as np

MASK64 = (1 << 64) - 1

STREAM_SIM = 0
STREAM_VARIANCE = 1
STREAM_KERNEL = 2


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def trial_rng(seed: int, trial: int, stream: int = STREAM_SIM) -> np.random.Generator:
    key = check_seed(seed) | ((int(stream) & MASK64) << 64)
    counter = np.array([0, 0, int(trial) & MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class TrialStreams:
    """Reusable generator that jumps to the start of any trial's stream.

    ``streams.at(trial)`` yields the same draws as ``trial_rng(seed, trial,
    stream)`` but avoids constructing a new generator per trial.  Not safe to
    share between threads; each worker builds its own.
    """

    def __init__(self, seed: int, stream: int = STREAM_SIM):
        key = check_seed(seed) | ((int(stream) & MASK64) << 64)
        self._bits = np.random.Philox(key=key)
        self._key = self._bits.state["state"]["key"].copy()
        self._gen = np.random.Generator(self._bits)

    def at(self, trial: int) -> np.random.Generator:
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array([0, 0, int(trial) & MASK64, 0], dtype=np.uint64),
                "key": self._key,
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen
