"""Swap-phase modes and state encoding shared by both kernel backends."""
import numpy as np

MODE_ALTERNATE = 0  # one swap phase per round, direction alternating in pairs of rounds
MODE_BOTH = 1  # P-phase then beta-phase every round
MODE_BETA = 2  # beta-swaps only, every round (standard PT per column)
MODE_NONE = 3
MODE_P = 4  # P-swaps only, every round (single-row grids)


def encode(states):
    """Integer code of each spin row: bit ``i`` set iff spin ``i`` is +1."""
    s = np.asarray(states)
    weights = np.left_shift(np.int64(1), np.arange(s.shape[-1], dtype=np.int64))
    return (s > 0).astype(np.int64) @ weights
