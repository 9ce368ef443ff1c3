"""Deterministic seed derivation.

Every random stream in a run is derived from one master seed so that
independent stages (candidate generation, fold assignment, synthetic
data) get decorrelated but fully reproducible generators.
"""

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance by the golden gamma and finalize."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *parts: int) -> int:
    """Mix a master seed with integer tags into an independent 64-bit seed.

    The same (master_seed, parts) always yields the same value; distinct
    tag tuples yield streams that do not collide in practice.
    """
    h = splitmix64(master_seed & _MASK)
    for p in parts:
        h = splitmix64(h ^ (p & _MASK))
    return h
