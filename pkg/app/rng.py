"""Deterministic SplitMix64 streams.

Every random decision in the toolkit (noise selection, ensemble sampling)
draws from a stream keyed by the integers that identify it, e.g.
(seed, sentence_index, word_index). Two decisions never share a stream, so
results do not depend on processing order or parallelism.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold a base seed and any number of integer keys into one 64-bit state."""
    state = mix64((seed + GOLDEN_GAMMA) & MASK64)
    for key in keys:
        state = mix64(((state ^ (key & MASK64)) + GOLDEN_GAMMA) & MASK64)
    return state


class SplitMix64:
    def __init__(self, state: int):
        self.state = state & MASK64

    @classmethod
    def derived(cls, seed: int, *keys: int) -> "SplitMix64":
        return cls(derive_seed(seed, *keys))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"randbelow needs a positive bound, got {n}")
        return self.next_u64() % n
