#!/usr/bin/env python3
"""Writes the RNG golden file used by the C++ tests from a separate pure-Python
implementation of splitmix64 seeding, xoshiro256** and the named-stream split."""

import sys

MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def fnv1a64(data: bytes):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro:
    def __init__(self, seed):
        self.s = []
        sm = seed
        for _ in range(4):
            sm, v = splitmix64(sm)
            self.s.append(v)

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result


def derive_seed(seed, name):
    _, v = splitmix64(seed ^ fnv1a64(name.encode()))
    return v


def derive_indexed(seed, name, index):
    base = derive_seed(seed, name) ^ ((index * 0xD1B54A32D192ED03) & MASK)
    _, v = splitmix64(base)
    return v


def main(path):
    lines = []
    for seed in (0, 1, 42, 0xDEADBEEF):
        rng = Xoshiro(seed)
        draws = " ".join(f"{rng.next():016x}" for _ in range(8))
        lines.append(f"stream {seed} {draws}")
    for seed, name in ((0, "dataset"), (7, "init"), (7, "eval"), (123, "dropout/current")):
        lines.append(f"derive {seed} {name} {derive_seed(seed, name):016x}")
    for seed, name, index in ((0, "dataset/env", 0), (0, "dataset/env", 3), (9, "window", 1000)):
        lines.append(f"derive_indexed {seed} {name} {index} {derive_indexed(seed, name, index):016x}")
    rng = Xoshiro(42)
    lines.append("transcript 42 " + " ".join(f"{rng.next():016x}" for _ in range(1000)))
    rng = Xoshiro(5)
    uniforms = " ".join(repr((rng.next() >> 11) * 2.0**-53) for _ in range(4))
    lines.append(f"uniform 5 {uniforms}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/rng_golden.txt")
