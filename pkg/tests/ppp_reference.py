"""Independent step-by-step reference of the profiling pipeline.

A deliberately naive re-implementation used as a statistical oracle: its own
dict-backed skewed cache (blake2b per-way index instead of the cipher), its
own RNG, and a literal transcription of the prime / prune / probe iteration.
Because the index functions and random streams differ, agreement with the
main implementation is judged in distribution (mean eviction-set size, mean
round success rate over many seeds), never per seed.

Written against the pipeline description only; imports nothing from the
package under test.
"""

from __future__ import annotations

import hashlib
import random


class RefCache:
    """Skewed cache: ways x sets slots, uniform way + window-offset fill."""

    def __init__(self, ways: int, sets: int, seed: int):
        key_rng = random.Random(seed)
        self.keys = [key_rng.getrandbits(64) for _ in range(ways)]
        self.rng = random.Random(seed ^ 0x5EED)
        self.ways = ways
        self.sets = sets
        self.slots: dict[tuple[int, int], int] = {}

    def home(self, way: int, addr: int) -> int:
        data = self.keys[way].to_bytes(8, "big") + addr.to_bytes(8, "big")
        digest = hashlib.blake2b(data, digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.sets

    def resident(self, addr: int, h: int) -> bool:
        for w in range(self.ways):
            base = self.home(w, addr)
            for off in range(h):
                if self.slots.get((w, (base + off) % self.sets)) == addr:
                    return True
        return False

    def access(self, addr: int, h: int) -> bool:
        """True on hit; on miss fills a uniform (way, offset) slot."""
        if self.resident(addr, h):
            return True
        w = self.rng.randrange(self.ways)
        off = self.rng.randrange(h)
        self.slots[(w, (self.home(w, addr) + off) % self.sets)] = addr
        return False

    def flush(self):
        self.slots.clear()


def ref_profile(
    cache: RefCache,
    victim: int,
    victim_page: int,
    k: int,
    budget: int,
    vh: int,
    ah: int,
    aggressive_after: int = 5,
    address_space: int = 1 << 30,
) -> list[int]:
    """Prime / prune / probe until the access budget runs out."""
    members: list[int] = []
    used = 0

    def spent() -> bool:
        nonlocal used
        if used >= budget:
            return True
        used += 1
        return False

    while used < budget:
        candidates = []
        while len(candidates) < k:
            c = cache.rng.randrange(address_space)
            if c >> 6 != victim_page and c not in candidates:
                candidates.append(c)

        done = False
        for c in candidates:
            if spent():
                done = True
                break
            cache.access(c, ah)
        if done:
            break

        alive = list(candidates)
        for pass_no in range(1, 3 * aggressive_after + 1):
            if not alive or done:
                break
            missed = False
            if pass_no <= aggressive_after:
                for c in alive:
                    if spent():
                        done = True
                        break
                    if not cache.access(c, ah):
                        missed = True
            else:
                survivors = []
                for c in alive:
                    if spent():
                        done = True
                        break
                    if cache.resident(c, ah):
                        survivors.append(c)
                    else:
                        missed = True
                alive = survivors
            if not missed:
                break
        if done:
            break

        if spent():
            break
        cache.access(victim, vh)

        for c in alive:
            if spent():
                done = True
                break
            if not cache.resident(c, ah) and c not in members:
                members.append(c)
        if done:
            break

        cache.flush()
    return members


def ref_round(cache: RefCache, members: list[int], victim: int, vh: int, ah: int) -> bool:
    """One Prime+Probe evaluation round, eviction metric."""
    cache.flush()
    cache.access(victim, vh)
    for m in members:
        cache.access(m, ah)
    return not cache.resident(victim, vh)
