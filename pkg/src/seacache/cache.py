"""Skewed randomized-remapping cache with per-access logical associativity.

Each way is a direct-mapped partition indexed by PRINCE under its own key
(full-partition skew). A line accessed with logical associativity H may live in
any of the H consecutive sets starting at its per-way home set, in any way.
Replacement on a miss follows the configured fill policy:

  "random"        pick a uniform way and a uniform offset in [0, H) and overwrite
                  that slot whether or not it holds a valid line (the hardware
                  replacement rule; default).
  "invalid_first" fill a uniformly chosen invalid slot of the H x ways candidate
                  window when one exists, otherwise fall back to the random rule.
                  Makes the H = sets_per_way limit behave fully associatively.

Flush is O(1) via a validity stamp: a slot is valid only when its stamp equals
the current flush stamp. Re-keying draws fresh per-way keys, invalidates
everything, bumps the epoch and zeroes the access counter.

A CacheState instance is single-threaded. All randomness flows through the two
streams seeded at construction (a numpy Generator for bulk draws, a
random.Random for per-miss picks), so identical seeds and access sequences give
bit-identical states.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from . import prince
from .errors import ConfigError

BASE_LATENCY_CYCLES = 43  # hit latency at H = 1, cipher delay included

_FILL_POLICIES = ("random", "invalid_first")

# Soft cap on the per-instance home-set memo; exceeding it drops the memo and
# lets bulk prefetches repopulate it. Bounds memory on profiling runs that
# stream millions of one-shot candidate addresses.
_HOMES_MEMO_LIMIT = 1 << 18


def access_latency(h: int, num_banks: int) -> int:
    """Cycles for one access with logical associativity h on a banked cache.

    Base cost plus one cycle to compute the extra set addresses when h > 1,
    plus one cycle for every bank round after the first (ceil(h / banks) - 1).
    """
    if h < 1:
        raise ConfigError(f"h must be >= 1, got {h}")
    if num_banks < 1:
        raise ConfigError(f"num_banks must be >= 1, got {num_banks}")
    return BASE_LATENCY_CYCLES + (1 if h > 1 else 0) + (math.ceil(h / num_banks) - 1)


@dataclass(frozen=True)
class CacheGeometry:
    """Structural cache parameters; everything else is derived from these."""

    line_size_bytes: int = 64
    total_size_bytes: int = 8 * 1024 * 1024
    num_ways: int = 16
    num_banks: int = 8
    address_bits: int = 46

    def __post_init__(self):
        for name in ("line_size_bytes", "total_size_bytes", "num_ways", "num_banks", "address_bits"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.line_size_bytes & (self.line_size_bytes - 1):
            raise ConfigError(f"line_size_bytes: must be a power of two, got {self.line_size_bytes}")
        if self.total_size_bytes % self.line_size_bytes:
            raise ConfigError("total_size_bytes: not a multiple of line_size_bytes")
        num_lines = self.total_size_bytes // self.line_size_bytes
        if num_lines % self.num_ways:
            raise ConfigError("num_ways: does not divide the number of cache lines")
        sets = num_lines // self.num_ways
        if sets < 1 or sets & (sets - 1):
            raise ConfigError(f"num_ways: sets_per_way = {sets} is not a power of two")
        if sets % self.num_banks:
            raise ConfigError(f"num_banks: {self.num_banks} does not divide sets_per_way = {sets}")
        if self.offset_bits + self.index_bits > self.address_bits:
            raise ConfigError("address_bits: smaller than offset_bits + index_bits")

    @property
    def num_lines(self) -> int:
        return self.total_size_bytes // self.line_size_bytes

    @property
    def sets_per_way(self) -> int:
        return self.num_lines // self.num_ways

    @property
    def offset_bits(self) -> int:
        return self.line_size_bytes.bit_length() - 1

    @property
    def index_bits(self) -> int:
        return self.sets_per_way.bit_length() - 1

    @property
    def tag_bits(self) -> int:
        """Conventional tag width: address minus offset minus index bits."""
        return self.address_bits - self.offset_bits - self.index_bits

    @property
    def line_address_bits(self) -> int:
        return self.address_bits - self.offset_bits

    def scaled(self, factor: int) -> "CacheGeometry":
        """Same shape shrunk by factor (desk-scale runs); factor divides the size."""
        if factor < 1 or self.total_size_bytes % factor:
            raise ConfigError(f"scale: {factor} does not divide total_size_bytes")
        return CacheGeometry(
            line_size_bytes=self.line_size_bytes,
            total_size_bytes=self.total_size_bytes // factor,
            num_ways=self.num_ways,
            num_banks=self.num_banks,
            address_bits=self.address_bits,
        )


@dataclass(frozen=True)
class TagEntry:
    """One tag-store slot. The full line address is kept so the line can be
    identified without decrypting the index (insert_h is the logical
    associativity in force when the line was filled)."""

    full_tag: int
    valid: bool
    sdid: int
    insert_h: int


class AccessResult(NamedTuple):
    hit: bool
    latency_cycles: int
    way: int
    set_index: int
    evicted: Optional[int]


class CacheState:
    """Tag state of the skewed cache plus its per-way cipher keys."""

    def __init__(self, geometry: CacheGeometry, seed=None, *, fill_policy: str = "random"):
        if fill_policy not in _FILL_POLICIES:
            raise ConfigError(f"fill_policy: must be one of {_FILL_POLICIES}, got {fill_policy!r}")
        self.geometry = geometry
        self.fill_policy = fill_policy

        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        np_ss, py_ss = ss.spawn(2)
        self._nprng = np.random.default_rng(np_ss)
        self._pyrng = random.Random(int.from_bytes(py_ss.generate_state(4).tobytes(), "little"))

        w, s = geometry.num_ways, geometry.sets_per_way
        n = w * s
        self._tags = np.full(n, -1, dtype=np.int64)
        self._stamps = np.zeros(n, dtype=np.int64)
        self._sdids = np.zeros(n, dtype=np.int8)
        self._insert_h = np.zeros(n, dtype=np.int32)
        self._stamp = 1
        self._way_base = (np.arange(w, dtype=np.int64) * s)
        self._way_base_col = self._way_base[:, None]
        self._set_mask = s - 1
        self._homes_memo: dict[int, np.ndarray] = {}
        self._latency = {}
        self._last_slot = -1
        self.fills_since_flush = 0

        self.keys: list[int] = []
        self.epoch = 0
        self.access_counter = 0
        self._draw_keys()

    def _draw_keys(self):
        draws = self._nprng.integers(0, 1 << 64, size=(self.geometry.num_ways, 2), dtype=np.uint64)
        self.keys = [(int(hi) << 64) | int(lo) for hi, lo in draws.tolist()]

    # -- home sets ---------------------------------------------------------

    def _homes_of(self, addr: int) -> np.ndarray:
        """Per-way home sets of addr under the current keys, as an int64 row."""
        row = self._homes_memo.get(addr)
        if row is None:
            s = self.geometry.sets_per_way
            row = np.array([prince.index_of(addr, k, s) for k in self.keys], dtype=np.int64)
            if len(self._homes_memo) >= _HOMES_MEMO_LIMIT:
                self._homes_memo.clear()
            self._homes_memo[addr] = row
        return row

    def precompute_homes(self, addrs: np.ndarray) -> np.ndarray:
        """Bulk-fill the home-set memo; returns the (n, ways) home matrix."""
        addrs = np.ascontiguousarray(addrs, dtype=np.uint64)
        s = self.geometry.sets_per_way
        mat = np.empty((len(addrs), self.geometry.num_ways), dtype=np.int64)
        for w, key in enumerate(self.keys):
            mat[:, w] = prince.index_many(addrs, key, s)
        if len(self._homes_memo) + len(addrs) > _HOMES_MEMO_LIMIT:
            self._homes_memo.clear()
        self._homes_memo.update(zip(addrs.tolist(), mat))
        return mat

    def home_set(self, way: int, addr: int) -> int:
        """Home set of addr in one way (the set its encrypted index points at)."""
        if not 0 <= way < self.geometry.num_ways:
            raise ConfigError(f"way: {way} out of range")
        return int(self._homes_of(addr)[way])

    # -- lookup ------------------------------------------------------------

    def _window_flat(self, homes: np.ndarray, h: int) -> np.ndarray:
        if h == 1:
            return homes + self._way_base
        offs = np.arange(h, dtype=np.int64)
        return ((homes[:, None] + offs) & self._set_mask) + self._way_base_col

    def lookup(self, addr: int, h: int) -> Optional[tuple[int, int]]:
        """Scan the h-set window of every way for addr; (way, set) or None."""
        if not 1 <= h <= self.geometry.sets_per_way:
            raise ConfigError(f"h: must be in [1, {self.geometry.sets_per_way}], got {h}")
        flat = self._window_flat(self._homes_of(addr), h)
        hits = (self._tags.take(flat) == addr) & (self._stamps.take(flat) == self._stamp)
        if not hits.any():
            return None
        pos = int(np.flatnonzero(hits.ravel())[0])
        slot = int(flat.ravel()[pos])
        s = self.geometry.sets_per_way
        return slot // s, slot & self._set_mask

    def contains(self, addr: int, h: int) -> bool:
        """lookup() != None without building the position."""
        flat = self._window_flat(self._homes_of(addr), h)
        return bool(((self._tags.take(flat) == addr) & (self._stamps.take(flat) == self._stamp)).any())

    def residency_many(self, addrs: np.ndarray, homes: np.ndarray, h: int) -> np.ndarray:
        """contains() for a batch: bool[n] over int64 addrs[n] / homes[n, ways].

        Read-only; a single gather over all n windows replaces n separate
        lookups with identical results.
        """
        offs = np.arange(h, dtype=np.int64)
        flat = ((homes[:, :, None] + offs) & self._set_mask) + self._way_base_col[None, :, :]
        return ((self._tags.take(flat) == addrs[:, None, None])
                & (self._stamps.take(flat) == self._stamp)).any(axis=(1, 2))

    def scatter_fill(self, addrs: np.ndarray, homes: np.ndarray, h: int, sdid: int) -> np.ndarray:
        """Fill a batch of distinct non-resident lines; returns slots[n].

        Equivalent to inserting the addrs in order under the random policy
        (each draws a uniform way and window offset; on a slot collision the
        later insert wins, exactly as sequential overwrites would). Counts n
        accesses. Way/offset draws come from the cache's numpy stream.
        """
        n = len(addrs)
        ways = self._nprng.integers(0, self.geometry.num_ways, size=n)
        offs = self._nprng.integers(0, h, size=n) if h > 1 else np.zeros(n, dtype=np.int64)
        sets = (homes[np.arange(n), ways] + offs) & self._set_mask
        slots = ways * self.geometry.sets_per_way + sets
        self._tags[slots] = addrs
        self._stamps[slots] = self._stamp
        self._sdids[slots] = sdid
        self._insert_h[slots] = h
        self.access_counter += n
        self.fills_since_flush += n
        return slots

    # -- fill --------------------------------------------------------------

    def insert(self, addr: int, h: int, sdid: int) -> Optional[int]:
        """Fill addr somewhere in its h-window; returns the displaced line, if any.

        Caller guarantees addr is not already resident (lookup returned None).
        """
        homes = self._homes_of(addr)
        rng = self._pyrng
        if self.fill_policy == "invalid_first":
            flat_all = self._window_flat(homes, h).ravel()
            stale = np.flatnonzero(self._stamps.take(flat_all) != self._stamp)
            if len(stale):
                slot = int(flat_all[stale[rng.randrange(len(stale))]])
                self._fill_slot(slot, addr, h, sdid)
                return None
        way = rng.randrange(self.geometry.num_ways)
        off = rng.randrange(h)
        slot = way * self.geometry.sets_per_way + ((int(homes[way]) + off) & self._set_mask)
        evicted = int(self._tags[slot]) if self._stamps[slot] == self._stamp else None
        self._fill_slot(slot, addr, h, sdid)
        return evicted

    def _fill_slot(self, slot: int, addr: int, h: int, sdid: int):
        self._tags[slot] = addr
        self._stamps[slot] = self._stamp
        self._sdids[slot] = sdid
        self._insert_h[slot] = h
        self._last_slot = slot
        self.fills_since_flush += 1

    def _slot_of(self, way: int, set_index: int) -> int:
        return way * self.geometry.sets_per_way + set_index

    def access(self, addr: int, domain) -> AccessResult:
        """One demand access under a security domain (domain carries h and sdid)."""
        h = domain.h
        self.access_counter += 1
        lat = self._latency.get(h)
        if lat is None:
            lat = self._latency[h] = access_latency(h, self.geometry.num_banks)
        found = self.lookup(addr, h)
        if found is not None:
            return AccessResult(True, lat, found[0], found[1], None)
        evicted = self.insert(addr, h, domain.sdid)
        slot = self._last_slot
        s = self.geometry.sets_per_way
        return AccessResult(False, lat, slot // s, slot & self._set_mask, evicted)

    # -- flush / re-key ----------------------------------------------------

    def flush(self):
        """Invalidate every entry; keys, epoch and access counter unchanged."""
        self._stamp += 1
        self.fills_since_flush = 0

    def rekey(self):
        """Fresh per-way keys, full invalidation, epoch bump, counter reset."""
        self._draw_keys()
        self._stamp += 1
        self._homes_memo.clear()
        self.epoch += 1
        self.access_counter = 0
        self.fills_since_flush = 0

    # -- introspection (tests, invariant scans) -----------------------------

    def entry_at(self, way: int, set_index: int) -> TagEntry:
        slot = self._slot_of(way, set_index)
        valid = bool(self._stamps[slot] == self._stamp)
        return TagEntry(int(self._tags[slot]), valid, int(self._sdids[slot]), int(self._insert_h[slot]))

    def iter_valid_entries(self) -> Iterator[tuple[int, int, TagEntry]]:
        s = self.geometry.sets_per_way
        for slot in np.flatnonzero(self._stamps == self._stamp).tolist():
            yield slot // s, slot & self._set_mask, self.entry_at(slot // s, slot & self._set_mask)

    def valid_count(self) -> int:
        return int((self._stamps == self._stamp).sum())

    def fingerprint(self) -> bytes:
        """Digest of the complete tag state; equal digests mean equal states."""
        import hashlib

        d = hashlib.blake2b(digest_size=16)
        valid = self._stamps == self._stamp
        d.update(valid.tobytes())
        d.update(np.where(valid, self._tags, -1).tobytes())
        d.update(np.where(valid, self._sdids, 0).tobytes())
        d.update(np.where(valid, self._insert_h, 0).tobytes())
        for k in self.keys:
            d.update(k.to_bytes(16, "little"))
        d.update(self.epoch.to_bytes(8, "little"))
        d.update(self.access_counter.to_bytes(8, "little"))
        return d.digest()


def home_set(state: CacheState, way: int, addr: int) -> int:
    return state.home_set(way, addr)
