"""Contention attacker: eviction-set profiling and Prime+Probe evaluation.

Profiling (ppp_profile) repeats prime/prune/probe iterations against one victim
line until the re-keying access budget runs out. Each iteration primes K fresh
random candidate lines, prunes self-conflicts by re-accessing them (reloading
misses for the first aggressive_after passes, then discarding misses via
non-reloading residency checks), triggers the victim once, and probes the
survivors: a probed miss can only have been displaced by the victim's fill, so
that candidate joins the partially congruent eviction set. The cache is flushed
between iterations (flushes are a modeled capability and cost no budget; every
other cache touch, probes included, costs exactly one budget unit, and
profiling stops the moment the next touch would overrun the budget).

Evaluation (prime_probe_round / attack_success_rate) replays the captured set:
flush, load the victim, prime every member once, then either test whether the
victim was evicted (metric "evict") or reload the victim and test whether its
refill displaced a member (metric "detect").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .cache import CacheState
from .domains import DomainTable, SecurityDomain
from .errors import ConfigError, StaleEvictionSetError

SUCCESS_METRICS = ("evict", "detect")


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of one profiling + evaluation run.

    k: fresh candidate lines primed per profiling iteration.
    rkp_multiple: re-keying period as a multiple of the line count; the
        profiling budget is rkp_multiple * num_lines accesses.
    aggressive_after: prune pass number after which missing candidates are
        discarded instead of reloaded.
    eval_rounds: Prime+Probe rounds run against the finished set.
    success_metric: "evict" (victim line gone after priming) or "detect"
        (victim's reload displaced a member).
    """

    k: int
    rkp_multiple: float
    aggressive_after: int = 5
    eval_rounds: int = 100_000
    success_metric: str = "evict"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        if self.rkp_multiple <= 0:
            raise ConfigError(f"rkp_multiple: must be > 0, got {self.rkp_multiple}")
        if self.aggressive_after < 1:
            raise ConfigError(f"aggressive_after: must be >= 1, got {self.aggressive_after}")
        if self.success_metric not in SUCCESS_METRICS:
            raise ConfigError(f"success_metric: must be one of {SUCCESS_METRICS}")


@dataclass
class PCESet:
    """Partially congruent eviction set captured by one profiling run."""

    members: list[int]
    profiling_accesses_used: int
    epoch: int
    victim: int
    _eval_state: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ConfigError("members: duplicates are not allowed")
        if self.victim in self.members:
            raise ConfigError("members: the victim line cannot be a member")

    def __len__(self) -> int:
        return len(self.members)


class _BudgetExhausted(Exception):
    pass


class _CandidatePool:
    """Streams fresh uniform attacker line addresses, victim page excluded,
    each batch paired with its bulk-computed home-set matrix."""

    _BATCH = 1 << 15

    def __init__(self, cache: CacheState, victim_page: int, page_bits: int):
        self._cache = cache
        self._victim_page = victim_page
        self._page_bits = page_bits
        self._line_bits = cache.geometry.line_address_bits
        self._buf: list[int] = []
        self._homes: Optional[np.ndarray] = None
        self._pos = 0

    def take(self, n: int) -> tuple[list[int], np.ndarray]:
        """n addresses, distinct within the slice, plus their homes[n, ways]."""
        end = self._pos + n
        if end <= len(self._buf):
            out = self._buf[self._pos:end]
            if len(set(out)) == n:
                rows = self._homes[self._pos:end]
                self._pos = end
                return out, rows
        out = []
        rows = []
        taken = set()
        while len(out) < n:
            if self._pos >= len(self._buf):
                self._refill()
            c = self._buf[self._pos]
            if c not in taken:
                taken.add(c)
                out.append(c)
                rows.append(self._homes[self._pos])
            self._pos += 1
        return out, np.stack(rows)

    def _refill(self):
        raw = self._cache._nprng.integers(0, 1 << self._line_bits, size=self._BATCH, dtype=np.uint64)
        keep = raw[(raw >> np.uint64(self._page_bits)) != self._victim_page]
        self._homes = self._cache.precompute_homes(keep)
        self._buf = keep.tolist()
        self._pos = 0


def _attack_domains(domains: DomainTable, victim: int) -> tuple[SecurityDomain, SecurityDomain]:
    """(victim domain, attacker domain): the victim's page picks its domain, the
    attacker occupies the other one."""
    vd = domains.domain_of_address(victim)
    return vd, domains.domain(1 - vd.sdid)


def ppp_profile(cache: CacheState, victim: int, cfg: AttackConfig, domains: DomainTable) -> PCESet:
    """Build a PCE set for victim within the re-keying access budget."""
    victim_domain, attacker_domain = _attack_domains(domains, victim)
    ah = attacker_domain.h
    budget = int(round(cfg.rkp_multiple * cache.geometry.num_lines))
    page_bits = domains.page_size_lines.bit_length() - 1
    pool = _CandidatePool(cache, victim >> page_bits, page_bits)

    members: list[int] = []
    member_set: set[int] = set()
    used = 0
    max_passes = 3 * cfg.aggressive_after

    def charge():
        nonlocal used
        if used >= budget:
            raise _BudgetExhausted
        used += 1

    def room(n: int) -> bool:
        return used + n <= budget

    # The batched phases below replace loops of per-address cache touches
    # with one gather each; every touch is still charged against the budget,
    # and whenever a batch would cross the budget line or needs mutation
    # beyond a plain batch fill, the loop falls back to the exact sequential
    # form (which halts mid-phase the moment the budget runs out).
    try:
        while used < budget:
            candidates, cand_homes = pool.take(cfg.k)
            cand_arr = np.array(candidates, dtype=np.int64)

            # PRIME: load the fresh candidates. The cache was flushed at the
            # end of the previous iteration, so normally none are resident
            # and the K misses collapse to one batch fill.
            if (
                cache.fill_policy == "random"
                and room(cfg.k)
                and (cache.fills_since_flush == 0
                     or not cache.residency_many(cand_arr, cand_homes, ah).any())
            ):
                cache.scatter_fill(cand_arr, cand_homes, ah, attacker_domain.sdid)
                used += cfg.k
            else:
                for c in candidates:
                    charge()
                    cache.access(c, attacker_domain)

            # PRUNE: squeeze out self-conflicts until a pass is clean.
            alive, alive_arr, alive_homes = candidates, cand_arr, cand_homes
            for pass_no in range(1, max_passes + 1):
                if not alive:
                    break
                resident = cache.residency_many(alive_arr, alive_homes, ah)
                clean = bool(resident.all())
                if pass_no <= cfg.aggressive_after:
                    if clean and room(len(alive)):
                        used += len(alive)  # a clean pass re-touches each once
                        break
                    # reload pass: misses are re-inserted in sequence
                    missed = False
                    for c in alive:
                        charge()
                        if not cache.access(c, attacker_domain).hit:
                            missed = True
                    if not missed:
                        break
                else:
                    # discarding pass: read-only, so the batch check is exact
                    if room(len(alive)):
                        used += len(alive)
                    else:
                        for c in alive:
                            charge()
                            cache.contains(c, ah)
                    keep = resident.tolist()
                    alive = [c for c, r in zip(alive, keep) if r]
                    alive_arr = alive_arr[resident]
                    alive_homes = alive_homes[resident]
                    if clean:
                        break

            # VICTIM: one attacker-triggered access of the target line.
            charge()
            cache.access(victim, victim_domain)

            # PROBE: a surviving candidate that went missing was displaced by
            # the victim's fill (nothing else has touched the cache since the
            # last clean or discarding pass). Read-only, batched.
            if alive:
                if room(len(alive)):
                    used += len(alive)
                    resident = cache.residency_many(alive_arr, alive_homes, ah).tolist()
                    for c, res in zip(alive, resident):
                        if not res and c not in member_set:
                            member_set.add(c)
                            members.append(c)
                else:
                    for c in alive:
                        charge()
                        if not cache.contains(c, ah) and c not in member_set:
                            member_set.add(c)
                            members.append(c)

            cache.flush()
    except _BudgetExhausted:
        pass

    return PCESet(members=members, profiling_accesses_used=used, epoch=cache.epoch, victim=victim)


def _eval_arrays(cache: CacheState, pce: PCESet):
    state = pce._eval_state
    if state is not None and state[0] is cache and state[1] == cache.epoch:
        return state[2], state[3], state[4]
    members_arr = np.array(pce.members, dtype=np.int64)
    homes = cache.precompute_homes(members_arr.astype(np.uint64))
    member_set = frozenset(pce.members)
    pce._eval_state = (cache, cache.epoch, members_arr, homes, member_set)
    return members_arr, homes, member_set


def prime_probe_round(
    cache: CacheState,
    pce: PCESet,
    victim: int,
    metric: str,
    domains: DomainTable,
) -> bool:
    """One evaluation round; True when the attack observable fired."""
    if metric not in SUCCESS_METRICS:
        raise ConfigError(f"metric: must be one of {SUCCESS_METRICS}")
    if pce.epoch != cache.epoch:
        raise StaleEvictionSetError(
            f"eviction set built at epoch {pce.epoch}, cache now at epoch {cache.epoch}"
        )
    victim_domain, attacker_domain = _attack_domains(domains, victim)
    s = cache.geometry.sets_per_way

    cache.flush()
    vres = cache.access(victim, victim_domain)
    victim_slot = vres.way * s + vres.set_index

    if pce.members:
        if cache.fill_policy == "random":
            # Every member access is a guaranteed miss (the cache was flushed
            # and members are distinct), so the primes collapse to one batch
            # fill; the victim was evicted iff some member took its slot.
            members_arr, homes, member_set = _eval_arrays(cache, pce)
            slots = cache.scatter_fill(members_arr, homes, attacker_domain.h, attacker_domain.sdid)
            victim_evicted = bool((slots == victim_slot).any())
        else:
            member_set = frozenset(pce.members)
            for m in pce.members:
                cache.access(m, attacker_domain)
            victim_evicted = not cache.contains(victim, victim_domain.h)
    else:
        member_set = frozenset()
        victim_evicted = False

    if metric == "evict":
        return victim_evicted
    # detect: reload the victim; success iff the refill displaced a member.
    reload = cache.access(victim, victim_domain)
    if reload.hit:
        return False
    return reload.evicted is not None and reload.evicted in member_set


class SuccessRate(NamedTuple):
    rate: float
    successes: int
    rounds: int


def attack_success_rate(
    cache: CacheState,
    pce: PCESet,
    victim: int,
    cfg: AttackConfig,
    domains: DomainTable,
) -> SuccessRate:
    """Monte-Carlo success rate of the set over cfg.eval_rounds rounds."""
    successes = 0
    for _ in range(cfg.eval_rounds):
        if prime_probe_round(cache, pce, victim, cfg.success_metric, domains):
            successes += 1
    rounds = cfg.eval_rounds
    return SuccessRate(successes / rounds if rounds else 0.0, successes, rounds)


class KSweepResult(NamedTuple):
    best_k: int
    best_rate: float
    rates: dict[int, float]


def optimal_k_sweep(
    cache_factory: Callable[[int], tuple[CacheState, int, DomainTable]],
    k_values: Sequence[int],
    cfg: AttackConfig,
    *,
    victim: Optional[int] = None,
) -> KSweepResult:
    """Full profile+evaluate pipeline per K; highest rate wins, ties to the
    smaller K. cache_factory(k) returns a fresh (cache, victim, domains) triple
    so every K gets its own keys and seeds; a fixed victim overrides the
    factory's."""
    if not k_values:
        raise ConfigError("k_values: must not be empty")
    rates: dict[int, float] = {}
    for k in k_values:
        cache, v, domains = cache_factory(k)
        if victim is not None:
            v = victim
        kcfg = AttackConfig(
            k=k,
            rkp_multiple=cfg.rkp_multiple,
            aggressive_after=cfg.aggressive_after,
            eval_rounds=cfg.eval_rounds,
            success_metric=cfg.success_metric,
        )
        pce = ppp_profile(cache, v, kcfg, domains)
        rates[k] = attack_success_rate(cache, pce, v, kcfg, domains).rate
    best_k = max(rates, key=lambda kk: (rates[kk], -kk))
    return KSweepResult(best_k, rates[best_k], rates)
