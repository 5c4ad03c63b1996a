"""Two-core trace replay over the randomized cache.

Core 0 runs under the domain with logical associativity vh, core 1 under ah
(equal values put both cores in the same domain). Records carry a line
address and an optional retired-instruction delta; with no deltas in the trace
every access counts as one instruction and MPKI degenerates to misses per
kilo-access, which the metrics flag as mpki_is_mpka.

Text format, one record per line, '#' comments and blank lines skipped:

    core_id address_hex [instruction_delta]

Binary format: little-endian records of (uint8 core_id, uint64 line_address,
uint32 instruction_delta), 13 bytes each, no header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, NamedTuple, Optional, TextIO

import numpy as np

from .cache import CacheGeometry, CacheState
from .domains import HIGH_SDID, NORMAL_SDID, DomainTable
from .errors import ConfigError, TraceParseError


class TraceRecord(NamedTuple):
    core_id: int
    line_address: int
    instruction_delta: int = 1


RECORD_STRUCT = struct.Struct("<BQI")

SYNTH_KINDS = ("working-set", "strided", "mixed-two-core")


# -- formats ----------------------------------------------------------------


def parse_trace_text(lines: Iterable[str]) -> Iterator[TraceRecord]:
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) not in (2, 3):
            raise TraceParseError(lineno, f"expected 2 or 3 fields, got {len(parts)}")
        try:
            core_id = int(parts[0])
            address = int(parts[1], 16)
            delta = int(parts[2]) if len(parts) == 3 else 1
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        yield TraceRecord(core_id, address, delta)


def write_trace_text(records: Iterable[TraceRecord], fileobj: TextIO) -> None:
    for r in records:
        fileobj.write(f"{r.core_id} {r.line_address:x} {r.instruction_delta}\n")


def parse_trace_binary(fileobj: BinaryIO) -> Iterator[TraceRecord]:
    n = 0
    while True:
        chunk = fileobj.read(RECORD_STRUCT.size)
        if not chunk:
            return
        n += 1
        if len(chunk) != RECORD_STRUCT.size:
            raise TraceParseError(n, f"truncated record ({len(chunk)} of {RECORD_STRUCT.size} bytes)")
        yield TraceRecord(*RECORD_STRUCT.unpack(chunk))


def write_trace_binary(records: Iterable[TraceRecord], fileobj: BinaryIO) -> None:
    for r in records:
        fileobj.write(RECORD_STRUCT.pack(r.core_id, r.line_address, r.instruction_delta))


# -- replay -------------------------------------------------------------------


@dataclass
class CoreMetrics:
    accesses: int = 0
    misses: int = 0
    instructions: int = 0
    total_latency_cycles: int = 0

    @property
    def miss_rate(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0

    @property
    def mpki(self) -> float:
        return 1000.0 * self.misses / self.instructions if self.instructions else 0.0

    @property
    def mean_latency_cycles(self) -> float:
        return self.total_latency_cycles / self.accesses if self.accesses else 0.0


@dataclass
class TraceMetrics:
    per_core: dict[int, CoreMetrics] = field(default_factory=dict)
    total: CoreMetrics = field(default_factory=CoreMetrics)
    rekeys: int = 0
    mpki_is_mpka: bool = True  # True when no record carried an explicit delta


def run_trace(
    records: Iterable[TraceRecord],
    geometry: CacheGeometry,
    vh: int,
    ah: int,
    *,
    rekey_every: Optional[int] = None,
    seed=None,
    fill_policy: str = "random",
) -> TraceMetrics:
    """Replay a two-core trace and collect per-core and total miss metrics.

    A line address touched by both cores while vh != ah would be looked up
    with two different associativities, which the domain model forbids; such
    traces are rejected with the offending record's number.
    """
    if rekey_every is not None and rekey_every <= 0:
        raise ConfigError(f"rekey_every: must be > 0, got {rekey_every}")
    table = DomainTable(h_normal=min(vh, ah), h_high=max(vh, ah), line_address_bits=geometry.line_address_bits)
    hi_core = 0 if vh >= ah else 1
    domain_of_core = {
        hi_core: table.domain(HIGH_SDID),
        1 - hi_core: table.domain(NORMAL_SDID),
    }
    cache = CacheState(geometry, seed=seed, fill_policy=fill_policy)
    metrics = TraceMetrics(per_core={0: CoreMetrics(), 1: CoreMetrics()})
    owner: dict[int, int] = {}
    line_limit = 1 << geometry.line_address_bits
    split_domains = vh != ah

    for n, rec in enumerate(records, start=1):
        if rec.core_id not in (0, 1):
            raise TraceParseError(n, f"core_id must be 0 or 1, got {rec.core_id}")
        if not 0 <= rec.line_address < line_limit:
            raise TraceParseError(n, f"line_address {rec.line_address:#x} outside {geometry.line_address_bits}-bit space")
        if rec.instruction_delta < 0:
            raise TraceParseError(n, f"instruction_delta must be >= 0, got {rec.instruction_delta}")
        if split_domains:
            prev = owner.setdefault(rec.line_address, rec.core_id)
            if prev != rec.core_id:
                raise TraceParseError(
                    n,
                    f"line {rec.line_address:#x} already accessed by core {prev}; "
                    "cross-core sharing needs equal associativities or a duplicated page",
                )
        res = cache.access(rec.line_address, domain_of_core[rec.core_id])
        for m in (metrics.per_core[rec.core_id], metrics.total):
            m.accesses += 1
            m.instructions += rec.instruction_delta
            m.misses += not res.hit
            m.total_latency_cycles += res.latency_cycles
        if rec.instruction_delta != 1:
            metrics.mpki_is_mpka = False
        if rekey_every is not None and cache.access_counter >= rekey_every:
            cache.rekey()
            metrics.rekeys += 1
    return metrics


# -- synthetic traces ---------------------------------------------------------


def synth_trace(kind: str, *, length: int, seed=None, **params) -> list[TraceRecord]:
    """Deterministic synthetic traces.

    working-set: uniform draws over ws_lines lines starting at base (core_id).
    strided: base + i*stride_lines, wrapping at wrap_lines when given.
    mixed-two-core: two working-set streams over disjoint ranges (ws0_lines
        at base0 for core 0, ws1_lines at base1 for core 1), interleaved so
        core 1 receives floor(core1_fraction * length) records spread evenly;
        any prefix holds the two cores in that ratio up to one record.
    """
    if length < 0:
        raise ConfigError(f"length: must be >= 0, got {length}")
    rng = np.random.default_rng(seed)
    if kind == "working-set":
        ws = int(params.pop("ws_lines", 4096))
        base = int(params.pop("base", 0))
        core = int(params.pop("core_id", 0))
        _reject_extras(kind, params)
        if ws < 1:
            raise ConfigError(f"ws_lines: must be >= 1, got {ws}")
        addrs = rng.integers(base, base + ws, size=length, dtype=np.uint64).tolist()
        return [TraceRecord(core, a) for a in addrs]
    if kind == "strided":
        stride = int(params.pop("stride_lines", 1))
        base = int(params.pop("base", 0))
        core = int(params.pop("core_id", 0))
        wrap = params.pop("wrap_lines", None)
        _reject_extras(kind, params)
        if stride < 1:
            raise ConfigError(f"stride_lines: must be >= 1, got {stride}")
        out = []
        for i in range(length):
            off = i * stride
            if wrap is not None:
                off %= int(wrap)
            out.append(TraceRecord(core, base + off))
        return out
    if kind == "mixed-two-core":
        ws0 = int(params.pop("ws0_lines", 4096))
        ws1 = int(params.pop("ws1_lines", 4096))
        base0 = int(params.pop("base0", 0))
        base1 = int(params.pop("base1", 1 << 32))
        frac = float(params.pop("core1_fraction", 0.5))
        _reject_extras(kind, params)
        if ws0 < 1 or ws1 < 1:
            raise ConfigError(f"ws lines: must be >= 1, got {ws0}/{ws1}")
        if not 0.0 <= frac <= 1.0:
            raise ConfigError(f"core1_fraction: must be within [0, 1], got {frac}")
        if base0 + ws0 > base1 and base1 + ws1 > base0:
            raise ConfigError("mixed-two-core: core ranges overlap")
        a0 = rng.integers(base0, base0 + ws0, size=length, dtype=np.uint64).tolist()
        a1 = rng.integers(base1, base1 + ws1, size=length, dtype=np.uint64).tolist()
        out = []
        sent1 = 0
        for i in range(length):
            want1 = int((i + 1) * frac)  # evenly spread core-1 quota
            if want1 > sent1:
                out.append(TraceRecord(1, a1[sent1]))
                sent1 += 1
            else:
                out.append(TraceRecord(0, a0[i - sent1]))
        return out
    raise ConfigError(f"kind: must be one of {SYNTH_KINDS}, got {kind!r}")


def _reject_extras(kind: str, params: dict) -> None:
    if params:
        raise ConfigError(f"{kind}: unknown parameters {sorted(params)}")
