"""Security-evaluation experiment grid: per-cell runs, CSV records, intervals.

A cell is one (vh, ah, rkp_multiple, k, seed) tuple: build a cache with fresh
keys, bind one random victim line to the domain whose logical associativity is
vh, profile a PCE set from the other domain within the re-keying budget, then
measure the Prime+Probe success rate over eval_rounds rounds. Cells are seeded
position-independently, so a cell's record does not depend on which other cells
run alongside it or in what order.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .attack import AttackConfig, attack_success_rate, ppp_profile
from .cache import CacheGeometry, CacheState
from .domains import HIGH_SDID, NORMAL_SDID, DomainTable
from .errors import ConfigError

CSV_FIELDS = (
    "vh",
    "ah",
    "rkp_multiple",
    "k",
    "seed",
    "pce_size",
    "rounds",
    "successes",
    "success_rate",
    "ci_low",
    "ci_high",
    "wall_time_s",
    "error",
)


@dataclass(frozen=True)
class ExperimentRecord:
    """One CSV row; metric fields are None on a failed cell."""

    vh: int
    ah: int
    rkp_multiple: float
    k: int
    seed: int
    pce_size: Optional[int] = None
    rounds: Optional[int] = None
    successes: Optional[int] = None
    success_rate: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    wall_time_s: Optional[float] = None
    error: str = ""


assert tuple(f.name for f in fields(ExperimentRecord)) == CSV_FIELDS


def wilson_interval(successes: int, rounds: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1]."""
    if rounds <= 0:
        raise ConfigError(f"rounds: must be > 0, got {rounds}")
    if not 0 <= successes <= rounds:
        raise ConfigError(f"successes: {successes} outside [0, {rounds}]")
    if not 0 < confidence < 1:
        raise ConfigError(f"confidence: must be in (0, 1), got {confidence}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / rounds
    z2 = z * z
    denom = 1 + z2 / rounds
    centre = (p + z2 / (2 * rounds)) / denom
    half = z * ((p * (1 - p) / rounds + z2 / (4 * rounds * rounds)) ** 0.5) / denom
    # the interval ends exactly at the boundary for degenerate counts
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == rounds else min(1.0, centre + half)
    return low, high


def _cell_seed_sequence(master_seed: int, vh: int, ah: int, rkp_multiple: float, k: int, seed: int) -> np.random.SeedSequence:
    # entropy entries must be non-negative ints; fractional budgets are keyed
    # at 1/1024 granularity
    return np.random.SeedSequence([master_seed, vh, ah, int(round(rkp_multiple * 1024)), k, seed])


def run_cell(
    geometry: CacheGeometry,
    vh: int,
    ah: int,
    rkp_multiple: float,
    k: int,
    seed: int,
    *,
    eval_rounds: int = 100_000,
    success_metric: str = "evict",
    aggressive_after: int = 5,
    fill_policy: str = "random",
    master_seed: int = 0,
) -> ExperimentRecord:
    """Profile + evaluate one grid cell; deterministic in its arguments."""
    if eval_rounds <= 0:
        raise ConfigError(f"eval_rounds: must be > 0, got {eval_rounds}")
    if not 1 <= vh <= geometry.sets_per_way or not 1 <= ah <= geometry.sets_per_way:
        raise ConfigError(f"vh/ah: must be within [1, {geometry.sets_per_way}], got {vh}/{ah}")
    cfg = AttackConfig(
        k=k,
        rkp_multiple=rkp_multiple,
        aggressive_after=aggressive_after,
        eval_rounds=eval_rounds,
        success_metric=success_metric,
    )

    t0 = time.perf_counter()
    ss = _cell_seed_sequence(master_seed, vh, ah, rkp_multiple, k, seed)
    cache_ss, layout_ss = ss.spawn(2)
    cache = CacheState(geometry, seed=cache_ss, fill_policy=fill_policy)

    # The victim lives in whichever domain carries H == vh; the attacker
    # profiles from the other one. Ties go to the high-protection domain.
    table = DomainTable(
        h_normal=min(vh, ah),
        h_high=max(vh, ah),
        line_address_bits=geometry.line_address_bits,
        default_sdid=NORMAL_SDID if vh >= ah else HIGH_SDID,
    )
    victim_sdid = HIGH_SDID if vh >= ah else NORMAL_SDID
    layout_rng = np.random.default_rng(layout_ss)
    page_span = 1 << (geometry.line_address_bits - table.page_size_lines.bit_length() + 1)
    victim_page = int(layout_rng.integers(0, page_span // 2))  # keep clear of duplicate ids
    table.register_page(victim_page, victim_sdid)
    victim = table.page_base_address(victim_page) + int(layout_rng.integers(0, table.page_size_lines))

    pce = ppp_profile(cache, victim, cfg, table)
    res = attack_success_rate(cache, pce, victim, cfg, table)
    ci_low, ci_high = wilson_interval(res.successes, res.rounds)
    return ExperimentRecord(
        vh=vh,
        ah=ah,
        rkp_multiple=rkp_multiple,
        k=k,
        seed=seed,
        pce_size=len(pce),
        rounds=res.rounds,
        successes=res.successes,
        success_rate=res.rate,
        ci_low=ci_low,
        ci_high=ci_high,
        wall_time_s=time.perf_counter() - t0,
    )


def _run_cell_task(args) -> ExperimentRecord:
    geometry, cell, kwargs = args
    vh, ah, rkp_multiple, k, seed = cell
    try:
        return run_cell(geometry, vh, ah, rkp_multiple, k, seed, **kwargs)
    except Exception as exc:  # a bad cell must not sink the rest of the grid
        return ExperimentRecord(
            vh=vh, ah=ah, rkp_multiple=rkp_multiple, k=k, seed=seed,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_grid(
    geometry: CacheGeometry,
    cells: Sequence[tuple],
    *,
    parallelism: Optional[int] = None,
    csv_path: Optional[str] = None,
    **cell_kwargs,
) -> list[ExperimentRecord]:
    """Run every (vh, ah, rkp_multiple, k, seed) cell; records in input order.

    A failing cell yields a record with its config echoed, empty metrics and
    the error message; remaining cells still run. With parallelism > 1 cells
    are distributed over worker processes (per-cell seeding keeps results
    identical to a serial run).
    """
    cells = [tuple(c) for c in cells]
    for c in cells:
        if len(c) != 5:
            raise ConfigError(f"cells: expected (vh, ah, rkp_multiple, k, seed), got {c!r}")
    tasks = [(geometry, c, cell_kwargs) for c in cells]
    if parallelism is None:
        parallelism = 1
    if parallelism > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(parallelism, len(cells))) as pool:
            records = list(pool.map(_run_cell_task, tasks))
    else:
        records = [_run_cell_task(t) for t in tasks]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            write_records_csv(records, f)
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_records_csv(records: Sequence[ExperimentRecord], fileobj) -> None:
    w = csv.writer(fileobj)
    w.writerow(CSV_FIELDS)
    for r in records:
        row = [_fmt(getattr(r, name)) for name in CSV_FIELDS]
        # wall time is the one legitimately run-dependent column
        row[CSV_FIELDS.index("wall_time_s")] = "" if r.wall_time_s is None else format(r.wall_time_s, ".3f")
        w.writerow(row)


def records_csv_text(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    write_records_csv(records, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class Aggregate:
    """Pooled per-configuration statistics over seeds."""

    vh: int
    ah: int
    rkp_multiple: float
    k: int
    seeds: int
    rounds: int
    successes: int
    success_rate: float
    ci_low: float
    ci_high: float
    mean_pce_size: float


def aggregate_records(records: Sequence[ExperimentRecord]) -> list[Aggregate]:
    """Pool per-seed records per (vh, ah, rkp_multiple, k).

    Pooling successes over pooled rounds is exactly the success-weighted mean
    of the per-seed rates. Failed cells are skipped. Output follows first
    appearance order.
    """
    order: list[tuple] = []
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for r in records:
        if r.error:
            continue
        key = (r.vh, r.ah, r.rkp_multiple, r.k)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        rs = groups[key]
        rounds = sum(r.rounds for r in rs)
        successes = sum(r.successes for r in rs)
        lo, hi = wilson_interval(successes, rounds)
        out.append(
            Aggregate(
                vh=key[0],
                ah=key[1],
                rkp_multiple=key[2],
                k=key[3],
                seeds=len(rs),
                rounds=rounds,
                successes=successes,
                success_rate=successes / rounds,
                ci_low=lo,
                ci_high=hi,
                mean_pce_size=sum(r.pce_size for r in rs) / len(rs),
            )
        )
    return out


def best_k_aggregates(aggregates: Sequence[Aggregate]) -> list[Aggregate]:
    """Per (vh, ah, rkp_multiple): the aggregate of the most successful K
    (ties to the smaller K), i.e. the attacker's best case."""
    order: list[tuple] = []
    best: dict[tuple, Aggregate] = {}
    for a in aggregates:
        key = (a.vh, a.ah, a.rkp_multiple)
        if key not in best:
            order.append(key)
            best[key] = a
        else:
            cur = best[key]
            if (a.success_rate, -a.k) > (cur.success_rate, -cur.k):
                best[key] = a
    return [best[k] for k in order]


def write_plot_dat(aggregates: Sequence[Aggregate], fileobj) -> None:
    """Gnuplot-style columns: rkp_multiple k rate ci_low ci_high mean_pce."""
    fileobj.write("# rkp_multiple k success_rate ci_low ci_high mean_pce_size\n")
    for a in aggregates:
        fileobj.write(
            f"{_fmt(a.rkp_multiple)} {a.k} {a.success_rate:.6g} "
            f"{a.ci_low:.6g} {a.ci_high:.6g} {a.mean_pce_size:.6g}\n"
        )
