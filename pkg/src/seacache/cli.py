"""Command-line front end.

Subcommands: security (profiling/eviction grid), trace (two-core replay),
overhead (tag-store sizing), latency-table, selftest. Configuration is a flat
key = value namespace resolved in precedence order: built-in defaults, then a
config file (--config, '#' comments), then SEACACHE_<KEY> environment
variables, then --set key=value, then the dedicated flags. Every resolved key
is echoed to the log with the source that decided it.

Each run writes an output directory holding the resolved config, result CSVs,
and a manifest.json recording command, package version, master seed and
config, so a run can be reproduced from its artifacts alone.

Exit codes: 0 success, 2 configuration error, 3 I/O or malformed-input error,
4 selftest failure, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .cache import CacheGeometry, CacheState, access_latency
from .domains import DomainTable
from .errors import ConfigError, TraceParseError
from .experiments import (
    aggregate_records,
    best_k_aggregates,
    run_cell,
    run_grid,
    wilson_interval,
    write_plot_dat,
)
from .overhead import latency_table, total_storage
from .prince import prince_encrypt
from .tracesim import parse_trace_binary, parse_trace_text, run_trace, synth_trace

log = logging.getLogger("seacache")

ENV_PREFIX = "SEACACHE_"

# key: (parser, default)
_SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    # geometry
    "line_size_bytes": (lambda v: int(v, 0), 64),
    "total_size_bytes": (lambda v: int(v, 0), 8 * 1024 * 1024),
    "num_ways": (lambda v: int(v, 0), 16),
    "num_banks": (lambda v: int(v, 0), 8),
    "address_bits": (lambda v: int(v, 0), 46),
    "scale": (lambda v: int(v, 0), 1),
    # shared run controls
    "seed": (lambda v: int(v, 0), 0),
    "workers": (lambda v: int(v, 0), 0),  # 0 = available parallelism
    "rounds": (lambda v: int(v, 0), 100_000),
    "out_dir": (str, ""),
    "fill_policy": (str, "random"),
    # security grid
    "configs": (str, "1/1,2/1,4/1,8/1,16/1"),
    "rkps": (str, "9,50,200"),
    "ks": (str, ""),
    "k": (lambda v: int(v, 0), 16),
    "seeds": (lambda v: int(v, 0), 3),
    "metric": (str, "evict"),
    "aggressive_after": (lambda v: int(v, 0), 5),
    # trace replay
    "vh": (lambda v: int(v, 0), 16),
    "ah": (lambda v: int(v, 0), 1),
    "rekey_every": (lambda v: int(v, 0), 0),
    "trace_file": (str, ""),
    "trace_format": (str, "auto"),
    "trace_kind": (str, "mixed-two-core"),
    "trace_length": (lambda v: int(v, 0), 100_000),
    "ws_lines": (lambda v: int(v, 0), 4096),
    "ws0_lines": (lambda v: int(v, 0), 4096),
    "ws1_lines": (lambda v: int(v, 0), 4096),
    "base0": (lambda v: int(v, 0), 0),
    "base1": (lambda v: int(v, 0), 1 << 32),
    "core1_fraction": (float, 0.5),
    "stride_lines": (lambda v: int(v, 0), 1),
    "wrap_lines": (lambda v: int(v, 0), 0),
    # tables
    "h_max": (lambda v: int(v, 0), 24),
    "status_bits": (lambda v: int(v, 0), 2),
}


def _parse_value(key: str, raw: str):
    if key not in _SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    parser = _SCHEMA[key][0]
    try:
        return parser(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {body!r}")
            key, _, raw = body.partition("=")
            key = key.strip()
            out[key] = _parse_value(key, raw)
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Layer defaults, config file, environment, --set pairs and flags."""
    cfg = {k: default for k, (_, default) in _SCHEMA.items()}
    source = {k: "default" for k in cfg}

    if args.config:
        for k, v in _read_config_file(args.config).items():
            cfg[k], source[k] = v, "file"
    for k in _SCHEMA:
        raw = os.environ.get(ENV_PREFIX + k.upper())
        if raw is not None:
            cfg[k], source[k] = _parse_value(k, raw), "env"
    for pair in args.set or []:
        key, eq, raw = pair.partition("=")
        if not eq:
            raise ConfigError(f"--set: expected key=value, got {pair!r}")
        key = key.strip()
        cfg[key], source[key] = _parse_value(key, raw), "flag"
    for flag, key in (
        ("seed", "seed"),
        ("workers", "workers"),
        ("rounds", "rounds"),
        ("scale", "scale"),
        ("out_dir", "out_dir"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key], source[key] = val, "flag"

    for key in sorted(cfg):
        log.info("config: %s = %r (%s)", key, cfg[key], source[key])
    return cfg


def _geometry(cfg: dict) -> CacheGeometry:
    g = CacheGeometry(
        line_size_bytes=cfg["line_size_bytes"],
        total_size_bytes=cfg["total_size_bytes"],
        num_ways=cfg["num_ways"],
        num_banks=cfg["num_banks"],
        address_bits=cfg["address_bits"],
    )
    return g.scaled(cfg["scale"]) if cfg["scale"] != 1 else g


def _run_dir(cfg: dict, command: str) -> Path:
    path = Path(cfg["out_dir"] or f"seacache-{command}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, cfg: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "master_seed": cfg["seed"],
        "config": {k: cfg[k] for k in sorted(cfg)},
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "config_echo.txt", "w") as f:
        for k in sorted(cfg):
            f.write(f"{k} = {cfg[k]}\n")


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "/" not in token:
            raise ConfigError(f"configs: expected vh/ah, got {token!r}")
        vh, _, ah = token.partition("/")
        pairs.append((int(vh), int(ah)))
    if not pairs:
        raise ConfigError("configs: no vh/ah pairs given")
    return pairs


def _parse_numbers(text: str, parse: Callable, what: str) -> list:
    vals = [parse(t.strip()) for t in text.split(",") if t.strip()]
    if not vals:
        raise ConfigError(f"{what}: no values given")
    return vals


def cmd_security(cfg: dict) -> int:
    geometry = _geometry(cfg)
    pairs = _parse_pairs(cfg["configs"])
    rkps = _parse_numbers(cfg["rkps"], float, "rkps")
    ks = _parse_numbers(cfg["ks"], int, "ks") if cfg["ks"] else [cfg["k"]]
    seeds = list(range(cfg["seeds"]))
    if not seeds:
        raise ConfigError(f"seeds: must be >= 1, got {cfg['seeds']}")
    cells = [
        (vh, ah, rkp, k, seed)
        for vh, ah in pairs
        for rkp in rkps
        for k in ks
        for seed in seeds
    ]
    out = _run_dir(cfg, "security")
    workers = cfg["workers"] or os.cpu_count() or 1
    log.info("security: %d cells, %d workers, %d-line geometry -> %s", len(cells), workers, geometry.num_lines, out)
    records = run_grid(
        geometry,
        cells,
        parallelism=workers,
        csv_path=str(out / "results.csv"),
        eval_rounds=cfg["rounds"],
        success_metric=cfg["metric"],
        aggressive_after=cfg["aggressive_after"],
        fill_policy=cfg["fill_policy"],
        master_seed=cfg["seed"],
    )
    failures = [r for r in records if r.error]
    for r in failures:
        log.warning("cell vh=%d ah=%d rkp=%s k=%d seed=%d failed: %s", r.vh, r.ah, r.rkp_multiple, r.k, r.seed, r.error)

    aggregates = aggregate_records(records)
    best = best_k_aggregates(aggregates)
    with open(out / "aggregates.csv", "w", newline="") as f:
        f.write("vh,ah,rkp_multiple,k,seeds,rounds,successes,success_rate,ci_low,ci_high,mean_pce_size\n")
        for a in aggregates:
            f.write(
                f"{a.vh},{a.ah},{a.rkp_multiple:.10g},{a.k},{a.seeds},{a.rounds},{a.successes},"
                f"{a.success_rate:.10g},{a.ci_low:.10g},{a.ci_high:.10g},{a.mean_pce_size:.10g}\n"
            )
    for vh, ah in pairs:
        rows = [a for a in best if (a.vh, a.ah) == (vh, ah)]
        with open(out / f"sea_vh{vh}_ah{ah}.dat", "w") as f:
            write_plot_dat(rows, f)

    with open(out / "summary.txt", "w") as f:
        f.write(f"attack success rate (%), best K per cell, {cfg['rounds']} rounds x {len(seeds)} seeds\n")
        header = "vh/ah".ljust(8) + "".join(f"{format(r, '.10g') + 'N':>16}" for r in rkps)
        f.write(header + "\n")
        for vh, ah in pairs:
            row = f"{vh}/{ah}".ljust(8)
            for rkp in rkps:
                hit = [a for a in best if (a.vh, a.ah, a.rkp_multiple) == (vh, ah, rkp)]
                row += f"{100 * hit[0].success_rate:>10.3f} K{hit[0].k:<4}" if hit else f"{'-':>16}"
            f.write(row + "\n")
    _write_manifest(out, "security", cfg)
    print(f"security grid: {len(records)} cells, {len(failures)} failed, results in {out}")
    return 0


def _load_trace(cfg: dict) -> list:
    path = cfg["trace_file"]
    if path:
        fmt = cfg["trace_format"]
        if fmt == "auto":
            fmt = "binary" if path.endswith(".bin") else "text"
        if fmt == "binary":
            with open(path, "rb") as f:
                return list(parse_trace_binary(f))
        if fmt == "text":
            with open(path) as f:
                return list(parse_trace_text(f))
        raise ConfigError(f"trace_format: must be auto, text or binary, got {fmt!r}")
    kind = cfg["trace_kind"]
    params: dict = {}
    if kind == "working-set":
        params = {"ws_lines": cfg["ws_lines"]}
    elif kind == "strided":
        params = {"stride_lines": cfg["stride_lines"]}
        if cfg["wrap_lines"]:
            params["wrap_lines"] = cfg["wrap_lines"]
    elif kind == "mixed-two-core":
        params = {
            "ws0_lines": cfg["ws0_lines"],
            "ws1_lines": cfg["ws1_lines"],
            "base0": cfg["base0"],
            "base1": cfg["base1"],
            "core1_fraction": cfg["core1_fraction"],
        }
    return synth_trace(kind, length=cfg["trace_length"], seed=cfg["seed"], **params)


def cmd_trace(cfg: dict) -> int:
    geometry = _geometry(cfg)
    records = _load_trace(cfg)
    metrics = run_trace(
        records,
        geometry,
        cfg["vh"],
        cfg["ah"],
        rekey_every=cfg["rekey_every"] or None,
        seed=cfg["seed"],
        fill_policy=cfg["fill_policy"],
    )
    out = _run_dir(cfg, "trace")
    rows = [("core0", metrics.per_core[0]), ("core1", metrics.per_core[1]), ("total", metrics.total)]
    with open(out / "metrics.csv", "w", newline="") as f:
        f.write("stream,accesses,misses,miss_rate,instructions,mpki,total_latency_cycles,mean_latency_cycles\n")
        for name, m in rows:
            f.write(
                f"{name},{m.accesses},{m.misses},{m.miss_rate:.10g},{m.instructions},"
                f"{m.mpki:.10g},{m.total_latency_cycles},{m.mean_latency_cycles:.10g}\n"
            )
    with open(out / "summary.txt", "w") as f:
        f.write(f"trace replay: {metrics.total.accesses} accesses, vh={cfg['vh']} ah={cfg['ah']}, {metrics.rekeys} re-keys\n")
        if metrics.mpki_is_mpka:
            f.write("no instruction deltas in trace: MPKI is misses per kilo-access\n")
        for name, m in rows:
            f.write(
                f"{name}: {m.accesses} accesses, {m.misses} misses ({100 * m.miss_rate:.3f}%), "
                f"mpki {m.mpki:.3f}, mean latency {m.mean_latency_cycles:.2f} cycles\n"
            )
    _write_manifest(out, "trace", cfg)
    print(f"trace: {metrics.total.accesses} accesses, miss rate {100 * metrics.total.miss_rate:.3f}%, results in {out}")
    return 0


def cmd_overhead(cfg: dict) -> int:
    geometry = _geometry(cfg)
    out = _run_dir(cfg, "overhead")
    schemes = [("conventional", False), ("full_address", True)]
    with open(out / "overhead.csv", "w", newline="") as f:
        f.write("scheme,tag_bits,entry_bits,tag_storage_bits,tag_storage_kib,data_kib,total_kib,overhead_vs_conventional\n")
        for name, full in schemes:
            t = total_storage(geometry, full, cfg["status_bits"])
            f.write(
                f"{name},{t['tag_bits']},{t['entry_bits']},{t['tag_storage_bits']},"
                f"{t['tag_storage_kib']:.10g},{t['data_kib']:.10g},{t['total_kib']:.10g},"
                f"{t['overhead_vs_conventional']:.10g}\n"
            )
    with open(out / "summary.txt", "w") as f:
        f.write(f"geometry: {geometry.num_lines} lines, {geometry.num_ways} ways, {geometry.sets_per_way} sets/way\n")
        for name, full in schemes:
            t = total_storage(geometry, full, cfg["status_bits"])
            f.write(
                f"{name}: {t['tag_bits']}-bit tag, {t['entry_bits']}-bit entry, "
                f"{t['tag_storage_kib']:.1f} KiB tags, {t['total_kib']:.1f} KiB total "
                f"({100 * t['overhead_vs_conventional']:.2f}% over conventional)\n"
            )
    _write_manifest(out, "overhead", cfg)
    t = total_storage(geometry, True, cfg["status_bits"])
    print(f"full-address tags: {t['total_kib']:.1f} KiB total, +{100 * t['overhead_vs_conventional']:.2f}% vs conventional, results in {out}")
    return 0


def cmd_latency_table(cfg: dict) -> int:
    out = _run_dir(cfg, "latency-table")
    rows = latency_table(cfg["num_banks"], cfg["h_max"])
    with open(out / "latency.csv", "w", newline="") as f:
        f.write("h,cycles\n")
        for h, cyc in rows:
            f.write(f"{h},{cyc}\n")
    _write_manifest(out, "latency-table", cfg)
    for h, cyc in rows:
        print(f"h={h:<3d} {cyc} cycles")
    return 0


def cmd_selftest(cfg: dict) -> int:
    failures = []

    def check(name: str, fn: Callable[[], bool]):
        try:
            ok = fn()
        except Exception as exc:
            ok = False
            log.error("selftest %s raised: %s", name, exc)
        print(f"selftest: {name}: {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    check("cipher_vectors", lambda: (
        prince_encrypt(0, 0) == 0x818665AA0D02DFDA
        and prince_encrypt(0xFFFFFFFFFFFFFFFF, 0) == 0x604AE6CA03C20ADA
        and prince_encrypt(0, 0xFFFFFFFFFFFFFFFF << 64) == 0x9FB51935FC3DF524
        and prince_encrypt(0, 0xFFFFFFFFFFFFFFFF) == 0x78A54CBE737BB7EF
        and prince_encrypt(0x0123456789ABCDEF, 0xFEDCBA9876543210) == 0xAE25AD3CA8FA9CCF
    ))
    check("latency_rules", lambda: [access_latency(h, 8) for h in (1, 8, 16, 24)] == [43, 44, 45, 46])
    check("storage_numbers", lambda: (
        total_storage(CacheGeometry(), False)["tag_storage_bits"] == 3_801_088
        and total_storage(CacheGeometry(), True)["total_kib"] == 8864.0
    ))
    check("wilson_bounds", lambda: (
        wilson_interval(0, 100) [0] == 0.0
        and wilson_interval(100, 100)[1] == 1.0
        and abs(wilson_interval(50, 100)[0] - 0.404) < 2e-3
    ))

    def _determinism() -> bool:
        g = CacheGeometry().scaled(64)
        r1 = run_cell(g, 2, 1, 1, 4, seed=0, eval_rounds=200)
        r2 = run_cell(g, 2, 1, 1, 4, seed=0, eval_rounds=200)
        return (r1.pce_size, r1.successes) == (r2.pce_size, r2.successes)

    check("cell_determinism", _determinism)

    def _hit_miss() -> bool:
        g = CacheGeometry().scaled(64)
        c = CacheState(g, seed=0)
        d = DomainTable(h_normal=1, h_high=8).domain(1)
        first = c.access(1234, d)
        return (not first.hit) and c.access(1234, d).hit

    check("cache_hit_miss", _hit_miss)
    if failures:
        print(f"selftest: {len(failures)} failure(s): {', '.join(failures)}")
        return 4
    print("selftest: all checks passed")
    return 0


_COMMANDS = {
    "security": cmd_security,
    "trace": cmd_trace,
    "overhead": cmd_overhead,
    "latency-table": cmd_latency_table,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seacache", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--seed", type=lambda v: int(v, 0), help="master seed (default 0)")
    parser.add_argument("--out-dir", dest="out_dir", help="run output directory")
    parser.add_argument("--workers", type=int, help="worker processes for the security grid")
    parser.add_argument("--rounds", type=int, help="evaluation rounds per cell")
    parser.add_argument("--scale", type=int, help="divide cache capacity by this power of two")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")
    parser.add_argument("--quiet", action="store_true", help="suppress config echo")
    parser.add_argument("--version", action="version", version=f"seacache {__version__}")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except TraceParseError as exc:
        log.error("trace error: %s", exc)
        return 3
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return 3
    except Exception:  # pragma: no cover - last resort
        logging.exception("unexpected error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
