"""Tag-store sizing and the latency schedule.

The conventional baseline keeps index bits out of the tag (tag = line address
minus index bits); the randomized design must store the full line address
because the index is keyed and changes on every re-key. Each entry adds two
status bits (valid + domain id) on top of the tag.
"""

from __future__ import annotations

from .cache import CacheGeometry, access_latency
from .errors import ConfigError

STATUS_BITS = 2


def tag_layout(geometry: CacheGeometry, full_tag: bool, status_bits: int = STATUS_BITS) -> dict:
    """Per-entry and total tag-store sizes for one tagging scheme."""
    if status_bits < 0:
        raise ConfigError(f"status_bits: must be >= 0, got {status_bits}")
    tag_bits = geometry.line_address_bits if full_tag else geometry.tag_bits
    entry_bits = tag_bits + status_bits
    total_bits = entry_bits * geometry.num_lines
    return {
        "tag_bits": tag_bits,
        "entry_bits": entry_bits,
        "tag_storage_bits": total_bits,
        "tag_storage_kib": total_bits / 8 / 1024,
    }


def total_storage(
    geometry: CacheGeometry,
    full_tag: bool,
    status_bits: int = STATUS_BITS,
    *,
    entry_bits: int = None,
) -> dict:
    """Data + tag storage, and overhead relative to the conventional tag.

    An explicit entry_bits overrides the computed entry size to model
    hypothetical encodings; the conventional baseline then uses the same
    encoding, so any override compares against itself (overhead 0).
    """
    layout = tag_layout(geometry, full_tag, status_bits)
    baseline = tag_layout(geometry, False, status_bits)
    if entry_bits is not None:
        if entry_bits < 0:
            raise ConfigError(f"entry_bits: must be >= 0, got {entry_bits}")
        for d in (layout, baseline):
            d["entry_bits"] = entry_bits
            d["tag_storage_bits"] = entry_bits * geometry.num_lines
            d["tag_storage_kib"] = d["tag_storage_bits"] / 8 / 1024
    data_kib = geometry.total_size_bytes / 1024
    total_kib = data_kib + layout["tag_storage_kib"]
    baseline_total_kib = data_kib + baseline["tag_storage_kib"]
    return {
        "data_kib": data_kib,
        "tag_storage_kib": layout["tag_storage_kib"],
        "total_kib": total_kib,
        "overhead_vs_conventional": total_kib / baseline_total_kib - 1.0,
        **{k: layout[k] for k in ("tag_bits", "entry_bits", "tag_storage_bits")},
    }


def latency_table(num_banks: int, h_max: int) -> list[tuple[int, int]]:
    """(h, access cycles) for every logical associativity up to h_max."""
    if h_max < 1:
        raise ConfigError(f"h_max: must be >= 1, got {h_max}")
    return [(h, access_latency(h, num_banks)) for h in range(1, h_max + 1)]
