"""PRINCE block cipher and derivation of encrypted set indices from line addresses.

64-bit block, 128-bit key k = k0 || k1 (k0 = high 64 bits). Encryption whitens
with k0 on the way in and k0' on the way out, where k0' = (k0 >>> 1) ^ (k0 >> 63),
and runs the 12-round alpha-reflection core keyed by k1. Decryption reuses the
encryption core with k0/k0' swapped and k1 xored with alpha (reflection property);
it exists for tests only, the cache never decrypts.

Round function tables are precomputed over 16-bit chunks so a scalar encryption
is a handful of lookups and a numpy batch runs one table gather per chunk per
round. The chunk/nibble numbering is little-endian (nibble 0 = least significant),
matching the published shift-rows tables used below.
"""

from __future__ import annotations

import numpy as np

BLOCK_BITS = 64
KEY_BITS = 128
_MASK64 = (1 << 64) - 1

ALPHA = 0xC0AC29B7C97C50DD

ROUND_CONSTS = (
    0x0000000000000000,
    0x13198A2E03707344,
    0xA4093822299F31D0,
    0x082EFA98EC4E6C89,
    0x452821E638D01377,
    0xBE5466CF34E90C6C,
    0x7EF84F78FD955CB1,
    0x85840851F1AC43AA,
    0xC882D32F25323C54,
    0x64A51195E0E3610D,
    0xD3B5A399CA0C2399,
    0xC0AC29B7C97C50DD,
)

SBOX = (0xB, 0xF, 0x3, 0x2, 0xA, 0xC, 0x9, 0x1, 0x6, 0x7, 0x8, 0x0, 0xE, 0x5, 0xD, 0x4)
SBOX_INV = (0xB, 0x7, 0x3, 0x2, 0xF, 0xD, 0x8, 0x9, 0xA, 0x6, 0x4, 0x0, 0x5, 0xE, 0xC, 0x1)

# Nibble permutation of the shift-rows layer, entry[destination] = source.
SHIFT_ROWS = (0x4, 0x9, 0xE, 0x3, 0x8, 0xD, 0x2, 0x7, 0xC, 0x1, 0x6, 0xB, 0x0, 0x5, 0xA, 0xF)
SHIFT_ROWS_INV = (0xC, 0x9, 0x6, 0x3, 0x0, 0xD, 0xA, 0x7, 0x4, 0x1, 0xE, 0xB, 0x8, 0x5, 0x2, 0xF)

# Row masks of the M-hat matrices; output nibble n of a 16-bit chunk is the
# nibble-wise xor reduction of (chunk & mask), mask rotating with n.
_MHAT_MASKS = (0x7BDE, 0xBDE7, 0xDE7B, 0xE7BD)


def _nibble_table_16(nibble_table) -> np.ndarray:
    """Lift a 4-bit substitution to all 2^16 chunk values."""
    t4 = np.asarray(nibble_table, dtype=np.uint32)
    v = np.arange(1 << 16, dtype=np.uint32)
    out = t4[v & 0xF]
    out |= t4[(v >> 4) & 0xF] << 4
    out |= t4[(v >> 8) & 0xF] << 8
    out |= t4[(v >> 12) & 0xF] << 12
    return out.astype(np.uint16)


def _mhat_table(chunk_class: int) -> np.ndarray:
    """M-hat matrix over one 16-bit chunk; class 0 covers chunks 0 and 3."""
    v = np.arange(1 << 16, dtype=np.uint32)
    out = np.zeros(1 << 16, dtype=np.uint32)
    for nib in range(4):
        mask = _MHAT_MASKS[(chunk_class + 3 - nib) % 4]
        w = v & mask
        red = (w ^ (w >> 4) ^ (w >> 8) ^ (w >> 12)) & 0xF
        out |= red << (4 * nib)
    return out.astype(np.uint16)


_S16 = _nibble_table_16(SBOX)
_SINV16 = _nibble_table_16(SBOX_INV)
_MHAT = (_mhat_table(0), _mhat_table(1))


def _chunk_class(chunk: int) -> int:
    return 0 if chunk in (0, 3) else 1


def _scatter(vals16: np.ndarray, src_chunk: int, dst_of_src) -> np.ndarray:
    """Place the 4 nibbles of a 16-bit value (living at chunk src_chunk) at their
    shifted 64-bit positions."""
    out = np.zeros(vals16.shape, dtype=np.uint64)
    v = vals16.astype(np.uint64)
    for nib in range(4):
        dst = dst_of_src[4 * src_chunk + nib]
        out |= ((v >> (4 * nib)) & 0xF) << (4 * dst)
    return out


def _build_tables():
    dst_fwd = [0] * 16
    for dst, src in enumerate(SHIFT_ROWS):
        dst_fwd[src] = dst
    dst_inv = [0] * 16
    for dst, src in enumerate(SHIFT_ROWS_INV):
        dst_inv[src] = dst

    fwd = []   # chunk -> SR(M'(S(chunk))) as sparse 64-bit word
    mid = []   # chunk -> Sinv(M'(S(chunk))) shifted into place
    inva = []  # chunk -> M'(SRinv(chunk at position)) as 64-bit word
    sinv = []  # chunk -> Sinv(chunk) shifted into place
    for c in range(4):
        mixed = _MHAT[_chunk_class(c)][_S16]
        fwd.append(_scatter(mixed, c, dst_fwd))
        mid.append(_SINV16[mixed].astype(np.uint64) << np.uint64(16 * c))

        scattered = _scatter(np.arange(1 << 16, dtype=np.uint16), c, dst_inv)
        acc = np.zeros(1 << 16, dtype=np.uint64)
        for blk in range(4):
            chunk = ((scattered >> np.uint64(16 * blk)) & np.uint64(0xFFFF)).astype(np.int64)
            acc |= _MHAT[_chunk_class(blk)][chunk].astype(np.uint64) << np.uint64(16 * blk)
        inva.append(acc)

        sinv.append(_SINV16.astype(np.uint64) << np.uint64(16 * c))
    return tuple(fwd), tuple(mid), tuple(inva), tuple(sinv)


_FWD, _MID, _INVA, _SINV64 = _build_tables()


def split_key(key: int) -> tuple[int, int]:
    """128-bit key -> (k0, k1), k0 being the high half."""
    if not 0 <= key < (1 << KEY_BITS):
        raise ValueError("key must be a 128-bit value")
    return key >> 64, key & _MASK64


def _k0_prime(k0: int) -> int:
    return (((k0 & 1) << 63) | (k0 >> 1)) ^ (k0 >> 63)


def _core(x: int, w_in: int, w_out: int, k1: int) -> int:
    f0, f1, f2, f3 = _FWD
    m0, m1, m2, m3 = _MID
    a0, a1, a2, a3 = _INVA
    s0, s1, s2, s3 = _SINV64

    x ^= w_in
    x ^= k1  # round constant 0 is zero
    for i in range(1, 6):
        x = int(
            f0[x & 0xFFFF]
            ^ f1[(x >> 16) & 0xFFFF]
            ^ f2[(x >> 32) & 0xFFFF]
            ^ f3[x >> 48]
        ) ^ ROUND_CONSTS[i] ^ k1
    x = int(
        m0[x & 0xFFFF]
        ^ m1[(x >> 16) & 0xFFFF]
        ^ m2[(x >> 32) & 0xFFFF]
        ^ m3[x >> 48]
    )
    for i in range(6, 11):
        x ^= ROUND_CONSTS[i] ^ k1
        x = int(
            a0[x & 0xFFFF]
            ^ a1[(x >> 16) & 0xFFFF]
            ^ a2[(x >> 32) & 0xFFFF]
            ^ a3[x >> 48]
        )
        x = int(
            s0[x & 0xFFFF]
            ^ s1[(x >> 16) & 0xFFFF]
            ^ s2[(x >> 32) & 0xFFFF]
            ^ s3[x >> 48]
        )
    x ^= ROUND_CONSTS[11] ^ k1
    x ^= w_out
    return x


def prince_encrypt(block: int, key: int) -> int:
    """Full 12-round PRINCE encryption of a 64-bit block."""
    if not 0 <= block < (1 << BLOCK_BITS):
        raise ValueError("block must be a 64-bit value")
    k0, k1 = split_key(key)
    return _core(block, k0, _k0_prime(k0), k1)


def prince_decrypt(block: int, key: int) -> int:
    """Inverse of prince_encrypt via the alpha reflection; test use only."""
    if not 0 <= block < (1 << BLOCK_BITS):
        raise ValueError("block must be a 64-bit value")
    k0, k1 = split_key(key)
    return _core(block, _k0_prime(k0), k0, k1 ^ ALPHA)


def _core_many(x: np.ndarray, w_in: int, w_out: int, k1: int) -> np.ndarray:
    f0, f1, f2, f3 = _FWD
    m0, m1, m2, m3 = _MID
    a0, a1, a2, a3 = _INVA
    s0, s1, s2, s3 = _SINV64
    mask = np.uint64(0xFFFF)
    s16, s32, s48 = np.uint64(16), np.uint64(32), np.uint64(48)

    x = x ^ np.uint64(w_in ^ k1)
    for i in range(1, 6):
        x = (
            f0[(x & mask).astype(np.int64)]
            ^ f1[((x >> s16) & mask).astype(np.int64)]
            ^ f2[((x >> s32) & mask).astype(np.int64)]
            ^ f3[(x >> s48).astype(np.int64)]
        ) ^ np.uint64(ROUND_CONSTS[i] ^ k1)
    x = (
        m0[(x & mask).astype(np.int64)]
        ^ m1[((x >> s16) & mask).astype(np.int64)]
        ^ m2[((x >> s32) & mask).astype(np.int64)]
        ^ m3[(x >> s48).astype(np.int64)]
    )
    for i in range(6, 11):
        x = x ^ np.uint64(ROUND_CONSTS[i] ^ k1)
        x = (
            a0[(x & mask).astype(np.int64)]
            ^ a1[((x >> s16) & mask).astype(np.int64)]
            ^ a2[((x >> s32) & mask).astype(np.int64)]
            ^ a3[(x >> s48).astype(np.int64)]
        )
        x = (
            s0[(x & mask).astype(np.int64)]
            ^ s1[((x >> s16) & mask).astype(np.int64)]
            ^ s2[((x >> s32) & mask).astype(np.int64)]
            ^ s3[(x >> s48).astype(np.int64)]
        )
    return x ^ np.uint64(ROUND_CONSTS[11] ^ k1 ^ w_out)


def prince_encrypt_many(blocks: np.ndarray, key: int) -> np.ndarray:
    """Vectorised prince_encrypt over a uint64 array."""
    k0, k1 = split_key(key)
    x = np.ascontiguousarray(blocks, dtype=np.uint64)
    return _core_many(x, k0, _k0_prime(k0), k1)


def index_of(addr: int, key: int, num_sets: int) -> int:
    """Home set of a line address: PRINCE output truncated to the low index bits."""
    if num_sets < 1 or (num_sets & (num_sets - 1)) != 0:
        from .errors import ConfigError

        raise ConfigError(f"num_sets must be a power of two, got {num_sets}")
    return prince_encrypt(addr, key) & (num_sets - 1)


def index_many(addrs: np.ndarray, key: int, num_sets: int) -> np.ndarray:
    """Vectorised index_of; returns uint32 set indices."""
    if num_sets < 1 or (num_sets & (num_sets - 1)) != 0:
        from .errors import ConfigError

        raise ConfigError(f"num_sets must be a power of two, got {num_sets}")
    enc = prince_encrypt_many(np.asarray(addrs), key)
    return (enc & np.uint64(num_sets - 1)).astype(np.uint32)
