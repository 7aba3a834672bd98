"""Canonical Huffman coding of integer symbol streams."""
from __future__ import annotations

import heapq
import struct

import numba
import numpy as np

from .errors import FormatError

MAX_CODE_LEN = 56


def code_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Huffman code length per symbol; ties broken by symbol value."""
    if not freqs:
        return {}
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    # heap items: (weight, tiebreak, symbols-in-subtree)
    heap = [(f, s, [s]) for s, f in sorted(freqs.items())]
    heapq.heapify(heap)
    depth = dict.fromkeys(freqs, 0)
    while len(heap) > 1:
        f1, t1, s1 = heapq.heappop(heap)
        f2, t2, s2 = heapq.heappop(heap)
        for s in s1:
            depth[s] += 1
        for s in s2:
            depth[s] += 1
        heapq.heappush(heap, (f1 + f2, min(t1, t2), s1 + s2))
    if max(depth.values()) > MAX_CODE_LEN:
        raise FormatError("Huffman code length limit exceeded")
    return depth


def canonical_codes(lengths: dict[int, int]):
    """Return symbols sorted canonically with their codes and lengths."""
    order = sorted(lengths, key=lambda s: (lengths[s], s))
    codes = []
    code = 0
    prev = lengths[order[0]] if order else 0
    for i, s in enumerate(order):
        ln = lengths[s]
        if i:
            code = (code + 1) << (ln - prev)
        codes.append(code)
        prev = ln
    return order, codes


@numba.njit(cache=True)
def _pack(symbols, lut_code, lut_len, offset):
    total = 0
    for s in symbols:
        total += lut_len[s + offset]
    out = np.zeros((total + 7) // 8, dtype=np.uint8)
    acc = np.uint64(0)
    nacc = 0
    pos = 0
    for s in symbols:
        c = lut_code[s + offset]
        ln = lut_len[s + offset]
        for b in range(ln - 1, -1, -1):
            acc = (acc << np.uint64(1)) | ((c >> np.uint64(b)) & np.uint64(1))
            nacc += 1
            if nacc == 8:
                out[pos] = np.uint8(acc)
                pos += 1
                acc = np.uint64(0)
                nacc = 0
    if nacc:
        out[pos] = np.uint8(acc << np.uint64(8 - nacc))
    return out


@numba.njit(cache=True)
def _unpack(data, n, first, count, start, syms, maxlen):
    out = np.empty(n, dtype=np.int64)
    nbits = data.shape[0] * 8
    bit = 0
    for i in range(n):
        code = np.int64(0)
        found = False
        for ln in range(1, maxlen + 1):
            if bit >= nbits:
                return out, False
            code = (code << 1) | ((data[bit >> 3] >> (7 - (bit & 7))) & 1)
            bit += 1
            if count[ln] > 0 and code - first[ln] < count[ln] and code >= first[ln]:
                out[i] = syms[start[ln] + code - first[ln]]
                found = True
                break
        if not found:
            return out, False
    return out, True


def encode(symbols: np.ndarray) -> bytes:
    """Table + bit stream for an int64 symbol array."""
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    if symbols.size == 0:
        return struct.pack("<I", 0)
    uniq, counts = np.unique(symbols, return_counts=True)
    lengths = code_lengths({int(s): int(c) for s, c in zip(uniq, counts)})
    order, codes = canonical_codes(lengths)
    lo = int(uniq[0])
    span = int(uniq[-1]) - lo + 1
    lut_code = np.zeros(span, dtype=np.uint64)
    lut_len = np.zeros(span, dtype=np.int64)
    for s, c in zip(order, codes):
        lut_code[s - lo] = c
        lut_len[s - lo] = lengths[s]
    table = bytearray(struct.pack("<I", len(order)))
    for s in order:
        table += struct.pack("<qB", s, lengths[s])
    bits = _pack(symbols, lut_code, lut_len, -lo)
    return bytes(table) + bits.tobytes()


def decode(data: bytes, n: int) -> np.ndarray:
    if len(data) < 4:
        raise FormatError("truncated Huffman table")
    (nsym,) = struct.unpack_from("<I", data, 0)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    pos = 4
    if nsym == 0 or len(data) < pos + 9 * nsym:
        raise FormatError("truncated Huffman table")
    lengths = {}
    for _ in range(nsym):
        s, ln = struct.unpack_from("<qB", data, pos)
        pos += 9
        if not 1 <= ln <= MAX_CODE_LEN:
            raise FormatError(f"invalid code length {ln}")
        lengths[s] = ln
    order, codes = canonical_codes(lengths)
    maxlen = max(lengths.values())
    first = np.zeros(maxlen + 1, dtype=np.int64)
    count = np.zeros(maxlen + 1, dtype=np.int64)
    start = np.zeros(maxlen + 1, dtype=np.int64)
    for i, (s, c) in enumerate(zip(order, codes)):
        ln = lengths[s]
        if count[ln] == 0:
            first[ln] = c
            start[ln] = i
        count[ln] += 1
    syms = np.asarray(order, dtype=np.int64)
    bits = np.frombuffer(data, dtype=np.uint8, offset=pos)
    out, ok = _unpack(bits, n, first, count, start, syms, maxlen)
    if not ok:
        raise FormatError("truncated or invalid Huffman bit stream")
    return out
