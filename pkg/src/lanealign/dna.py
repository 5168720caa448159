"""Base encoding, reverse complement and 2-bit packing utilities.

Code space: A=0, C=1, G=2, T=3; 4 is the index sentinel; 5 marks an
ambiguous read base (never equal to any reference code).
"""
from __future__ import annotations

import numpy as np

A, C, G, T = 0, 1, 2, 3
SENTINEL = 4
AMBIG = 5

BASES = "ACGT"

# 256-entry lookup: ASCII byte -> code, ambiguity codes -> AMBIG
_CODE_LUT = np.full(256, AMBIG, dtype=np.uint8)
for _i, _b in enumerate(BASES):
    _CODE_LUT[ord(_b)] = _i
    _CODE_LUT[ord(_b.lower())] = _i

_COMP_LUT = np.array([T, G, C, A, SENTINEL, AMBIG], dtype=np.uint8)

_RC_TABLE = str.maketrans("ACGTNacgtn", "TGCANtgcan")


def encode(seq: str) -> np.ndarray:
    """Encode a DNA string into uint8 codes (ambiguity codes become AMBIG)."""
    raw = np.frombuffer(seq.encode("ascii"), dtype=np.uint8)
    return _CODE_LUT[raw]


def decode(codes: np.ndarray) -> str:
    """Decode codes 0..3 back to bases; SENTINEL -> '$', AMBIG -> 'N'."""
    lut = np.frombuffer(b"ACGT$N", dtype=np.uint8)
    return lut[codes].tobytes().decode("ascii")


def revcomp(seq: str) -> str:
    """Reverse complement of a DNA string (N self-complements)."""
    return seq.translate(_RC_TABLE)[::-1]


def revcomp_codes(codes: np.ndarray) -> np.ndarray:
    """Reverse complement an encoded sequence."""
    return _COMP_LUT[codes][::-1]


def pack_2bit(codes: np.ndarray) -> np.ndarray:
    """Pack codes 0..3 into bytes, 4 bases per byte, little-end first."""
    if codes.size == 0:
        return np.zeros(0, dtype=np.uint8)
    padded = np.zeros((codes.size + 3) // 4 * 4, dtype=np.uint8)
    padded[: codes.size] = codes
    quads = padded.reshape(-1, 4)
    return (
        quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6)
    ).astype(np.uint8)


def unpack_2bit(packed: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pack_2bit, returning the first n codes."""
    out = np.empty(packed.size * 4, dtype=np.uint8)
    out[0::4] = packed & 3
    out[1::4] = (packed >> 2) & 3
    out[2::4] = (packed >> 4) & 3
    out[3::4] = (packed >> 6) & 3
    return out[:n]
