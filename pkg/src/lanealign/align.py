"""Affine-gap local alignment (alignment phase 2).

Two interchangeable routes compute the same result:

* scalar_affine_dp — plain row-major Smith-Waterman with three int32
  tables; the reference implementation.
* diagonal_affine_dp — the throughput design: one flat array of 32-bit
  cells in anti-diagonal order, each cell packing the M/I/D scores as
  10-bit biased fields, filled `lanes` consecutive cells per step from
  three contiguous predecessor runs (masked at ragged edges).

Both tie-break identically (prefer M over I over D, end at the smallest
(i, j) among equal maxima), so score, CIGAR, span and aligned flag agree
bit-for-bit. Gap cost is open + length * extend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import dna
from .index import ReferenceIndex
from .search import SeedHit

BIAS = 512
SCORE_MIN = -511
SCORE_MAX = 511
NEG_INF = float("-inf")
_NEG32 = -(1 << 28)  # internal -infinity; survives gap arithmetic

LANE_CHOICES = (1, 4, 8, 16)
DEFAULT_LANES = 16
MAX_READ_LENGTH = 511
DEFAULT_WINDOW_MARGIN = 32   # extract_window slack on each side
WINDOW_BOUND_MARGIN = 64     # window length bound: 2*read + this

OP_CHARS = "MIDS"
OP_M, OP_I, OP_D, OP_S = 0, 1, 2, 3


@dataclass(frozen=True)
class ScoringScheme:
    """Alignment scores; penalties are negative, gap = open + len*extend."""

    match_bonus: int = 1
    mismatch_penalty: int = -4
    gap_open_penalty: int = -6
    gap_extend_penalty: int = -1
    min_report_score: int = 20

    def __post_init__(self):
        if self.match_bonus <= 0:
            raise ValueError("match_bonus must be positive")
        if self.mismatch_penalty >= 0 or self.gap_open_penalty >= 0 \
                or self.gap_extend_penalty >= 0:
            raise ValueError("penalties must be negative")
        if self.gap_open_penalty > self.gap_extend_penalty:
            raise ValueError("opening a gap may not be cheaper than extending")
        if (self.mismatch_penalty + self.gap_open_penalty
                + self.gap_extend_penalty) < SCORE_MIN:
            raise ValueError("penalties exceed packed-cell headroom")

    @property
    def gap_first_base(self) -> int:
        """Cost charged when a gap opens (covers its first base)."""
        return self.gap_open_penalty + self.gap_extend_penalty


@dataclass(frozen=True)
class AlignmentResult:
    """Local alignment of a read against a reference window."""

    score: int
    ref_start: int
    ref_end: int
    cigar: tuple[tuple[str, int], ...]
    aligned: bool

    def cigar_string(self) -> str:
        if not self.cigar:
            return "*"
        return "".join(f"{length}{op}" for op, length in self.cigar)


# -- packed cells -------------------------------------------------------------


def pack_cell(m, i, d) -> int:
    """Pack three scores into one 32-bit word (10-bit biased fields).

    Finite scores saturate monotonically to [-511, 511]; -inf maps to the
    sentinel field value 0. Bits 30-31 stay zero.
    """
    return _pack_field(m) | (_pack_field(i) << 10) | (_pack_field(d) << 20)


def unpack_cell(word: int):
    """Inverse of pack_cell; sentinel fields come back as -inf."""
    return (_unpack_field(word & 0x3FF),
            _unpack_field((word >> 10) & 0x3FF),
            _unpack_field((word >> 20) & 0x3FF))


def _pack_field(v) -> int:
    if math.isinf(v) and v < 0:
        return 0
    v = int(v)
    return min(SCORE_MAX, max(SCORE_MIN, v)) + BIAS


def _unpack_field(f: int):
    return NEG_INF if f == 0 else f - BIAS


# -- scalar route -------------------------------------------------------------


@njit(cache=True, nogil=True)
def scalar_fill(q, r, match, mismatch, gox, ge, mt, it, dt):
    """Row-major fill of padded (n+1, m+1) int32 tables.

    Returns (best, bi, bj) with padded best-cell coordinates; ties resolve
    to the smallest (i, j).
    """
    n = r.size
    m = q.size
    for j in range(m + 1):
        mt[0, j] = _NEG32
        it[0, j] = _NEG32
        dt[0, j] = _NEG32
    for i in range(n + 1):
        mt[i, 0] = _NEG32
        it[i, 0] = _NEG32
        dt[i, 0] = _NEG32
    best = _NEG32
    bi = 1
    bj = 1
    for i in range(1, n + 1):
        ri = r[i - 1]
        for j in range(1, m + 1):
            prev = mt[i - 1, j - 1]
            if it[i - 1, j - 1] > prev:
                prev = it[i - 1, j - 1]
            if dt[i - 1, j - 1] > prev:
                prev = dt[i - 1, j - 1]
            if prev < 0:
                prev = 0
            mv = prev + (match if ri == q[j - 1] else mismatch)
            a = mt[i, j - 1] + gox
            b = it[i, j - 1] + ge
            iv = a if a >= b else b
            a = mt[i - 1, j] + gox
            b = dt[i - 1, j] + ge
            dv = a if a >= b else b
            mt[i, j] = mv
            it[i, j] = iv
            dt[i, j] = dv
            if mv > best or (mv == best and (i < bi or (i == bi and j < bj))):
                best = mv
                bi = i
                bj = j
    return best, bi, bj


@njit(cache=True, nogil=True)
def scalar_traceback(q, r, gox, mt, it, dt, bi, bj, ops_rev):
    """Walk back from the padded best cell, preferring M over I over D.

    Returns (n_ops, i_start, j_start, n_mm, n_ins, n_del) with 0-based
    logical start coordinates; ops_rev receives ops end-first.
    """
    i = bi
    j = bj
    state = OP_M
    n = 0
    n_mm = 0
    n_ins = 0
    n_del = 0
    while True:
        if state == OP_M:
            ops_rev[n] = OP_M
            n += 1
            if r[i - 1] != q[j - 1]:
                n_mm += 1
            pm = mt[i - 1, j - 1]
            pi = it[i - 1, j - 1]
            pd = dt[i - 1, j - 1]
            prev = pm
            if pi > prev:
                prev = pi
            if pd > prev:
                prev = pd
            if prev <= 0:
                return n, i - 1, j - 1, n_mm, n_ins, n_del
            if pm == prev:
                state = OP_M
            elif pi == prev:
                state = OP_I
            else:
                state = OP_D
            i -= 1
            j -= 1
        elif state == OP_I:
            ops_rev[n] = OP_I
            n += 1
            n_ins += 1
            state = OP_M if mt[i, j - 1] + gox == it[i, j] else OP_I
            j -= 1
        else:
            ops_rev[n] = OP_D
            n += 1
            n_del += 1
            state = OP_M if mt[i - 1, j] + gox == dt[i, j] else OP_D
            i -= 1


# -- diagonal route -----------------------------------------------------------


@njit(cache=True, nogil=True)
def diag_offsets(n, m, offs):
    """Start index of every anti-diagonal in the flat cell array."""
    acc = 0
    for d in range(n + m - 1):
        offs[d] = acc
        jlo = d - n + 1
        if jlo < 0:
            jlo = 0
        jhi = d if d < m - 1 else m - 1
        acc += jhi - jlo + 1
    offs[n + m - 1] = acc


@njit(cache=True, nogil=True)
def diag_fill(q, r, match, mismatch, gox, ge, lanes, cells, offs):
    """Fill the anti-diagonal cell array, `lanes` cells per step.

    Each step stages three contiguous predecessor runs (upper-left on
    diagonal d-2, upper and left overlapping on d-1) with boundary cells
    masked to the sentinel, then computes and packs the run of targets.
    Returns (best, bi, bj) in logical 0-based coordinates.
    """
    n = r.size
    m = q.size
    stage_ul = np.zeros(16, np.uint32)
    stage_up = np.zeros(16, np.uint32)
    stage_lf = np.zeros(16, np.uint32)
    best = _NEG32
    bi = 0
    bj = 0
    for d in range(n + m - 1):
        jlo = d - n + 1
        if jlo < 0:
            jlo = 0
        jhi = d if d < m - 1 else m - 1
        base_t = offs[d] - jlo
        jlo1 = d - n
        if jlo1 < 0:
            jlo1 = 0
        base_1 = offs[d - 1] - jlo1 if d >= 1 else 0
        jlo2 = d - n - 1
        if jlo2 < 0:
            jlo2 = 0
        base_2 = offs[d - 2] - jlo2 if d >= 2 else 0
        j0 = jlo
        while j0 <= jhi:
            run = jhi - j0 + 1
            if run > lanes:
                run = lanes
            for l in range(run):
                j = j0 + l
                i = d - j
                stage_ul[l] = cells[base_2 + j - 1] if (i > 0 and j > 0) else 0
                stage_up[l] = cells[base_1 + j] if i > 0 else 0
                stage_lf[l] = cells[base_1 + j - 1] if j > 0 else 0
            for l in range(run):
                j = j0 + l
                i = d - j
                w = np.int64(stage_ul[l])
                f = w & 0x3FF
                pm = f - BIAS if f != 0 else _NEG32
                f = (w >> 10) & 0x3FF
                pi = f - BIAS if f != 0 else _NEG32
                f = (w >> 20) & 0x3FF
                pd = f - BIAS if f != 0 else _NEG32
                prev = pm
                if pi > prev:
                    prev = pi
                if pd > prev:
                    prev = pd
                if prev < 0:
                    prev = 0
                mv = prev + (match if r[i] == q[j] else mismatch)
                w = np.int64(stage_lf[l])
                f = w & 0x3FF
                lm = f - BIAS if f != 0 else _NEG32
                f = (w >> 10) & 0x3FF
                li = f - BIAS if f != 0 else _NEG32
                a = lm + gox
                b = li + ge
                iv = a if a >= b else b
                w = np.int64(stage_up[l])
                f = w & 0x3FF
                um = f - BIAS if f != 0 else _NEG32
                f = (w >> 20) & 0x3FF
                ud = f - BIAS if f != 0 else _NEG32
                a = um + gox
                b = ud + ge
                dv = a if a >= b else b
                fm = 0 if mv <= -BIAS else (1023 if mv > SCORE_MAX else mv + BIAS)
                fi = 0 if iv <= -BIAS else (1023 if iv > SCORE_MAX else iv + BIAS)
                fd = 0 if dv <= -BIAS else (1023 if dv > SCORE_MAX else dv + BIAS)
                cells[base_t + j] = fm | (fi << 10) | (fd << 20)
                if mv > best or (mv == best and (i < bi or (i == bi and j < bj))):
                    best = mv
                    bi = i
                    bj = j
            j0 += run
    return best, bi, bj


@njit(cache=True, nogil=True)
def _diag_word(cells, offs, n, i, j):
    d = i + j
    jlo = d - n + 1
    if jlo < 0:
        jlo = 0
    return cells[offs[d] + j - jlo]


@njit(cache=True, nogil=True)
def diag_traceback(q, r, gox, cells, offs, n, bi, bj, ops_rev):
    """Traceback over the retained packed table; mirrors scalar_traceback.

    bi/bj are logical 0-based coordinates; returns the same tuple shape as
    scalar_traceback with logical start coordinates.
    """
    i = bi
    j = bj
    state = OP_M
    n_ops = 0
    n_mm = 0
    n_ins = 0
    n_del = 0
    while True:
        if state == OP_M:
            ops_rev[n_ops] = OP_M
            n_ops += 1
            if r[i] != q[j]:
                n_mm += 1
            if i == 0 or j == 0:
                return n_ops, i, j, n_mm, n_ins, n_del
            w = np.int64(_diag_word(cells, offs, n, i - 1, j - 1))
            f = w & 0x3FF
            pm = f - BIAS if f != 0 else _NEG32
            f = (w >> 10) & 0x3FF
            pi = f - BIAS if f != 0 else _NEG32
            f = (w >> 20) & 0x3FF
            pd = f - BIAS if f != 0 else _NEG32
            prev = pm
            if pi > prev:
                prev = pi
            if pd > prev:
                prev = pd
            if prev <= 0:
                return n_ops, i, j, n_mm, n_ins, n_del
            if pm == prev:
                state = OP_M
            elif pi == prev:
                state = OP_I
            else:
                state = OP_D
            i -= 1
            j -= 1
        elif state == OP_I:
            ops_rev[n_ops] = OP_I
            n_ops += 1
            n_ins += 1
            w = np.int64(_diag_word(cells, offs, n, i, j))
            f = (w >> 10) & 0x3FF
            val = f - BIAS if f != 0 else _NEG32
            w = np.int64(_diag_word(cells, offs, n, i, j - 1))
            f = w & 0x3FF
            lm = f - BIAS if f != 0 else _NEG32
            state = OP_M if lm + gox == val else OP_I
            j -= 1
        else:
            ops_rev[n_ops] = OP_D
            n_ops += 1
            n_del += 1
            w = np.int64(_diag_word(cells, offs, n, i, j))
            f = (w >> 20) & 0x3FF
            val = f - BIAS if f != 0 else _NEG32
            w = np.int64(_diag_word(cells, offs, n, i - 1, j))
            f = w & 0x3FF
            um = f - BIAS if f != 0 else _NEG32
            state = OP_M if um + gox == val else OP_D
            i -= 1


# -- shared assembly ----------------------------------------------------------


def _runs_with_clips(ops_rev: np.ndarray, n_ops: int, j_start: int,
                     j_end: int, read_len: int):
    """Run-length encode a backward op path and pad soft clips."""
    runs: list[tuple[str, int]] = []
    if j_start > 0:
        runs.append(("S", j_start))
    k = n_ops - 1
    while k >= 0:
        op = ops_rev[k]
        length = 1
        while k - 1 >= 0 and ops_rev[k - 1] == op:
            k -= 1
            length += 1
        runs.append((OP_CHARS[op], length))
        k -= 1
    if read_len - 1 - j_end > 0:
        runs.append(("S", read_len - 1 - j_end))
    return tuple(runs)


def _validate_dp_args(read_len: int, window_len: int,
                      scoring: ScoringScheme, packed: bool,
                      window_bound_margin: int) -> None:
    if not 1 <= read_len <= MAX_READ_LENGTH:
        raise ValueError(f"read length {read_len} outside [1, {MAX_READ_LENGTH}]")
    if not 1 <= window_len <= 2 * read_len + window_bound_margin:
        raise ValueError(
            f"window length {window_len} outside "
            f"[1, {2 * read_len + window_bound_margin}]")
    if packed and read_len * scoring.match_bonus > SCORE_MAX:
        raise ValueError("read length * match_bonus exceeds packed headroom")


def scalar_affine_dp(read: str, ref_window: str, scoring: ScoringScheme,
                     window_bound_margin: int = WINDOW_BOUND_MARGIN,
                     ) -> AlignmentResult:
    """Reference Smith-Waterman with affine gaps and soft-clipped ends."""
    _validate_dp_args(len(read), len(ref_window), scoring, False,
                      window_bound_margin)
    q = dna.encode(read)
    r = dna.encode(ref_window)
    n, m = r.size, q.size
    mt = np.empty((n + 1, m + 1), np.int32)
    it = np.empty((n + 1, m + 1), np.int32)
    dt = np.empty((n + 1, m + 1), np.int32)
    best, bi, bj = scalar_fill(q, r, scoring.match_bonus,
                               scoring.mismatch_penalty,
                               scoring.gap_first_base,
                               scoring.gap_extend_penalty, mt, it, dt)
    best = int(best)
    if best < scoring.min_report_score:
        return AlignmentResult(best, 0, 0, (), False)
    ops_rev = np.empty(n + m + 2, np.uint8)
    n_ops, i_start, j_start, _, _, _ = scalar_traceback(
        q, r, scoring.gap_first_base, mt, it, dt, bi, bj, ops_rev)
    cigar = _runs_with_clips(ops_rev, n_ops, j_start, bj - 1, m)
    return AlignmentResult(best, int(i_start), int(bi), cigar, True)


def diagonal_affine_dp(read: str, ref_window: str, scoring: ScoringScheme,
                       lanes: int = DEFAULT_LANES,
                       window_bound_margin: int = WINDOW_BOUND_MARGIN,
                       ) -> AlignmentResult:
    """Anti-diagonal lane-parallel route; bit-identical to the scalar one."""
    if lanes not in LANE_CHOICES:
        raise ValueError(f"lanes must be one of {LANE_CHOICES}")
    _validate_dp_args(len(read), len(ref_window), scoring, True,
                      window_bound_margin)
    q = dna.encode(read)
    r = dna.encode(ref_window)
    n, m = r.size, q.size
    cells = np.empty(n * m, np.uint32)
    offs = np.empty(n + m, np.int64)
    diag_offsets(n, m, offs)
    best, bi, bj = diag_fill(q, r, scoring.match_bonus,
                             scoring.mismatch_penalty,
                             scoring.gap_first_base,
                             scoring.gap_extend_penalty, lanes, cells, offs)
    best = int(best)
    if best < scoring.min_report_score:
        return AlignmentResult(best, 0, 0, (), False)
    ops_rev = np.empty(n + m + 2, np.uint8)
    n_ops, i_start, j_start, _, _, _ = diag_traceback(
        q, r, scoring.gap_first_base, cells, offs, n, bi, bj, ops_rev)
    cigar = _runs_with_clips(ops_rev, n_ops, j_start, int(bj), m)
    return AlignmentResult(best, int(i_start), int(bi) + 1, cigar, True)


def extract_window(index: ReferenceIndex, hit: SeedHit, read_length: int,
                   margin: int = DEFAULT_WINDOW_MARGIN) -> tuple[str, int]:
    """Reference bases around a seed hit, clipped to sequence bounds.

    Returns (window, window_origin); window_origin converts window-relative
    coordinates back to genome coordinates.
    """
    seq_len = int(index.seq_lens[hit.sequence_id])
    ws = max(0, hit.offset - margin)
    we = min(seq_len, hit.offset + read_length + margin)
    base = int(index.seq_offsets[hit.sequence_id])
    window = dna.decode(index.ref_codes[base + ws:base + we])
    return window, ws
