"""Few-mismatch candidate search on the BWT (alignment phase 1).

A depth-first backward search from the read's 3' end enumerates every way
to match the whole read with at most k substitutions, branching over the
three substituted bases while the budget allows. Exceeding the state or
hit budget signals that the read should be deferred to the fallback path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import dna
from .index import (FORWARD, REVERSE, ReferenceIndex, extend_range,
                    locate_rows, map_text_position)

DEFAULT_MIN_SEED_LENGTH = 17
AMBIG_SKIP_FRACTION = 0.10  # reads above this N fraction go straight to DP

SEARCH_COMPLETE = 0
SEARCH_STATES_EXCEEDED = 1
SEARCH_HITS_EXCEEDED = 2


@dataclass(frozen=True)
class SearchBudget:
    """Per-read resource limits realizing the deferral trigger."""

    max_mismatches: int = 2
    max_hits: int = 64
    max_states: int = 8192

    def __post_init__(self):
        if self.max_mismatches < 0 or self.max_states < 0:
            raise ValueError("budget fields must be non-negative")
        if self.max_hits < 1:
            raise ValueError("max_hits must be >= 1")


FALLBACK_BUDGET = SearchBudget(max_mismatches=2, max_hits=1024,
                               max_states=1 << 62)


@dataclass(frozen=True)
class SeedHit:
    """Candidate placement from phase 1."""

    sequence_id: int
    offset: int
    strand: int  # FORWARD or REVERSE
    mismatches: int

    @property
    def seed_score(self) -> int:
        """Rank for candidate ordering; fewer mismatches ranks higher."""
        return -self.mismatches


HITS = "hits"
EXCEEDED_BUDGET = "exceeded_budget"
NO_HIT = "no_hit"


@dataclass(frozen=True)
class SearchOutcome:
    status: str
    hits: tuple[SeedHit, ...] = field(default=())

    @property
    def is_hits(self) -> bool:
        return self.status == HITS

    @property
    def exceeded(self) -> bool:
        return self.status == EXCEEDED_BUDGET


@njit(cache=True, nogil=True)
def search_ranges(bwt, checkpoints, counts, read_codes, k,
                  max_hits, max_states, truncate,
                  stack, ranges):
    """Enumerate SA ranges of all k-mismatch variants of the read.

    stack: int64[cap, 4] scratch (position, low, high, mismatches);
    ranges: int64[max_hits + 1, 3] output rows (low, high, mismatches),
    where a final partial row may be clamped in truncate mode.

    Returns (status, n_ranges, total_width, states_used).
    """
    m = read_codes.size
    text_len = bwt.size
    n_ranges = 0
    total = np.int64(0)
    states = np.int64(0)

    top = 0
    stack[top, 0] = m - 1
    stack[top, 1] = 0
    stack[top, 2] = text_len
    stack[top, 3] = 0
    top += 1

    while top > 0:
        top -= 1
        pos = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        mm = stack[top, 3]
        states += 1
        if states > max_states:
            return SEARCH_STATES_EXCEEDED, n_ranges, total, states

        read_sym = read_codes[pos]
        # push substitutions first so the read-base branch is explored first
        for sym in range(3, -1, -1):
            cost = 0 if sym == read_sym else 1
            if mm + cost > k:
                continue
            nlo, nhi = extend_range(bwt, checkpoints, counts, lo, hi, sym)
            if nhi <= nlo:
                continue
            if pos == 0:
                width = nhi - nlo
                if total + width > max_hits:
                    if not truncate:
                        return SEARCH_HITS_EXCEEDED, n_ranges, total, states
                    take = max_hits - total
                    if take > 0:
                        ranges[n_ranges, 0] = nlo
                        ranges[n_ranges, 1] = nlo + take
                        ranges[n_ranges, 2] = mm + cost
                        n_ranges += 1
                        total += take
                    return SEARCH_COMPLETE, n_ranges, total, states
                ranges[n_ranges, 0] = nlo
                ranges[n_ranges, 1] = nhi
                ranges[n_ranges, 2] = mm + cost
                n_ranges += 1
                total += width
            else:
                if top >= stack.shape[0]:
                    return SEARCH_STATES_EXCEEDED, n_ranges, total, states
                stack[top, 0] = pos - 1
                stack[top, 1] = nlo
                stack[top, 2] = nhi
                stack[top, 3] = mm + cost
                top += 1
    return SEARCH_COMPLETE, n_ranges, total, states


def _search_scratch(read_len: int, max_hits: int):
    stack = np.empty((4 * (read_len + 2), 4), dtype=np.int64)
    ranges = np.empty((max_hits + 1, 3), dtype=np.int64)
    return stack, ranges


def _hit_sort_key(h: SeedHit):
    return (h.mismatches, h.sequence_id, h.offset, h.strand)


def _dedup_sort(hits: list[SeedHit]) -> list[SeedHit]:
    seen = set()
    out = []
    for h in sorted(hits, key=_hit_sort_key):
        key = (h.sequence_id, h.offset, h.strand)
        if key not in seen:
            seen.add(key)
            out.append(h)
    return out


def mismatch_search(index: ReferenceIndex, read, budget: SearchBudget,
                    min_length: int = DEFAULT_MIN_SEED_LENGTH) -> SearchOutcome:
    """Find all whole-read placements within the mismatch budget.

    Hits are deduplicated by (sequence, offset, strand) and sorted by
    (mismatches, sequence, offset, strand-forward-first). An exceeded
    budget means the caller must defer the read to the fallback path.
    """
    bases = read if isinstance(read, str) else read.bases
    if len(bases) < min_length:
        raise ValueError(
            f"read length {len(bases)} below minimum seed length {min_length}")
    codes = dna.encode(bases)
    stack, ranges = _search_scratch(codes.size, budget.max_hits)
    status, n_ranges, total, _states = search_ranges(
        index.bwt, index.occ_checkpoints, index.counts, codes,
        budget.max_mismatches, budget.max_hits, budget.max_states,
        False, stack, ranges)
    if status != SEARCH_COMPLETE:
        return SearchOutcome(EXCEEDED_BUDGET)
    if n_ranges == 0:
        return SearchOutcome(NO_HIT)

    m = codes.size
    hits: list[SeedHit] = []
    pos_buf = np.empty(budget.max_hits, dtype=np.int64)
    for r in range(n_ranges):
        lo, hi, mm = ranges[r]
        n = locate_rows(index.bwt, index.occ_checkpoints, index.counts,
                        index.dollar_rows, index.dollar_targets,
                        index.sa_samples, index.sampling_rate, index.row0,
                        lo, hi, hi - lo, pos_buf)
        for p in pos_buf[:n]:
            seq_id, off, strand = map_text_position(
                index.seg_starts, index.seg_seq, index.seg_rc,
                index.seq_lens, p, m)
            if seq_id >= 0:
                hits.append(SeedHit(int(seq_id), int(off), int(strand),
                                    int(mm)))
    deduped = _dedup_sort(hits)
    if not deduped:
        return SearchOutcome(NO_HIT)
    return SearchOutcome(HITS, tuple(deduped))


def enumerate_hamming_oracle(reference: str, read, k: int) -> list[SeedHit]:
    """Brute-force oracle: all windows of both strands within distance k.

    Independent of the FM-index machinery; intended for references small
    enough for an O(N*m) scan.
    """
    if len(reference) > 1_000_000:
        raise ValueError("oracle reference limited to 1 Mbp")
    bases = read if isinstance(read, str) else read.bases
    m = len(bases)
    read_codes = dna.encode(bases)
    hits: list[SeedHit] = []
    for strand, text in ((FORWARD, reference),
                         (REVERSE, dna.revcomp(reference))):
        codes = dna.encode(text)
        if codes.size < m:
            continue
        windows = np.lib.stride_tricks.sliding_window_view(codes, m)
        mismatches = (windows != read_codes).sum(axis=1)
        for q in np.flatnonzero(mismatches <= k):
            off = int(q) if strand == FORWARD else len(reference) - int(q) - m
            hits.append(SeedHit(0, off, strand, int(mismatches[q])))
    return _dedup_sort(hits)
