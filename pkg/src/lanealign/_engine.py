"""Fused per-read alignment kernel used by the batch pipeline.

One jitted call processes a whole chunk of reads so worker threads spend
their time outside the GIL: whole-read mismatch search, sub-read seed
rescue when that search misses, window extraction, lane-parallel DP per
candidate, and deterministic best-candidate ranking.

The fallback path reuses the very same kernel with the fallback budget
(unlimited states, hit cap 1024 with truncation instead of deferral), so
worker and controller paths cannot disagree.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .align import diag_fill, diag_offsets, diag_traceback
from .index import locate_rows, map_text_position
from .search import (SEARCH_COMPLETE, SEARCH_HITS_EXCEEDED,
                     SEARCH_STATES_EXCEEDED, search_ranges)

# per-read flags computed by the glue layer
READ_NORMAL = 0
READ_SKIP_PHASE1 = 1
READ_UNMAPPABLE = 2

# per-read outcome status
STATUS_OK = 0
STATUS_DEFERRED = 1

CAND_FIELDS = 9  # seq, pos, end, strand, score, nm, ws, we, mismatches
CAND_STORED = 32


@njit(cache=True, nogil=True)
def _revcomp_into(q, out):
    m = q.size
    for t in range(m):
        c = q[m - 1 - t]
        out[t] = 3 - c if c < 4 else c
    return out[:m]


@njit(cache=True, nogil=True)
def _row_better(score_a, seq_a, pos_a, strand_a,
                score_b, seq_b, pos_b, strand_b):
    """Candidate ordering: score desc, then (seq, pos, strand) asc."""
    if score_a != score_b:
        return score_a > score_b
    if seq_a != seq_b:
        return seq_a < seq_b
    if pos_a != pos_b:
        return pos_a < pos_b
    return strand_a < strand_b


@njit(cache=True, nogil=True)
def _emit_runs(ops_rev, n_ops, j_start, j_end, read_len, out_ops, out_lens):
    """Run-length encode a backward op path, adding soft-clip runs."""
    n = 0
    if j_start > 0:
        out_ops[n] = 3  # S
        out_lens[n] = j_start
        n += 1
    k = n_ops - 1
    while k >= 0:
        op = ops_rev[k]
        length = 1
        while k - 1 >= 0 and ops_rev[k - 1] == op:
            k -= 1
            length += 1
        out_ops[n] = op
        out_lens[n] = length
        n += 1
        k -= 1
    right = read_len - 1 - j_end
    if right > 0:
        out_ops[n] = 3
        out_lens[n] = right
        n += 1
    return n


@njit(cache=True, nogil=True)
def _align_read(q, qrev, flag,
                bwt, cps, counts, dollar_rows, dollar_targets,
                sa_samples, rate, row0,
                seg_starts, seg_seq, seg_rc, seq_lens, seq_offsets, ref_codes,
                k, max_hits, max_states, truncate,
                seed_len, seed_k, n_seeds, margin,
                match, mismatch, gox, ge, min_report, lanes,
                stack, ranges, pos_buf, anchors, cand,
                cells, offs, ops_rev,
                out_cand, out_ops, out_lens, out_extra):
    """Returns (status, n_stored, n_candidates, states_used, n_runs)."""
    m = q.size
    if flag == READ_UNMAPPABLE:
        return STATUS_OK, 0, 0, np.int64(0), 0

    states_total = np.int64(0)
    n_anchor = 0
    need_rescue = True

    if flag == READ_NORMAL:
        status, n_ranges, _total, states = search_ranges(
            bwt, cps, counts, q, k, max_hits, max_states, truncate,
            stack, ranges)
        states_total += states
        if status == SEARCH_STATES_EXCEEDED or \
                (status == SEARCH_HITS_EXCEEDED and not truncate):
            return STATUS_DEFERRED, 0, 0, states_total, 0
        for rr in range(n_ranges):
            lo = ranges[rr, 0]
            hi = ranges[rr, 1]
            mm = ranges[rr, 2]
            n = locate_rows(bwt, cps, counts, dollar_rows,
                            dollar_targets, sa_samples, rate, row0,
                            lo, hi, hi - lo, pos_buf)
            for pidx in range(n):
                seq_id, gpos, strand = map_text_position(
                    seg_starts, seg_seq, seg_rc, seq_lens, pos_buf[pidx], m)
                if seq_id >= 0:
                    anchors[n_anchor, 0] = seq_id
                    anchors[n_anchor, 1] = gpos
                    anchors[n_anchor, 2] = strand
                    anchors[n_anchor, 3] = mm
                    n_anchor += 1
        if n_anchor > 0:
            need_rescue = False

    if need_rescue:
        # sub-read seeds spread across the read propose anchor positions
        slen = seed_len if seed_len < m else m
        ns = n_seeds
        if ns < 1:
            ns = 1
        last_start = -1
        for s in range(ns):
            if ns == 1 or m == slen:
                start = 0
            else:
                start = (s * (m - slen)) // (ns - 1)
            if start == last_start:
                continue
            last_start = start
            seed = q[start:start + slen]
            status, n_ranges, _total, states = search_ranges(
                bwt, cps, counts, seed, seed_k, max_hits, max_states,
                False, stack, ranges)
            states_total += states
            if status == SEARCH_STATES_EXCEEDED:
                if not truncate:
                    return STATUS_DEFERRED, 0, 0, states_total, 0
                continue
            if status == SEARCH_HITS_EXCEEDED:
                continue  # repetitive seed carries no placement signal
            for rr in range(n_ranges):
                lo = ranges[rr, 0]
                hi = ranges[rr, 1]
                n = locate_rows(bwt, cps, counts, dollar_rows,
                                dollar_targets, sa_samples, rate,
                                row0, lo, hi, hi - lo, pos_buf)
                for pidx in range(n):
                    seq_id, gpos, strand = map_text_position(
                        seg_starts, seg_seq, seg_rc, seq_lens,
                        pos_buf[pidx], slen)
                    if seq_id < 0:
                        continue
                    if strand == 0:
                        anchor = gpos - start
                    else:
                        anchor = gpos - (m - start - slen)
                    if anchors.shape[0] - n_anchor <= 0:
                        break
                    anchors[n_anchor, 0] = seq_id
                    anchors[n_anchor, 1] = anchor
                    anchors[n_anchor, 2] = strand
                    anchors[n_anchor, 3] = -1
                    n_anchor += 1
        # sort anchors by (seq, anchor, strand) and drop duplicates
        for a in range(1, n_anchor):
            b = a
            while b > 0 and (
                    (anchors[b, 0], anchors[b, 1], anchors[b, 2]) <
                    (anchors[b - 1, 0], anchors[b - 1, 1], anchors[b - 1, 2])):
                for f in range(4):
                    tmp = anchors[b, f]
                    anchors[b, f] = anchors[b - 1, f]
                    anchors[b - 1, f] = tmp
                b -= 1
        w = 0
        for a in range(n_anchor):
            if w > 0 and anchors[a, 0] == anchors[w - 1, 0] \
                    and anchors[a, 1] == anchors[w - 1, 1] \
                    and anchors[a, 2] == anchors[w - 1, 2]:
                continue
            if w != a:
                for f in range(4):
                    anchors[w, f] = anchors[a, f]
            w += 1
        n_anchor = w

    # DP every candidate window; rank deterministically
    n_cand = 0
    best_set = False
    best_score = np.int64(0)
    best_seq = np.int64(0)
    best_pos = np.int64(0)
    best_strand = np.int64(0)
    n_runs = 0
    dp_cap = max_hits
    n_dp = n_anchor if n_anchor < dp_cap else dp_cap
    for a in range(n_dp):
        seq_id = anchors[a, 0]
        anchor = anchors[a, 1]
        strand = anchors[a, 2]
        seq_len = seq_lens[seq_id]
        ws = anchor - margin
        if ws < 0:
            ws = 0
        we = anchor + m + margin
        if we > seq_len:
            we = seq_len
        if we - ws < 1:
            continue
        base = seq_offsets[seq_id]
        window = ref_codes[base + ws:base + we]
        query = q if strand == 0 else qrev
        n = window.size
        diag_offsets(n, m, offs)
        score, bi, bj = diag_fill(query, window, match, mismatch, gox, ge,
                                  lanes, cells, offs)
        if score < min_report:
            continue
        n_ops, i_start, j_start, t_mm, t_ins, t_del = diag_traceback(
            query, window, gox, cells, offs, n, bi, bj, ops_rev)
        gpos = ws + i_start
        gend = ws + bi + 1
        cand[n_cand, 0] = seq_id
        cand[n_cand, 1] = gpos
        cand[n_cand, 2] = gend
        cand[n_cand, 3] = strand
        cand[n_cand, 4] = score
        cand[n_cand, 5] = t_mm + t_ins + t_del
        cand[n_cand, 6] = ws
        cand[n_cand, 7] = we
        cand[n_cand, 8] = anchors[a, 3]
        n_cand += 1
        if not best_set or _row_better(score, seq_id, gpos, strand,
                                       best_score, best_seq, best_pos,
                                       best_strand):
            best_set = True
            best_score = np.int64(score)
            best_seq = seq_id
            best_pos = gpos
            best_strand = strand
            n_runs = _emit_runs(ops_rev, n_ops, j_start, bj, m,
                                out_ops, out_lens)
            out_extra[0] = t_mm
            out_extra[1] = t_ins
            out_extra[2] = t_del
            out_extra[3] = j_start

    # sort candidates best-first with the same comparator
    for a in range(1, n_cand):
        b = a
        while b > 0 and _row_better(cand[b, 4], cand[b, 0], cand[b, 1],
                                    cand[b, 3], cand[b - 1, 4],
                                    cand[b - 1, 0], cand[b - 1, 1],
                                    cand[b - 1, 3]):
            for f in range(CAND_FIELDS):
                tmp = cand[b, f]
                cand[b, f] = cand[b - 1, f]
                cand[b - 1, f] = tmp
            b -= 1
    # drop same-locus duplicates, keeping the best-ranked one
    w = 0
    for a in range(n_cand):
        dup = False
        for b in range(w):
            if cand[b, 0] == cand[a, 0] and cand[b, 1] == cand[a, 1] \
                    and cand[b, 3] == cand[a, 3]:
                dup = True
                break
        if dup:
            continue
        if w != a:
            for f in range(CAND_FIELDS):
                cand[w, f] = cand[a, f]
        w += 1
    n_cand = w

    n_stored = n_cand if n_cand < CAND_STORED else CAND_STORED
    for a in range(n_stored):
        for f in range(CAND_FIELDS):
            out_cand[a, f] = cand[a, f]
    return STATUS_OK, n_stored, n_cand, states_total, n_runs


@njit(cache=True, nogil=True)
def align_chunk(flat, starts, ends, flags,
                bwt, cps, counts, dollar_rows, dollar_targets,
                sa_samples, rate, row0,
                seg_starts, seg_seq, seg_rc, seq_lens, seq_offsets, ref_codes,
                k, max_hits, max_states, truncate,
                seed_len, seed_k, n_seeds, margin,
                match, mismatch, gox, ge, min_report, lanes,
                out_status, out_ncand, out_total, out_states, out_nops,
                out_cand, out_ops, out_lens, out_extra):
    """Align every read of a chunk; outputs land in the per-read slots."""
    n_reads = starts.size
    mmax = 1
    for t in range(n_reads):
        length = ends[t] - starts[t]
        if length > mmax:
            mmax = length
    wmax = mmax + 2 * margin

    stack = np.empty((4 * (mmax + 2), 4), np.int64)
    ranges = np.empty((max_hits + 1, 3), np.int64)
    pos_buf = np.empty(max_hits, np.int64)
    anchors = np.empty((max_hits * (n_seeds + 1) + 2, 4), np.int64)
    cand = np.empty((max_hits + 2, CAND_FIELDS), np.int64)
    cells = np.empty(wmax * mmax, np.uint32)
    offs = np.empty(wmax + mmax + 2, np.int64)
    ops_rev = np.empty(wmax + mmax + 4, np.uint8)
    qrev_buf = np.empty(mmax, np.uint8)

    for t in range(n_reads):
        q = flat[starts[t]:ends[t]]
        qrev = _revcomp_into(q, qrev_buf)
        status, n_stored, n_cand, states, n_runs = _align_read(
            q, qrev, flags[t],
            bwt, cps, counts, dollar_rows, dollar_targets,
            sa_samples, rate, row0,
            seg_starts, seg_seq, seg_rc, seq_lens, seq_offsets, ref_codes,
            k, max_hits, max_states, truncate,
            seed_len, seed_k, n_seeds, margin,
            match, mismatch, gox, ge, min_report, lanes,
            stack, ranges, pos_buf, anchors, cand,
            cells, offs, ops_rev,
            out_cand[t], out_ops[t], out_lens[t], out_extra[t])
        out_status[t] = status
        out_ncand[t] = n_stored
        out_total[t] = n_cand
        out_states[t] = states
        out_nops[t] = n_runs


@njit(cache=True, nogil=True)
def window_alignment(query, window, match, mismatch, gox, ge, lanes,
                     out_ops, out_lens):
    """DP one query against one window, returning runs and span.

    Used when pair resolution picks a candidate other than the ranked
    best, whose CIGAR was not retained.

    Returns (n_runs, score, i_start, ref_end, nm).
    """
    n = window.size
    m = query.size
    cells = np.empty(n * m, np.uint32)
    offs = np.empty(n + m, np.int64)
    diag_offsets(n, m, offs)
    score, bi, bj = diag_fill(query, window, match, mismatch, gox, ge,
                              lanes, cells, offs)
    ops_rev = np.empty(n + m + 2, np.uint8)
    n_ops, i_start, j_start, t_mm, t_ins, t_del = diag_traceback(
        query, window, gox, cells, offs, n, bi, bj, ops_rev)
    n_runs = _emit_runs(ops_rev, n_ops, j_start, bj, m, out_ops, out_lens)
    return n_runs, score, i_start, bi + 1, t_mm + t_ins + t_del
