"""Host/worker batch pipeline: reader, worker groups, fallback, writer.

Mirrors an offload topology in portable form: a single reader stage
parses reads into fixed-size batches; each worker group (a controller
thread plus a thread pool running nogil kernels) pulls whole batches and
fans reads out in 64-read chunks; budget-exceeded reads are re-aligned on
the controller with the fallback budget; a single writer emits records,
in input order when ordered output is on. Every read is accounted for
exactly once.
"""
from __future__ import annotations

import json
import os
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import dna
from ._engine import (READ_NORMAL, READ_SKIP_PHASE1, READ_UNMAPPABLE,
                      STATUS_DEFERRED, align_chunk, window_alignment)
from .align import (DEFAULT_LANES, DEFAULT_WINDOW_MARGIN, LANE_CHOICES,
                    MAX_READ_LENGTH, OP_CHARS, ScoringScheme)
from .fastx import ReadPair, ReadRecord
from .index import ReferenceIndex
from .sam import (AlignmentRecord, FLAG_SECONDARY, InsertModel, SamHeader,
                  build_mapped_record, build_unmapped_record,
                  choose_concordant, finalize_pair, mapq_estimate)
from .search import (AMBIG_SKIP_FRACTION, DEFAULT_MIN_SEED_LENGTH,
                     FALLBACK_BUDGET, SearchBudget)

CHUNK_READS = 64
QUEUE_CAPACITY = 4
INSERT_ESTIMATE_PAIRS = 10_000


class PipelineError(RuntimeError):
    """Fatal pipeline failure; partial_output marks truncated output."""

    def __init__(self, message: str, partial_output: bool = False):
        super().__init__(message)
        self.partial_output = partial_output


@dataclass
class PipelineConfig:
    """Knobs for one alignment run; defaults match the CLI."""

    batch_size: int = 100_000
    worker_groups: int = 1
    workers_per_group: int = 0  # 0 = 4 x available cores
    budget: SearchBudget = field(default_factory=SearchBudget)
    ordered_output: bool = True
    scoring: ScoringScheme = field(default_factory=ScoringScheme)
    lanes: int = DEFAULT_LANES
    window_margin: int = DEFAULT_WINDOW_MARGIN
    min_seed_length: int = DEFAULT_MIN_SEED_LENGTH
    seed_length: int = 22
    seed_mismatches: int = 1
    seed_count: int = 5
    insert_model: InsertModel | None = field(default_factory=InsertModel)
    max_secondary: int = 0
    command_line: str = ""
    read_group: str | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.worker_groups < 1:
            raise ValueError("batch_size and worker_groups must be >= 1")
        if self.workers_per_group < 0:
            raise ValueError("workers_per_group must be >= 0")
        if self.lanes not in LANE_CHOICES:
            raise ValueError(f"lanes must be one of {LANE_CHOICES}")

    @property
    def effective_workers(self) -> int:
        return self.workers_per_group or 4 * (os.cpu_count() or 1)


@dataclass
class Batch:
    """Consecutive run of input items (reads or pairs)."""

    batch_id: int
    items: list


@dataclass
class WorkerStats:
    reads: int = 0
    states: int = 0
    wall_seconds: float = 0.0


@dataclass
class BatchResult:
    batch_id: int
    outcomes: list  # one _ReadOutcome per read, input order
    stats: WorkerStats


@dataclass
class PipelineReport:
    reads_total: int = 0
    aligned: int = 0
    unmapped: int = 0
    deferred: int = 0
    deferred_then_aligned: int = 0
    deferred_then_unmapped: int = 0
    paired_records: int = 0
    proper_records: int = 0
    skipped_records: int = 0
    batches: int = 0
    wall_seconds: float = 0.0
    partial_output: bool = False
    insert_model: tuple[int, int] | None = None

    @property
    def properly_paired(self) -> float:
        return self.proper_records / self.paired_records \
            if self.paired_records else 0.0

    @property
    def reads_per_second(self) -> float:
        return self.reads_total / self.wall_seconds \
            if self.wall_seconds > 0 else 0.0

    def to_text(self) -> str:
        lines = [
            f"reads_total={self.reads_total}",
            f"aligned={self.aligned}",
            f"unmapped={self.unmapped}",
            f"deferred={self.deferred}",
            f"deferred_then_aligned={self.deferred_then_aligned}",
            f"deferred_then_unmapped={self.deferred_then_unmapped}",
            f"paired_records={self.paired_records}",
            f"proper_records={self.proper_records}",
            f"properly_paired={self.properly_paired:.6f}",
            f"skipped_records={self.skipped_records}",
            f"batches={self.batches}",
            f"wall_seconds={self.wall_seconds:.3f}",
            f"reads_per_second={self.reads_per_second:.1f}",
        ]
        if self.insert_model:
            lines.append(
                f"insert_model={self.insert_model[0]},{self.insert_model[1]}")
        if self.partial_output:
            lines.append("partial_output=true")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "reads_total": self.reads_total,
            "aligned": self.aligned,
            "unmapped": self.unmapped,
            "deferred": self.deferred,
            "deferred_then_aligned": self.deferred_then_aligned,
            "deferred_then_unmapped": self.deferred_then_unmapped,
            "paired_records": self.paired_records,
            "proper_records": self.proper_records,
            "properly_paired": self.properly_paired,
            "skipped_records": self.skipped_records,
            "batches": self.batches,
            "wall_seconds": self.wall_seconds,
            "reads_per_second": self.reads_per_second,
            "insert_model": list(self.insert_model) if self.insert_model else None,
            "partial_output": self.partial_output,
        }
        return json.dumps(payload, sort_keys=True)


class _ReadOutcome:
    """Worker-side result for one read, before pair resolution."""

    __slots__ = ("status", "cand", "total", "runs", "nm", "was_deferred")

    def __init__(self, status, cand, total, runs, nm):
        self.status = status
        self.cand = cand          # int64[n_stored, 9] copy, best first
        self.total = total        # candidate count before the storage cap
        self.runs = runs          # CIGAR runs of cand[0], soft clips included
        self.nm = nm              # edit distance of cand[0]
        self.was_deferred = False


def _index_arrays(index: ReferenceIndex):
    return (index.bwt, index.occ_checkpoints, index.counts,
            index.dollar_rows, index.dollar_targets,
            index.sa_samples, index.sampling_rate, index.row0,
            index.seg_starts, index.seg_seq, index.seg_rc,
            index.seq_lens, index.seq_offsets, index.ref_codes)


def _iter_reads(items):
    for item in items:
        if isinstance(item, ReadPair):
            yield item.first
            yield item.second
        else:
            yield item


def _read_flag(read: ReadRecord, min_seed_length: int) -> int:
    m = len(read.bases)
    if m < min_seed_length or m > MAX_READ_LENGTH:
        return READ_UNMAPPABLE
    codes = dna.encode(read.bases)
    if np.count_nonzero(codes > 3) > AMBIG_SKIP_FRACTION * m:
        return READ_SKIP_PHASE1
    return READ_NORMAL


def _process_chunk(reads: list[ReadRecord], arrays, config: PipelineConfig,
                   budget: SearchBudget, truncate: bool):
    """Align one chunk of reads with the fused kernel."""
    n = len(reads)
    if n == 0:
        return [], 0
    lengths = np.fromiter((len(r.bases) for r in reads), np.int64, n)
    starts = np.zeros(n, np.int64)
    starts[1:] = np.cumsum(lengths)[:-1]
    ends = starts + lengths
    flat = np.empty(int(ends[-1]) if n else 0, np.uint8)
    flags = np.empty(n, np.uint8)
    for t, read in enumerate(reads):
        flat[starts[t]:ends[t]] = dna.encode(read.bases)
        flags[t] = _read_flag(read, config.min_seed_length)

    mmax = int(lengths.max()) if n else 1
    ops_cap = 2 * mmax + 8
    out_status = np.empty(n, np.uint8)
    out_ncand = np.empty(n, np.int32)
    out_total = np.empty(n, np.int32)
    out_states = np.empty(n, np.int64)
    out_nops = np.empty(n, np.int32)
    out_cand = np.empty((n, 32, 9), np.int64)
    out_ops = np.empty((n, ops_cap), np.uint8)
    out_lens = np.empty((n, ops_cap), np.int32)
    out_extra = np.empty((n, 4), np.int64)

    sc = config.scoring
    align_chunk(flat, starts, ends, flags, *arrays,
                budget.max_mismatches, budget.max_hits, budget.max_states,
                truncate,
                config.seed_length, config.seed_mismatches, config.seed_count,
                config.window_margin,
                sc.match_bonus, sc.mismatch_penalty, sc.gap_first_base,
                sc.gap_extend_penalty, sc.min_report_score, config.lanes,
                out_status, out_ncand, out_total, out_states, out_nops,
                out_cand, out_ops, out_lens, out_extra)

    outcomes = []
    states_total = 0
    for t in range(n):
        states_total += int(out_states[t])
        if out_status[t] == STATUS_DEFERRED:
            outcomes.append(_ReadOutcome(STATUS_DEFERRED, None, 0, (), 0))
            continue
        stored = int(out_ncand[t])
        runs = tuple((OP_CHARS[out_ops[t, i]], int(out_lens[t, i]))
                     for i in range(int(out_nops[t])))
        outcomes.append(_ReadOutcome(
            0, out_cand[t, :stored].copy(), int(out_total[t]), runs,
            int(out_extra[t, 0] + out_extra[t, 1] + out_extra[t, 2])))
    return outcomes, states_total


def dispatch_batch(batch: Batch, workers, index: ReferenceIndex,
                   config: PipelineConfig,
                   budget: SearchBudget | None = None) -> BatchResult:
    """Fan a batch's reads across a worker pool in 64-read chunks.

    workers may be a ThreadPoolExecutor or a worker count; reads exceeding
    the budget come back Deferred, and any worker failure surfaces here.
    """
    if budget is None:
        budget = config.budget
    arrays = _index_arrays(index)
    reads = list(_iter_reads(batch.items))
    t0 = time.perf_counter()
    chunks = [reads[i:i + CHUNK_READS] for i in range(0, len(reads),
                                                      CHUNK_READS)]
    own_pool = None
    pool = workers
    if isinstance(workers, int):
        own_pool = ThreadPoolExecutor(max_workers=max(1, workers))
        pool = own_pool
    try:
        futures = [pool.submit(_process_chunk, chunk, arrays, config,
                               budget, False)
                   for chunk in chunks]
        outcomes: list[_ReadOutcome] = []
        states = 0
        for fut in futures:
            chunk_outcomes, chunk_states = fut.result()
            outcomes.extend(chunk_outcomes)
            states += chunk_states
    finally:
        if own_pool is not None:
            own_pool.shutdown(wait=True)
    stats = WorkerStats(reads=len(reads), states=states,
                        wall_seconds=time.perf_counter() - t0)
    return BatchResult(batch.batch_id, outcomes, stats)


def _fallback_pass(reads: list[ReadRecord], outcomes: list[_ReadOutcome],
                   arrays, config: PipelineConfig) -> int:
    """Re-align deferred reads on the controller with the fallback budget."""
    deferred_idx = [i for i, o in enumerate(outcomes)
                    if o.status == STATUS_DEFERRED]
    budget = replace(FALLBACK_BUDGET,
                     max_mismatches=config.budget.max_mismatches)
    for lo in range(0, len(deferred_idx), CHUNK_READS):
        part = deferred_idx[lo:lo + CHUNK_READS]
        new_outcomes, _states = _process_chunk(
            [reads[i] for i in part], arrays, config, budget, True)
        for i, outcome in zip(part, new_outcomes):
            outcome.was_deferred = True
            outcomes[i] = outcome
    return len(deferred_idx)


def fallback_align(read: ReadRecord, index: ReferenceIndex,
                   config: PipelineConfig | None = None) -> list[AlignmentRecord]:
    """Align one deferred read with the unlimited fallback budget.

    Returns the selected record list; an empty list means unmapped. The
    selection rule is identical to the worker path's.
    """
    if config is None:
        config = PipelineConfig()
    budget = replace(FALLBACK_BUDGET,
                     max_mismatches=config.budget.max_mismatches)
    outcomes, _ = _process_chunk([read], _index_arrays(index), config,
                                 budget, True)
    outcome = outcomes[0]
    if outcome.cand is None or len(outcome.cand) == 0:
        return []
    return _solo_records(read, outcome, index, config)


def _mapq_for(outcome: _ReadOutcome) -> int:
    best = int(outcome.cand[0, 4])
    second = int(outcome.cand[1, 4]) if len(outcome.cand) > 1 else None
    return mapq_estimate(best, second, outcome.total)


def _record_for_candidate(read: ReadRecord, outcome: _ReadOutcome,
                          cand_idx: int, index: ReferenceIndex,
                          config: PipelineConfig) -> AlignmentRecord:
    row = outcome.cand[cand_idx]
    seq_id, pos, _end, strand = int(row[0]), int(row[1]), int(row[2]), int(row[3])
    score, nm = int(row[4]), int(row[5])
    if cand_idx == 0:
        runs = outcome.runs
    else:
        runs, nm = _recompute_runs(read, row, index, config)
    return build_mapped_record(
        read, index.seq_names[seq_id], pos, strand == 1, runs,
        _mapq_for(outcome), score, nm)


def _recompute_runs(read: ReadRecord, row, index: ReferenceIndex,
                    config: PipelineConfig):
    """CIGAR for a non-best candidate (not retained by the batch kernel)."""
    seq_id, strand = int(row[0]), int(row[3])
    ws, we = int(row[6]), int(row[7])
    codes = dna.encode(read.bases)
    query = codes if strand == 0 else dna.revcomp_codes(codes)
    base = int(index.seq_offsets[seq_id])
    window = index.ref_codes[base + ws:base + we]
    ops_cap = 2 * len(read.bases) + 8
    out_ops = np.empty(ops_cap, np.uint8)
    out_lens = np.empty(ops_cap, np.int32)
    sc = config.scoring
    n_runs, _score, _start, _end, nm = window_alignment(
        query, window, sc.match_bonus, sc.mismatch_penalty,
        sc.gap_first_base, sc.gap_extend_penalty, config.lanes,
        out_ops, out_lens)
    runs = tuple((OP_CHARS[out_ops[i]], int(out_lens[i]))
                 for i in range(n_runs))
    return runs, int(nm)


def _solo_records(read: ReadRecord, outcome: _ReadOutcome,
                  index: ReferenceIndex,
                  config: PipelineConfig) -> list[AlignmentRecord]:
    records = [_record_for_candidate(read, outcome, 0, index, config)]
    for extra in range(1, min(len(outcome.cand), config.max_secondary + 1)):
        sec = _record_for_candidate(read, outcome, extra, index, config)
        records.append(replace(sec, flags=sec.flags | FLAG_SECONDARY,
                               seq="*", qual="*"))
    return records


def _cand_tuples(outcome: _ReadOutcome):
    if outcome.cand is None:
        return []
    return [(int(r[4]), int(r[0]), int(r[1]), int(r[2]), int(r[3]) == 1)
            for r in outcome.cand]


def _estimate_insert_model(items, outcomes) -> InsertModel | None:
    """Median +- 4*MAD template length over unique concordant pairs."""
    tlens = []
    pos = 0
    for item in items:
        if not isinstance(item, ReadPair):
            pos += 1
            continue
        o1, o2 = outcomes[pos], outcomes[pos + 1]
        pos += 2
        if o1.cand is None or o2.cand is None \
                or o1.total != 1 or o2.total != 1 \
                or len(o1.cand) == 0 or len(o2.cand) == 0:
            continue
        c1, c2 = o1.cand[0], o2.cand[0]
        if c1[0] != c2[0] or c1[3] == c2[3]:
            continue
        fwd, rev = (c1, c2) if c1[3] == 0 else (c2, c1)
        tlen = int(rev[2]) - int(fwd[1])
        if 0 < tlen <= 100_000 and int(fwd[1]) <= int(rev[1]):
            tlens.append(tlen)
        if len(tlens) >= INSERT_ESTIMATE_PAIRS:
            break
    if len(tlens) < 50:
        return None
    arr = np.array(tlens, np.int64)
    med = float(np.median(arr))
    mad = float(np.median(np.abs(arr - med)))
    lo = max(1, int(med - 4 * mad))
    hi = max(lo, int(med + 4 * mad))
    return InsertModel(lo, hi)


def _resolve_batch(batch: Batch, outcomes: list[_ReadOutcome],
                   index: ReferenceIndex, config: PipelineConfig,
                   model: InsertModel):
    """Pair resolution and record building; returns (lines, counters)."""
    lines: list[str] = []
    counters = {"aligned": 0, "unmapped": 0, "def_aligned": 0,
                "def_unmapped": 0, "paired": 0, "proper": 0}

    def account(outcome, record):
        mapped = not record.is_unmapped
        counters["aligned" if mapped else "unmapped"] += 1
        if outcome.was_deferred:
            counters["def_aligned" if mapped else "def_unmapped"] += 1

    pos = 0
    for item in batch.items:
        if isinstance(item, ReadPair):
            o1, o2 = outcomes[pos], outcomes[pos + 1]
            pos += 2
            i, j, proper = choose_concordant(_cand_tuples(o1),
                                             _cand_tuples(o2), model)
            recs = []
            for read, outcome, idx in ((item.first, o1, i),
                                       (item.second, o2, j)):
                if outcome.cand is None or len(outcome.cand) == 0:
                    recs.append(build_unmapped_record(read))
                else:
                    recs.append(_record_for_candidate(read, outcome, idx,
                                                      index, config))
            rec1, rec2 = finalize_pair(recs[0], recs[1], proper)
            counters["paired"] += 2
            if proper:
                counters["proper"] += 2
            account(o1, rec1)
            account(o2, rec2)
            lines.append(rec1.to_sam_line())
            lines.append(rec2.to_sam_line())
            if config.max_secondary > 0:
                for read, outcome, idx in ((item.first, o1, i),
                                           (item.second, o2, j)):
                    lines.extend(
                        r.to_sam_line()
                        for r in _secondaries(read, outcome, idx, index,
                                              config))
        else:
            outcome = outcomes[pos]
            pos += 1
            if outcome.cand is None or len(outcome.cand) == 0:
                record = build_unmapped_record(item)
                account(outcome, record)
                lines.append(record.to_sam_line())
            else:
                records = _solo_records(item, outcome, index, config)
                account(outcome, records[0])
                lines.extend(r.to_sam_line() for r in records)
    return lines, counters


def _secondaries(read, outcome, chosen_idx, index, config):
    records = []
    emitted = 0
    for idx in range(len(outcome.cand)):
        if idx == chosen_idx or emitted >= config.max_secondary:
            continue
        rec = _record_for_candidate(read, outcome, idx, index, config)
        records.append(replace(rec, flags=rec.flags | FLAG_SECONDARY,
                               seq="*", qual="*"))
        emitted += 1
    return records


def _batches(read_source, batch_size: int):
    items = []
    batch_id = 0
    for item in read_source:
        items.append(item)
        if len(items) >= batch_size:
            yield Batch(batch_id, items)
            batch_id += 1
            items = []
    if items:
        yield Batch(batch_id, items)


def run_pipeline(read_source, index: ReferenceIndex, config: PipelineConfig,
                 sink) -> PipelineReport:
    """Align a read stream end to end, writing SAM text to sink."""
    t0 = time.perf_counter()
    report = PipelineReport()

    header = SamHeader(
        sequences=[(n, int(l)) for n, l in zip(index.seq_names,
                                               index.seq_lens)],
        command_line=config.command_line, read_group=config.read_group)
    try:
        for line in header.lines():
            sink.write(line + "\n")
    except Exception as exc:
        raise PipelineError(f"sink write failure: {exc}") from exc

    in_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    out_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    stop = threading.Event()
    model_ready = threading.Event()
    resolved_model: list[InsertModel] = []
    arrays = _index_arrays(index)

    if config.insert_model is not None:
        resolved_model.append(config.insert_model)
        model_ready.set()

    def put_checking_stop(q, item) -> bool:
        while not stop.is_set():
            try:
                q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def reader():
        try:
            for batch in _batches(read_source, config.batch_size):
                if not put_checking_stop(in_q, batch):
                    return
        except Exception as exc:  # parse errors in strict mode land here
            stop.set()
            out_q.put(("error", exc))
        finally:
            for _ in range(config.worker_groups):
                if not put_checking_stop(in_q, None):
                    break

    def controller():
        pool = ThreadPoolExecutor(max_workers=config.effective_workers)
        try:
            while True:
                try:
                    batch = in_q.get(timeout=0.1)
                except queue.Empty:
                    if stop.is_set():
                        return
                    continue
                if batch is None:
                    return
                if stop.is_set():
                    continue  # drain so the reader can finish
                result = dispatch_batch(batch, pool, index, config)
                reads = list(_iter_reads(batch.items))
                n_deferred = _fallback_pass(reads, result.outcomes, arrays,
                                            config)
                if not model_ready.is_set():
                    if batch.batch_id == 0:
                        est = _estimate_insert_model(batch.items,
                                                     result.outcomes)
                        resolved_model.append(est or InsertModel())
                        model_ready.set()
                    else:
                        while not model_ready.wait(timeout=0.1):
                            if stop.is_set():
                                return
                lines, counters = _resolve_batch(batch, result.outcomes,
                                                 index, config,
                                                 resolved_model[0])
                counters["deferred"] = n_deferred
                counters["reads"] = len(reads)
                if not put_checking_stop(out_q, ("batch", batch.batch_id,
                                                 lines, counters)):
                    return
        except Exception as exc:
            stop.set()
            out_q.put(("error", exc))
        finally:
            pool.shutdown(wait=True)
            out_q.put(("done",))

    threads = [threading.Thread(target=reader, daemon=True)]
    threads += [threading.Thread(target=controller, daemon=True)
                for _ in range(config.worker_groups)]
    for t in threads:
        t.start()

    def merge(counters):
        report.aligned += counters["aligned"]
        report.unmapped += counters["unmapped"]
        report.deferred += counters["deferred"]
        report.deferred_then_aligned += counters["def_aligned"]
        report.deferred_then_unmapped += counters["def_unmapped"]
        report.paired_records += counters["paired"]
        report.proper_records += counters["proper"]
        report.reads_total += counters["reads"]
        report.batches += 1

    def emit(lines):
        try:
            for line in lines:
                sink.write(line + "\n")
        except Exception as exc:
            stop.set()
            try:
                sink.write("@CO\tlanealign:partial_output\n")
            except Exception:
                pass
            raise PipelineError(f"sink write failure: {exc}",
                                partial_output=True) from exc

    pending: dict[int, tuple] = {}
    next_batch = 0
    done = 0
    error: Exception | None = None
    try:
        while done < config.worker_groups:
            msg = out_q.get()
            if msg[0] == "done":
                done += 1
            elif msg[0] == "error":
                if error is None:
                    error = msg[1]
                stop.set()
            else:
                _tag, batch_id, lines, counters = msg
                merge(counters)
                if config.ordered_output:
                    pending[batch_id] = lines
                    while next_batch in pending:
                        emit(pending.pop(next_batch))
                        next_batch += 1
                else:
                    emit(lines)
        if error is not None:
            raise error
        assert not pending, "reorder buffer not drained"
    finally:
        stop.set()
        while True:  # unblock any producer stuck on a full queue
            try:
                out_q.get_nowait()
            except queue.Empty:
                break
        for t in threads:
            t.join(timeout=30)

    skipped = getattr(read_source, "skipped", 0)
    report.skipped_records = int(skipped)
    if resolved_model:
        report.insert_model = (resolved_model[0].min_insert,
                               resolved_model[0].max_insert)
    report.wall_seconds = time.perf_counter() - t0
    return report
