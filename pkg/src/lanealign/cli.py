"""Command-line entry points: `lanealign index` and `lanealign align`."""
from __future__ import annotations

import argparse
import sys
import time

from .align import LANE_CHOICES, ScoringScheme
from .fastx import parse_reads, read_reference
from .index import build_index, load_index, save_index
from .pipeline import PipelineConfig, run_pipeline
from .sam import InsertModel
from .search import SearchBudget

PROG = "lanealign"
EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Short-read aligner: BWT few-mismatch search plus "
                    "lane-parallel anti-diagonal affine-gap DP")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build a reference index")
    p_index.add_argument("reference", help="reference FASTA (gzip ok)")
    p_index.add_argument("--output", "-o", required=True,
                         help="index file to write")
    p_index.add_argument("--sampling-rate", type=int, default=8,
                         help="suffix-array sampling rate (default 8)")
    p_index.add_argument("--ambiguity-seed", type=int, default=0,
                         help="seed for deterministic N replacement")

    p_align = sub.add_parser("align", help="align reads to an index")
    p_align.add_argument("reads", nargs="+",
                         help="1 FASTA/FASTQ file, or 2 for paired-end")
    p_align.add_argument("--index", "-x", required=True, help="index file")
    p_align.add_argument("--output", "-o", default="-",
                         help="SAM output path, '-' for stdout (default)")
    p_align.add_argument("--batch-size", type=int, default=100_000)
    p_align.add_argument("--worker-groups", type=int, default=1)
    p_align.add_argument("--workers-per-group", type=int, default=0,
                         help="threads per group; 0 = 4 x cores")
    p_align.add_argument("--max-mismatches", "-k", type=int, default=2)
    p_align.add_argument("--max-hits", type=int, default=64)
    p_align.add_argument("--max-states", type=int, default=8192)
    p_align.add_argument("--match", type=int, default=1)
    p_align.add_argument("--mismatch", type=int, default=-4)
    p_align.add_argument("--gap-open", type=int, default=-6)
    p_align.add_argument("--gap-extend", type=int, default=-1)
    p_align.add_argument("--min-score", type=int, default=20)
    p_align.add_argument("--lanes", type=int, default=16,
                         choices=list(LANE_CHOICES))
    p_align.add_argument("--window-margin", type=int, default=32)
    p_align.add_argument("--min-seed-length", type=int, default=17)
    p_align.add_argument("--seed-length", type=int, default=22)
    p_align.add_argument("--seed-mismatches", type=int, default=1)
    p_align.add_argument("--seed-count", type=int, default=5)
    p_align.add_argument("--insert-min", type=int, default=100)
    p_align.add_argument("--insert-max", type=int, default=1000)
    p_align.add_argument("--insert-auto", action="store_true",
                         help="estimate the insert window from the data")
    p_align.add_argument("--ordered-output",
                         action=argparse.BooleanOptionalAction, default=True)
    p_align.add_argument("--lenient", action="store_true",
                         help="skip malformed records instead of aborting")
    p_align.add_argument("--max-secondary", type=int, default=0)
    p_align.add_argument("--read-group", default=None,
                         help="@RG line content, e.g. 'ID:run1\\tSM:sample'")
    p_align.add_argument("--report", default=None,
                         help="write the key=value report to this path")
    p_align.add_argument("--report-json", default=None,
                         help="write the report as JSON to this path")
    return parser


def _alignment_command_line(args) -> str:
    """Canonical @PG CL string: every flag that affects the records.

    Parallelism and batching knobs are omitted; they cannot change the
    output, and omitting them keeps runs byte-identical across worker
    counts.
    """
    parts = [PROG, "align", *args.reads, "--index", args.index,
             "--output", args.output,
             "-k", str(args.max_mismatches),
             "--max-hits", str(args.max_hits),
             "--max-states", str(args.max_states),
             "--match", str(args.match),
             "--mismatch", str(args.mismatch),
             "--gap-open", str(args.gap_open),
             "--gap-extend", str(args.gap_extend),
             "--min-score", str(args.min_score),
             "--lanes", str(args.lanes),
             "--window-margin", str(args.window_margin),
             "--min-seed-length", str(args.min_seed_length),
             "--seed-length", str(args.seed_length),
             "--seed-mismatches", str(args.seed_mismatches),
             "--seed-count", str(args.seed_count)]
    if args.insert_auto:
        parts.append("--insert-auto")
    else:
        parts += ["--insert-min", str(args.insert_min),
                  "--insert-max", str(args.insert_max)]
    if not args.ordered_output:
        parts.append("--no-ordered-output")
    if args.lenient:
        parts.append("--lenient")
    if args.max_secondary:
        parts += ["--max-secondary", str(args.max_secondary)]
    if args.read_group:
        parts += ["--read-group", args.read_group]
    return " ".join(parts)


def cmd_index(args) -> int:
    t0 = time.perf_counter()
    reference = read_reference(args.reference)
    index = build_index(reference, sampling_rate=args.sampling_rate,
                        ambiguity_seed=args.ambiguity_seed)
    save_index(index, args.output)
    total = int(index.seq_lens.sum())
    replaced = index.meta.get("ambiguity_replaced_total", 0)
    print(f"indexed {len(reference)} sequence(s), {total} bp "
          f"in {time.perf_counter() - t0:.2f}s -> {args.output}")
    if replaced:
        print(f"warning: replaced {replaced} ambiguous base(s) "
              f"deterministically (seed {args.ambiguity_seed})",
              file=sys.stderr)
    return EXIT_OK


def cmd_align(args) -> int:
    if len(args.reads) not in (1, 2):
        print("error: expected 1 read file or 2 for paired-end",
              file=sys.stderr)
        return EXIT_ERROR
    index = load_index(args.index)
    scoring = ScoringScheme(args.match, args.mismatch, args.gap_open,
                            args.gap_extend, args.min_score)
    budget = SearchBudget(args.max_mismatches, args.max_hits,
                          args.max_states)
    insert_model = None if args.insert_auto else InsertModel(
        args.insert_min, args.insert_max)
    config = PipelineConfig(
        batch_size=args.batch_size, worker_groups=args.worker_groups,
        workers_per_group=args.workers_per_group, budget=budget,
        ordered_output=args.ordered_output, scoring=scoring,
        lanes=args.lanes, window_margin=args.window_margin,
        min_seed_length=args.min_seed_length, seed_length=args.seed_length,
        seed_mismatches=args.seed_mismatches, seed_count=args.seed_count,
        insert_model=insert_model, max_secondary=args.max_secondary,
        command_line=_alignment_command_line(args),
        read_group=args.read_group)
    reads = parse_reads(args.reads, strict=not args.lenient)

    if args.output == "-":
        report = run_pipeline(reads, index, config, sys.stdout)
    else:
        with open(args.output, "w") as sink:
            report = run_pipeline(reads, index, config, sink)

    sys.stderr.write(report.to_text())
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_text())
    if args.report_json:
        with open(args.report_json, "w") as fh:
            fh.write(report.to_json() + "\n")
    return EXIT_WARNINGS if report.skipped_records else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "index":
            return cmd_index(args)
        return cmd_align(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}",
              file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
