"""SAM v1.6 records: flags, CIGAR, mate resolution, mapping quality.

Positions on AlignmentRecord are 0-based internally and converted to
1-based on serialization; unmapped records write POS 0 and CIGAR *.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import dna
from .fastx import MATE_FIRST, ReadRecord

FLAG_PAIRED = 0x1
FLAG_PROPER = 0x2
FLAG_UNMAPPED = 0x4
FLAG_MATE_UNMAPPED = 0x8
FLAG_REVERSE = 0x10
FLAG_MATE_REVERSE = 0x20
FLAG_FIRST = 0x40
FLAG_SECOND = 0x80
FLAG_SECONDARY = 0x100

MAPQ_MAX = 60
MAPQ_SCALE = 6
MAPQ_REPEAT_CAP = 3
MAPQ_REPEAT_THRESHOLD = 32


@dataclass(frozen=True)
class InsertModel:
    """Template-length window for calling a pair properly paired."""

    min_insert: int = 100
    max_insert: int = 1000
    orientation: str = "fr"

    def __post_init__(self):
        if not 0 < self.min_insert <= self.max_insert:
            raise ValueError("require 0 < min_insert <= max_insert")
        if self.orientation != "fr":
            raise ValueError("only forward-reverse orientation is supported")


def cigar_read_length(cigar) -> int:
    return sum(n for op, n in cigar if op in "MIS")


def cigar_ref_length(cigar) -> int:
    return sum(n for op, n in cigar if op in "MD")


def cigar_to_string(cigar) -> str:
    if not cigar:
        return "*"
    return "".join(f"{n}{op}" for op, n in cigar)


@dataclass
class AlignmentRecord:
    """One SAM alignment line (score kept for pair resolution, not emitted)."""

    qname: str
    flags: int
    rname: str = "*"
    pos: int = -1            # 0-based leftmost aligned base; -1 = unavailable
    mapq: int = 0
    cigar: tuple = ()
    rnext: str = "*"
    pnext: int = -1
    tlen: int = 0
    seq: str = "*"
    qual: str = "*"
    tags: tuple[str, ...] = ()
    score: int | None = None

    @property
    def is_unmapped(self) -> bool:
        return bool(self.flags & FLAG_UNMAPPED)

    @property
    def is_reverse(self) -> bool:
        return bool(self.flags & FLAG_REVERSE)

    @property
    def ref_end(self) -> int:
        """0-based end of the aligned span."""
        return self.pos + cigar_ref_length(self.cigar)

    def to_sam_line(self) -> str:
        fields = [
            self.qname,
            str(self.flags),
            self.rname,
            str(self.pos + 1 if self.pos >= 0 else 0),
            str(self.mapq),
            cigar_to_string(self.cigar),
            self.rnext,
            str(self.pnext + 1 if self.pnext >= 0 else 0),
            str(self.tlen),
            self.seq,
            self.qual if self.qual else "*",
        ]
        fields.extend(self.tags)
        return "\t".join(fields)


def mapq_estimate(best_score: int, second_best_score: int | None,
                  hit_count: int) -> int:
    """Mapping quality from score separation and repetitiveness."""
    if second_best_score is None:
        mapq = MAPQ_MAX
    else:
        mapq = min(MAPQ_MAX, max(0, MAPQ_SCALE * (best_score - second_best_score)))
    if hit_count > MAPQ_REPEAT_THRESHOLD:
        mapq = min(mapq, MAPQ_REPEAT_CAP)
    return mapq


def build_mapped_record(read: ReadRecord, rname: str, pos: int,
                        is_reverse: bool, cigar, mapq: int, score: int,
                        edit_distance: int | None = None) -> AlignmentRecord:
    """Solo mapped record; reverse strand stores revcomp bases and
    reversed qualities so the CIGAR applies to SEQ as written."""
    if is_reverse:
        seq = dna.revcomp(read.bases)
        qual = read.qualities[::-1] if read.qualities else "*"
    else:
        seq = read.bases
        qual = read.qualities if read.qualities else "*"
    tags = [f"AS:i:{score}"]
    if edit_distance is not None:
        tags.append(f"NM:i:{edit_distance}")
    return AlignmentRecord(
        qname=read.name, flags=FLAG_REVERSE if is_reverse else 0,
        rname=rname, pos=pos, mapq=mapq, cigar=tuple(cigar),
        seq=seq, qual=qual, tags=tuple(tags), score=score)


def build_unmapped_record(read: ReadRecord) -> AlignmentRecord:
    return AlignmentRecord(qname=read.name, flags=FLAG_UNMAPPED,
                           seq=read.bases,
                           qual=read.qualities if read.qualities else "*")


def choose_concordant(cands1, cands2, model: InsertModel):
    """Best concordant combination of two candidate tuples lists.

    Candidates are (score, ref_key, pos, end, is_reverse) sorted best
    first; returns (i, j, proper). Without a qualifying combination both
    sides keep their best candidate and proper is False.
    """
    if not cands1 or not cands2:
        return 0, 0, False
    best_i = best_j = 0
    best_combined = None
    for i, c1 in enumerate(cands1):
        if best_combined is not None and c1[0] + cands2[0][0] <= best_combined:
            break
        for j, c2 in enumerate(cands2):
            combined = c1[0] + c2[0]
            if best_combined is not None and combined <= best_combined:
                break
            if c1[1] != c2[1] or c1[4] == c2[4]:
                continue
            fwd, rev = (c1, c2) if not c1[4] else (c2, c1)
            if fwd[2] > rev[2]:
                continue
            tlen = rev[3] - fwd[2]
            if model.min_insert <= tlen <= model.max_insert:
                best_combined = combined
                best_i, best_j = i, j
    return best_i, best_j, best_combined is not None


def _cand_tuple(rec: AlignmentRecord):
    score = rec.score if rec.score is not None else 0
    return (score, rec.rname, rec.pos, rec.ref_end, rec.is_reverse)


def finalize_pair(rec1: AlignmentRecord, rec2: AlignmentRecord,
                  proper: bool) -> tuple[AlignmentRecord, AlignmentRecord]:
    """Fill pairing flags, mate fields and signed template lengths."""
    out = []
    for rec, mate, first in ((rec1, rec2, True), (rec2, rec1, False)):
        flags = rec.flags | FLAG_PAIRED | (FLAG_FIRST if first else FLAG_SECOND)
        rname, pos = rec.rname, rec.pos
        rnext, pnext, tlen = "*", -1, 0
        if mate.is_unmapped:
            flags |= FLAG_MATE_UNMAPPED
        if mate.is_reverse:
            flags |= FLAG_MATE_REVERSE
        if proper:
            flags |= FLAG_PROPER
        if rec.is_unmapped and not mate.is_unmapped:
            # place the unmapped mate at its partner for sortability
            rname, pos = mate.rname, mate.pos
            rnext, pnext = "=", mate.pos
        elif not rec.is_unmapped and not mate.is_unmapped:
            rnext = "=" if mate.rname == rec.rname else mate.rname
            pnext = mate.pos
            if mate.rname == rec.rname:
                left = min(rec.pos, mate.pos)
                right = max(rec.ref_end, mate.ref_end)
                span = right - left
                if rec.pos < mate.pos or (rec.pos == mate.pos and first):
                    tlen = span
                else:
                    tlen = -span
        elif not rec.is_unmapped:
            rnext, pnext = "=", rec.pos
        out.append(replace(rec, flags=flags, rname=rname, pos=pos,
                           rnext=rnext, pnext=pnext, tlen=tlen))
    return out[0], out[1]


def resolve_pair(hits1, hits2, model: InsertModel,
                 read1: ReadRecord | None = None,
                 read2: ReadRecord | None = None,
                 ) -> tuple[AlignmentRecord, AlignmentRecord]:
    """Choose one record per side maximizing combined score subject to
    concordance; mark the proper-pair flag when a combination qualifies.

    hits1/hits2 are candidate AlignmentRecords sorted best-first; empty
    lists yield unmapped records synthesized from read1/read2.
    """
    i, j, proper = choose_concordant([_cand_tuple(r) for r in hits1],
                                     [_cand_tuple(r) for r in hits2], model)
    rec1 = hits1[i] if hits1 else build_unmapped_record(
        read1 if read1 is not None else ReadRecord("unmapped", "N"))
    rec2 = hits2[j] if hits2 else build_unmapped_record(
        read2 if read2 is not None else ReadRecord("unmapped", "N"))
    return finalize_pair(rec1, rec2, proper)


@dataclass
class SamHeader:
    """Everything needed for @HD/@SQ/@PG (and an optional @RG) lines."""

    sequences: list[tuple[str, int]]
    command_line: str = ""
    program_id: str = "lanealign"
    program_version: str = "0.1.0"
    read_group: str | None = None
    sort_order: str = "unsorted"

    def lines(self) -> list[str]:
        out = [f"@HD\tVN:1.6\tSO:{self.sort_order}"]
        for name, length in self.sequences:
            out.append(f"@SQ\tSN:{name}\tLN:{length}")
        if self.read_group:
            out.append(f"@RG\t{self.read_group}")
        pg = (f"@PG\tID:{self.program_id}\tPN:{self.program_id}"
              f"\tVN:{self.program_version}")
        if self.command_line:
            pg += f"\tCL:{self.command_line}"
        out.append(pg)
        return out


def write_sam(header: SamHeader, records, sink) -> None:
    """Serialize a header and a record stream; sink errors propagate."""
    for line in header.lines():
        sink.write(line + "\n")
    for rec in records:
        sink.write(rec.to_sam_line() + "\n")
