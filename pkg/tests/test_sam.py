from __future__ import annotations

import io
import re

import pytest

from lanealign import InsertModel, SamHeader, mapq_estimate, resolve_pair, \
    write_sam
from lanealign.dna import revcomp
from lanealign.fastx import ReadRecord
from lanealign.sam import (FLAG_FIRST, FLAG_MATE_REVERSE, FLAG_MATE_UNMAPPED,
                           FLAG_PAIRED, FLAG_PROPER, FLAG_REVERSE,
                           FLAG_SECOND, FLAG_UNMAPPED, AlignmentRecord,
                           build_mapped_record, build_unmapped_record,
                           finalize_pair)

CIGAR_RE = re.compile(r"^\*$|^(\d+[MIDNSHP=X])+$")


def _mapped(name, pos, reverse=False, score=50, ref="chr1", read_len=10):
    read = ReadRecord(name, "ACGTACGTAC"[:read_len], "I" * read_len)
    return build_mapped_record(read, ref, pos, reverse,
                               (("M", read_len),), 60, score)


def sam_grammar_check(line: str):
    fields = line.split("\t")
    assert len(fields) >= 11, line
    qname, flag, rname, pos, mapq, cigar = fields[:6]
    rnext, pnext, tlen, seq, qual = fields[6:11]
    assert qname and " " not in qname
    assert 0 <= int(flag) < (1 << 16)
    assert rname == "*" or rname
    assert 0 <= int(pos) <= (1 << 31) - 1
    assert 0 <= int(mapq) <= 255
    assert CIGAR_RE.match(cigar), cigar
    assert rnext == "*" or rnext == "=" or rnext
    assert 0 <= int(pnext) <= (1 << 31) - 1
    assert seq == "*" or seq.isalpha()
    assert qual == "*" or len(qual) == len(seq)
    if int(flag) & FLAG_UNMAPPED:
        assert cigar == "*"
    elif seq != "*" and cigar != "*":
        read_span = sum(int(n) for n, op in
                        re.findall(r"(\d+)([MIS])", cigar))
        assert read_span == len(seq)


# -- mapq ---------------------------------------------------------------------

def test_mapq_unique_hit():
    assert mapq_estimate(95, None, 1) == 60


def test_mapq_tied_best():
    assert mapq_estimate(80, 80, 2) == 0


def test_mapq_formula():
    assert mapq_estimate(84, 80, 2) == 24


def test_mapq_cap_and_floor():
    assert mapq_estimate(100, 10, 2) == 60
    assert mapq_estimate(50, 60 if False else 50, 2) == 0
    assert mapq_estimate(100, 40, 40) == 3
    assert mapq_estimate(100, None, 40) == 3


# -- insert model -------------------------------------------------------------

def test_insert_model_validation():
    with pytest.raises(ValueError):
        InsertModel(0, 100)
    with pytest.raises(ValueError):
        InsertModel(500, 100)
    assert InsertModel(100, 100).max_insert == 100


# -- pair resolution ----------------------------------------------------------

def test_both_sides_unmapped():
    r1 = ReadRecord("q", "ACGT", "IIII")
    r2 = ReadRecord("q", "TTTT", "IIII")
    rec1, rec2 = resolve_pair([], [], InsertModel(), r1, r2)
    for rec, first_flag in ((rec1, FLAG_FIRST), (rec2, FLAG_SECOND)):
        assert rec.flags & FLAG_UNMAPPED
        assert rec.flags & FLAG_MATE_UNMAPPED
        assert rec.flags & FLAG_PAIRED
        assert rec.flags & first_flag
        assert not rec.flags & FLAG_PROPER
        assert rec.rname == "*" and rec.pos < 0


def test_concordant_pair_400_apart():
    # fwd mate [1000,1010), rev mate [1390,1400): template length 400
    hit1 = _mapped("q", 1000, reverse=False)
    hit2 = _mapped("q", 1390, reverse=True)
    rec1, rec2 = resolve_pair([hit1], [hit2], InsertModel(300, 500))
    assert rec1.flags & FLAG_PROPER and rec2.flags & FLAG_PROPER
    assert rec1.tlen == 400 and rec2.tlen == -400
    assert rec1.rnext == "=" and rec1.pnext == 1390
    assert rec2.rnext == "=" and rec2.pnext == 1000
    assert rec1.flags & FLAG_MATE_REVERSE
    assert not rec2.flags & FLAG_MATE_REVERSE


def test_template_too_long_not_proper():
    hit1 = _mapped("q", 1000, reverse=False)
    hit2 = _mapped("q", 1590, reverse=True)  # template 600 > max 500
    rec1, rec2 = resolve_pair([hit1], [hit2], InsertModel(300, 500))
    assert not rec1.flags & FLAG_PROPER and not rec2.flags & FLAG_PROPER
    assert not rec1.is_unmapped and not rec2.is_unmapped
    assert rec1.tlen == 600 and rec2.tlen == -600


def test_wrong_orientation_not_proper():
    hit1 = _mapped("q", 1000, reverse=True)   # reverse mate leftmost
    hit2 = _mapped("q", 1390, reverse=False)
    rec1, rec2 = resolve_pair([hit1], [hit2], InsertModel(300, 500))
    assert not rec1.flags & FLAG_PROPER


def test_concordance_overrides_higher_solo_score():
    # side 1: best solo hit is discordant; a weaker hit is concordant
    best = _mapped("q", 50_000, reverse=False, score=90)
    weak = _mapped("q", 1000, reverse=False, score=80)
    mate = _mapped("q", 1390, reverse=True, score=85)
    rec1, rec2 = resolve_pair([best, weak], [mate], InsertModel(300, 500))
    assert rec1.pos == 1000
    assert rec1.flags & FLAG_PROPER


def test_unmapped_mate_placed_at_partner():
    hit1 = _mapped("q", 1234, reverse=False)
    r2 = ReadRecord("q", "TTTT", "IIII")
    rec1, rec2 = resolve_pair([hit1], [], InsertModel(), read2=r2)
    assert rec2.is_unmapped
    assert rec2.rname == "chr1" and rec2.pos == 1234
    assert rec2.rnext == "=" and rec2.pnext == 1234
    assert rec1.flags & FLAG_MATE_UNMAPPED
    assert rec1.tlen == 0 and rec2.tlen == 0


# -- record serialization -------------------------------------------------

def test_reverse_strand_stores_revcomp():
    read = ReadRecord("q", "AACCGGTTAC", "ABCDEFGHIJ")
    rec = build_mapped_record(read, "chr1", 99, True, (("M", 10),), 60, 10)
    assert rec.seq == revcomp("AACCGGTTAC")
    assert rec.qual == "JIHGFEDCBA"
    assert rec.flags & FLAG_REVERSE
    line = rec.to_sam_line()
    assert line.split("\t")[3] == "100"  # 1-based POS
    sam_grammar_check(line)


def test_unmapped_record_line():
    rec = build_unmapped_record(ReadRecord("q", "ACGT", "IIII"))
    line = rec.to_sam_line()
    fields = line.split("\t")
    assert fields[1] == str(FLAG_UNMAPPED)
    assert fields[2] == "*" and fields[3] == "0" and fields[5] == "*"
    sam_grammar_check(line)


def test_header_only_output():
    sink = io.StringIO()
    header = SamHeader([("chr1", 5000), ("chr2", 800)], command_line="cmd")
    write_sam(header, [], sink)
    lines = sink.getvalue().splitlines()
    assert lines[0] == "@HD\tVN:1.6\tSO:unsorted"
    assert lines[1] == "@SQ\tSN:chr1\tLN:5000"
    assert lines[2] == "@SQ\tSN:chr2\tLN:800"
    assert lines[3].startswith("@PG\tID:lanealign")
    assert lines[3].endswith("\tCL:cmd")
    assert len(lines) == 4


def test_read_group_line():
    header = SamHeader([("c", 10)], read_group="ID:rg1\tSM:s1")
    assert any(line.startswith("@RG\tID:rg1") for line in header.lines())


def test_forward_alignment_golden_line():
    read = ReadRecord("r9", "ACGTACGTAC", "IIIIIIIIII")
    rec = build_mapped_record(read, "chr1", 99, False, (("M", 10),), 60,
                              10, edit_distance=0)
    rec1, rec2 = finalize_pair(rec, build_unmapped_record(
        ReadRecord("r9", "TTTT", "IIII")), False)
    line = rec1.to_sam_line()
    fields = line.split("\t")
    assert fields[0] == "r9"
    assert int(fields[1]) & FLAG_PAIRED
    assert fields[2] == "chr1"
    assert fields[3] == "100"
    assert fields[5] == "10M"
    assert "AS:i:10" in fields and "NM:i:0" in fields
    sam_grammar_check(line)


def test_records_pass_grammar_check():
    # a spread of shapes: mapped, reverse, clipped, unmapped, paired
    read = ReadRecord("a", "ACGTACGTACGTACGT", "I" * 16)
    recs = [
        build_mapped_record(read, "chr1", 0, False,
                            (("S", 2), ("M", 12), ("S", 2)), 13, 12),
        build_mapped_record(read, "chr1", 500, True,
                            (("M", 10), ("D", 2), ("M", 6)), 60, 9),
        build_unmapped_record(read),
    ]
    recs += list(finalize_pair(recs[0], recs[2], False))
    for rec in recs:
        sam_grammar_check(rec.to_sam_line())
