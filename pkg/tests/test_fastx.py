from __future__ import annotations

import gzip

import pytest

from lanealign.fastx import (FastxParseError, PairingError, ReadPair,
                             ReadRecord, parse_reads, read_reference)


def test_minimal_fastq_record(tmp_path):
    path = tmp_path / "r.fq"
    path.write_text("@r1\nACGT\n+\nIIII\n")
    reads = list(parse_reads([path]))
    assert len(reads) == 1
    rec = reads[0]
    assert (rec.name, rec.bases, rec.qualities, rec.ordinal) == \
        ("r1", "ACGT", "IIII", 0)


def test_fasta_line_folding(tmp_path):
    path = tmp_path / "r.fa"
    path.write_text(">seq1 description here\nACGT\nACGTA\nCG\n")
    reads = list(parse_reads([path]))
    assert reads[0].name == "seq1"
    assert reads[0].bases == "ACGTACGTACG"
    assert reads[0].qualities is None


def test_crlf_endings(tmp_path):
    path = tmp_path / "r.fq"
    path.write_bytes(b"@r1\r\nACGT\r\n+\r\nIIII\r\n")
    rec = list(parse_reads([path]))[0]
    assert rec.bases == "ACGT" and rec.qualities == "IIII"


def test_final_record_without_newline(tmp_path):
    path = tmp_path / "r.fq"
    path.write_text("@r1\nACGT\n+\nIIII\n@r2\nTTTT\n+\nJJJJ")
    reads = list(parse_reads([path]))
    assert [r.name for r in reads] == ["r1", "r2"]
    assert reads[1].qualities == "JJJJ"


def test_fasta_final_record_without_newline(tmp_path):
    path = tmp_path / "r.fa"
    path.write_text(">a\nACGT\n>b\nTTTT")
    reads = list(parse_reads([path]))
    assert [(r.name, r.bases) for r in reads] == [("a", "ACGT"),
                                                  ("b", "TTTT")]


def test_gzip_sniffing(tmp_path):
    path = tmp_path / "r.fq.gz"
    with gzip.open(path, "wt") as fh:
        fh.write("@r1\nACGTACGT\n+\nIIIIIIII\n")
    rec = list(parse_reads([path]))[0]
    assert rec.bases == "ACGTACGT"


def test_empty_quality_header_comment(tmp_path):
    # '+' line may repeat the name; it is ignored either way
    path = tmp_path / "r.fq"
    path.write_text("@r1 extra comment\nACGT\n+r1 extra comment\nIIII\n")
    rec = list(parse_reads([path]))[0]
    assert rec.name == "r1"


def test_paired_suffix_stripping(tmp_path):
    p1, p2 = tmp_path / "1.fq", tmp_path / "2.fq"
    p1.write_text("@x/1\nACGT\n+\nIIII\n")
    p2.write_text("@x/2\nTTTT\n+\nJJJJ\n")
    pairs = list(parse_reads([p1, p2]))
    assert len(pairs) == 1
    pair = pairs[0]
    assert isinstance(pair, ReadPair)
    assert pair.name == "x"
    assert pair.first.ordinal == 0 and pair.second.ordinal == 1
    assert pair.first.mate_side == 1 and pair.second.mate_side == 2


def test_paired_name_mismatch(tmp_path):
    p1, p2 = tmp_path / "1.fq", tmp_path / "2.fq"
    p1.write_text("@x/1\nACGT\n+\nIIII\n")
    p2.write_text("@y/2\nTTTT\n+\nJJJJ\n")
    with pytest.raises(PairingError):
        list(parse_reads([p1, p2]))


def test_paired_unequal_counts(tmp_path):
    p1, p2 = tmp_path / "1.fq", tmp_path / "2.fq"
    p1.write_text("@x/1\nACGT\n+\nIIII\n@z/1\nGGGG\n+\nIIII\n")
    p2.write_text("@x/2\nTTTT\n+\nJJJJ\n")
    with pytest.raises(PairingError):
        list(parse_reads([p1, p2]))


def test_strict_mode_raises_with_line_number(tmp_path):
    path = tmp_path / "r.fq"
    path.write_text("@r1\nACGT\n+\nII\n")  # short quality
    with pytest.raises(FastxParseError) as err:
        list(parse_reads([path]))
    assert err.value.line_no == 4  # detected at the quality line
    assert str(path) in str(err.value)


def test_lenient_mode_skips_and_counts(tmp_path):
    path = tmp_path / "r.fq"
    path.write_text("@r1\nACGT\n+\nII\n@r2\nTTTT\n+\nJJJJ\n")
    stream = parse_reads([path], strict=False)
    reads = list(stream)
    assert [r.name for r in reads] == ["r2"]
    assert stream.skipped == 1
    assert reads[0].ordinal == 0


def test_lenient_paired_drops_whole_pair(tmp_path):
    p1, p2 = tmp_path / "1.fq", tmp_path / "2.fq"
    p1.write_text("@x/1\nACGT\n+\nII\n@y/1\nGGGG\n+\nIIII\n")
    p2.write_text("@x/2\nTTTT\n+\nJJJJ\n@y/2\nCCCC\n+\nJJJJ\n")
    stream = parse_reads([p1, p2], strict=False)
    pairs = list(stream)
    assert [p.name for p in pairs] == ["y"]
    assert stream.skipped == 2  # the bad record plus its healthy mate


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_reads(["/nonexistent/reads.fq"])


def test_bad_first_line(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("not a fastx file\n")
    with pytest.raises(FastxParseError):
        list(parse_reads([path]))


def test_multiple_single_files_concatenate(tmp_path):
    p1, p2 = tmp_path / "a.fq", tmp_path / "b.fq"
    p1.write_text("@a\nACGT\n+\nIIII\n")
    p2.write_text("@b\nTTTT\n+\nJJJJ\n")
    reads = list(parse_reads([p1, p2], paired=False))
    assert [(r.name, r.ordinal) for r in reads] == [("a", 0), ("b", 1)]


def test_read_record_validation():
    with pytest.raises(ValueError):
        ReadRecord("", "ACGT")
    with pytest.raises(ValueError):
        ReadRecord("x", "ACGT", "II")


def test_read_reference_roundtrip(tmp_path):
    path = tmp_path / "ref.fa"
    path.write_text(">chr1\nacgt\nACGT\n>chr2\nTTTT\n")
    ref = read_reference(path)
    assert ref == {"chr1": "ACGTACGT", "chr2": "TTTT"}


def test_read_reference_duplicate_name(tmp_path):
    path = tmp_path / "ref.fa"
    path.write_text(">a\nACGT\n>a\nTTTT\n")
    with pytest.raises(FastxParseError):
        read_reference(path)
