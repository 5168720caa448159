"""FASTA/FASTQ input: single files, paired files, gzip, strict or lenient."""
from __future__ import annotations

import gzip
import io
from dataclasses import dataclass, field
from pathlib import Path

MATE_NONE = 0
MATE_FIRST = 1
MATE_SECOND = 2

_PAIR_SUFFIXES = ("/1", "/2")


class FastxParseError(ValueError):
    """Malformed record; carries the 1-based line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class PairingError(ValueError):
    """Paired files disagree (name mismatch or unequal record counts)."""


@dataclass
class ReadRecord:
    """One sequencing read."""

    name: str
    bases: str
    qualities: str | None = None
    ordinal: int = -1
    mate_side: int = MATE_NONE

    def __post_init__(self):
        if not self.name or not self.bases:
            raise ValueError("read name and bases must be non-empty")
        if self.qualities is not None and len(self.qualities) != len(self.bases):
            raise ValueError(
                f"read {self.name}: quality length {len(self.qualities)} "
                f"!= base length {len(self.bases)}")

    def __len__(self) -> int:
        return len(self.bases)


@dataclass
class ReadPair:
    """Two mated reads sharing a template name."""

    first: ReadRecord
    second: ReadRecord

    @property
    def name(self) -> str:
        return self.first.name


def _open_text(path):
    fh = open(path, "rb")
    magic = fh.read(2)
    fh.seek(0)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.GzipFile(fileobj=fh), encoding="ascii")
    return io.TextIOWrapper(fh, encoding="ascii")


def strip_mate_suffix(name: str) -> str:
    for suffix in _PAIR_SUFFIXES:
        if name.endswith(suffix):
            return name[:-2]
    return name


def _clean_name(raw: str) -> str:
    return strip_mate_suffix(raw.split(None, 1)[0]) if raw else ""


class _RawReader:
    """Yields (name, bases, qualities, line_no) tuples from one file."""

    def __init__(self, path, format_hint: str | None, strict: bool):
        self.path = path
        self.strict = strict
        self.skipped = 0
        self._fh = _open_text(path)
        self._line_no = 0
        self._pushback: tuple[str, int] | None = None
        first = self._peek()
        if format_hint:
            self.format = format_hint.lower()
        elif first is None:
            self.format = "fastq"
        elif first.startswith(">"):
            self.format = "fasta"
        elif first.startswith("@"):
            self.format = "fastq"
        else:
            raise FastxParseError(path, 1, "cannot sniff format "
                                  "(expected '>' or '@' on the first line)")

    def _next_line(self) -> str | None:
        if self._pushback is not None:
            line, no = self._pushback
            self._pushback = None
            self._line_no = no
            return line
        line = self._fh.readline()
        if not line:
            return None
        self._line_no += 1
        return line.rstrip("\r\n")

    def _peek(self) -> str | None:
        line = self._next_line()
        if line is not None:
            self._pushback = (line, self._line_no)
        return line

    def _fail(self, message: str):
        """Raise in strict mode; count the skip in lenient mode."""
        if self.strict:
            raise FastxParseError(self.path, self._line_no or 1, message)
        self.skipped += 1

    def __iter__(self):
        """Yields one tuple per record frame; None marks a lenient skip."""
        if self.format == "fasta":
            yield from self._iter_fasta()
        else:
            yield from self._iter_fastq()
        self._fh.close()

    def _iter_fasta(self):
        name = None
        chunks: list[str] = []
        header_line = 0
        started = False
        while True:
            line = self._next_line()
            if line is None or line.startswith(">"):
                if started:
                    if name and chunks:
                        yield name, "".join(chunks), None, header_line
                    else:
                        self._fail("FASTA record has no sequence lines"
                                   if name else "empty FASTA header")
                        yield None
                if line is None:
                    return
                name = _clean_name(line[1:])
                header_line = self._line_no
                chunks = []
                started = True
            elif line:
                if not started:
                    self._fail("sequence data before any FASTA header")
                    yield None
                else:
                    chunks.append(line.strip())

    def _iter_fastq(self):
        while True:
            header = self._next_line()
            if header is None:
                return
            if not header:
                continue
            line_no = self._line_no
            bases = self._next_line()
            plus = self._next_line()
            quals = self._next_line()
            if bases is None or plus is None or quals is None:
                self._fail("truncated FASTQ record")
                yield None
                return
            if not header.startswith("@"):
                self._fail("FASTQ header must start with '@'")
                yield None
                continue
            if not plus.startswith("+"):
                self._fail("FASTQ separator must start with '+'")
                yield None
                continue
            name = _clean_name(header[1:])
            if not name or not bases:
                self._fail("empty FASTQ name or sequence")
                yield None
                continue
            if len(quals) != len(bases):
                self._fail("quality length differs from sequence length")
                yield None
                continue
            yield name, bases, quals, line_no


@dataclass
class ReadStream:
    """Iterable of ReadRecord or ReadPair with monotone ordinals.

    Two paths mean paired input (interleaved record-by-record); the
    skipped counter reflects records dropped in lenient mode.
    """

    paths: list
    format_hint: str | None = None
    strict: bool = True
    paired: bool | None = None
    skipped: int = field(default=0, init=False)

    def __post_init__(self):
        self.paths = [Path(p) for p in self.paths]
        if self.paired is None:
            self.paired = len(self.paths) == 2
        if self.paired and len(self.paths) != 2:
            raise PairingError("paired mode requires exactly 2 read files")
        for p in self.paths:
            if not p.exists():
                raise FileNotFoundError(p)

    def __iter__(self):
        if self.paired:
            yield from self._iter_pairs()
        else:
            yield from self._iter_singles()

    def _iter_singles(self):
        ordinal = 0
        for path in self.paths:
            reader = _RawReader(path, self.format_hint, self.strict)
            for rec in reader:
                if rec is None:
                    continue
                name, bases, quals, _ln = rec
                yield ReadRecord(name, bases, quals, ordinal, MATE_NONE)
                ordinal += 1
            self.skipped += reader.skipped

    def _iter_pairs(self):
        r1 = _RawReader(self.paths[0], self.format_hint, self.strict)
        r2 = _RawReader(self.paths[1], self.format_hint, self.strict)
        it1, it2 = iter(r1), iter(r2)
        ordinal = 0
        record_no = 0
        exhausted = object()
        while True:
            a = next(it1, exhausted)
            b = next(it2, exhausted)
            if a is exhausted and b is exhausted:
                break
            if a is exhausted or b is exhausted:
                raise PairingError(
                    f"{self.paths[0]} and {self.paths[1]} have unequal "
                    "record counts")
            record_no += 1
            if a is None or b is None:
                # one side malformed in lenient mode: drop the whole pair
                if a is not None or b is not None:
                    self.skipped += 1
                continue
            if a[0] != b[0]:
                raise PairingError(
                    f"pair name mismatch at record {record_no}: "
                    f"{a[0]!r} vs {b[0]!r}")
            yield ReadPair(
                ReadRecord(a[0], a[1], a[2], ordinal, MATE_FIRST),
                ReadRecord(b[0], b[1], b[2], ordinal + 1, MATE_SECOND))
            ordinal += 2
        self.skipped += r1.skipped + r2.skipped


def parse_reads(paths, format_hint: str | None = None, strict: bool = True,
                paired: bool | None = None) -> ReadStream:
    """Stream reads from one or more FASTA/FASTQ files (gzip sniffed).

    One path yields ReadRecords; two paths yield ReadPairs unless paired
    is explicitly False.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    return ReadStream(list(paths), format_hint, strict, paired)


def read_reference(path) -> dict[str, str]:
    """Load a reference FASTA into an ordered name -> sequence mapping."""
    reader = _RawReader(Path(path), "fasta", strict=True)
    out: dict[str, str] = {}
    for name, bases, _quals, line_no in reader:
        if name in out:
            raise FastxParseError(path, line_no,
                                  f"duplicate sequence name {name!r}")
        out[name] = bases.upper()
    return out
