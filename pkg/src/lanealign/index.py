"""BWT/FM-index over a DNA reference, with backward search and locate.

The indexed text is every forward sequence followed by every reverse
complement, each segment terminated by a sentinel, so one backward search
covers both strands and no match can span a segment boundary.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import dna

FORWARD = 0
REVERSE = 1

MAGIC = b"MICL"
FORMAT_VERSION = 1
OCC_BLOCK = 128
DEFAULT_SAMPLING = 8

_NSYM = 5  # A C G T sentinel


class IndexFormatError(Exception):
    """File is not a readable index (bad magic or malformed section)."""


class IndexVersionError(IndexFormatError):
    """Index was written by an incompatible format version."""


class TruncatedIndexError(IndexFormatError):
    """Index file ends before the declared content."""


class IndexChecksumError(IndexFormatError):
    """Stored checksum does not match the file content."""


class ReferenceBuildError(ValueError):
    """Reference sequences cannot be indexed (empty, duplicate names...)."""


def suffix_array(codes: np.ndarray) -> np.ndarray:
    """Suffix array by numpy prefix doubling, O(n log n)."""
    n = codes.size
    rank = codes.astype(np.int64)
    sa = np.argsort(rank, kind="stable")
    tmp = np.empty(n, dtype=np.int64)
    k = 1
    while True:
        key2 = np.full(n, -1, dtype=np.int64)
        key2[: n - k] = rank[k:]
        sa = np.lexsort((key2, rank))
        r1 = rank[sa]
        r2 = key2[sa]
        changed = np.empty(n, dtype=np.int64)
        changed[0] = 0
        changed[1:] = (r1[1:] != r1[:-1]) | (r2[1:] != r2[:-1])
        ranks_sorted = np.cumsum(changed)
        tmp[sa] = ranks_sorted
        rank, tmp = tmp, rank
        if ranks_sorted[-1] == n - 1:
            return sa
        k <<= 1


@njit(cache=True, nogil=True)
def occ_count(bwt, checkpoints, p, sym):
    """Count of symbol sym in bwt[0:p) via block checkpoint plus scan."""
    blk = p >> 7
    c = np.int64(checkpoints[blk, sym])
    for i in range(blk << 7, p):
        if bwt[i] == sym:
            c += 1
    return c


@njit(cache=True, nogil=True)
def extend_range(bwt, checkpoints, counts, lo, hi, sym):
    """One backward-search step: prepend sym to the current pattern."""
    new_lo = counts[sym] + occ_count(bwt, checkpoints, lo, sym)
    new_hi = counts[sym] + occ_count(bwt, checkpoints, hi, sym)
    return new_lo, new_hi


@njit(cache=True, nogil=True)
def lf_map(bwt, checkpoints, counts, dollar_rows, dollar_targets, row):
    """Map a BWT row to the row of the text position one to the left.

    Rank arithmetic is exact for bases; rows preceded by a sentinel use
    precomputed targets, because identical sentinels do not keep the
    rank-to-block correspondence that LF relies on.
    """
    sym = bwt[row]
    if sym == 4:
        idx = np.searchsorted(dollar_rows, row)
        return dollar_targets[idx]
    return counts[sym] + occ_count(bwt, checkpoints, row, sym)


@njit(cache=True, nogil=True)
def locate_rows(bwt, checkpoints, counts, dollar_rows, dollar_targets,
                sa_samples, rate, row0, lo, hi, limit, out_pos):
    """Resolve text positions for rows [lo, hi), up to limit entries.

    Walks LF until a sampled row (or the row of text position 0) is hit;
    the walk length is added back to the sampled value.
    """
    n = 0
    for row in range(lo, hi):
        if n >= limit:
            break
        r = row
        steps = np.int64(0)
        while r % rate != 0 and r != row0:
            r = lf_map(bwt, checkpoints, counts, dollar_rows,
                       dollar_targets, r)
            steps += 1
        if r == row0:
            out_pos[n] = steps
        else:
            out_pos[n] = sa_samples[r // rate] + steps
        n += 1
    return n


@njit(cache=True, nogil=True)
def map_text_position(seg_starts, seg_seq, seg_rc, seq_lens, pos, length):
    """Translate a text position into (seq_id, genome offset, strand).

    Returns seq_id -1 when the match would overrun its segment, which
    cannot happen for sentinel-separated matches but is guarded anyway.
    """
    seg = np.searchsorted(seg_starts, pos, side="right") - 1
    off = pos - seg_starts[seg]
    seq_id = seg_seq[seg]
    if off + length > seq_lens[seq_id]:
        return -1, np.int64(0), 0
    if seg_rc[seg] == 0:
        return seq_id, off, FORWARD
    return seq_id, seq_lens[seq_id] - off - length, REVERSE


@dataclass(frozen=True)
class SARange:
    """Half-open interval of BWT rows covering one search pattern."""

    low: int
    high: int

    @property
    def width(self) -> int:
        return self.high - self.low

    @property
    def is_empty(self) -> bool:
        return self.high <= self.low


@dataclass
class ReferenceIndex:
    """Immutable FM-index over forward + reverse-complement strands."""

    bwt: np.ndarray                # uint8 codes, one per text symbol
    counts: np.ndarray             # int64[5]: symbols with smaller code
    occ_checkpoints: np.ndarray    # uint32[(text_len>>7)+1, 5]
    sa_samples: np.ndarray         # int64, SA value at every rate-th row
    sampling_rate: int
    row0: int                      # BWT row whose suffix starts at text pos 0
    dollar_rows: np.ndarray        # int64, sorted rows whose BWT char is $
    dollar_targets: np.ndarray     # int64, exact LF target per dollar row
    ref_packed: np.ndarray         # 2-bit packed forward reference
    seq_names: list[str]
    seq_lens: np.ndarray           # int64[nseq]
    seq_offsets: np.ndarray        # int64[nseq+1] into the forward codes
    seg_starts: np.ndarray         # int64[2*nseq], text start per segment
    seg_seq: np.ndarray            # int32[2*nseq]
    seg_rc: np.ndarray             # uint8[2*nseq]
    meta: dict = field(default_factory=dict)
    _ref_codes: np.ndarray | None = None

    # -- queries ------------------------------------------------------------

    @property
    def text_length(self) -> int:
        return int(self.bwt.size)

    @property
    def genome_length(self) -> int:
        """Total indexed bases, both strands, excluding sentinels."""
        return 2 * int(self.seq_lens.sum())

    def full_range(self) -> SARange:
        return SARange(0, self.text_length)

    def backward_extend(self, rng: SARange, base: str) -> SARange:
        """Narrow rng to rows whose suffix starts with base + pattern."""
        sym = _base_code(base)
        lo, hi = extend_range(self.bwt, self.occ_checkpoints, self.counts,
                              rng.low, rng.high, sym)
        return SARange(int(lo), int(hi))

    def pattern_range(self, pattern: str) -> SARange:
        rng = self.full_range()
        for ch in reversed(pattern):
            rng = self.backward_extend(rng, ch)
            if rng.is_empty:
                return SARange(rng.low, rng.low)
        return rng

    def count_occurrences(self, pattern: str) -> int:
        """Exact occurrences of pattern in the indexed text (both strands)."""
        if not pattern:
            raise ValueError("pattern must be non-empty")
        return self.pattern_range(pattern).width

    def locate(self, rng: SARange, limit: int,
               pattern_length: int = 0) -> list[tuple[str, int, int]]:
        """Map up to limit rows of rng to (sequence name, offset, strand).

        pattern_length is needed to express reverse-strand offsets in
        forward genome coordinates; 0 treats hits as point positions.
        """
        if rng.is_empty or limit <= 0:
            return []
        take = min(rng.width, limit)
        out_pos = np.empty(take, dtype=np.int64)
        n = locate_rows(self.bwt, self.occ_checkpoints, self.counts,
                        self.dollar_rows, self.dollar_targets,
                        self.sa_samples, self.sampling_rate, self.row0,
                        rng.low, rng.high, take, out_pos)
        results = []
        for p in out_pos[:n]:
            seq_id, off, strand = map_text_position(
                self.seg_starts, self.seg_seq, self.seg_rc, self.seq_lens,
                p, pattern_length)
            if seq_id >= 0:
                results.append((self.seq_names[seq_id], int(off), int(strand)))
        return results

    def lf(self, row: int) -> int:
        """One LF-mapping step (used by the reconstruction invariant)."""
        return int(lf_map(self.bwt, self.occ_checkpoints, self.counts,
                          self.dollar_rows, self.dollar_targets, row))

    # -- forward reference access -------------------------------------------

    @property
    def ref_codes(self) -> np.ndarray:
        """Concatenated forward reference as uint8 codes (lazily unpacked)."""
        if self._ref_codes is None:
            total = int(self.seq_offsets[-1])
            self._ref_codes = dna.unpack_2bit(self.ref_packed, total)
        return self._ref_codes

    def sequence(self, name_or_id: str | int) -> str:
        sid = (self.seq_names.index(name_or_id)
               if isinstance(name_or_id, str) else name_or_id)
        lo, hi = int(self.seq_offsets[sid]), int(self.seq_offsets[sid + 1])
        return dna.decode(self.ref_codes[lo:hi])


def _base_code(base: str) -> int:
    code = dna.BASES.find(base.upper()) if len(base) == 1 else -1
    if code < 0:
        raise ValueError(f"not an A/C/G/T base: {base!r}")
    return code


def build_index(reference: dict[str, str],
                sampling_rate: int = DEFAULT_SAMPLING,
                ambiguity_seed: int = 0) -> ReferenceIndex:
    """Build the FM-index for named reference sequences.

    Ambiguity codes are replaced by seed-deterministic pseudo-random bases;
    the replacement positions are recorded in meta.
    """
    if sampling_rate < 1:
        raise ReferenceBuildError("sampling_rate must be >= 1")
    if not reference:
        raise ReferenceBuildError("reference contains no sequences")
    names = list(reference.keys())
    if len(set(names)) != len(names):
        raise ReferenceBuildError("duplicate sequence name in reference")

    rng = np.random.default_rng(ambiguity_seed)
    seq_codes: list[np.ndarray] = []
    replaced: dict[str, list[int]] = {}
    for name in names:
        seq = reference[name]
        if not seq:
            raise ReferenceBuildError(f"sequence {name!r} is empty")
        codes = dna.encode(seq)
        ambig = np.flatnonzero(codes > 3)
        if ambig.size:
            codes = codes.copy()
            codes[ambig] = rng.integers(0, 4, ambig.size, dtype=np.uint8)
            replaced[name] = [int(i) for i in ambig]
        seq_codes.append(codes)

    seq_lens = np.array([c.size for c in seq_codes], dtype=np.int64)
    seq_offsets = np.zeros(len(names) + 1, dtype=np.int64)
    seq_offsets[1:] = np.cumsum(seq_lens)
    ref_codes = np.concatenate(seq_codes)

    # text: every forward segment then every reverse-complement segment,
    # each followed by a sentinel
    nseq = len(names)
    parts: list[np.ndarray] = []
    seg_starts = np.empty(2 * nseq, dtype=np.int64)
    seg_seq = np.empty(2 * nseq, dtype=np.int32)
    seg_rc = np.empty(2 * nseq, dtype=np.uint8)
    sent = np.array([dna.SENTINEL], dtype=np.uint8)
    pos = 0
    for i, codes in enumerate(seq_codes):
        seg_starts[i], seg_seq[i], seg_rc[i] = pos, i, 0
        parts.extend((codes, sent))
        pos += codes.size + 1
    for i, codes in enumerate(seq_codes):
        j = nseq + i
        seg_starts[j], seg_seq[j], seg_rc[j] = pos, i, 1
        parts.extend((dna.revcomp_codes(codes), sent))
        pos += codes.size + 1
    text = np.concatenate(parts)

    sa = suffix_array(text)
    n = text.size
    bwt = text[(sa - 1) % n]
    inverse_sa = np.empty(n, dtype=np.int64)
    inverse_sa[sa] = np.arange(n)
    row0 = int(inverse_sa[0])

    # exact LF targets for the rows preceded by a sentinel (rank-based LF
    # is ambiguous when sentinels share one symbol)
    sentinel_positions = np.flatnonzero(text == dna.SENTINEL)
    dollar_rows = inverse_sa[(sentinel_positions + 1) % n]
    dollar_targets = inverse_sa[sentinel_positions]
    order = np.argsort(dollar_rows)
    dollar_rows = dollar_rows[order]
    dollar_targets = dollar_targets[order]

    counts = np.zeros(_NSYM, dtype=np.int64)
    sym_totals = np.bincount(text, minlength=_NSYM)
    counts[1:] = np.cumsum(sym_totals)[:-1]

    nblk = (n >> 7) + 1
    checkpoints = np.zeros((nblk, _NSYM), dtype=np.uint32)
    for sym in range(_NSYM):
        cum = np.cumsum(bwt == sym)
        checkpoints[1:, sym] = cum[OCC_BLOCK - 1::OCC_BLOCK][: nblk - 1]

    sa_samples = sa[::sampling_rate].astype(np.int64)

    meta = {
        "format_version": FORMAT_VERSION,
        "sequence_names": names,
        "sequence_lengths": [int(x) for x in seq_lens],
        "sampling_rate": int(sampling_rate),
        "occ_block": OCC_BLOCK,
        "ambiguity_seed": int(ambiguity_seed),
        "ambiguity_replacements": replaced,
        "ambiguity_replaced_total": sum(len(v) for v in replaced.values()),
        "row0": row0,
        "dollar_rows": [int(x) for x in dollar_rows],
        "dollar_targets": [int(x) for x in dollar_targets],
    }
    return ReferenceIndex(
        bwt=bwt, counts=counts, occ_checkpoints=checkpoints,
        sa_samples=sa_samples, sampling_rate=int(sampling_rate), row0=row0,
        dollar_rows=dollar_rows, dollar_targets=dollar_targets,
        ref_packed=dna.pack_2bit(ref_codes), seq_names=names,
        seq_lens=seq_lens, seq_offsets=seq_offsets, seg_starts=seg_starts,
        seg_seq=seg_seq, seg_rc=seg_rc, meta=meta, _ref_codes=ref_codes)


# -- serialization ----------------------------------------------------------
# little-endian; header: magic, u32 version, u32 sampling rate, u32 occ
# block, u64 ambiguity seed; then (u32 section id, u64 length, payload)
# sections; trailing 8-byte checksum over everything before it.

_SEC_BWT = 1
_SEC_COUNTS = 2
_SEC_OCC = 3
_SEC_SA = 4
_SEC_REF = 5
_SEC_META = 6

_HEADER = struct.Struct("<4sIIIQ")
_SECHDR = struct.Struct("<IQ")


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def save_index(index: ReferenceIndex, path) -> None:
    """Write the index in the binary format (see module docstring)."""
    sections = [
        (_SEC_BWT, index.bwt.tobytes()),
        (_SEC_COUNTS, index.counts.astype("<i8").tobytes()),
        (_SEC_OCC, index.occ_checkpoints.astype("<u4").tobytes()),
        (_SEC_SA, index.sa_samples.astype("<i8").tobytes()),
        (_SEC_REF, index.ref_packed.tobytes()),
        (_SEC_META, json.dumps(index.meta, sort_keys=True).encode()),
    ]
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, FORMAT_VERSION, index.sampling_rate,
                         OCC_BLOCK, index.meta.get("ambiguity_seed", 0))
    for sec_id, payload in sections:
        blob += _SECHDR.pack(sec_id, len(payload))
        blob += payload
    blob += _checksum(bytes(blob))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_index(path) -> ReferenceIndex:
    """Read an index file; raises a distinct error per failure mode."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size + 8:
        raise TruncatedIndexError(f"{path}: file too short to be an index")
    magic, version, sampling_rate, occ_block, _seed = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IndexFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise IndexVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if _checksum(blob[:-8]) != blob[-8:]:
        raise IndexChecksumError(f"{path}: checksum mismatch")

    sections: dict[int, bytes] = {}
    off = _HEADER.size
    end = len(blob) - 8
    while off < end:
        if off + _SECHDR.size > end:
            raise TruncatedIndexError(f"{path}: section header cut off")
        sec_id, length = _SECHDR.unpack_from(blob, off)
        off += _SECHDR.size
        if off + length > end:
            raise TruncatedIndexError(f"{path}: section {sec_id} cut off")
        sections[sec_id] = blob[off:off + length]
        off += length
    for required in (_SEC_BWT, _SEC_COUNTS, _SEC_OCC, _SEC_SA, _SEC_REF,
                     _SEC_META):
        if required not in sections:
            raise IndexFormatError(f"{path}: missing section {required}")

    meta = json.loads(sections[_SEC_META])
    names = meta["sequence_names"]
    seq_lens = np.array(meta["sequence_lengths"], dtype=np.int64)
    seq_offsets = np.zeros(len(names) + 1, dtype=np.int64)
    seq_offsets[1:] = np.cumsum(seq_lens)

    nseq = len(names)
    seg_starts = np.empty(2 * nseq, dtype=np.int64)
    seg_seq = np.empty(2 * nseq, dtype=np.int32)
    seg_rc = np.empty(2 * nseq, dtype=np.uint8)
    pos = 0
    for rc in (0, 1):
        for i in range(nseq):
            j = rc * nseq + i
            seg_starts[j], seg_seq[j], seg_rc[j] = pos, i, rc
            pos += int(seq_lens[i]) + 1

    bwt = np.frombuffer(sections[_SEC_BWT], dtype=np.uint8)
    occ = np.frombuffer(sections[_SEC_OCC], dtype="<u4").reshape(-1, _NSYM)
    return ReferenceIndex(
        bwt=bwt.copy(),
        counts=np.frombuffer(sections[_SEC_COUNTS], dtype="<i8").astype(np.int64),
        occ_checkpoints=occ.astype(np.uint32),
        sa_samples=np.frombuffer(sections[_SEC_SA], dtype="<i8").astype(np.int64),
        sampling_rate=int(sampling_rate), row0=int(meta["row0"]),
        dollar_rows=np.array(meta["dollar_rows"], dtype=np.int64),
        dollar_targets=np.array(meta["dollar_targets"], dtype=np.int64),
        ref_packed=np.frombuffer(sections[_SEC_REF], dtype=np.uint8).copy(),
        seq_names=list(names), seq_lens=seq_lens, seq_offsets=seq_offsets,
        seg_starts=seg_starts, seg_seq=seg_seq, seg_rc=seg_rc, meta=meta)
