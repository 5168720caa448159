"""lanealign: a portable short-read DNA aligner.

Phase 1 finds whole-read placements with few mismatches by backward
search on a BWT index covering both strands; phase 2 refines candidates
with a lane-parallel anti-diagonal affine-gap DP over packed 32-bit
cells. A batch pipeline feeds worker groups and re-aligns any read whose
search exceeded its budget on the controller path.
"""

from .align import (AlignmentResult, ScoringScheme, diagonal_affine_dp,
                    extract_window, pack_cell, scalar_affine_dp, unpack_cell)
from .fastx import ReadPair, ReadRecord, parse_reads, read_reference
from .index import (ReferenceIndex, SARange, build_index, load_index,
                    save_index)
from .pipeline import (Batch, BatchResult, PipelineConfig, PipelineReport,
                       dispatch_batch, fallback_align, run_pipeline)
from .sam import (AlignmentRecord, InsertModel, SamHeader, mapq_estimate,
                  resolve_pair, write_sam)
from .search import (SearchBudget, SearchOutcome, SeedHit,
                     enumerate_hamming_oracle, mismatch_search)

__version__ = "0.1.0"

__all__ = [
    "AlignmentRecord", "AlignmentResult", "Batch", "BatchResult",
    "InsertModel", "PipelineConfig", "PipelineReport", "ReadPair",
    "ReadRecord", "ReferenceIndex", "SARange", "SamHeader", "ScoringScheme",
    "SearchBudget", "SearchOutcome", "SeedHit", "build_index",
    "diagonal_affine_dp", "dispatch_batch", "enumerate_hamming_oracle",
    "extract_window", "fallback_align", "load_index", "mapq_estimate",
    "mismatch_search", "pack_cell", "parse_reads", "read_reference",
    "resolve_pair", "run_pipeline", "save_index", "scalar_affine_dp",
    "unpack_cell", "write_sam",
]
