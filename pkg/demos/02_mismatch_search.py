"""Phase 1: whole-read placement with few mismatches.

The bounded depth-first backward search enumerates every placement
within k substitutions; the brute-force Hamming oracle confirms it.
Exhausting the budget is the signal to defer a read to the fallback
path.
"""
import numpy as np

from lanealign import (SearchBudget, build_index, enumerate_hamming_oracle,
                       mismatch_search)

rng = np.random.default_rng(21)
reference = "".join("ACGT"[i] for i in rng.integers(0, 4, 30_000))
index = build_index({"chr1": reference})

# plant a read with two substitutions
read = list(reference[9000:9040])
read[10] = "ACGT"[("ACGT".find(read[10]) + 1) % 4]
read[25] = "ACGT"[("ACGT".find(read[25]) + 2) % 4]
read = "".join(read)

out = mismatch_search(index, read, SearchBudget(max_mismatches=2))
print("status:", out.status)
for hit in out.hits:
    print(f"  seq={hit.sequence_id} offset={hit.offset} "
          f"strand={'-' if hit.strand else '+'} mismatches={hit.mismatches}")

oracle = enumerate_hamming_oracle(reference, read, 2)
print("oracle agrees:",
      [(h.offset, h.strand, h.mismatches) for h in out.hits] ==
      [(h.offset, h.strand, h.mismatches) for h in oracle])

# a repetitive read blows the hit budget and must be deferred
polya_index = build_index({"polya": "A" * 2000})
out = mismatch_search(polya_index, "A" * 30, SearchBudget(max_hits=64))
print("\npoly-A read against poly-A reference:", out.status)
