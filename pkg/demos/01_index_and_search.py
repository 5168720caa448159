"""Build an FM-index over a small reference and query it.

The index covers the forward strand and its reverse complement, so one
backward search answers both orientations.
"""
import tempfile
from pathlib import Path

import numpy as np

from lanealign import build_index, load_index, save_index

rng = np.random.default_rng(7)
reference = "".join("ACGT"[i] for i in rng.integers(0, 4, 5000))

index = build_index({"chr1": reference}, sampling_rate=8)
print("indexed", index.genome_length, "bases (both strands),",
      "text length", index.text_length)

pattern = reference[1200:1215]
print(f"\npattern {pattern!r}")
print("occurrences (both strands):", index.count_occurrences(pattern))

sar = index.pattern_range(pattern)
for name, offset, strand in index.locate(sar, limit=10,
                                         pattern_length=len(pattern)):
    print(f"  {name}:{offset} strand={'-' if strand else '+'}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.idx"
    save_index(index, path)
    loaded = load_index(path)
    print("\nroundtrip:", path.stat().st_size, "bytes,",
          "counts agree:",
          loaded.count_occurrences(pattern) ==
          index.count_occurrences(pattern))
