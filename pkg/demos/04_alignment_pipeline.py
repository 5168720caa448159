"""End to end: simulate paired reads, align them, inspect the report.

The pipeline batches reads, fans them across a worker pool in 64-read
chunks, re-aligns budget-exceeded reads on the controller, resolves
pairs against the insert-size window and writes deterministic SAM.
"""
import io

import numpy as np

from lanealign import (InsertModel, PipelineConfig, build_index,
                       run_pipeline)
from lanealign.dna import revcomp
from lanealign.fastx import ReadPair, ReadRecord

rng = np.random.default_rng(42)
L = 200_000
reference = "".join("ACGT"[i] for i in rng.integers(0, 4, L))
index = build_index({"chr1": reference})


def mutate(seq):
    out = list(seq)
    for i in range(len(out)):
        if rng.random() < 0.01:
            out[i] = "ACGT"[("ACGT".find(out[i]) + 1) % 4]
    return "".join(out)


pairs = []
for p in range(2000):
    insert = max(220, int(rng.normal(400, 50)))
    start = int(rng.integers(0, L - insert))
    frag = reference[start:start + insert]
    pairs.append(ReadPair(
        ReadRecord(f"frag{p}", mutate(frag[:100]), "I" * 100, 2 * p, 1),
        ReadRecord(f"frag{p}", mutate(revcomp(frag[-100:])), "I" * 100,
                   2 * p + 1, 2)))

config = PipelineConfig(batch_size=500, workers_per_group=2,
                        insert_model=InsertModel(250, 550),
                        command_line="demo 04")
sink = io.StringIO()
report = run_pipeline(iter(pairs), index, config, sink)

print(report.to_text())
print("first SAM lines:")
for line in sink.getvalue().splitlines()[:8]:
    print(" ", line[:110])
