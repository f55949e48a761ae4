"""
Local index and verification cascade
====================================

Builds a title index from a small DBLP-style XML dump and runs references
through the cascade with only the offline stages enabled: result cache,
then local index.
"""

from __future__ import annotations

import asyncio
import tempfile
from pathlib import Path

from refaudit import RawReference, ResultCache, build_index, query_by_title, run_batch
from refaudit.cascade import CascadePolicy, Dependencies, prepare

DUMP = """<?xml version="1.0" encoding="UTF-8"?>
<dblp>
<inproceedings key="conf/cvpr/HeZRS16"><author>Kaiming He</author><author>Xiangyu Zhang</author>
<title>Deep Residual Learning for Image Recognition.</title><year>2016</year><booktitle>CVPR</booktitle></inproceedings>
<inproceedings key="conf/nips/VaswaniSPUJGKP17"><author>Ashish Vaswani</author>
<title>Attention is All you Need.</title><year>2017</year><booktitle>NIPS</booktitle></inproceedings>
<article key="journals/corr/KingmaB14"><author>Diederik P. Kingma</author><author>Jimmy Ba</author>
<title>Adam: A Method for Stochastic Optimization.</title><year>2014</year><journal>CoRR</journal></article>
</dblp>
"""

work = Path(tempfile.mkdtemp())
(work / "dblp.xml").write_text(DUMP, encoding="utf-8")

# %%
# Building streams the dump into a SQLite file; queries rank records by
# normalized-title similarity.
index = build_index(work / "dblp.xml", work / "dblp.idx")
print(f"{index.record_count} records indexed")
for rec in query_by_title(index, "attention is all you need", k=2):
    print(" ", rec.title, rec.year)

# %%
# A batch of raw reference strings.  The second has a typo, the third cites
# a paper that does not exist.
lines = [
    "K. He, X. Zhang, S. Ren, and J. Sun. Deep residual learning for image recognition. In CVPR, 2016.",
    "D. P. Kingma and J. Ba. Adam: A method for stochastic optimisation. CoRR, 2014.",
    "A. Nobody. Quantum gradient folding for sparse transformers. In NeurIPS, 2023.",
]
items = [(raw, prepare(raw)) for raw in (RawReference(text, "demo", i) for i, text in enumerate(lines))]

cache = ResultCache(work / "cache.sqlite")
deps = Dependencies(cache=cache, index=index)
results = asyncio.run(run_batch(items, deps, CascadePolicy()))
for r in results:
    sim = f"{r.best_similarity:.3f}" if r.best_similarity is not None else "  -  "
    print(f"{r.status.value:8s} {sim} {r.diagnosing_strategy.value:10s} {r.reference.title}")

# %%
# Running again answers every reference from the cache.
again = asyncio.run(run_batch(items, deps, CascadePolicy()))
print(sorted({r.diagnosing_strategy.value for r in again}))
cache.close()
index.close()
