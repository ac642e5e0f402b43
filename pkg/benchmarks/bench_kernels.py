"""Compare the numba and pure-numpy retrievability kernels.

    python3 benchmarks/bench_kernels.py [--entities 3000] [--queries 20000] [--repeat 3]

Both paths are imported directly, so the SYNTHQ_DISABLE_NUMBA flag does not
matter here. The numba timings exclude the first (compiling) call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from synthq import _accel, kernels
from synthq.catalog import generate_synthetic_catalog, generate_synthetic_query_log
from synthq.qgen import generate_catalog_template
from synthq.retrieval import build_documents, build_index
from synthq.simulator import encode_queries


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entities", type=int, default=3000, help="split evenly across the three types")
    ap.add_argument("--queries", type=int, default=20000)
    ap.add_argument("--c", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    per = args.entities // 3
    catalog = generate_synthetic_catalog(args.seed, (per, per, per))
    log = generate_synthetic_query_log(catalog, args.seed, args.queries)
    records = {r.entity_id: r for r in generate_catalog_template(
        e for e in catalog.values() if e.entity_type.value == "audiobook")}
    index = build_index(build_documents(catalog.values(), records))
    q = encode_queries(index, log)
    common = (index.indptr, index.post_docs, index.post_tf, index.idf, index.norm, index.k1p1, *q, args.c, index.N)

    print(f"{index.N} documents, {len(index.terms)} terms, {len(log)} queries, c={args.c}")
    t_np, r_np = best_of(lambda: kernels.retrievability_counts_numpy(*common), args.repeat)
    print(f"numpy : {t_np:8.3f}s")
    if not _accel.HAVE_NUMBA:
        print("numba : not installed")
        return
    t0 = time.perf_counter()
    kernels.retrievability_counts_numba(*common)
    print(f"numba first call (includes compile or cache load): {time.perf_counter() - t0:.3f}s")
    t_nb, r_nb = best_of(lambda: kernels.retrievability_counts_numba(*common), args.repeat)
    print(f"numba : {t_nb:8.3f}s  speed-up x{t_np / t_nb:.1f}")
    print(f"identical r(e): {np.array_equal(r_np, r_nb)}")


if __name__ == "__main__":
    main()
