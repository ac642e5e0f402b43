"""BM25 scoring and rank-cutoff kernels over CSR postings.

Every kernel exists twice: a compiled loop (``*_numba``) and a vectorized
numpy version (``*_numpy``). The public names point at one or the other
depending on :mod:`synthq._accel`. Both evaluate the per-posting term weight
as ``idf * (tf * (k1 + 1)) / (tf + norm)`` in query-token order, so their
scores agree bit for bit.

Postings layout: term ``t`` owns ``post_docs[indptr[t]:indptr[t + 1]]`` with
matching ``post_tf``; ``norm[d] = k1 * (1 - b + b * len(d) / avgdl)``.
Documents are numbered in ascending doc-id order, which makes "lower index
wins" the doc-id tie-break.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "accumulate_scores",
    "top_c",
    "retrievability_counts",
    "USE_NUMBA",
]


# --- numpy -----------------------------------------------------------------

def accumulate_scores_numpy(indptr, post_docs, post_tf, idf, norm, k1p1, term_ids, out):
    out[:] = 0.0
    for t in term_ids:
        lo, hi = indptr[t], indptr[t + 1]
        docs = post_docs[lo:hi]
        tf = post_tf[lo:hi].astype(np.float64)
        # docs are unique within one postings list, so fancy-index += is safe
        out[docs] += idf[t] * (tf * k1p1) / (tf + norm[docs])
    return out


def top_c_numpy(scores, c):
    idx = np.flatnonzero(scores > 0.0)
    order = np.lexsort((idx, -scores[idx]))
    return idx[order[:c]]


def retrievability_counts_numpy(indptr, post_docs, post_tf, idf, norm, k1p1,
                                q_ptr, q_terms, q_weight, c, n_docs):
    r = np.zeros(n_docs, dtype=np.float64)
    scores = np.zeros(n_docs, dtype=np.float64)
    for q in range(len(q_ptr) - 1):
        terms = q_terms[q_ptr[q]:q_ptr[q + 1]]
        if len(terms) == 0:
            continue
        accumulate_scores_numpy(indptr, post_docs, post_tf, idf, norm, k1p1, terms, scores)
        r[top_c_numpy(scores, c)] += q_weight[q]
    return r


# --- numba -----------------------------------------------------------------

@njit
def accumulate_scores_numba(indptr, post_docs, post_tf, idf, norm, k1p1, term_ids, out):
    out[:] = 0.0
    for i in range(term_ids.shape[0]):
        t = term_ids[i]
        w = idf[t]
        for j in range(indptr[t], indptr[t + 1]):
            d = post_docs[j]
            tf = np.float64(post_tf[j])
            out[d] += w * (tf * k1p1) / (tf + norm[d])
    return out


@njit
def _rank_touched(scores, touched, c):
    touched = np.sort(touched)
    # stable sort keeps ascending doc index within equal scores
    order = np.argsort(-scores[touched], kind="mergesort")
    return touched[order[:c]]


@njit
def top_c_numba(scores, c):
    touched = np.flatnonzero(scores > 0.0)
    return _rank_touched(scores, touched, c)


@njit
def _credit_top_set(scores, hits, c, weight, r):
    # r only needs the top-c set, not its order: select around the c-th score
    vals = scores[hits]
    n = vals.shape[0]
    thr = np.partition(vals, n - c)[n - c]
    taken = 0
    ties = np.empty(n, dtype=np.int64)
    n_ties = 0
    for i in range(n):
        if vals[i] > thr:
            r[hits[i]] += weight
            taken += 1
        elif vals[i] == thr:
            ties[n_ties] = hits[i]
            n_ties += 1
    ties = np.sort(ties[:n_ties])
    for i in range(c - taken):
        r[ties[i]] += weight


@njit
def retrievability_counts_numba(indptr, post_docs, post_tf, idf, norm, k1p1,
                                q_ptr, q_terms, q_weight, c, n_docs):
    r = np.zeros(n_docs, dtype=np.float64)
    scores = np.zeros(n_docs, dtype=np.float64)
    touched = np.empty(n_docs, dtype=np.int64)
    for q in range(q_ptr.shape[0] - 1):
        n_touched = 0
        for i in range(q_ptr[q], q_ptr[q + 1]):
            t = q_terms[i]
            w = idf[t]
            for j in range(indptr[t], indptr[t + 1]):
                d = post_docs[j]
                if scores[d] == 0.0:
                    touched[n_touched] = d
                    n_touched += 1
                tf = np.float64(post_tf[j])
                scores[d] += w * (tf * k1p1) / (tf + norm[d])
        if n_touched == 0:
            continue
        hits = touched[:n_touched]
        if n_touched <= c:
            for i in range(n_touched):
                r[hits[i]] += q_weight[q]
        else:
            _credit_top_set(scores, hits, c, q_weight[q], r)
        for i in range(n_touched):
            scores[hits[i]] = 0.0
    return r


if USE_NUMBA:
    accumulate_scores = accumulate_scores_numba
    top_c = top_c_numba
    retrievability_counts = retrievability_counts_numba
else:
    accumulate_scores = accumulate_scores_numpy
    top_c = top_c_numpy
    retrievability_counts = retrievability_counts_numpy
