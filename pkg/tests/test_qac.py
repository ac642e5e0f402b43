import math
import random

import pytest
from hypothesis import given, strategies as st

from synthq.catalog import Catalog, QueryLogRecord
from synthq.qac import (
    CompletionCandidate,
    CompletionEntry,
    CompletionSource,
    QacError,
    QacIndex,
    RerankWeights,
    broadness,
    build_qac_index,
    global_score,
    is_exploratory,
    prefix_score,
    rerank,
    suggest,
    top_k_per_source,
)
from synthq.qgen import DescriptorType, SyntheticQuery
from synthq.textproc import normalize_query

from .conftest import audiobook
from .oracles import brute_global_score, brute_rerank

SYN = CompletionSource.SYNTHETIC_QUERIES
LOG = CompletionSource.LOG_QUERIES
TITLE = CompletionSource.ENTITY_TITLES


def _sq(text, ids):
    return SyntheticQuery(text, DescriptorType.QUERY, tuple(sorted(ids)))


def _pop_catalog(pops):
    return Catalog([audiobook(f"a{i}", popularity=p) for i, p in enumerate(pops)])


def test_broadness_values():
    assert broadness(0) == 0.0
    assert broadness(9) == pytest.approx(2.302585092994046, abs=1e-15)
    with pytest.raises(QacError):
        broadness(-1)


def test_broadness_strictly_increasing():
    vals = [broadness(n) for n in range(1001)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_broad_query_outranks_specific():
    assert broadness(40) > broadness(1)


def test_global_score_examples():
    cat = _pop_catalog([10, 20, 30])
    assert global_score(_sq("x audiobooks", ["a0", "a1", "a2"]), cat) == pytest.approx(20 * math.log(4), abs=1e-12)
    assert global_score(_sq("x audiobooks", ["a0", "a1"]), cat) == pytest.approx(15 * math.log(3), abs=1e-12)


def test_global_score_unknown_id():
    with pytest.raises(QacError):
        global_score(_sq("x audiobooks", ["zz"]), _pop_catalog([1]))


def test_global_score_fifty_query_fixture():
    rng = random.Random(5)
    pops = [round(rng.uniform(0, 500), 3) for _ in range(120)]
    cat = _pop_catalog(pops)
    for i in range(50):
        ids = rng.sample(range(120), rng.randint(1, 30))
        q = _sq(f"q{i} audiobooks", [f"a{j}" for j in ids])
        assert abs(global_score(q, cat) - brute_global_score([pops[j] for j in ids])) <= 1e-12


@given(st.lists(st.floats(0, 1000, allow_nan=False), min_size=1, max_size=15), st.randoms())
def test_global_score_permutation_and_scaling(pops, rnd):
    cat = _pop_catalog(pops)
    scaled = _pop_catalog([3 * p for p in pops])
    ids = [f"a{i}" for i in range(len(pops))]
    shuffled = ids[:]
    rnd.shuffle(shuffled)
    base = global_score(_sq("q", ids), cat)
    assert global_score(SyntheticQuery("q", DescriptorType.QUERY, tuple(ids)), cat) == base
    assert global_score(_sq("q", ids), scaled) == pytest.approx(3 * base, rel=1e-12, abs=1e-9)


def test_prefix_score_examples():
    assert prefix_score("audiob", "audiobooks for children") == pytest.approx(6 / 23)
    assert prefix_score("xyz", "audiobooks about love") == 0.0
    assert prefix_score("Love Songs", "love songs") == 1.0
    assert prefix_score("", "abcd") == 0.25
    assert prefix_score("  AUDIOB", "audiobooks") == pytest.approx(0.6)


def _syn_index(n=10):
    cat = _pop_catalog([float(i + 1) for i in range(n)])
    qs = [_sq(f"audiobooks set {chr(97 + i)}", [f"a{i}"]) for i in range(n)]
    return build_qac_index(cat, [], qs), cat


def test_top_k_picks_highest_s():
    idx, _ = _syn_index()
    out = top_k_per_source(idx, "audiob", 3)
    got = [c.text for c in out[SYN]]
    brute = sorted(idx.entries(SYN), key=lambda e: (-prefix_score("audiob", e.text), -e.global_score, e.text))
    assert got == [e.text for e in brute[:3]]
    assert got == ["audiobooks set j", "audiobooks set i", "audiobooks set h"]


def test_top_k_counts_and_empty():
    cat = _pop_catalog([1, 2])
    idx = build_qac_index(cat, [], [_sq("love audiobooks", ["a0"]), _sq("love songs audiobooks", ["a1"])])
    out = top_k_per_source(idx, "love", 5)
    assert len(out[SYN]) == 2 and out[TITLE] == [] and out[LOG] == []
    assert all(v == [] for v in top_k_per_source(idx, "zzz", 5).values())
    with pytest.raises(QacError):
        top_k_per_source(idx, "l", 0)


def _cand(text, source, v, s):
    return CompletionCandidate(CompletionEntry(text, source, s), v)


def test_rerank_prefers_higher_v():
    a = _cand("alpha", SYN, 1.0, 5.0)
    b = _cand("alphabet", SYN, 0.5, 5.0)
    assert [c.text for c in rerank([b, a], 2)] == ["alpha", "alphabet"]


def test_rerank_weights_s_only():
    cands = [_cand(f"t{i}", src, random.Random(i).random(), s)
             for i, (src, s) in enumerate([(SYN, 3.0), (LOG, 9.0), (TITLE, 1.0), (SYN, 4.5)])]
    out = rerank(cands, 10, RerankWeights(0, 1, {}))
    assert [c.entry.global_score for c in out] == [9.0, 4.5, 3.0, 1.0]


def test_rerank_matches_brute_force():
    rng = random.Random(3)
    rows = []
    for i in range(20):
        src = rng.choice(list(CompletionSource))
        text = f"cand {rng.randint(0, 12)}"  # some duplicates across sources
        rows.append((text, src, round(rng.random(), 4), round(rng.uniform(0, 100), 3)))
    w = RerankWeights()
    prior = {k.value: v for k, v in w.source_prior.items()}
    cands = [_cand(t, s, v, g) for t, s, v, g in rows]
    for n in (1, 5, 20):
        got = [c.text for c in rerank(cands, n, w)]
        assert got == brute_rerank([(t, s.value, v, g) for t, s, v, g in rows], n, w.v, w.s, prior)


def test_rerank_collapses_duplicates():
    out = rerank([_cand("same", LOG, 0.5, 1.0), _cand("same", SYN, 0.5, 50.0)], 5)
    assert len(out) == 1 and out[0].entry.source == SYN


def test_rerank_constant_shift_invariant():
    cands = [_cand(f"t{i}", SYN, 0.1 * i, float(i * i)) for i in range(1, 8)]
    base = rerank(cands, 1, RerankWeights(1, 0.2, {}))
    shifted = rerank(cands, 1, RerankWeights(1, 0.2, {s: 7.5 for s in CompletionSource}))
    assert base[0].text == shifted[0].text


def test_rerank_rejects_bad_n():
    with pytest.raises(QacError):
        rerank([], 0)


def test_suggest_worked_example(demo):
    catalog, log, table = demo
    idx = build_qac_index(catalog, log, table.queries)
    texts = [c.text for c in suggest(idx, "audiob", N=3)]
    assert set(texts) >= {"audiobooks for children", "audiobooks about love", "audiobooks in french"}
    for c in suggest(idx, "audiob", N=10):
        assert c.prefix_score > 0


def test_suggest_empty_index_and_n1(demo):
    assert suggest(QacIndex(), "a") == []
    catalog, log, table = demo
    idx = build_qac_index(catalog, log, table.queries)
    full = suggest(idx, "a", K=50, N=50)
    one = suggest(idx, "a", K=50, N=1)
    assert len(one) == 1 and one[0].rerank_score == max(c.rerank_score for c in full)


def test_suggest_contract_random_trials(desk):
    catalog, log, table = desk
    idx = build_qac_index(catalog, log, table.queries)
    texts = [e.text for e in idx.entries()]
    rng = random.Random(17)
    for _ in range(300):
        t = rng.choice(texts)
        p = t[: rng.randint(0, len(t))]
        K, N = rng.randint(1, 8), rng.randint(1, 12)
        per = top_k_per_source(idx, p, K)
        assert all(len(v) <= K for v in per.values())
        out = suggest(idx, p, K, N)
        assert len(out) <= N
        assert all(c.text.startswith(normalize_query(p)) for c in out)
        assert out == suggest(idx, p, K, N)


def test_qac_index_rejects_duplicate_in_source():
    e = CompletionEntry("x", SYN, 1.0)
    with pytest.raises(QacError):
        QacIndex([e, e])
    assert len(QacIndex([e, CompletionEntry("x", LOG, 1.0)])) == 2


def test_qac_index_round_trip(tmp_path, desk):
    catalog, log, table = desk
    idx = build_qac_index(catalog, log, table.queries)
    p = tmp_path / "q.json"
    idx.save(p)
    again = QacIndex.load(p)
    assert again.entries() == idx.entries()
    assert suggest(again, "an") == suggest(idx, "an")


def test_title_and_log_scores(small_catalog):
    recs = [QueryLogRecord("Rome", "a1", 2.0), QueryLogRecord("rome", "p1"), QueryLogRecord("egypt", "")]
    idx = build_qac_index(small_catalog, recs)
    logs = {e.text: e for e in idx.entries(LOG)}
    assert logs["rome"].global_score == 3.0 and logs["rome"].associated_entity_count == 2
    assert logs["egypt"].associated_entity_count == 0
    titles = {e.text: e for e in idx.entries(TITLE)}
    assert titles["the hobbit"].global_score == 30


def test_weights_parse_forms():
    d = RerankWeights()
    assert RerankWeights.parse(None) == d
    w = RerankWeights.parse("v=2,s=0.5,log_queries=0.3")
    assert (w.v, w.s, w.source_prior[LOG]) == (2, 0.5, 0.3)
    j = RerankWeights.parse('{"v": 1, "source_prior": {"entity_titles": 0.4}}')
    assert j.source_prior[TITLE] == 0.4 and j.s == d.s
    assert RerankWeights.parse(w.to_dict()) == w
    with pytest.raises(QacError):
        RerankWeights.parse("bogus=1")
    with pytest.raises(QacError):
        RerankWeights(float("inf"))


def test_is_exploratory():
    assert is_exploratory(CompletionEntry("x", SYN, 1.0, 3))
    assert not is_exploratory(CompletionEntry("x", SYN, 1.0, 1))
    assert is_exploratory(CompletionEntry("x", SYN, 1.0, 1), threshold=1)
