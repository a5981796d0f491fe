import numpy as np
import pytest

from scholar.corpus import Chunk
from scholar.engine import ProviderBundle
from scholar.providers import ProviderConfig, ProviderError, cosine, embed_texts
from scholar.storage import ScholarStore
from scholar.vector import EmptyIndexError, PartialIndexError, VectorIndex


def make_chunks(n, doi="10.1/v"):
    return [
        Chunk(
            chunk_id=f"{doi}#c{i}",
            doi=doi,
            section_path=("S",),
            member_pids=(f"{doi}#p{i}",),
            text=f"chunk number {i} about topic{i % 7} and subject{i % 5}",
        )
        for i in range(n)
    ]


@pytest.fixture
def embed_cfg():
    return ProviderConfig(role="embed", dim=256)


@pytest.fixture
def index(embed_cfg):
    store = ScholarStore()
    vi = VectorIndex(store)
    vi.index_chunks(make_chunks(10), embed_cfg)
    return vi


def test_index_idempotent(index, embed_cfg):
    assert index.store.vector_count() == 10
    assert index.index_chunks(make_chunks(10), embed_cfg) == 10


def test_index_rejects_empty(index, embed_cfg):
    with pytest.raises(ValueError):
        index.index_chunks([], embed_cfg)


def test_partial_failure_names_chunks(embed_cfg, monkeypatch):
    store = ScholarStore()
    vi = VectorIndex(store)
    chunks = make_chunks(10)

    calls = {"n": 0}
    real = embed_texts

    def flaky(texts, cfg):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ProviderError("simulated outage", attempts=3)
        return real(texts, cfg)

    monkeypatch.setattr("scholar.vector.embed_texts", flaky)
    with pytest.raises(PartialIndexError) as exc:
        vi.index_chunks(chunks, embed_cfg, batch_size=1)
    assert exc.value.failed_chunk_ids == ["10.1/v#c1"]
    assert store.vector_count() == 9


def test_exact_text_ranks_first(index, embed_cfg):
    target = index.store.get_chunk("10.1/v#c3")
    out = index.retrieve_topk(target.text, 3, embed_cfg)
    assert out[0].chunk_id == "10.1/v#c3"
    assert out[0].score == pytest.approx(1.0, abs=1e-6)
    assert out[0].rank == 1


def test_k_larger_than_index(index, embed_cfg):
    out = index.retrieve_topk("anything topic1", 50, embed_cfg)
    assert len(out) == 10
    assert [r.rank for r in out] == list(range(1, 11))


def test_scores_non_increasing(index, embed_cfg):
    out = index.retrieve_topk("chunk about topic2", 10, embed_cfg)
    scores = [r.score for r in out]
    assert scores == sorted(scores, reverse=True)
    assert all(-1.0 <= s <= 1.0 for s in scores)


def test_empty_index_error(embed_cfg):
    with pytest.raises(EmptyIndexError):
        VectorIndex(ScholarStore()).retrieve_topk("q", 3, embed_cfg)


def test_bad_k(index, embed_cfg):
    with pytest.raises(ValueError):
        index.retrieve_topk("q", 0, embed_cfg)


def test_matches_brute_force_oracle(embed_cfg):
    store = ScholarStore()
    vi = VectorIndex(store)
    chunks = make_chunks(20)
    vi.index_chunks(chunks, embed_cfg)
    query = "subject3 topic4 number"
    out = vi.retrieve_topk(query, 20, embed_cfg)

    # independent oracle: recompute cosines pairwise and sort
    (qv,) = embed_texts([query], embed_cfg)
    expected = []
    for c in chunks:
        (cv,) = embed_texts([c.text], embed_cfg)
        expected.append((c.chunk_id, cosine(qv, cv)))
    by_id = dict(expected)
    assert sorted(r.chunk_id for r in out) == sorted(by_id)
    for r in out:
        assert r.score == pytest.approx(by_id[r.chunk_id], abs=1e-6)
    # ordering agrees with the oracle up to float noise between the two
    # cosine computations (ties may legitimately swap)
    for a, b in zip(out, out[1:]):
        assert by_id[a.chunk_id] >= by_id[b.chunk_id] - 1e-6


def test_prefix_property(index, embed_cfg):
    query = "topic5 chunk"
    for k in range(1, 10):
        small = index.retrieve_topk(query, k, embed_cfg)
        large = index.retrieve_topk(query, k + 1, embed_cfg)
        assert [r.chunk_id for r in small] == [r.chunk_id for r in large[:k]]


def test_zero_query_tie_break_order(index, embed_cfg):
    out = index.retrieve_topk("", 5, embed_cfg)
    assert all(r.score == 0.0 for r in out)
    ids = [r.chunk_id for r in out]
    assert ids == sorted(ids)
