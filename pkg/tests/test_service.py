import pytest
from fastapi.testclient import TestClient

from scholar import canonical as canonical_mod
from scholar.corpus import chunk_paragraphs, extract_paragraphs, save_corpus
from scholar.engine import ProviderBundle, VectorPipeline
from scholar.kg import build_kg
from scholar.providers import ProviderError
from scholar.service import create_app, decode_ref, encode_ref
from scholar.storage import ScholarStore
from scholar.vector import VectorIndex

from conftest import build_synthetic_corpus


@pytest.fixture(scope="module")
def small_corpus():
    return build_synthetic_corpus(n_docs=3, n_facts=9)


def build_small_store(docs, bundle):
    store = ScholarStore()
    paragraphs = [p for doc in docs for p in extract_paragraphs(doc)]
    store.put_paragraphs(paragraphs)
    VectorIndex(store).index_chunks(chunk_paragraphs(paragraphs), bundle.chunk_embed)
    build_kg(store, bundle.generate)
    freq = canonical_mod.surface_frequencies(store)
    records = canonical_mod.embed_entities(sorted(freq), bundle.entity_embed, freq)
    canonicals, mapping = canonical_mod.canonicalize_all(records)
    canonical_mod.persist_canonicals(store, canonicals, mapping)
    return store


@pytest.fixture
def bundle():
    return ProviderBundle.local(dim=2048)


@pytest.fixture
def client(small_corpus, bundle):
    docs, _ = small_corpus
    store = build_small_store(docs, bundle)
    app = create_app(store, bundle)
    return TestClient(app)


@pytest.fixture
def empty_client(bundle):
    return TestClient(create_app(ScholarStore(), bundle))


class TestRefs:
    def test_round_trip(self):
        ref = encode_ref("chunk", "10.1/a#c0")
        assert decode_ref(ref) == ("chunk", "10.1/a#c0")

    def test_url_safe(self):
        ref = encode_ref("tuple", "t0123abc")
        assert "/" not in ref and "+" not in ref and "=" not in ref

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            decode_ref("!!!not-base64!!!")


class TestHealth:
    def test_empty(self, empty_client):
        body = empty_client.get("/health").json()
        assert body == {"schema_version": "1", "status": "empty"}

    def test_ready(self, client):
        assert client.get("/health").json()["status"] == "ready"


class TestQueryValidation:
    def test_unknown_pipeline(self, client):
        r = client.post("/query", json={"question": "q", "pipeline": "magic"})
        assert r.status_code == 400

    def test_vector_rejects_max_tuples(self, client):
        r = client.post(
            "/query",
            json={"question": "q", "pipeline": "vector", "max_tuples": 10},
        )
        assert r.status_code == 400

    def test_graph_rejects_k(self, client):
        r = client.post("/query", json={"question": "q", "pipeline": "graph", "k": 5})
        assert r.status_code == 400

    @pytest.mark.parametrize("k", [0, 65])
    def test_k_range(self, client, k):
        r = client.post("/query", json={"question": "q", "pipeline": "vector", "k": k})
        assert r.status_code == 400

    @pytest.mark.parametrize("m", [0, 2001])
    def test_max_tuples_range(self, client, m):
        r = client.post(
            "/query", json={"question": "q", "pipeline": "graph", "max_tuples": m}
        )
        assert r.status_code == 400

    def test_blank_question(self, client):
        r = client.post("/query", json={"question": "  ", "pipeline": "vector"})
        assert r.status_code == 400

    def test_unbuilt_store_conflict(self, empty_client):
        for pipeline in ("vector", "graph"):
            r = empty_client.post(
                "/query", json={"question": "q", "pipeline": pipeline}
            )
            assert r.status_code == 409

    def test_provider_failure_is_502(self, client, monkeypatch):
        def boom(self, question, k=None):
            raise ProviderError("down", attempts=3)

        monkeypatch.setattr(VectorPipeline, "ask", boom)
        r = client.post("/query", json={"question": "q", "pipeline": "vector"})
        assert r.status_code == 502


class TestQuery:
    def test_vector_answer_shape(self, client, small_corpus):
        _, facts = small_corpus
        f = facts[0]
        r = client.post(
            "/query", json={"question": f.question, "pipeline": "vector", "k": 4}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["schema_version"] == "1"
        a = body["answer"]
        assert not a["abstained"]
        assert a["pipeline"] == "vector"
        assert a["citations"]
        assert len(body["evidence"]) == 4
        assert body["subgraph"] is None
        assert body["citation_violations"] == []
        for item in body["evidence"]:
            kind, _ = decode_ref(item["ref"])
            assert kind == "chunk"

    def test_graph_answer_shape(self, client, small_corpus):
        _, facts = small_corpus
        f = facts[1]
        r = client.post("/query", json={"question": f.question, "pipeline": "graph"})
        assert r.status_code == 200
        body = r.json()
        assert not body["answer"]["abstained"]
        assert body["subgraph"]["edge_count"] >= 1
        assert all(
            decode_ref(i["ref"])[0] == "tuple" for i in body["evidence"]
        )

    def test_unanswerable_abstains(self, client):
        r = client.post(
            "/query",
            json={
                "question": "What is the qqfictional99 retention of zzunknown99?",
                "pipeline": "vector",
            },
        )
        body = r.json()
        assert body["answer"]["abstained"]
        assert body["answer"]["citations"] == []


class TestEvidence:
    def _first_evidence(self, client, facts, pipeline):
        r = client.post(
            "/query",
            json={"question": facts[0].question, "pipeline": pipeline},
        )
        return r.json()["evidence"][0]

    def test_chunk_resolution(self, client, small_corpus):
        _, facts = small_corpus
        item = self._first_evidence(client, facts, "vector")
        r = client.get(f"/evidence/{item['ref']}")
        assert r.status_code == 200
        body = r.json()
        assert body["kind"] == "chunk"
        assert body["paragraphs"]
        assert all(p["text"] in body["text"] for p in body["paragraphs"])

    def test_tuple_resolution(self, client, small_corpus):
        _, facts = small_corpus
        item = self._first_evidence(client, facts, "graph")
        r = client.get(f"/evidence/{item['ref']}")
        assert r.status_code == 200
        body = r.json()
        assert body["kind"] == "tuple"
        assert body["subject"] and body["relation"] and body["object"]
        assert body["source_paragraph"]["pid"].startswith(body["doi"])

    def test_unknown_ref_404(self, client):
        assert client.get(f"/evidence/{encode_ref('chunk', 'ghost')}").status_code == 404
        assert client.get("/evidence/%21%21garbage").status_code == 404
        assert client.get(f"/evidence/{encode_ref('widget', 'x')}").status_code == 404


class TestFeedback:
    def test_submit_and_summarize(self, client):
        r = client.post(
            "/feedback",
            json={
                "ref": encode_ref("tuple", "t0"),
                "pipeline": "graph",
                "content_score": 4,
                "citation_score": 5,
                "notes": "good grounding",
                "rater_id": "r1",
            },
        )
        assert r.status_code == 200
        assert r.json()["feedback_id"]
        summary = client.get("/feedback/summary").json()["summary"]
        assert summary["graph"]["count"] >= 1
        assert summary["graph"]["mean_content"] == pytest.approx(4.0)
        assert summary["graph"]["mean_citation"] == pytest.approx(5.0)

    @pytest.mark.parametrize("score", [-1, 6])
    def test_score_bounds_rejected(self, client, score):
        r = client.post(
            "/feedback", json={"content_score": score, "citation_score": 3}
        )
        assert r.status_code == 422


class TestJobs:
    def test_full_build_via_jobs(self, small_corpus, bundle, tmp_path):
        docs, facts = small_corpus
        path = tmp_path / "corpus.jsonl"
        save_corpus(docs, path)
        c = TestClient(create_app(ScholarStore(), bundle))

        for endpoint, payload in [
            ("/ingest", {"corpus_path": str(path), "keywords": ["biopolymer"]}),
            ("/index-vectors", None),
            ("/build-kg", None),
            ("/canonicalize", None),
        ]:
            r = c.post(endpoint, json=payload) if payload else c.post(endpoint)
            assert r.status_code == 200, endpoint
            job = r.json()
            status = c.get(f"/jobs/{job['job_id']}").json()
            assert status["phase"] == "done", status
        stats = c.get("/stats").json()
        assert stats["paragraphs"] > 0
        assert stats["tuples"] >= len(facts)
        assert stats["canonical_entities"] > 0
        assert c.get("/health").json()["status"] == "ready"

    def test_concurrent_build_conflict(self, client):
        lock = client.app.state.build_lock
        assert lock.acquire(blocking=False)
        try:
            r = client.post("/index-vectors")
            assert r.status_code == 409
        finally:
            lock.release()

    def test_failed_job_reports_error(self, empty_client):
        r = empty_client.post(
            "/ingest", json={"corpus_path": "/nonexistent/corpus.jsonl"}
        )
        job = r.json()
        status = empty_client.get(f"/jobs/{job['job_id']}").json()
        assert status["phase"] == "failed"
        assert status["error"]

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/deadbeef").status_code == 404


def test_stats(client):
    body = client.get("/stats").json()
    assert body["chunks"] > 0
    assert body["tuples"] > 0
    assert isinstance(body["top_clusters_by_size"], list)
    assert all("label" in c and "size" in c for c in body["top_clusters_by_size"])
