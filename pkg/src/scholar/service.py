"""HTTP JSON API over the two pipelines, evidence inspection, builds,
feedback, and stats.

Every response carries a stable ``schema_version`` so clients can pin
against the wire format. Evidence refs are opaque, restart-stable tokens
(base64 of ``kind:id``) resolvable at ``/evidence/{ref}``. Long-running
builds return a job id; builds on the same store are exclusive and a
concurrent request gets 409.
"""
from __future__ import annotations

import base64
import threading
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import canonical as canonical_mod
from .answer import validate_citations
from .corpus import chunk_paragraphs, extract_paragraphs, filter_corpus, load_corpus
from .engine import GraphPipeline, ProviderBundle, VectorPipeline
from .kg import build_kg, corpus_stats
from .storage import ScholarStore
from .vector import EmptyIndexError, VectorIndex
from .providers import ProviderError

SCHEMA_VERSION = "1"


def encode_ref(kind: str, item_id: str) -> str:
    raw = f"{kind}:{item_id}".encode()
    return base64.urlsafe_b64encode(raw).decode().rstrip("=")


def decode_ref(ref: str) -> tuple[str, str]:
    padded = ref + "=" * (-len(ref) % 4)
    try:
        kind, item_id = base64.urlsafe_b64decode(padded).decode().split(":", 1)
    except Exception as exc:
        raise ValueError(f"malformed evidence ref: {ref}") from exc
    return kind, item_id


class QueryRequest(BaseModel):
    question: str
    pipeline: str
    k: Optional[int] = None
    max_tuples: Optional[int] = None
    model_id: Optional[str] = None


class FeedbackRequest(BaseModel):
    ref: str = ""
    pipeline: str = ""
    content_score: int = Field(ge=0, le=5)
    citation_score: int = Field(ge=0, le=5)
    notes: str = ""
    rater_id: str = ""


class IngestRequest(BaseModel):
    corpus_path: str
    keywords: list[str] = []


class JobState:
    def __init__(self, kind: str):
        self.job_id = uuid.uuid4().hex
        self.kind = kind
        self.phase = "running"
        self.counts: dict = {}
        self.error = ""


def create_app(
    store: ScholarStore,
    providers: ProviderBundle | None = None,
    synchronous_jobs: bool = True,
) -> FastAPI:
    """Build the service over one store.

    ``synchronous_jobs`` runs build endpoints inline (deterministic for
    tests and small corpora); set False to run them on worker threads.
    """
    app = FastAPI(title="scholar")
    bundle = providers or ProviderBundle.local()
    jobs: dict[str, JobState] = {}
    build_lock = threading.Lock()
    vector_pipeline = VectorPipeline(store, bundle)
    graph_pipeline = GraphPipeline(store, bundle)

    def envelope(payload: dict) -> dict:
        return {"schema_version": SCHEMA_VERSION, **payload}

    def run_job(job: JobState, fn) -> None:
        def body():
            try:
                job.counts = fn()
                job.phase = "done"
            except Exception as exc:  # noqa: BLE001 - surfaced via job status
                job.phase = "failed"
                job.error = str(exc)
            finally:
                build_lock.release()

        if synchronous_jobs:
            body()
        else:
            threading.Thread(target=body, daemon=True).start()

    def start_job(kind: str, fn) -> dict:
        if not build_lock.acquire(blocking=False):
            raise HTTPException(409, "another build is in progress")
        job = JobState(kind)
        jobs[job.job_id] = job
        run_job(job, fn)
        return envelope({"job_id": job.job_id, "phase": job.phase})

    app.state.build_lock = build_lock  # exposed so tests can simulate an in-progress build

    @app.get("/health")
    def health():
        status = "ready" if store.chunk_count() or store.tuple_count() else "empty"
        return envelope({"status": status})

    @app.get("/stats")
    def stats():
        tuple_count, entity_count, per_doi = corpus_stats(store)
        clusters = sorted(
            (
                {"label": label, "size": count}
                for _cid, label, count, _num, _vec in store.canonical_entities()
            ),
            key=lambda c: -c["size"],
        )[:20]
        return envelope(
            {
                "paragraphs": store.paragraph_count(),
                "chunks": store.chunk_count(),
                "tuples": tuple_count,
                "entities": entity_count,
                "canonical_entities": store.canonical_count(),
                "per_doi_tuple_counts": per_doi,
                "top_clusters_by_size": clusters,
            }
        )

    @app.post("/query")
    def query(req: QueryRequest):
        if req.pipeline not in ("vector", "graph"):
            raise HTTPException(400, "pipeline must be 'vector' or 'graph'")
        if req.pipeline == "vector":
            if req.max_tuples is not None:
                raise HTTPException(400, "max_tuples is a graph-pipeline parameter")
            if req.k is not None and not 1 <= req.k <= 64:
                raise HTTPException(400, "k must lie in [1, 64]")
            if store.vector_count() == 0:
                raise HTTPException(409, "vector index not built")
        else:
            if req.k is not None:
                raise HTTPException(400, "k is a vector-pipeline parameter")
            if req.max_tuples is not None and not 1 <= req.max_tuples <= 2000:
                raise HTTPException(400, "max_tuples must lie in [1, 2000]")
            if store.tuple_count() == 0:
                raise HTTPException(409, "knowledge graph not built")
        if not req.question.strip():
            raise HTTPException(400, "question must be non-empty")
        try:
            if req.pipeline == "vector":
                outcome = vector_pipeline.ask(req.question, k=req.k)
            else:
                outcome = graph_pipeline.ask(req.question, max_tuples=req.max_tuples)
        except EmptyIndexError:
            raise HTTPException(409, "vector index not built")
        except ProviderError as exc:
            raise HTTPException(502, f"provider failure: {exc}")
        a = outcome.answer
        if a.error:
            raise HTTPException(502, a.error)
        violations = validate_citations(a, outcome.evidence)
        return envelope(
            {
                "answer": {
                    "text": a.text,
                    "citations": a.citations,
                    "abstained": a.abstained,
                    "pipeline": a.pipeline,
                    "latency_seconds": a.latency_seconds,
                    "cost_dollars": a.cost_dollars,
                    "rerank_skipped": a.rerank_skipped,
                },
                "evidence": [
                    {
                        "index": item.index,
                        "kind": item.kind,
                        "text": item.text,
                        "source_doi": item.source_doi,
                        "source_pids": list(item.source_pids),
                        "score": item.score,
                        "ref": encode_ref(*item.ref.split(":", 1)),
                    }
                    for item in outcome.evidence.items
                ],
                "subgraph": (
                    {
                        "node_count": outcome.subgraph.node_count,
                        "edge_count": outcome.subgraph.edge_count,
                    }
                    if outcome.subgraph
                    else None
                ),
                "citation_violations": [v.detail for v in violations],
            }
        )

    @app.get("/evidence/{ref}")
    def evidence(ref: str):
        try:
            kind, item_id = decode_ref(ref)
        except ValueError:
            raise HTTPException(404, "unknown evidence ref")
        if kind == "chunk":
            chunk = store.get_chunk(item_id)
            if chunk is None:
                raise HTTPException(404, "unknown evidence ref")
            paragraphs = [store.get_paragraph(pid) for pid in chunk.member_pids]
            return envelope(
                {
                    "kind": "chunk",
                    "chunk_id": chunk.chunk_id,
                    "doi": chunk.doi,
                    "section_path": list(chunk.section_path),
                    "text": chunk.text,
                    "paragraphs": [
                        {
                            "pid": p.pid,
                            "section_path": list(p.section_path),
                            "text": p.text,
                        }
                        for p in paragraphs
                        if p is not None
                    ],
                }
            )
        if kind == "tuple":
            row = store.get_tuple(item_id)
            if row is None:
                raise HTTPException(404, "unknown evidence ref")
            paragraph = store.get_paragraph(row["source_pid"])
            return envelope(
                {
                    "kind": "tuple",
                    "tuple_id": row["tuple_id"],
                    "subject": row["subject"],
                    "relation": row["relation"],
                    "object": row["object"],
                    "reference_relation": row["reference_relation"],
                    "reference_node": row["reference_node"],
                    "doi": row["source_doi"],
                    "source_paragraph": (
                        {
                            "pid": paragraph.pid,
                            "section_path": list(paragraph.section_path),
                            "text": paragraph.text,
                        }
                        if paragraph
                        else None
                    ),
                }
            )
        raise HTTPException(404, "unknown evidence ref")

    @app.post("/feedback")
    def feedback(req: FeedbackRequest):
        fid = store.add_feedback(
            ref=req.ref,
            content_score=req.content_score,
            citation_score=req.citation_score,
            notes=req.notes,
            rater_id=req.rater_id,
            pipeline=req.pipeline,
        )
        return envelope({"feedback_id": fid})

    @app.get("/feedback/summary")
    def feedback_summary():
        return envelope({"summary": store.feedback_summary()})

    @app.post("/ingest")
    def ingest(req: IngestRequest):
        def body():
            docs = load_corpus(req.corpus_path)
            if req.keywords:
                docs = filter_corpus(docs, req.keywords)
            paragraphs = [p for doc in docs for p in extract_paragraphs(doc)]
            chunks = chunk_paragraphs(paragraphs)
            store.put_paragraphs(paragraphs)
            store.put_chunks(chunks)
            return {"documents": len(docs), "paragraphs": len(paragraphs), "chunks": len(chunks)}

        return start_job("ingest", body)

    @app.post("/index-vectors")
    def index_vectors():
        def body():
            count = VectorIndex(store).index_chunks(
                store.iter_chunks(), bundle.chunk_embed
            )
            return {"indexed": count}

        return start_job("index-vectors", body)

    @app.post("/build-kg")
    def build_kg_endpoint():
        def body():
            count, diag = build_kg(store, bundle.generate)
            graph_pipeline.invalidate_cache()
            return {"tuples": count, "malformed_lines": diag.malformed_lines}

        return start_job("build-kg", body)

    @app.post("/canonicalize")
    def canonicalize():
        def body():
            freq = canonical_mod.surface_frequencies(store)
            surfaces = sorted(freq)
            records = canonical_mod.embed_entities(
                surfaces, bundle.entity_embed, freq
            )
            canonicals, mapping = canonical_mod.canonicalize_all(records)
            canonical_mod.persist_canonicals(store, canonicals, mapping)
            return {"canonical_entities": len(canonicals), "surfaces": len(mapping)}

        return start_job("canonicalize", body)

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job")
        return envelope(
            {
                "job_id": job.job_id,
                "kind": job.kind,
                "phase": job.phase,
                "counts": job.counts,
                "error": job.error,
            }
        )

    return app
