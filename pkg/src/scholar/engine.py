"""End-to-end query pipelines tying retrieval to grounded generation.

Both pipelines expose ``ask(question) -> QueryOutcome`` over a shared
store. The vector pipeline retrieves top-k chunks by cosine; the graph
pipeline runs preprocessing, string + canonical retrieval, hybrid
fusion, cross-encoder re-ranking, and subgraph assembly. Retrieved
contexts keep full provenance so evaluation and the UI can trace every
citation back to paragraphs.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .answer import Answer, EvidenceItem, EvidenceSet, synthesize
from .providers import ProviderConfig
from .retrieval import (
    RetrievalParams,
    SubgraphSummary,
    assemble_subgraph,
    canonical_retrieve,
    hybrid_fuse,
    load_tuples,
    path_rerank,
    string_retrieve,
)
from .storage import ScholarStore
from .textproc import EmptyQueryError, preprocess_query
from .vector import DEFAULT_TOP_K, VectorIndex


@dataclass(frozen=True)
class RetrievedContext:
    """One ranked retrieval unit with provenance (a chunk or a tuple)."""

    pids: tuple[str, ...]
    doi: str
    score: float


@dataclass
class QueryOutcome:
    answer: Answer
    evidence: EvidenceSet
    contexts: list[RetrievedContext] = field(default_factory=list)
    subgraph: SubgraphSummary | None = None


@dataclass
class ProviderBundle:
    chunk_embed: ProviderConfig
    entity_embed: ProviderConfig
    generate: ProviderConfig
    cross: ProviderConfig

    @classmethod
    def local(cls, dim: int = 256) -> "ProviderBundle":
        return cls(
            chunk_embed=ProviderConfig(role="embed", dim=dim),
            entity_embed=ProviderConfig(role="embed", dim=dim),
            generate=ProviderConfig(role="generate"),
            cross=ProviderConfig(role="cross_score"),
        )


class VectorPipeline:
    def __init__(
        self,
        store: ScholarStore,
        providers: ProviderBundle,
        k: int = DEFAULT_TOP_K,
        token_budget: int | None = None,
        prompt_template: str | None = None,
    ):
        self.store = store
        self.providers = providers
        self.k = k
        self.token_budget = token_budget
        self.prompt_template = prompt_template
        self.index = VectorIndex(store)

    def ask(self, question: str, k: int | None = None) -> QueryOutcome:
        start = time.perf_counter()
        ranked = self.index.retrieve_topk(
            question, k or self.k, self.providers.chunk_embed
        )
        items = [
            EvidenceItem(
                index=pos,
                kind="chunk",
                text=rc.text,
                source_doi=rc.doi,
                source_pids=rc.member_pids,
                score=rc.score,
                ref=f"chunk:{rc.chunk_id}",
            )
            for pos, rc in enumerate(ranked, start=1)
        ]
        evidence = EvidenceSet(items=items)
        answer = synthesize(
            question,
            evidence,
            self.providers.generate,
            pipeline="vector",
            template=self.prompt_template,
            token_budget=self.token_budget,
        )
        answer.latency_seconds = time.perf_counter() - start
        contexts = [
            RetrievedContext(pids=rc.member_pids, doi=rc.doi, score=rc.score)
            for rc in ranked
        ]
        return QueryOutcome(answer=answer, evidence=evidence, contexts=contexts)


class GraphPipeline:
    def __init__(
        self,
        store: ScholarStore,
        providers: ProviderBundle,
        params: RetrievalParams | None = None,
        token_budget: int | None = None,
        prompt_template: str | None = None,
    ):
        self.store = store
        self.providers = providers
        self.params = params or RetrievalParams()
        self.token_budget = token_budget
        self.prompt_template = prompt_template
        self._tuples = None

    def _all_tuples(self):
        if self._tuples is None:
            self._tuples = load_tuples(self.store)
        return self._tuples

    def invalidate_cache(self) -> None:
        self._tuples = None

    def ask(self, question: str, max_tuples: int | None = None) -> QueryOutcome:
        start = time.perf_counter()
        params = self.params
        if max_tuples is not None:
            params = RetrievalParams(
                alpha=params.alpha,
                tau=params.tau,
                lam=params.lam,
                max_tuples=max_tuples,
                canonical_sim_threshold=params.canonical_sim_threshold,
                rerank_pool_factor=params.rerank_pool_factor,
            )
        try:
            kw = preprocess_query(question)
        except EmptyQueryError:
            evidence = EvidenceSet(items=[])
            answer = synthesize(
                question, evidence, self.providers.generate, pipeline="graph"
            )
            answer.latency_seconds = time.perf_counter() - start
            return QueryOutcome(answer=answer, evidence=evidence, contexts=[])
        tuples = self._all_tuples()
        s_res = string_retrieve(kw, tuples)
        c_res = canonical_retrieve(
            kw,
            self.store,
            self.providers.entity_embed,
            tuples=tuples,
            sim_threshold=params.canonical_sim_threshold,
        )
        fused = hybrid_fuse(s_res, c_res, params)
        final, rerank_skipped = path_rerank(
            question, fused, params, self.providers.cross
        )
        evidence, subgraph = assemble_subgraph(final, self.store)
        answer = synthesize(
            question,
            evidence,
            self.providers.generate,
            pipeline="graph",
            template=self.prompt_template,
            token_budget=self.token_budget,
            rerank_skipped=rerank_skipped,
        )
        answer.latency_seconds = time.perf_counter() - start
        contexts = [
            RetrievedContext(
                pids=(st.tuple.source_pid,),
                doi=st.tuple.source_doi,
                score=st.s_final if st.s_final is not None else st.s_hybrid,
            )
            for st in final
        ]
        return QueryOutcome(
            answer=answer, evidence=evidence, contexts=contexts, subgraph=subgraph
        )
