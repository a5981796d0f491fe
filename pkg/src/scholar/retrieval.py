"""Graph retrieval: string matching, canonical matching, score fusion,
cross-encoder re-ranking, and evidence subgraph assembly.

Scoring follows two fused stages. Candidate tuples get

    s_hybrid = alpha * s_canonical + (1 - alpha) * s_string

min-max normalized per batch and thresholded at tau; survivors (up to
``rerank_pool_factor * max_tuples``) are re-ranked with

    s_final = lam * s_rerank + (1 - lam) * s_hybrid

where s_rerank is the batch-normalized cross-encoder score. A degenerate
batch (all raw scores equal) normalizes to 1.0 so single-candidate
retrievals are never silently filtered away.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .answer import EvidenceItem, EvidenceSet
from .kg import KgTuple
from .providers import ProviderConfig, ProviderError, cross_score, embed_texts
from .storage import ScholarStore
from .textproc import QueryKeywords, keyword_pattern


@dataclass
class RetrievalParams:
    alpha: float = 0.7
    tau: float = 0.6
    lam: float = 0.7
    max_tuples: int = 300
    canonical_sim_threshold: float = 0.7
    rerank_pool_factor: int = 4

    def __post_init__(self):
        for name in ("alpha", "tau", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_tuples < 1:
            raise ValueError("max_tuples must be >= 1")
        if self.rerank_pool_factor < 1:
            raise ValueError("rerank_pool_factor must be >= 1")


@dataclass(frozen=True)
class ScoredTuple:
    tuple: KgTuple
    s_string: float = 0.0
    s_canonical: float = 0.0
    s_hybrid: float = 0.0
    s_rerank: float | None = None
    s_final: float | None = None


def _row_to_tuple(row, store: ScholarStore) -> KgTuple:
    return KgTuple(
        tuple_id=row["tuple_id"],
        subject=row["subject"],
        relation=row["relation"],
        object=row["object"],
        reference_relation=row["reference_relation"],
        reference_node=row["reference_node"],
        source_pid=row["source_pid"],
        source_doi=row["source_doi"],
        citation_markers=tuple(store.tuple_markers(row["tuple_id"])),
    )


def load_tuples(store: ScholarStore) -> list[KgTuple]:
    return [_row_to_tuple(r, store) for r in store.iter_tuples()]


def string_retrieve(
    kw: QueryKeywords, tuples: list[KgTuple]
) -> list[ScoredTuple]:
    """Word-boundary keyword matching over subject, relation, and object.

    Phase 1 keeps tuples matching every keyword; only when phase 1 is
    empty does the relaxed phase fire, requiring at least two distinct
    keyword matches. s_string is the fraction of distinct keywords
    matched.
    """
    patterns = [keyword_pattern(k) for k in kw.keywords]
    total = len(kw.keywords)
    matched: list[tuple[KgTuple, int]] = []
    for t in tuples:
        fields = (t.subject, t.relation, t.object)
        hits = sum(
            1 for pat in patterns if any(pat.search(f) for f in fields)
        )
        if hits:
            matched.append((t, hits))
    full = [(t, h) for t, h in matched if h == total]
    selected = full if full else [(t, h) for t, h in matched if h >= 2]
    return [
        ScoredTuple(tuple=t, s_string=h / total)
        for t, h in sorted(selected, key=lambda th: (-th[1], th[0].tuple_id))
    ]


def canonical_retrieve(
    kw: QueryKeywords,
    store: ScholarStore,
    embed_cfg: ProviderConfig,
    tuples: list[KgTuple] | None = None,
    sim_threshold: float = 0.7,
) -> list[ScoredTuple]:
    """Semantic matching through canonical entity embeddings.

    Every keyword is compared against every canonical centroid; canonical
    entities with cosine strictly above the threshold are retained, and
    all tuples containing a retained entity (as subject or object) are
    returned with s_canonical = max matching cosine.
    """
    canonicals = store.canonical_entities()
    if not canonicals:
        return []
    mapping = store.canonical_mapping()
    tuples = load_tuples(store) if tuples is None else tuples
    kw_vectors = embed_texts(list(kw.keywords), embed_cfg)
    centroids = np.stack([c[4] for c in canonicals])
    norms = np.linalg.norm(centroids, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = centroids / safe[:, None]

    best_sim: dict[str, float] = {}
    for vec in kw_vectors:
        if vec.is_zero:
            continue
        sims = unit @ vec.values
        sims[norms == 0.0] = 0.0
        for (cid, *_rest), sim in zip(canonicals, sims):
            if sim > sim_threshold:
                best_sim[cid] = max(best_sim.get(cid, 0.0), float(sim))
    if not best_sim:
        return []
    out = []
    for t in tuples:
        score = 0.0
        for surface in (t.subject, t.object):
            cid = mapping.get(surface)
            if cid is not None and cid in best_sim:
                score = max(score, best_sim[cid])
        if score > 0.0:
            out.append(ScoredTuple(tuple=t, s_canonical=score))
    out.sort(key=lambda s: (-s.s_canonical, s.tuple.tuple_id))
    return out


def minmax_normalize(scores: list[float]) -> list[float]:
    """Batch min-max to [0, 1]; an all-equal batch maps to 1.0."""
    if not scores:
        return []
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [1.0] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def hybrid_fuse(
    string_results: list[ScoredTuple],
    canonical_results: list[ScoredTuple],
    params: RetrievalParams,
) -> list[ScoredTuple]:
    """Union candidates, fuse component scores, normalize, and filter."""
    merged: dict[str, ScoredTuple] = {}
    for st in string_results:
        merged[st.tuple.tuple_id] = st
    for st in canonical_results:
        prior = merged.get(st.tuple.tuple_id)
        if prior is None:
            merged[st.tuple.tuple_id] = st
        else:
            merged[st.tuple.tuple_id] = replace(prior, s_canonical=st.s_canonical)
    if not merged:
        return []
    candidates = sorted(merged.values(), key=lambda s: s.tuple.tuple_id)
    raw = [
        params.alpha * c.s_canonical + (1.0 - params.alpha) * c.s_string
        for c in candidates
    ]
    normalized = minmax_normalize(raw)
    fused = [
        replace(c, s_hybrid=n)
        for c, n in zip(candidates, normalized)
        if n >= params.tau
    ]
    fused.sort(key=lambda s: (-s.s_hybrid, s.tuple.tuple_id))
    return fused


def serialize_tuple(t: KgTuple) -> str:
    """Path-sentence rendering used for cross-encoding and display."""
    text = f"{t.subject} {t.relation} {t.object}"
    if t.reference_relation or t.reference_node:
        text = f"{text} {t.reference_relation} {t.reference_node}".rstrip()
    return text


def path_rerank(
    query: str,
    candidates: list[ScoredTuple],
    params: RetrievalParams,
    cross_cfg: ProviderConfig,
) -> tuple[list[ScoredTuple], bool]:
    """Cross-encoder re-ranking of the hybrid-score pool.

    Scores the top ``rerank_pool_factor * max_tuples`` candidates,
    normalizes, fuses with s_hybrid, and truncates to max_tuples. When
    the cross-encoder is unavailable after retries the hybrid ranking is
    kept and the result is flagged rerank_skipped.
    """
    if not candidates:
        return [], False
    pool = candidates[: params.rerank_pool_factor * params.max_tuples]
    passages = [serialize_tuple(c.tuple) for c in pool]
    try:
        raw = cross_score(query, passages, cross_cfg)
    except ProviderError:
        fallback = [replace(c, s_final=c.s_hybrid) for c in pool]
        fallback.sort(key=lambda s: (-s.s_final, s.tuple.tuple_id))
        return fallback[: params.max_tuples], True
    normalized = minmax_normalize(raw)
    scored = [
        replace(
            c,
            s_rerank=r,
            s_final=params.lam * r + (1.0 - params.lam) * c.s_hybrid,
        )
        for c, r in zip(pool, normalized)
    ]
    scored.sort(key=lambda s: (-s.s_final, s.tuple.tuple_id))
    return scored[: params.max_tuples], False


@dataclass
class SubgraphSummary:
    node_count: int
    edge_count: int
    nodes: list[str]


def tuple_ref(tuple_id: str) -> str:
    return f"tuple:{tuple_id}"


def assemble_subgraph(
    final: list[ScoredTuple],
    store: ScholarStore,
) -> tuple[EvidenceSet, SubgraphSummary]:
    """Group final tuples into a display-ready evidence set plus a
    node/edge view (nodes are canonical labels when mapped, surfaces
    otherwise)."""
    mapping = store.canonical_mapping()
    labels = {cid: label for cid, label, *_ in store.canonical_entities()}

    def node_name(surface: str) -> str:
        cid = mapping.get(surface)
        return labels.get(cid, surface) if cid else surface

    nodes: list[str] = []
    seen: set[str] = set()
    items: list[EvidenceItem] = []
    for pos, st in enumerate(final, start=1):
        t = st.tuple
        for name in (node_name(t.subject), node_name(t.object)):
            if name not in seen:
                seen.add(name)
                nodes.append(name)
        items.append(
            EvidenceItem(
                index=pos,
                kind="tuple",
                text=serialize_tuple(t),
                source_doi=t.source_doi,
                source_pids=(t.source_pid,),
                score=st.s_final if st.s_final is not None else st.s_hybrid,
                ref=tuple_ref(t.tuple_id),
            )
        )
    return EvidenceSet(items=items), SubgraphSummary(
        node_count=len(nodes), edge_count=len(final), nodes=nodes
    )
