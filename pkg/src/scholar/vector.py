"""Dense retrieval over chunk embeddings: exhaustive cosine scan, top-k.

Retrieval deliberately scans every stored vector rather than using an
approximate index; the corpus scale (~10^4 chunks) makes the exact scan
both fast enough and exactly reproducible. Ties are broken by ascending
chunk id so rankings are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Chunk
from .providers import EmbeddingVector, ProviderConfig, ProviderError, embed_texts
from .storage import ScholarStore

DEFAULT_TOP_K = 8


class EmptyIndexError(RuntimeError):
    pass


class PartialIndexError(RuntimeError):
    """Some chunks could not be embedded; the index holds only the rest."""

    def __init__(self, failed_chunk_ids: list[str]):
        super().__init__(f"embedding failed for {len(failed_chunk_ids)} chunks")
        self.failed_chunk_ids = failed_chunk_ids


@dataclass(frozen=True)
class RankedChunk:
    chunk_id: str
    score: float
    rank: int
    doi: str
    member_pids: tuple[str, ...]
    text: str


class VectorIndex:
    def __init__(self, store: ScholarStore):
        self.store = store

    def index_chunks(
        self, chunks: list[Chunk], embed_cfg: ProviderConfig, batch_size: int = 64
    ) -> int:
        """Embed and store every chunk; re-indexing replaces entries.

        Only fully embedded chunks are committed; a provider failure
        raises PartialIndexError naming the chunks left unindexed.
        """
        if not chunks:
            raise ValueError("chunks must be non-empty")
        self.store.put_chunks(chunks)
        failed: list[str] = []
        for start in range(0, len(chunks), batch_size):
            batch = chunks[start : start + batch_size]
            try:
                vectors = embed_texts([c.text for c in batch], embed_cfg)
            except ProviderError:
                failed.extend(c.chunk_id for c in batch)
                continue
            self.store.put_chunk_vectors(
                [(c.chunk_id, v.values) for c, v in zip(batch, vectors)],
                embed_cfg.model_id,
            )
        if failed:
            raise PartialIndexError(failed)
        return self.store.vector_count()

    def retrieve_topk(
        self, query: str, k: int, embed_cfg: ProviderConfig
    ) -> list[RankedChunk]:
        """Top-k chunks by cosine similarity to the query embedding."""
        if k < 1:
            raise ValueError("k must be >= 1")
        entries = self.store.all_chunk_vectors()
        if not entries:
            raise EmptyIndexError("vector index is empty")
        qvec = embed_texts([query], embed_cfg)[0]
        ranked = rank_by_cosine(qvec, entries)[: min(k, len(entries))]
        out = []
        for rank, (chunk_id, score) in enumerate(ranked, start=1):
            chunk = self.store.get_chunk(chunk_id)
            out.append(
                RankedChunk(
                    chunk_id=chunk_id,
                    score=score,
                    rank=rank,
                    doi=chunk.doi,
                    member_pids=chunk.member_pids,
                    text=chunk.text,
                )
            )
        return out


def rank_by_cosine(
    query: EmbeddingVector, entries: list[tuple[str, np.ndarray]]
) -> list[tuple[str, float]]:
    """Full ranking of (chunk_id, cosine) pairs, ties broken by chunk_id.

    Stored vectors and query are unit-norm (or zero), so the dot product
    is the cosine; a zero query scores 0 against everything.
    """
    ids = [cid for cid, _ in entries]
    mat = np.stack([v for _, v in entries])
    scores = mat @ query.values
    order = sorted(range(len(ids)), key=lambda i: (-float(scores[i]), ids[i]))
    return [(ids[i], float(scores[i])) for i in order]
