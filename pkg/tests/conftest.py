"""Shared fixtures: deterministic providers and a synthetic corpus with
planted facts, used by unit tests and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import pytest

from scholar import canonical as canonical_mod
from scholar.corpus import Document, Section, chunk_paragraphs, extract_paragraphs
from scholar.engine import ProviderBundle
from scholar.kg import build_kg
from scholar.storage import ScholarStore
from scholar.vector import VectorIndex


@pytest.fixture
def local_bundle() -> ProviderBundle:
    return ProviderBundle.local(dim=2048)


@dataclass(frozen=True)
class PlantedFact:
    """One planted fact: a unique subject/object pair, the paragraph that
    states it, and a question whose answer lives in that paragraph."""

    qid: str
    subject: str
    object: str
    pid: str
    doi: str
    question: str


def build_synthetic_corpus(
    n_docs: int = 21, n_facts: int = 105
) -> tuple[list[Document], list[PlantedFact]]:
    """A corpus of n_docs articles with n_facts planted relational facts.

    Each fact gets globally unique subject/object nonces so retrieval is
    unambiguous, plus filler sentences shared across documents. Paragraph
    ids follow the ingest convention (doi#p<index> in document order),
    which this builder mirrors to plant expected pids.
    """
    facts_per_doc = [n_facts // n_docs] * n_docs
    for i in range(n_facts % n_docs):
        facts_per_doc[i] += 1

    docs: list[Document] = []
    facts: list[PlantedFact] = []
    fact_no = 0
    for d in range(n_docs):
        doi = f"10.5555/doc{d:02d}"
        intro = Section(
            heading="Introduction",
            level=1,
            paragraphs=[
                "Biodegradable polyesters are studied widely. "
                "PHB is produced by bacterial fermentation in many reports."
            ],
        )
        thermal_pars: list[str] = []
        mech_pars: list[str] = []
        doc_fact_pids: list[tuple[int, str, str]] = []
        for j in range(facts_per_doc[d]):
            subject = f"matx{fact_no:03d}"
            obj = f"propz{fact_no:03d}"
            text = (
                f"{subject} increases {obj}. "
                f"The measured {obj} response of {subject} shifted near 180 °C [4]."
            )
            if j % 2 == 0:
                thermal_pars.append(text)
            else:
                mech_pars.append(text)
            doc_fact_pids.append((fact_no, subject, obj))
            fact_no += 1
        results = Section(
            heading="Results",
            level=1,
            subsections=[
                Section(heading="Thermal behavior", level=2, paragraphs=thermal_pars),
                Section(heading="Mechanical behavior", level=2, paragraphs=mech_pars),
            ],
        )
        doc = Document(
            doi=doi,
            title=f"Study {d} of biopolymer thermal response",
            abstract="We analyze biopolymer samples and their properties.",
            sections=[intro, results],
        )
        docs.append(doc)
        # Paragraph ids follow extract_paragraphs order: intro first, then
        # thermal paragraphs, then mechanical.
        n_thermal = len(thermal_pars)
        for j, (no, subject, obj) in enumerate(doc_fact_pids):
            slot = j // 2 + (1 if j % 2 == 0 else 1 + n_thermal)
            facts.append(
                PlantedFact(
                    qid=f"q{no:03d}",
                    subject=subject,
                    object=obj,
                    pid=f"{doi}#p{slot}",
                    doi=doi,
                    question=f"How does {subject} influence the measured {obj} response?",
                )
            )
    return docs, facts


@pytest.fixture(scope="session")
def synthetic_corpus():
    return build_synthetic_corpus()


@pytest.fixture
def built_store(synthetic_corpus, local_bundle) -> ScholarStore:
    """Fully built store: paragraphs, chunks, vectors, tuples, canonicals."""
    docs, _facts = synthetic_corpus
    store = ScholarStore()
    paragraphs = [p for doc in docs for p in extract_paragraphs(doc)]
    chunks = chunk_paragraphs(paragraphs)
    store.put_paragraphs(paragraphs)
    VectorIndex(store).index_chunks(chunks, local_bundle.chunk_embed)
    build_kg(store, local_bundle.generate)
    freq = canonical_mod.surface_frequencies(store)
    records = canonical_mod.embed_entities(
        sorted(freq), local_bundle.entity_embed, freq
    )
    canonicals, mapping = canonical_mod.canonicalize_all(records)
    canonical_mod.persist_canonicals(store, canonicals, mapping)
    return store
