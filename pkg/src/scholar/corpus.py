"""Corpus ingestion: parsed-article loading, keyword filtering, chunking.

Documents arrive as line-delimited JSON records (one document per line)
carrying a DOI, title, abstract, and an ordered tree of sections. They
are flattened into paragraphs with section-path provenance, then grouped
into context-preserving chunks: all paragraphs sharing the same
first-level subsection of a top-level section form one chunk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class ConfigurationError(ValueError):
    """Raised for invalid ingest configuration (e.g. empty keyword list)."""


@dataclass
class Section:
    heading: str
    level: int
    paragraphs: list[str] = field(default_factory=list)
    subsections: list["Section"] = field(default_factory=list)


@dataclass
class Document:
    doi: str
    title: str
    abstract: str
    sections: list[Section] = field(default_factory=list)


@dataclass(frozen=True)
class Paragraph:
    pid: str
    doi: str
    section_path: tuple[str, ...]
    ordinal: int
    text: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doi: str
    section_path: tuple[str, ...]
    member_pids: tuple[str, ...]
    text: str


#: Separator used when concatenating member paragraph texts into a chunk.
CHUNK_SEPARATOR = "\n"

#: Default whitespace-token budget above which a chunk is split at
#: paragraph boundaries into sequential sub-chunks.
DEFAULT_CHUNK_TOKEN_BUDGET = 8000


def _section_from_dict(d: dict) -> Section:
    return Section(
        heading=d["heading"],
        level=int(d.get("level", 1)),
        paragraphs=list(d.get("paragraphs", [])),
        subsections=[_section_from_dict(s) for s in d.get("subsections", [])],
    )


def document_from_dict(d: dict) -> Document:
    return Document(
        doi=d["doi"],
        title=d.get("title", ""),
        abstract=d.get("abstract", ""),
        sections=[_section_from_dict(s) for s in d.get("sections", [])],
    )


def document_to_dict(doc: Document) -> dict:
    def sec(s: Section) -> dict:
        return {
            "heading": s.heading,
            "level": s.level,
            "paragraphs": list(s.paragraphs),
            "subsections": [sec(c) for c in s.subsections],
        }

    return {
        "doi": doc.doi,
        "title": doc.title,
        "abstract": doc.abstract,
        "sections": [sec(s) for s in doc.sections],
    }


def load_corpus(path: str | Path) -> list[Document]:
    """Load a line-delimited JSON corpus file (UTF-8, one document per line)."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                docs.append(document_from_dict(json.loads(line)))
    return docs


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_dict(doc)) + "\n")


def filter_corpus(docs: list[Document], keywords: list[str]) -> list[Document]:
    """Keep documents whose title or abstract contains any keyword.

    Matching is case-insensitive substring matching over title and
    abstract only; document body text is never consulted. Input order is
    preserved.
    """
    if not keywords:
        raise ConfigurationError("keyword list must be non-empty")
    lowered = [kw.lower() for kw in keywords]
    kept = []
    for doc in docs:
        haystack = f"{doc.title}\n{doc.abstract}".lower()
        if any(kw in haystack for kw in lowered):
            kept.append(doc)
    return kept


def _walk_sections(
    sections: list[Section], path: tuple[str, ...]
) -> Iterator[tuple[tuple[str, ...], Section]]:
    for sec in sections:
        sec_path = path + (sec.heading,)
        yield sec_path, sec
        yield from _walk_sections(sec.subsections, sec_path)


def extract_paragraphs(doc: Document) -> list[Paragraph]:
    """Flatten a document's section tree into ordered paragraphs.

    Paragraph ids are deterministic: ``<doi>#p<index>`` with a running
    index in document order. The ordinal is the paragraph's position
    within its owning section node.
    """
    out: list[Paragraph] = []
    idx = 0
    for sec_path, sec in _walk_sections(doc.sections, ()):
        for ordinal, text in enumerate(sec.paragraphs):
            normalized = " ".join(text.split())
            if not normalized:
                continue
            out.append(
                Paragraph(
                    pid=f"{doc.doi}#p{idx}",
                    doi=doc.doi,
                    section_path=sec_path,
                    ordinal=ordinal,
                    text=text,
                )
            )
            idx += 1
    return out


def _pid_index(pid: str) -> int:
    return int(pid.rsplit("#p", 1)[1])


def _group_key(p: Paragraph) -> tuple[str, ...]:
    # First-level subsection when present, else the top-level section.
    return p.section_path[:2] if len(p.section_path) >= 2 else p.section_path[:1]


def _count_tokens(texts: list[str]) -> int:
    return sum(len(t.split()) for t in texts)


def chunk_paragraphs(
    paragraphs: list[Paragraph],
    token_budget: int = DEFAULT_CHUNK_TOKEN_BUDGET,
) -> list[Chunk]:
    """Group paragraphs into chunks by (doi, top section, first subsection).

    Paragraphs directly under a top-level section with no subsection form
    their own group keyed by that section. Within a group, member texts
    are joined in document order with a single newline. Groups whose
    concatenated text exceeds ``token_budget`` whitespace tokens are split
    at paragraph boundaries into sequential sub-chunks.
    """
    groups: dict[tuple[str, tuple[str, ...]], list[Paragraph]] = {}
    order: list[tuple[str, tuple[str, ...]]] = []
    for p in sorted(paragraphs, key=lambda p: (p.doi, _pid_index(p.pid))):
        key = (p.doi, _group_key(p))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(p)

    chunks: list[Chunk] = []
    counters: dict[str, int] = {}
    for key in order:
        doi, path = key
        members = groups[key]
        # Split oversized groups at paragraph boundaries.
        batches: list[list[Paragraph]] = []
        current: list[Paragraph] = []
        for p in members:
            if current and _count_tokens([m.text for m in current + [p]]) > token_budget:
                batches.append(current)
                current = []
            current.append(p)
        if current:
            batches.append(current)
        for batch in batches:
            idx = counters.get(doi, 0)
            counters[doi] = idx + 1
            chunks.append(
                Chunk(
                    chunk_id=f"{doi}#c{idx}",
                    doi=doi,
                    section_path=path,
                    member_pids=tuple(m.pid for m in batch),
                    text=CHUNK_SEPARATOR.join(m.text for m in batch),
                )
            )
    return chunks
