"""Knowledge-graph construction: tuple extraction and storage.

Extraction asks the generation provider for one tuple per line in a
strict pipe-delimited format:

    subject | relation | object | reference_relation | reference_node

The two reference fields may be blank. Malformed lines are dropped and
counted, never repaired. For offline use a deterministic rule-based
extractor (regex -> tuple template, applied per sentence) emits the same
line format, so the whole graph pipeline runs without a model.
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Paragraph
from .providers import GenerationResult, ProviderConfig, ProviderError, generate
from .storage import ScholarStore

logger = logging.getLogger(__name__)


class IntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class KgTuple:
    tuple_id: str
    subject: str
    relation: str
    object: str
    reference_relation: str
    reference_node: str
    source_pid: str
    source_doi: str
    citation_markers: tuple[str, ...] = ()


def _tuple_id(subject: str, relation: str, obj: str, source_pid: str) -> str:
    key = f"{subject}\x1f{relation}\x1f{obj}\x1f{source_pid}"
    return "t" + hashlib.sha1(key.encode()).hexdigest()[:12]


def make_tuple(
    subject: str,
    relation: str,
    obj: str,
    source: Paragraph,
    reference_relation: str = "",
    reference_node: str = "",
) -> KgTuple:
    if not subject.strip() or not relation.strip() or not obj.strip():
        raise IntegrityError("subject, relation, and object must be non-empty")
    return KgTuple(
        tuple_id=_tuple_id(subject, relation, obj, source.pid),
        subject=subject.strip(),
        relation=relation.strip(),
        object=obj.strip(),
        reference_relation=reference_relation.strip(),
        reference_node=reference_node.strip(),
        source_pid=source.pid,
        source_doi=source.doi,
        citation_markers=tuple(find_citation_markers(source.text)),
    )


_MARKER_PATTERNS = [
    re.compile(r"\[\d+(?:,\s*\d+)*\]"),
    re.compile(r"\b(?:Fig\.?|Figure)\s*\d+[a-z]?", re.IGNORECASE),
    re.compile(r"\bTable\s*\d+[a-z]?", re.IGNORECASE),
]


def find_citation_markers(text: str) -> list[str]:
    found = []
    for pat in _MARKER_PATTERNS:
        found.extend(pat.findall(text))
    return found


# -- rule-based extraction (deterministic, offline) --------------------

#: Default rule table: sentence-level regex -> relation label. Subject
#: and object come from the named groups ``s`` and ``o``.
_ENTITY = r"[A-Za-z0-9][A-Za-z0-9()\[\]/°.%-]*(?:\s[A-Za-z0-9()\[\]/°.%-]+)?"
DEFAULT_RULES: list[tuple[str, str]] = [
    (rf"(?P<s>{_ENTITY}) increases (?P<o>{_ENTITY})", "increases"),
    (rf"(?P<s>{_ENTITY}) decreases (?P<o>{_ENTITY})", "decreases"),
    (rf"(?P<s>{_ENTITY}) improves (?P<o>{_ENTITY})", "improves"),
    (rf"(?P<s>{_ENTITY}) has (?:a |an )?property (?P<o>{_ENTITY})", "has property"),
    (rf"(?P<s>{_ENTITY}) is synthesized with (?P<o>{_ENTITY})", "synthesized with"),
    (rf"(?P<s>{_ENTITY}) is produced by (?P<o>{_ENTITY})", "produced by"),
    (rf"(?P<s>{_ENTITY}) contains (?P<o>{_ENTITY})", "contains"),
    (rf"(?P<s>{_ENTITY}) melts at (?P<o>{_ENTITY})", "melts at"),
]


class RuleBasedExtractor:
    """Regex rule table applied per sentence; the offline extractor."""

    def __init__(self, rules: list[tuple[str, str]] | None = None):
        self.rules = [
            (re.compile(pat), relation) for pat, relation in (rules or DEFAULT_RULES)
        ]

    def extract_lines(self, text: str) -> list[str]:
        lines = []
        for sentence in re.split(r"(?<=[.!?])\s+", text):
            for pat, relation in self.rules:
                for m in pat.finditer(sentence):
                    subject = m.group("s").strip().strip(".,;:")
                    obj = m.group("o").strip().strip(".,;:")
                    if subject and obj:
                        lines.append(f"{subject} | {relation} | {obj} | |")
        return lines


_DEFAULT_PROMPT = (
    "Extract relational facts from the paragraph below. Output one fact per "
    "line as: subject | relation | object | reference_relation | reference_node. "
    "Leave reference fields blank when absent. Output nothing else.\n\n"
    "PARAGRAPH:\n{paragraph}\n"
)


@dataclass
class ExtractionDiagnostics:
    paragraphs_failed: list[str] = field(default_factory=list)
    malformed_lines: int = 0


def parse_tuple_lines(
    lines: list[str], source: Paragraph, diagnostics: ExtractionDiagnostics | None = None
) -> list[KgTuple]:
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 3 or len(parts) > 5 or not all(parts[:3]):
            if diagnostics is not None:
                diagnostics.malformed_lines += 1
            logger.debug("dropping malformed tuple line: %r", line)
            continue
        parts += [""] * (5 - len(parts))
        out.append(
            make_tuple(parts[0], parts[1], parts[2], source, parts[3], parts[4])
        )
    return out


def extract_tuples(
    paragraph: Paragraph,
    gen_cfg: ProviderConfig,
    extractor: RuleBasedExtractor | None = None,
    prompt_template: str = _DEFAULT_PROMPT,
    diagnostics: ExtractionDiagnostics | None = None,
) -> list[KgTuple]:
    """Extract zero or more tuples from one paragraph.

    Local configs use the rule-based extractor; remote configs prompt the
    generation provider and parse its line-oriented response. Extraction
    never aborts a corpus build: a provider failure records a diagnostic
    and yields an empty list.
    """
    if not paragraph.text.strip():
        raise ValueError("paragraph text must be non-empty")
    if gen_cfg.is_local:
        lines = (extractor or RuleBasedExtractor()).extract_lines(paragraph.text)
        return parse_tuple_lines(lines, paragraph, diagnostics)
    try:
        result: GenerationResult = generate(
            prompt_template.format(paragraph=paragraph.text), gen_cfg
        )
    except ProviderError:
        if diagnostics is not None:
            diagnostics.paragraphs_failed.append(paragraph.pid)
        logger.warning("extraction failed for %s after retries", paragraph.pid)
        return []
    return parse_tuple_lines(result.text.splitlines(), paragraph, diagnostics)


def store_tuples(store: ScholarStore, tuples: list[KgTuple]) -> int:
    """Persist tuples; duplicates of (subject, relation, object,
    source_pid) are stored once. Returns store cardinality."""
    for t in tuples:
        if not t.subject or not t.relation or not t.object:
            raise IntegrityError("tuple fields subject/relation/object must be non-empty")
        if not store.has_paragraph(t.source_pid):
            raise IntegrityError(f"source_pid not in paragraph store: {t.source_pid}")
        store.put_tuple(
            (
                t.tuple_id,
                t.subject,
                t.relation,
                t.object,
                t.reference_relation,
                t.reference_node,
                t.source_pid,
                t.source_doi,
            ),
            list(t.citation_markers),
        )
    return store.tuple_count()


def corpus_stats(store: ScholarStore) -> tuple[int, int, dict[str, int]]:
    """(tuple count, distinct surface-form count over subjects+objects,
    per-DOI tuple counts)."""
    rows = store.iter_tuples()
    surfaces = set()
    per_doi: dict[str, int] = {}
    for r in rows:
        surfaces.add(r["subject"])
        surfaces.add(r["object"])
        per_doi[r["source_doi"]] = per_doi.get(r["source_doi"], 0) + 1
    return len(rows), len(surfaces), per_doi


def build_kg(
    store: ScholarStore,
    gen_cfg: ProviderConfig,
    extractor: RuleBasedExtractor | None = None,
) -> tuple[int, ExtractionDiagnostics]:
    """Extract and store tuples for every paragraph in the store."""
    diagnostics = ExtractionDiagnostics()
    for paragraph in store.iter_paragraphs():
        tuples = extract_tuples(
            paragraph, gen_cfg, extractor=extractor, diagnostics=diagnostics
        )
        if tuples:
            store_tuples(store, tuples)
    return store.tuple_count(), diagnostics


def load_rules(path: str | Path) -> list[tuple[str, str]]:
    """Load a rule table file: one ``regex<TAB>relation`` per line."""
    rules = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        pat, relation = line.split("\t", 1)
        rules.append((pat, relation))
    return rules
