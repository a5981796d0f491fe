"""Query preprocessing: tokenization, light lemmatization, stopword
removal, and domain-entity recognition.

Domain entities (polymer abbreviations, parenthesized copolymer
notation, chemical formulas, numbers with units) are recognized first
from a versioned pattern file and kept intact: they bypass both the
stopword list and the lemmatizer, so scientifically meaningful terms are
never mangled or dropped.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class EmptyQueryError(ValueError):
    """The query reduced to zero keywords; caller should ask to refine."""


@dataclass(frozen=True)
class QueryKeywords:
    raw: str
    keywords: tuple[str, ...]
    domain_entities: tuple[str, ...]


def _load_data_lines(name: str, path: str | Path | None = None) -> list[str]:
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("scholar.data").joinpath(name).read_text(encoding="utf-8")
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    ]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    return frozenset(_load_data_lines("stopwords.txt", path))


def load_domain_patterns(path: str | Path | None = None) -> list[re.Pattern]:
    return [re.compile(p) for p in _load_data_lines("domain_patterns.txt", path)]


_STOPWORDS = load_stopwords()
_DOMAIN_PATTERNS = load_domain_patterns()

# Irregular or otherwise rule-breaking forms the suffix rules must not touch.
_LEMMA_EXCEPTIONS = {
    "properties": "property",
    "studies": "study",
    "analyses": "analysis",
    "species": "species",
    "glass": "glass",
    "gas": "gas",
    "process": "process",
    "stress": "stress",
    "thickness": "thickness",
    "data": "data",
    "media": "media",
}


def lemmatize(token: str) -> str:
    """Suffix-stripping lemmatizer for plurals and simple past forms."""
    if token in _LEMMA_EXCEPTIONS:
        return _LEMMA_EXCEPTIONS[token]
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 5 and token.endswith("ed") and not token.endswith("eed"):
        return token[:-2]
    if (
        len(token) > 3
        and token.endswith("s")
        and not token.endswith(("ss", "us", "is"))
    ):
        return token[:-1]
    return token


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def find_domain_entities(lowered: str, patterns: list[re.Pattern]) -> list[tuple[int, int, str]]:
    """Non-overlapping domain-pattern match spans, longest match first."""
    candidates: list[tuple[int, int, str]] = []
    for pat in patterns:
        for m in pat.finditer(lowered):
            start, end = m.span()
            if start > 0 and _is_word_char(lowered[start - 1]):
                continue
            if end < len(lowered) and _is_word_char(lowered[end]):
                continue
            candidates.append((start, end, m.group()))
    # Prefer longer matches; drop anything overlapping an accepted span.
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0]))
    accepted: list[tuple[int, int, str]] = []
    for start, end, text in candidates:
        if all(end <= s or start >= e for s, e, _ in accepted):
            accepted.append((start, end, text))
    accepted.sort(key=lambda c: c[0])
    return accepted


def preprocess_query(
    raw: str,
    stopwords: frozenset[str] = _STOPWORDS,
    patterns: list[re.Pattern] | None = None,
) -> QueryKeywords:
    """Lowercase, recognize domain entities, tokenize, lemmatize, and
    drop stopwords; raises EmptyQueryError when nothing survives."""
    if not raw or not raw.strip():
        raise ValueError("query must be non-empty")
    patterns = _DOMAIN_PATTERNS if patterns is None else patterns
    lowered = raw.lower()
    spans = find_domain_entities(lowered, patterns)

    pieces: list[tuple[str, bool]] = []  # (token, is_domain)
    cursor = 0
    for start, end, text in spans:
        pieces.extend((t, False) for t in re.findall(r"[0-9a-z']+", lowered[cursor:start]))
        pieces.append((text, True))
        cursor = end
    pieces.extend((t, False) for t in re.findall(r"[0-9a-z']+", lowered[cursor:]))

    keywords: list[str] = []
    domain: list[str] = []
    seen: set[str] = set()
    for token, is_domain in pieces:
        if is_domain:
            kw = token
        else:
            token = token.strip("'")
            if not token or token in stopwords:
                continue
            kw = lemmatize(token)
        if kw not in seen:
            seen.add(kw)
            keywords.append(kw)
            if is_domain:
                domain.append(kw)
    if not keywords:
        raise EmptyQueryError("query contains no usable keywords; please refine")
    return QueryKeywords(
        raw=raw, keywords=tuple(keywords), domain_entities=tuple(domain)
    )


def keyword_pattern(keyword: str) -> re.Pattern:
    """Case-insensitive whole-token pattern for one keyword.

    Lookarounds rather than \\b so that keywords ending in punctuation
    (e.g. a parenthesized copolymer name) still anchor correctly, and so
    "phb" never matches inside "phbv".
    """
    return re.compile(
        rf"(?<![0-9A-Za-z]){re.escape(keyword)}(?![0-9A-Za-z])", re.IGNORECASE
    )
