"""Evidence assembly, grounded generation, and citation validation.

The prompt is built from a versioned template with ``{evidence}``,
``{query}``, and ``{abstention}`` placeholders. Evidence lines are
byte-equal to the stored chunk/tuple renderings, numbered from 1, and
never reordered; when the prompt exceeds the provider context budget the
lowest-scored items are dropped (ties resolved toward later indices)
while surviving indices stay unchanged.

Abstention is structural for empty evidence: no provider call is made
and the answer carries the configured abstention sentence.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .providers import (
    ProviderConfig,
    ProviderError,
    cost_of,
    count_tokens,
    generate,
)


@dataclass(frozen=True)
class EvidenceItem:
    index: int
    kind: str  # "chunk" | "tuple"
    text: str
    source_doi: str
    source_pids: tuple[str, ...]
    score: float
    ref: str = ""  # opaque provenance token usable with the evidence endpoint


@dataclass
class EvidenceSet:
    items: list[EvidenceItem] = field(default_factory=list)

    def __post_init__(self):
        for pos, item in enumerate(self.items, start=1):
            if item.index != pos:
                raise ValueError("evidence indices must be contiguous from 1")
            if not item.source_pids:
                raise ValueError("every evidence item needs >= 1 source pid")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def indices(self) -> set[int]:
        return {item.index for item in self.items}


@dataclass
class Answer:
    text: str
    citations: list[int]
    abstained: bool
    pipeline: str  # "vector" | "graph"
    latency_seconds: float = 0.0
    cost_dollars: float = 0.0
    rerank_skipped: bool = False
    error: str = ""


@dataclass(frozen=True)
class CitationViolation:
    kind: str  # "dangling" | "abstained_with_citations"
    citation: int | None
    detail: str


def load_prompt_template(path: str | Path | None = None) -> str:
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("scholar.data").joinpath("prompt_default.txt").read_text(
            encoding="utf-8"
        )
    for placeholder in ("{evidence}", "{query}"):
        if placeholder not in text:
            raise ValueError(f"prompt template missing {placeholder}")
    return text


def render_evidence_line(item: EvidenceItem) -> str:
    return f"[{item.index}] {item.text} (source: {item.source_doi})"


def build_context(
    evidence: EvidenceSet,
    query: str,
    template: str | None = None,
    token_budget: int | None = None,
    abstention_sentence: str = "I do not know",
) -> str:
    """Assemble the generation prompt from numbered evidence and the query."""
    template = template if template is not None else load_prompt_template()
    items = list(evidence.items)

    def prompt_for(selected: list[EvidenceItem]) -> str:
        lines = "\n".join(render_evidence_line(i) for i in selected)
        if not selected:
            lines = "(no evidence retrieved)"
        return template.format(
            evidence=lines, query=query, abstention=abstention_sentence
        )

    prompt = prompt_for(items)
    if token_budget is not None:
        while items and count_tokens(prompt) > token_budget:
            drop = min(items, key=lambda i: (i.score, -i.index))
            items = [i for i in items if i.index != drop.index]
            prompt = prompt_for(items)
    return prompt


_CITATION = re.compile(r"\[(\d+)\]")


def parse_citations(text: str) -> list[int]:
    seen: set[int] = set()
    out: list[int] = []
    for m in _CITATION.finditer(text):
        idx = int(m.group(1))
        if idx not in seen:
            seen.add(idx)
            out.append(idx)
    return out


def synthesize(
    query: str,
    evidence: EvidenceSet,
    gen_cfg: ProviderConfig,
    pipeline: str = "vector",
    template: str | None = None,
    token_budget: int | None = None,
    rerank_skipped: bool = False,
) -> Answer:
    """Generate a citation-grounded answer, or abstain.

    Empty evidence forces abstention without any provider call. Local
    (stub) providers are additionally gated on citation consistency:
    dangling indices are stripped rather than returned.
    """
    abstention = gen_cfg.abstention_sentence
    if len(evidence) == 0:
        return Answer(
            text=abstention,
            citations=[],
            abstained=True,
            pipeline=pipeline,
            rerank_skipped=rerank_skipped,
        )
    prompt = build_context(
        evidence, query, template=template, token_budget=token_budget,
        abstention_sentence=abstention,
    )
    try:
        result = generate(prompt, gen_cfg)
    except ProviderError as exc:
        return Answer(
            text="",
            citations=[],
            abstained=True,
            pipeline=pipeline,
            rerank_skipped=rerank_skipped,
            error=f"generation failed after {exc.attempts} attempts: {exc}",
        )
    abstained = result.text.strip().startswith(abstention)
    citations = [] if abstained else parse_citations(result.text)
    if gen_cfg.is_local:
        citations = [c for c in citations if c in evidence.indices]
    return Answer(
        text=result.text,
        citations=citations,
        abstained=abstained,
        pipeline=pipeline,
        latency_seconds=result.latency_seconds,
        cost_dollars=cost_of(result, gen_cfg),
        rerank_skipped=rerank_skipped,
    )


def validate_citations(
    answer: Answer, evidence: EvidenceSet
) -> list[CitationViolation]:
    """Enumerate dangling citation indices and abstention/citation clashes."""
    violations = []
    valid = evidence.indices
    for c in answer.citations:
        if c not in valid:
            violations.append(
                CitationViolation(
                    kind="dangling",
                    citation=c,
                    detail=f"citation [{c}] has no evidence item",
                )
            )
    if answer.abstained and answer.citations:
        violations.append(
            CitationViolation(
                kind="abstained_with_citations",
                citation=None,
                detail="abstained answer must not carry citations",
            )
        )
    return violations
