"""Evaluation harness: recall metrics, expert accuracy, latency and cost
aggregation, and the per-pipeline report.

Two recall flavors are computed per question: paragraph-level recall
(the expected paragraph id appears among the pids of the top-K retrieved
contexts) and paper-level recall (any top-K context originates from the
expected DOI). For the graph pipeline a "context" is a final tuple's
source paragraph; provenance pids are deduplicated in rank order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import QueryOutcome, RetrievedContext


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalQuestion:
    qid: str
    question: str
    expected_pid: str
    expected_doi: str


@dataclass
class EvalRecord:
    qid: str
    pipeline: str
    retrieved_pids: list[str]
    retrieved_dois: list[str]
    recall_at_k: int
    recall_pid_at_k: int
    abstained: bool
    citations: list[int]
    accuracy: int | None = None
    latency_seconds: float = 0.0
    cost_dollars: float = 0.0
    failed: bool = False
    error: str = ""


def recall_at_k(expected_pid: str, retrieved_pids: list[str], k: int) -> int:
    """1 iff the expected pid is among the first min(k, len) retrieved."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(expected_pid in retrieved_pids[:k])


def recall_pid_at_k(expected_doi: str, retrieved_dois: list[str], k: int) -> int:
    """1 iff any of the first k retrieved items comes from the expected paper."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(expected_doi in retrieved_dois[:k])


def mean_metric(values: list[int | float]) -> float:
    if not values:
        raise UndefinedMetricError("mean of zero values is undefined")
    return sum(values) / len(values)


def context_recall_flags(
    question: EvalQuestion, contexts: list[RetrievedContext], k: int
) -> tuple[int, int, list[str], list[str]]:
    """Recall flags over the first k retrieved contexts, plus the
    deduplicated provenance pid/doi lists in rank order."""
    top = contexts[:k]
    pids: list[str] = []
    for ctx in top:
        for pid in ctx.pids:
            if pid not in pids:
                pids.append(pid)
    dois = [ctx.doi for ctx in top]
    hit = int(question.expected_pid in pids)
    pid_hit = recall_pid_at_k(question.expected_doi, dois, k)
    return hit, pid_hit, pids, dois


@dataclass
class EvalReport:
    pipeline: str
    model_id: str
    context_limit: str
    records: list[EvalRecord] = field(default_factory=list)
    accuracy_audit: list[tuple[str, int]] = field(default_factory=list)

    def record_accuracy(self, qid: str, verdict: int) -> EvalRecord:
        """Store a human 0/1 verdict; last write wins, audit row kept."""
        if verdict not in (0, 1):
            raise ValueError("verdict must be 0 or 1")
        for rec in self.records:
            if rec.qid == qid:
                self.accuracy_audit.append((qid, verdict))
                rec.accuracy = verdict
                return rec
        raise KeyError(f"unknown qid: {qid}")

    @property
    def ok_records(self) -> list[EvalRecord]:
        return [r for r in self.records if not r.failed]

    def aggregates(self) -> dict:
        ok = self.ok_records
        agg: dict = {
            "pipeline": self.pipeline,
            "model": self.model_id,
            "context_limit": self.context_limit,
            "questions": len(self.records),
            "failed": len(self.records) - len(ok),
        }
        if ok:
            agg["recall"] = mean_metric([r.recall_at_k for r in ok])
            agg["recall_pid"] = mean_metric([r.recall_pid_at_k for r in ok])
            agg["avg_response_time_s"] = mean_metric([r.latency_seconds for r in ok])
            agg["avg_total_cost_usd"] = mean_metric([r.cost_dollars for r in ok])
            scored = [r.accuracy for r in ok if r.accuracy is not None]
            agg["accuracy"] = mean_metric(scored) if scored else None
        return agg

    def to_json(self) -> str:
        return json.dumps(
            {
                "aggregates": self.aggregates(),
                "records": [r.__dict__ for r in self.records],
            },
            indent=2,
        )

    def to_table(self) -> str:
        """Human-readable aggregate table: one row per pipeline/model."""
        agg = self.aggregates()
        headers = [
            "Models",
            "Context limit",
            "Recall",
            "Recall PID",
            "Accuracy",
            "Avg. response time (s)",
            "Avg. total cost ($)",
        ]
        acc = agg.get("accuracy")
        row = [
            f"{self.pipeline}/{self.model_id}",
            self.context_limit,
            f"{agg.get('recall', float('nan')):.3f}",
            f"{agg.get('recall_pid', float('nan')):.3f}",
            f"{acc:.3f}" if acc is not None else "-",
            f"{agg.get('avg_response_time_s', 0.0):.2f}",
            f"{agg.get('avg_total_cost_usd', 0.0):.5f}",
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        vals = "  ".join(v.ljust(w) for v, w in zip(row, widths))
        return f"{line}\n{vals}"


def load_questions(path: str | Path) -> list[EvalQuestion]:
    """Load line-delimited JSON question records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out.append(
                EvalQuestion(
                    qid=d["qid"],
                    question=d["question"],
                    expected_pid=d["expected_pid"],
                    expected_doi=d["expected_doi"],
                )
            )
    return out


def run_eval(
    questions: list[EvalQuestion],
    pipeline,
    pipeline_name: str,
    k: int = 8,
    model_id: str = "local",
    context_limit: str = "",
) -> EvalReport:
    """Run every question through a pipeline and assemble the report.

    A pipeline failure on one question marks that record failed and
    excludes it from the aggregate means; it never aborts the run.
    """
    report = EvalReport(
        pipeline=pipeline_name,
        model_id=model_id,
        context_limit=context_limit or f"k={k}",
    )
    for q in questions:
        try:
            outcome: QueryOutcome = pipeline.ask(q.question)
        except Exception as exc:  # noqa: BLE001 - recorded, not raised
            report.records.append(
                EvalRecord(
                    qid=q.qid,
                    pipeline=pipeline_name,
                    retrieved_pids=[],
                    retrieved_dois=[],
                    recall_at_k=0,
                    recall_pid_at_k=0,
                    abstained=True,
                    citations=[],
                    failed=True,
                    error=str(exc),
                )
            )
            continue
        hit, pid_hit, pids, dois = context_recall_flags(q, outcome.contexts, k)
        report.records.append(
            EvalRecord(
                qid=q.qid,
                pipeline=pipeline_name,
                retrieved_pids=pids,
                retrieved_dois=dois,
                recall_at_k=hit,
                recall_pid_at_k=pid_hit,
                abstained=outcome.answer.abstained,
                citations=list(outcome.answer.citations),
                latency_seconds=outcome.answer.latency_seconds,
                cost_dollars=outcome.answer.cost_dollars,
            )
        )
    return report
