"""Command-line interface mirroring the HTTP endpoints.

Provider settings come from an optional JSON config file
(``--config``); anything unset falls back to the deterministic local
providers, so every command works offline.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import canonical as canonical_mod
from .corpus import chunk_paragraphs, extract_paragraphs, filter_corpus, load_corpus
from .engine import GraphPipeline, ProviderBundle, VectorPipeline
from .evaluation import load_questions, run_eval
from .kg import build_kg as build_kg_fn
from .kg import corpus_stats
from .providers import ProviderConfig
from .retrieval import RetrievalParams
from .storage import ScholarStore
from .vector import VectorIndex


def _load_bundle(config_path: str | None) -> ProviderBundle:
    bundle = ProviderBundle.local()
    if not config_path:
        return bundle
    cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
    for key in ("chunk_embed", "entity_embed", "generate", "cross"):
        if key in cfg:
            role = "embed" if "embed" in key else ("cross_score" if key == "cross" else "generate")
            setattr(bundle, key, ProviderConfig(role=role, **cfg[key]))
    return bundle


@click.group()
@click.option("--store", "store_path", default="scholar.db", show_default=True,
              help="Path to the store database file.")
@click.option("--config", "config_path", default=None, help="Provider config JSON.")
@click.pass_context
def main(ctx, store_path, config_path):
    """Literature-grounded question answering over a scientific corpus."""
    ctx.ensure_object(dict)
    ctx.obj["store"] = ScholarStore(store_path)
    ctx.obj["bundle"] = _load_bundle(config_path)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--keywords", "keywords_path", default=None, type=click.Path(exists=True),
              help="File with one filter keyword per line.")
@click.pass_context
def ingest(ctx, corpus_path, keywords_path):
    """Load a line-delimited JSON corpus into paragraph and chunk stores."""
    store: ScholarStore = ctx.obj["store"]
    docs = load_corpus(corpus_path)
    if keywords_path:
        keywords = [
            line.strip()
            for line in Path(keywords_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        docs = filter_corpus(docs, keywords)
    paragraphs = [p for doc in docs for p in extract_paragraphs(doc)]
    chunks = chunk_paragraphs(paragraphs)
    store.put_paragraphs(paragraphs)
    store.put_chunks(chunks)
    click.echo(f"ingested {len(docs)} documents, {len(paragraphs)} paragraphs, {len(chunks)} chunks")


@main.command("index-vectors")
@click.pass_context
def index_vectors(ctx):
    """Embed all stored chunks into the vector index."""
    store: ScholarStore = ctx.obj["store"]
    count = VectorIndex(store).index_chunks(store.iter_chunks(), ctx.obj["bundle"].chunk_embed)
    click.echo(f"indexed {count} chunks")


@main.command("query-vector")
@click.argument("question")
@click.option("--k", default=8, show_default=True)
@click.pass_context
def query_vector(ctx, question, k):
    """Dense retrieval + grounded answer for one question."""
    pipeline = VectorPipeline(ctx.obj["store"], ctx.obj["bundle"], k=k)
    _print_outcome(pipeline.ask(question))


@main.command("build-kg")
@click.pass_context
def build_kg(ctx):
    """Extract relational tuples from every stored paragraph."""
    store: ScholarStore = ctx.obj["store"]
    count, diag = build_kg_fn(store, ctx.obj["bundle"].generate)
    click.echo(f"stored {count} tuples ({diag.malformed_lines} malformed lines dropped)")


@main.command()
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--coarse-k", default=2000, show_default=True)
@click.pass_context
def canonicalize(ctx, threshold, coarse_k):
    """Cluster entity surface forms into canonical nodes."""
    store: ScholarStore = ctx.obj["store"]
    freq = canonical_mod.surface_frequencies(store)
    records = canonical_mod.embed_entities(
        sorted(freq), ctx.obj["bundle"].entity_embed, freq
    )
    canonicals, mapping = canonical_mod.canonicalize_all(
        records, n_coarse=coarse_k, distance_threshold=threshold
    )
    canonical_mod.persist_canonicals(store, canonicals, mapping)
    click.echo(f"{len(mapping)} surfaces -> {len(canonicals)} canonical entities")


@main.command()
@click.argument("question")
@click.option("--pipeline", "pipeline_name", type=click.Choice(["vector", "graph"]),
              default="graph", show_default=True)
@click.option("--k", default=8, show_default=True)
@click.option("--alpha", default=0.7, show_default=True)
@click.option("--tau", default=0.6, show_default=True)
@click.option("--lambda", "lam", default=0.7, show_default=True)
@click.option("--max-tuples", default=300, show_default=True)
@click.option("--canon-threshold", default=0.7, show_default=True)
@click.pass_context
def query(ctx, question, pipeline_name, k, alpha, tau, lam, max_tuples, canon_threshold):
    """Answer one question with the selected pipeline."""
    store: ScholarStore = ctx.obj["store"]
    bundle = ctx.obj["bundle"]
    if pipeline_name == "vector":
        outcome = VectorPipeline(store, bundle, k=k).ask(question)
    else:
        params = RetrievalParams(
            alpha=alpha, tau=tau, lam=lam, max_tuples=max_tuples,
            canonical_sim_threshold=canon_threshold,
        )
        outcome = GraphPipeline(store, bundle, params=params).ask(question)
    _print_outcome(outcome)


@main.command("eval")
@click.option("--pipeline", "pipeline_name", type=click.Choice(["vector", "graph"]), required=True)
@click.option("--questions", "questions_path", required=True, type=click.Path(exists=True))
@click.option("--k", default=8, show_default=True)
@click.option("--max-tuples", default=300, show_default=True)
@click.option("--report", "report_path", default=None, help="Write the JSON report here.")
@click.pass_context
def eval_cmd(ctx, pipeline_name, questions_path, k, max_tuples, report_path):
    """Evaluate a pipeline on a line-delimited JSON question file."""
    store: ScholarStore = ctx.obj["store"]
    bundle = ctx.obj["bundle"]
    questions = load_questions(questions_path)
    if not questions:
        click.echo("no questions loaded", err=True)
        sys.exit(2)
    if pipeline_name == "vector":
        pipeline = VectorPipeline(store, bundle, k=k)
        context_limit = f"{k} paragraphs"
    else:
        pipeline = GraphPipeline(store, bundle, params=RetrievalParams(max_tuples=max_tuples))
        context_limit = f"{max_tuples} tuples"
    report = run_eval(
        questions, pipeline, pipeline_name, k=k,
        model_id=bundle.generate.model_id, context_limit=context_limit,
    )
    click.echo(report.to_table())
    if report_path:
        Path(report_path).write_text(report.to_json(), encoding="utf-8")
        click.echo(f"report written to {report_path}")


@main.command()
@click.pass_context
def stats(ctx):
    """Corpus, chunk, tuple, and canonical-entity counts."""
    store: ScholarStore = ctx.obj["store"]
    tuple_count, entity_count, per_doi = corpus_stats(store)
    click.echo(
        json.dumps(
            {
                "paragraphs": store.paragraph_count(),
                "chunks": store.chunk_count(),
                "tuples": tuple_count,
                "entities": entity_count,
                "canonical_entities": store.canonical_count(),
                "per_doi_tuple_counts": per_doi,
            },
            indent=2,
        )
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(ctx.obj["store"], ctx.obj["bundle"], synchronous_jobs=False)
    uvicorn.run(app, host=host, port=port)


def _print_outcome(outcome) -> None:
    a = outcome.answer
    click.echo(a.text)
    click.echo("")
    if a.abstained:
        click.echo("(abstained: insufficient evidence)")
    for item in outcome.evidence.items:
        click.echo(f"[{item.index}] ({item.kind}) {item.text[:120]}  source: {item.source_doi}")
    click.echo(
        f"-- pipeline={a.pipeline} latency={a.latency_seconds:.2f}s cost=${a.cost_dollars:.5f}"
    )


if __name__ == "__main__":
    main()
