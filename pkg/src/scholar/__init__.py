"""Literature-grounded question answering over a scientific corpus.

Two retrieval pipelines share one corpus store: dense cosine retrieval
over context-preserving chunks, and knowledge-graph retrieval with
entity canonicalization, hybrid string/semantic scoring, and
cross-encoder path re-ranking. Answers are citation-indexed and the
system abstains when the retrieved evidence is insufficient.
"""

__version__ = "0.1.0"
