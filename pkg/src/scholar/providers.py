"""Model provider gateway: embedding, generation, and cross-encoder scoring.

Each of the three model roles has a remote JSON-over-HTTP client and a
deterministic local fallback, behind one interface, so every downstream
stage is testable offline:

* embeddings — hashed bag-of-tokens (lowercase, split on
  non-alphanumerics, hash each token into ``dim`` buckets with a fixed
  seed, L2-normalize);
* generation — a template engine that answers only from the prompt: an
  explicit ``ANSWER:`` marker wins, otherwise evidence items that share
  content words with the question are cited, otherwise the abstention
  sentence is returned;
* cross scoring — normalized distinct-token overlap between query and
  passage.

Remote endpoints speak a small JSON contract (see README): requests
carry ``model_id`` plus inputs, responses carry vectors, or message text
with usage counts, or scores.
"""
from __future__ import annotations

import logging
import os
import re
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

logger = logging.getLogger(__name__)

# Default model identifiers for remote deployments; configuration values,
# not logic. The local fallbacks ignore them.
DEFAULT_CHUNK_EMBED_MODEL = "Qwen/Qwen3-Embedding-4B"
DEFAULT_ENTITY_EMBED_MODEL = "all-MiniLM-L6-v2"
DEFAULT_CROSS_ENCODER_MODEL = "cross-encoder/ms-marco-MiniLM-L-6-v2"
DEFAULT_GENERATION_MODELS = ("gpt-4o-mini", "llama-3.1-70b")

LOCAL_ENDPOINT = "local"
_HASH_SEED = 1299721
ABSTENTION_SENTENCE = "I do not know"


class ProviderError(RuntimeError):
    """Remote provider failure after the configured retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass
class ProviderConfig:
    role: str  # embed | generate | cross_score
    endpoint: str = LOCAL_ENDPOINT
    model_id: str = "local"
    price_per_1k_prompt: float = 0.0
    price_per_1k_completion: float = 0.0
    timeout_seconds: float = 30.0
    dim: int = 256  # local-fallback embedding width
    max_retries: int = 3
    backoff_seconds: float = 1.0
    api_key_env: str = ""
    abstention_sentence: str = ABSTENTION_SENTENCE

    def __post_init__(self):
        if self.role not in ("embed", "generate", "cross_score"):
            raise ValueError(f"unknown provider role: {self.role!r}")
        if self.price_per_1k_prompt < 0 or self.price_per_1k_completion < 0:
            raise ValueError("prices must be >= 0")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be > 0")

    @property
    def is_local(self) -> bool:
        return self.endpoint == LOCAL_ENDPOINT


@dataclass
class EmbeddingVector:
    values: np.ndarray
    model_id: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass
class GenerationResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_seconds: float


def cosine(a: EmbeddingVector | np.ndarray, b: EmbeddingVector | np.ndarray) -> float:
    """Cosine similarity; defined as 0.0 when either vector is zero."""
    va = a.values if isinstance(a, EmbeddingVector) else a
    vb = b.values if isinstance(b, EmbeddingVector) else b
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def count_tokens(text: str) -> int:
    """Whitespace token count; the local-provider usage estimator."""
    return len(text.split())


def _hash_bucket(token: str, dim: int) -> int:
    return zlib.crc32(f"{_HASH_SEED}:{token}".encode()) % dim


def _local_embed(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float32)
    for tok in tokenize(text):
        vec[_hash_bucket(tok, dim)] += 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        logger.warning("embedding empty text -> zero vector")
        return vec
    return (vec / norm).astype(np.float32)


def _with_retries(cfg: ProviderConfig, fn):
    last = None
    for attempt in range(1, cfg.max_retries + 1):
        try:
            return fn()
        except (requests.RequestException, ValueError) as exc:
            last = exc
            if attempt < cfg.max_retries:
                time.sleep(cfg.backoff_seconds * 2 ** (attempt - 1))
    raise ProviderError(f"provider call failed: {last}", attempts=cfg.max_retries)


def _headers(cfg: ProviderConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def embed_texts(texts: Sequence[str], cfg: ProviderConfig) -> list[EmbeddingVector]:
    """Embed a batch of texts, one L2-normalized vector per text in order."""
    if not texts:
        raise ValueError("texts must be a non-empty list")
    if cfg.role != "embed":
        raise ValueError("config role must be 'embed'")
    if cfg.is_local:
        return [EmbeddingVector(_local_embed(t, cfg.dim), cfg.model_id) for t in texts]

    def call():
        resp = requests.post(
            cfg.endpoint,
            json={"model_id": cfg.model_id, "inputs": list(texts)},
            headers=_headers(cfg),
            timeout=cfg.timeout_seconds,
        )
        resp.raise_for_status()
        vectors = resp.json()["vectors"]
        if len(vectors) != len(texts):
            raise ValueError("provider returned wrong vector count")
        return vectors

    out = []
    for raw in _with_retries(cfg, call):
        vec = np.asarray(raw, dtype=np.float32)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        out.append(EmbeddingVector(vec, cfg.model_id))
    return out


_ANSWER_MARKER = re.compile(r"ANSWER:\s*(.+)")
_EVIDENCE_LINE = re.compile(r"^\[(\d+)\]\s+(.*?)(?:\s+\(source:[^)]*\))?$")
_QUESTION_LINE = re.compile(r"^QUESTION:\s*(.*)$", re.MULTILINE)

# Minimal stopword set for the stub generator's overlap heuristic only;
# query preprocessing uses the full shipped list.
_STUB_STOPWORDS = frozenset(
    "a an and are be by can could do does for from how in is it of on or "
    "that the this to was were what when where which why will with about".split()
)


def _local_generate(prompt: str, cfg: ProviderConfig) -> str:
    marker = _ANSWER_MARKER.search(prompt)
    if marker:
        return marker.group(1).strip()
    qmatch = _QUESTION_LINE.search(prompt)
    question_tokens = {
        t for t in tokenize(qmatch.group(1)) if t not in _STUB_STOPWORDS
    } if qmatch else set()
    cited = []
    for line in prompt.splitlines():
        m = _EVIDENCE_LINE.match(line.strip())
        if not m:
            continue
        overlap = question_tokens & set(tokenize(m.group(2)))
        if overlap - _STUB_STOPWORDS:
            cited.append(int(m.group(1)))
    if not cited:
        return cfg.abstention_sentence
    refs = " ".join(f"[{i}]" for i in cited)
    return f"The retrieved evidence {refs} addresses the question."


def generate(prompt: str, cfg: ProviderConfig) -> GenerationResult:
    """Run the generation provider on a prompt, recording usage and latency."""
    if cfg.role != "generate":
        raise ValueError("config role must be 'generate'")
    if not prompt or not prompt.strip():
        raise ValueError("prompt must be non-empty")
    start = time.perf_counter()
    if cfg.is_local:
        text = _local_generate(prompt, cfg)
        return GenerationResult(
            text=text,
            prompt_tokens=count_tokens(prompt),
            completion_tokens=count_tokens(text),
            latency_seconds=time.perf_counter() - start,
        )

    def call():
        resp = requests.post(
            cfg.endpoint,
            json={"model_id": cfg.model_id, "prompt": prompt},
            headers=_headers(cfg),
            timeout=cfg.timeout_seconds,
        )
        resp.raise_for_status()
        return resp.json()

    data = _with_retries(cfg, call)
    usage = data.get("usage", {})
    return GenerationResult(
        text=data["text"],
        prompt_tokens=int(usage.get("prompt_tokens", count_tokens(prompt))),
        completion_tokens=int(usage.get("completion_tokens", count_tokens(data["text"]))),
        latency_seconds=time.perf_counter() - start,
    )


def cross_score(query: str, passages: Sequence[str], cfg: ProviderConfig) -> list[float]:
    """Score each (query, passage) pair; raw scores, order-aligned."""
    if cfg.role != "cross_score":
        raise ValueError("config role must be 'cross_score'")
    if not passages:
        raise ValueError("passages must be non-empty")
    if cfg.is_local:
        qtokens = set(tokenize(query))
        if not qtokens:
            return [0.0] * len(passages)
        return [
            len(qtokens & set(tokenize(p))) / len(qtokens) for p in passages
        ]

    def call():
        resp = requests.post(
            cfg.endpoint,
            json={"model_id": cfg.model_id, "query": query, "passages": list(passages)},
            headers=_headers(cfg),
            timeout=cfg.timeout_seconds,
        )
        resp.raise_for_status()
        scores = resp.json()["scores"]
        if len(scores) != len(passages):
            raise ValueError("provider returned wrong score count")
        return [float(s) for s in scores]

    return _with_retries(cfg, call)


def cost_of(result: GenerationResult, cfg: ProviderConfig) -> float:
    """Dollar cost of one generation under the configured per-1k prices."""
    return (
        result.prompt_tokens / 1000.0 * cfg.price_per_1k_prompt
        + result.completion_tokens / 1000.0 * cfg.price_per_1k_completion
    )
