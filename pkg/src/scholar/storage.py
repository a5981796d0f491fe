"""Single-file relational store for paragraphs, chunks, vectors, tuples,
canonical entities, and expert feedback.

Vectors are stored as little-endian float32 blobs with the dimension in a
separate column. Writes go through short-lived transactions so readers
always see the last committed snapshot.
"""
from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path

import numpy as np

from .corpus import Chunk, Paragraph

_SCHEMA = """
CREATE TABLE IF NOT EXISTS paragraphs (
    pid TEXT PRIMARY KEY,
    doi TEXT NOT NULL,
    section_path TEXT NOT NULL,
    ordinal INTEGER NOT NULL,
    text TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS chunks (
    chunk_id TEXT PRIMARY KEY,
    doi TEXT NOT NULL,
    section_path TEXT NOT NULL,
    member_pids TEXT NOT NULL,
    text TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS chunk_vectors (
    chunk_id TEXT PRIMARY KEY REFERENCES chunks(chunk_id),
    dim INTEGER NOT NULL,
    vec BLOB NOT NULL,
    model_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tuples (
    tuple_id TEXT PRIMARY KEY,
    subject TEXT NOT NULL,
    relation TEXT NOT NULL,
    object TEXT NOT NULL,
    reference_relation TEXT NOT NULL DEFAULT '',
    reference_node TEXT NOT NULL DEFAULT '',
    source_pid TEXT NOT NULL,
    source_doi TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tuple_markers (
    tuple_id TEXT NOT NULL REFERENCES tuples(tuple_id),
    marker TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS canonical_entities (
    canonical_id TEXT PRIMARY KEY,
    label TEXT NOT NULL,
    member_count INTEGER NOT NULL,
    is_numeric INTEGER NOT NULL,
    dim INTEGER NOT NULL,
    centroid BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS canonical_map (
    surface TEXT PRIMARY KEY,
    canonical_id TEXT NOT NULL REFERENCES canonical_entities(canonical_id)
);
CREATE TABLE IF NOT EXISTS feedback (
    feedback_id INTEGER PRIMARY KEY AUTOINCREMENT,
    ref TEXT NOT NULL,
    pipeline TEXT NOT NULL DEFAULT '',
    content_score INTEGER NOT NULL,
    citation_score INTEGER NOT NULL,
    notes TEXT NOT NULL DEFAULT '',
    rater_id TEXT NOT NULL DEFAULT ''
);
"""


def vector_to_blob(vec: np.ndarray) -> bytes:
    return np.asarray(vec, dtype="<f4").tobytes()


def blob_to_vector(blob: bytes, dim: int) -> np.ndarray:
    vec = np.frombuffer(blob, dtype="<f4")
    if vec.shape[0] != dim:
        raise ValueError(f"vector blob length {vec.shape[0]} != dim {dim}")
    return vec


class ScholarStore:
    """All persistent state behind one SQLite file (or ':memory:')."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.Lock()
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # -- paragraphs ----------------------------------------------------

    def put_paragraphs(self, paragraphs: list[Paragraph]) -> int:
        with self._lock:
            self._conn.executemany(
                "INSERT OR REPLACE INTO paragraphs VALUES (?,?,?,?,?)",
                [
                    (p.pid, p.doi, json.dumps(list(p.section_path)), p.ordinal, p.text)
                    for p in paragraphs
                ],
            )
            self._conn.commit()
        return self.paragraph_count()

    def get_paragraph(self, pid: str) -> Paragraph | None:
        row = self._conn.execute(
            "SELECT * FROM paragraphs WHERE pid = ?", (pid,)
        ).fetchone()
        if row is None:
            return None
        return Paragraph(
            pid=row["pid"],
            doi=row["doi"],
            section_path=tuple(json.loads(row["section_path"])),
            ordinal=row["ordinal"],
            text=row["text"],
        )

    def iter_paragraphs(self) -> list[Paragraph]:
        rows = self._conn.execute("SELECT * FROM paragraphs ORDER BY pid").fetchall()
        return [
            Paragraph(
                pid=r["pid"],
                doi=r["doi"],
                section_path=tuple(json.loads(r["section_path"])),
                ordinal=r["ordinal"],
                text=r["text"],
            )
            for r in rows
        ]

    def paragraph_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM paragraphs").fetchone()[0]

    def has_paragraph(self, pid: str) -> bool:
        return (
            self._conn.execute(
                "SELECT 1 FROM paragraphs WHERE pid = ?", (pid,)
            ).fetchone()
            is not None
        )

    # -- chunks and vectors --------------------------------------------

    def put_chunks(self, chunks: list[Chunk]) -> int:
        with self._lock:
            self._conn.executemany(
                "INSERT OR REPLACE INTO chunks VALUES (?,?,?,?,?)",
                [
                    (
                        c.chunk_id,
                        c.doi,
                        json.dumps(list(c.section_path)),
                        json.dumps(list(c.member_pids)),
                        c.text,
                    )
                    for c in chunks
                ],
            )
            self._conn.commit()
        return self.chunk_count()

    def get_chunk(self, chunk_id: str) -> Chunk | None:
        row = self._conn.execute(
            "SELECT * FROM chunks WHERE chunk_id = ?", (chunk_id,)
        ).fetchone()
        if row is None:
            return None
        return Chunk(
            chunk_id=row["chunk_id"],
            doi=row["doi"],
            section_path=tuple(json.loads(row["section_path"])),
            member_pids=tuple(json.loads(row["member_pids"])),
            text=row["text"],
        )

    def iter_chunks(self) -> list[Chunk]:
        rows = self._conn.execute("SELECT * FROM chunks ORDER BY chunk_id").fetchall()
        return [
            Chunk(
                chunk_id=r["chunk_id"],
                doi=r["doi"],
                section_path=tuple(json.loads(r["section_path"])),
                member_pids=tuple(json.loads(r["member_pids"])),
                text=r["text"],
            )
            for r in rows
        ]

    def chunk_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM chunks").fetchone()[0]

    def put_chunk_vector(self, chunk_id: str, vec: np.ndarray, model_id: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO chunk_vectors VALUES (?,?,?,?)",
                (chunk_id, int(vec.shape[0]), vector_to_blob(vec), model_id),
            )
            self._conn.commit()

    def put_chunk_vectors(
        self, items: list[tuple[str, np.ndarray]], model_id: str
    ) -> None:
        with self._lock:
            self._conn.executemany(
                "INSERT OR REPLACE INTO chunk_vectors VALUES (?,?,?,?)",
                [
                    (cid, int(v.shape[0]), vector_to_blob(v), model_id)
                    for cid, v in items
                ],
            )
            self._conn.commit()

    def all_chunk_vectors(self) -> list[tuple[str, np.ndarray]]:
        rows = self._conn.execute(
            "SELECT chunk_id, dim, vec FROM chunk_vectors ORDER BY chunk_id"
        ).fetchall()
        return [(r["chunk_id"], blob_to_vector(r["vec"], r["dim"])) for r in rows]

    def vector_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM chunk_vectors").fetchone()[0]

    # -- tuples --------------------------------------------------------

    def put_tuple(self, row: tuple, markers: list[str]) -> bool:
        """Insert one tuple row; returns False when the natural key
        (subject, relation, object, source_pid) is already stored."""
        with self._lock:
            existing = self._conn.execute(
                "SELECT 1 FROM tuples WHERE subject=? AND relation=? AND object=? "
                "AND source_pid=?",
                (row[1], row[2], row[3], row[6]),
            ).fetchone()
            if existing:
                return False
            self._conn.execute("INSERT INTO tuples VALUES (?,?,?,?,?,?,?,?)", row)
            self._conn.executemany(
                "INSERT INTO tuple_markers VALUES (?,?)",
                [(row[0], m) for m in markers],
            )
            self._conn.commit()
            return True

    def iter_tuples(self) -> list[sqlite3.Row]:
        return self._conn.execute("SELECT * FROM tuples ORDER BY tuple_id").fetchall()

    def get_tuple(self, tuple_id: str) -> sqlite3.Row | None:
        return self._conn.execute(
            "SELECT * FROM tuples WHERE tuple_id = ?", (tuple_id,)
        ).fetchone()

    def tuple_markers(self, tuple_id: str) -> list[str]:
        rows = self._conn.execute(
            "SELECT marker FROM tuple_markers WHERE tuple_id = ?", (tuple_id,)
        ).fetchall()
        return [r["marker"] for r in rows]

    def tuple_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM tuples").fetchone()[0]

    # -- canonical entities --------------------------------------------

    def replace_canonical(
        self,
        entities: list[tuple[str, str, int, bool, np.ndarray]],
        mapping: dict[str, str],
    ) -> None:
        with self._lock:
            self._conn.execute("DELETE FROM canonical_map")
            self._conn.execute("DELETE FROM canonical_entities")
            self._conn.executemany(
                "INSERT INTO canonical_entities VALUES (?,?,?,?,?,?)",
                [
                    (cid, label, count, int(numeric), int(vec.shape[0]), vector_to_blob(vec))
                    for cid, label, count, numeric, vec in entities
                ],
            )
            self._conn.executemany(
                "INSERT INTO canonical_map VALUES (?,?)", list(mapping.items())
            )
            self._conn.commit()

    def canonical_entities(self) -> list[tuple[str, str, int, bool, np.ndarray]]:
        rows = self._conn.execute(
            "SELECT * FROM canonical_entities ORDER BY canonical_id"
        ).fetchall()
        return [
            (
                r["canonical_id"],
                r["label"],
                r["member_count"],
                bool(r["is_numeric"]),
                blob_to_vector(r["centroid"], r["dim"]),
            )
            for r in rows
        ]

    def canonical_mapping(self) -> dict[str, str]:
        rows = self._conn.execute("SELECT * FROM canonical_map").fetchall()
        return {r["surface"]: r["canonical_id"] for r in rows}

    def canonical_count(self) -> int:
        return self._conn.execute(
            "SELECT COUNT(*) FROM canonical_entities"
        ).fetchone()[0]

    # -- feedback ------------------------------------------------------

    def add_feedback(
        self,
        ref: str,
        content_score: int,
        citation_score: int,
        notes: str = "",
        rater_id: str = "",
        pipeline: str = "",
    ) -> int:
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO feedback (ref, pipeline, content_score, citation_score,"
                " notes, rater_id) VALUES (?,?,?,?,?,?)",
                (ref, pipeline, content_score, citation_score, notes, rater_id),
            )
            self._conn.commit()
            return int(cur.lastrowid)

    def feedback_summary(self) -> dict:
        rows = self._conn.execute(
            "SELECT pipeline, AVG(content_score) AS content, "
            "AVG(citation_score) AS citation, "
            "AVG(content_score + citation_score) AS total, COUNT(*) AS n "
            "FROM feedback GROUP BY pipeline"
        ).fetchall()
        return {
            r["pipeline"] or "unspecified": {
                "mean_content": r["content"],
                "mean_citation": r["citation"],
                "mean_total": r["total"],
                "count": r["n"],
            }
            for r in rows
        }
