"""Entity canonicalization: two-stage clustering and representative election.

Surface forms from tuple subjects and objects are embedded, coarsely
grouped with mini-batch k-means (fixed seed), then merged within each
coarse cluster by average-linkage agglomerative clustering on cosine
distance with a 0.5 stop threshold. Each resulting sub-cluster elects
the member closest to its centroid as the canonical label; clusters with
strictly more than 60% numeric members instead get the synthetic label
``numerical_value``.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import MiniBatchKMeans

from .providers import EmbeddingVector, ProviderConfig, embed_texts
from .storage import ScholarStore

DEFAULT_COARSE_CLUSTERS = 2000
DEFAULT_DISTANCE_THRESHOLD = 0.5
NUMERIC_LABEL = "numerical_value"
NUMERIC_FRACTION = 0.60
_SEED = 7


@dataclass(frozen=True)
class EntityRecord:
    surface: str
    vector: EmbeddingVector
    frequency: int = 1


@dataclass(frozen=True)
class CanonicalEntity:
    canonical_id: str
    label: str
    members: tuple[str, ...]
    centroid: np.ndarray
    is_numeric_cluster: bool


_NUMERIC = re.compile(
    r"^[+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?\s*[^\s\d]{0,6}$"
)


def is_numeric_surface(surface: str) -> bool:
    """Number with optional sign/decimal/exponent and a short unit token."""
    return bool(_NUMERIC.match(surface.strip()))


def surface_frequencies(store: ScholarStore) -> dict[str, int]:
    """Occurrence counts of each surface form across stored tuples."""
    freq: dict[str, int] = {}
    for row in store.iter_tuples():
        for surface in (row["subject"], row["object"]):
            freq[surface] = freq.get(surface, 0) + 1
    return freq


def embed_entities(
    surfaces: list[str],
    embed_cfg: ProviderConfig,
    frequencies: dict[str, int] | None = None,
) -> list[EntityRecord]:
    if len(set(surfaces)) != len(surfaces):
        raise ValueError("surfaces must be deduplicated")
    if not surfaces:
        return []
    vectors = embed_texts(surfaces, embed_cfg)
    freq = frequencies or {}
    return [
        EntityRecord(surface=s, vector=v, frequency=max(1, freq.get(s, 1)))
        for s, v in zip(surfaces, vectors)
    ]


def coarse_cluster(
    records: list[EntityRecord], n_clusters: int = DEFAULT_COARSE_CLUSTERS
) -> list[list[EntityRecord]]:
    """Partition records into at most n_clusters coarse groups (seeded)."""
    if not records:
        return []
    k = min(n_clusters, len(records))
    if k == len(records):
        return [[r] for r in records]
    if k == 1:
        return [list(records)]
    mat = np.stack([r.vector.values for r in records])
    km = MiniBatchKMeans(
        n_clusters=k,
        random_state=_SEED,
        batch_size=256,
        max_iter=100,
        n_init=3,
    )
    labels = km.fit_predict(mat)
    clusters: dict[int, list[EntityRecord]] = {}
    for rec, lab in zip(records, labels):
        clusters.setdefault(int(lab), []).append(rec)
    return [clusters[lab] for lab in sorted(clusters)]


def _cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = vectors / safe
    sim = unit @ unit.T
    sim[(norms == 0.0).ravel(), :] = 0.0
    sim[:, (norms == 0.0).ravel()] = 0.0
    return 1.0 - sim


def fine_merge(
    cluster: list[EntityRecord],
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
) -> list[list[EntityRecord]]:
    """Average-linkage agglomerative merge on cosine distance.

    Merging stops when no pair of sub-clusters has average-linkage
    distance strictly below the threshold. Tie-breaking is lexicographic
    on the smallest member surface, so runs are reproducible.
    """
    if not cluster:
        raise ValueError("cluster must be non-empty")
    if not 0.0 < distance_threshold <= 2.0:
        raise ValueError("threshold must lie in (0, 2]")
    base = _cosine_distance_matrix(np.stack([r.vector.values for r in cluster]))
    groups: list[list[int]] = [[i] for i in range(len(cluster))]
    # Pairwise average-linkage distances, kept exact across merges via the
    # size-weighted update d(a+b, k) = (|a| d(a,k) + |b| d(b,k)) / (|a|+|b|).
    link = [[float(base[i, j]) for j in range(len(cluster))] for i in range(len(cluster))]

    def group_key(g: list[int]) -> str:
        return min(cluster[i].surface for i in g)

    while len(groups) > 1:
        best = None
        for ia in range(len(groups)):
            for ib in range(ia + 1, len(groups)):
                ka, kb = group_key(groups[ia]), group_key(groups[ib])
                key = (link[ia][ib], min(ka, kb), max(ka, kb))
                if best is None or key < best[0]:
                    best = (key, ia, ib)
        if best is None or best[0][0] >= distance_threshold:
            break
        _, ia, ib = best
        na, nb = len(groups[ia]), len(groups[ib])
        for k in range(len(groups)):
            if k in (ia, ib):
                continue
            merged = (na * link[ia][k] + nb * link[ib][k]) / (na + nb)
            link[ia][k] = merged
            link[k][ia] = merged
        groups[ia] = groups[ia] + groups[ib]
        del groups[ib]
        for row in link:
            del row[ib]
        del link[ib]
    result = [[cluster[i] for i in g] for g in groups]
    result.sort(key=lambda g: min(r.surface for r in g))
    return result


def _canonical_id(members: tuple[str, ...]) -> str:
    key = "\x1f".join(sorted(members))
    return "can" + hashlib.sha1(key.encode()).hexdigest()[:12]


def select_canonical(sub_cluster: list[EntityRecord]) -> CanonicalEntity:
    """Elect the centroid-closest member (or the numeric synthetic label)."""
    if not sub_cluster:
        raise ValueError("sub_cluster must be non-empty")
    mat = np.stack([r.vector.values for r in sub_cluster])
    centroid = mat.mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm > 0:
        centroid = centroid / norm
    members = tuple(r.surface for r in sub_cluster)
    numeric_fraction = sum(is_numeric_surface(s) for s in members) / len(members)
    is_numeric = numeric_fraction > NUMERIC_FRACTION
    if is_numeric:
        label = NUMERIC_LABEL
    else:
        def sim(r: EntityRecord) -> float:
            n = float(np.linalg.norm(r.vector.values))
            if n == 0.0 or norm == 0.0:
                return 0.0
            return float(np.dot(r.vector.values, centroid) / n)

        label = min(sub_cluster, key=lambda r: (-sim(r), r.surface)).surface
    return CanonicalEntity(
        canonical_id=_canonical_id(members),
        label=label,
        members=members,
        centroid=centroid.astype(np.float32),
        is_numeric_cluster=is_numeric,
    )


def canonicalize_all(
    records: list[EntityRecord],
    n_coarse: int = DEFAULT_COARSE_CLUSTERS,
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
) -> tuple[list[CanonicalEntity], dict[str, str]]:
    """Coarse cluster, fine merge, and elect; returns the canonical list
    and a total surface -> canonical_id map."""
    if not records:
        return [], {}
    canonicals: list[CanonicalEntity] = []
    for coarse in coarse_cluster(records, n_coarse):
        for sub in fine_merge(coarse, distance_threshold):
            canonicals.append(select_canonical(sub))
    canonicals.sort(key=lambda c: min(c.members))
    mapping = {
        surface: c.canonical_id for c in canonicals for surface in c.members
    }
    return canonicals, mapping


def persist_canonicals(
    store: ScholarStore,
    canonicals: list[CanonicalEntity],
    mapping: dict[str, str],
) -> None:
    store.replace_canonical(
        [
            (c.canonical_id, c.label, len(c.members), c.is_numeric_cluster, c.centroid)
            for c in canonicals
        ],
        mapping,
    )
