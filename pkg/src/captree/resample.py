"""Long-tail rebalancing of the action corpus.

Brief action texts are deduplicated by exact match after canonicalization
(trim, collapse internal whitespace, lowercase), embedded, clustered with
seeded k-means, and then drawn with replacement: every draw first picks a
cluster uniformly at random, then one canonical text uniformly inside it.
Cluster-uniform draws equalize cluster mass, down-sampling frequent
actions and up-sampling rare ones.

Draw protocol (relied on by reproducibility tests): a single
``numpy.random.default_rng(seed)`` generator serves the whole plan; each
draw consumes exactly two values, ``rng.integers(k)`` for the cluster and
``rng.integers(len(members))`` for the member, where ``members`` lists
the cluster's canonical texts in ascending lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import Backend, BackendRequest
from .errors import TooFewPoints
from .kmeans import SeededKMeans

Ref = tuple[str, int]  # (video_id, node_id)


def canonicalize(text: str) -> str:
    return " ".join(text.split()).lower()


@dataclass
class DedupGroup:
    count: int = 0
    member_refs: list[Ref] = field(default_factory=list)


@dataclass
class DedupTable:
    groups: dict[str, DedupGroup] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(g.count for g in self.groups.values())

    def texts(self) -> list[str]:
        return sorted(self.groups)


def dedup(actions: list[tuple[str, Ref]]) -> DedupTable:
    """Group actions by canonical text. A dict keyed by the canonical
    string gives hash lookup with exact-equality verification, so hash
    collisions cannot merge distinct texts."""
    table = DedupTable()
    for text, ref in actions:
        key = canonicalize(text)
        group = table.groups.get(key)
        if group is None:
            group = table.groups[key] = DedupGroup()
        group.count += 1
        group.member_refs.append(tuple(ref))
    return table


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: dict[str, int]
    seed: int
    inertia: float

    def members(self) -> list[list[str]]:
        """Canonical texts per cluster, each list lexicographically sorted."""
        out: list[list[str]] = [[] for _ in range(self.k)]
        for text in sorted(self.assignment):
            out[self.assignment[text]].append(text)
        return out

    def sizes(self) -> list[int]:
        return [len(m) for m in self.members()]


def embed_texts(texts: list[str], backend: Backend) -> np.ndarray:
    vectors = []
    for i, text in enumerate(texts):
        req = BackendRequest(kind="embed_text", payload={"text": text}, request_id=f"embed:{i}")
        vectors.append(backend.call(req).result)
    return np.asarray(vectors, dtype=np.float64)


def kmeans_texts(embeddings: dict[str, list[float]], k: int, seed: int) -> ClusterModel:
    """Cluster canonical texts by their embeddings; deterministic per seed."""
    texts = sorted(embeddings)
    if k > len(texts):
        raise TooFewPoints(f"k={k} exceeds {len(texts)} distinct texts")
    X = np.asarray([embeddings[t] for t in texts], dtype=np.float64)
    est = SeededKMeans(n_clusters=k, seed=seed).fit(X)
    assignment = {t: int(lbl) for t, lbl in zip(texts, est.labels_)}
    return ClusterModel(
        k=k,
        centroids=est.cluster_centers_,
        assignment=assignment,
        seed=seed,
        inertia=est.inertia_,
    )


@dataclass
class ResamplePlan:
    target_size: int
    seed: int
    draws: list[tuple[int, str]] = field(default_factory=list)


def resample(model: ClusterModel, target_size: int, seed: int) -> ResamplePlan:
    """Draw ``target_size`` texts with replacement, uniform over clusters
    then uniform within the chosen cluster (see module docstring for the
    exact generator protocol)."""
    if not model.assignment:
        raise ValueError("cluster model has no assigned texts")
    members = model.members()
    rng = np.random.default_rng(seed)
    draws: list[tuple[int, str]] = []
    for _ in range(target_size):
        c = int(rng.integers(model.k))
        texts = members[c]
        draws.append((c, texts[int(rng.integers(len(texts)))]))
    return ResamplePlan(target_size=target_size, seed=seed, draws=draws)
