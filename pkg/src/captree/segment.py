"""Temporally constrained Ward clustering and the segment tree.

Frames start as singleton clusters. Only time-adjacent clusters may
merge, and each step merges the adjacent pair whose union least increases
total within-cluster variance (Ward's criterion),

    cost(A, B) = |A|*|B| / (|A|+|B|) * ||mean(A) - mean(B)||^2

with ties broken by the smaller left frame index. The n-1 merges form a
binary tree whose every node is a contiguous time span. Nodes are then
flagged for captioning (duration strictly greater than 0.5 s) and for
annotation (duration of at least 4 s); flags are non-destructive so the
tree keeps full context around ineligible nodes.

``TemporalWardSegmenter`` exposes the clustering kernel with the familiar
``fit`` / ``get_params`` estimator surface; ``build_tree`` wraps it to
produce a timestamped ``SegmentTree``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_embedding_matrix, check_same_dim
from .errors import EmptySequence
from .windows import FrameEmbeddingSequence

CAPTION_THRESHOLD_S = 0.5
ANNOTATION_THRESHOLD_S = 4.0


@dataclass
class ClusterStat:
    """Size and centroid of one cluster, enough to evaluate Ward costs."""

    size: int
    centroid: np.ndarray

    @classmethod
    def merged(cls, a: "ClusterStat", b: "ClusterStat") -> "ClusterStat":
        n = a.size + b.size
        centroid = (a.size * a.centroid + b.size * b.centroid) / n
        return cls(size=n, centroid=centroid)


def ward_cost(a: ClusterStat, b: ClusterStat) -> float:
    """Increase in total within-cluster variance caused by merging a and b."""
    check_same_dim(a.centroid, b.centroid)
    diff = a.centroid - b.centroid
    return (a.size * b.size) / (a.size + b.size) * float(diff @ diff)


class TemporalWardSegmenter(BaseEstimator, ClusterMixin):
    """Bottom-up Ward clustering restricted to time-adjacent merges.

    Parameters
    ----------
    n_clusters : int, default=1
        Where to cut the merge sequence for ``labels_``. The full merge
        tree is always built.

    Attributes
    ----------
    children_ : ndarray of shape (n_frames - 1, 2)
        The two cluster ids merged at each step, temporal left first.
        Ids below ``n_frames`` are single frames; id ``n_frames + i`` is
        the cluster created at step ``i``.
    merge_costs_ : ndarray of shape (n_frames - 1,)
        Ward cost of each merge, in merge order.
    merge_ranges_ : list of (lo, mid, hi)
        Frame ranges merged at each step: [lo, mid) with [mid, hi).
    labels_ : ndarray of shape (n_frames,)
        Cluster labels after cutting at ``n_clusters``, numbered left to
        right in time order.

    The merge loop keeps clusters in a doubly linked temporal chain and a
    lazy heap of candidate pairs keyed by (cost, left frame index), so a
    stale entry is simply discarded when popped. Expected O(n log n).
    """

    def __init__(self, n_clusters: int = 1):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = check_embedding_matrix(X)
        n = X.shape[0]
        if self.n_clusters < 1 or self.n_clusters > n:
            raise ValueError(f"n_clusters must be in [1, {n}], got {self.n_clusters}")
        self.n_leaves_ = n

        total = 2 * n - 1
        size = np.zeros(total, dtype=np.int64)
        size[:n] = 1
        lo = np.zeros(total, dtype=np.int64)
        hi = np.zeros(total, dtype=np.int64)
        lo[:n] = np.arange(n)
        hi[:n] = np.arange(1, n + 1)
        centroid: list[np.ndarray] = [X[i].copy() for i in range(n)] + [None] * (n - 1)
        alive = np.zeros(total, dtype=bool)
        alive[:n] = True
        left_nb = np.full(total, -1, dtype=np.int64)
        right_nb = np.full(total, -1, dtype=np.int64)
        left_nb[1:n] = np.arange(n - 1)
        right_nb[: n - 1] = np.arange(1, n)

        def stat(cid: int) -> ClusterStat:
            return ClusterStat(size=int(size[cid]), centroid=centroid[cid])

        heap: list[tuple[float, int, int, int]] = []
        for i in range(n - 1):
            heapq.heappush(heap, (ward_cost(stat(i), stat(i + 1)), i, i, i + 1))

        children = np.zeros((n - 1, 2), dtype=np.int64)
        costs = np.zeros(n - 1, dtype=np.float64)
        ranges: list[tuple[int, int, int]] = []

        for step in range(n - 1):
            while True:
                cost, _, a, b = heapq.heappop(heap)
                if alive[a] and alive[b] and right_nb[a] == b:
                    break
            m = n + step
            children[step] = (a, b)
            costs[step] = cost
            ranges.append((int(lo[a]), int(hi[a]), int(hi[b])))

            merged = ClusterStat.merged(stat(a), stat(b))
            size[m] = merged.size
            centroid[m] = merged.centroid
            lo[m], hi[m] = lo[a], hi[b]
            alive[a] = alive[b] = False
            alive[m] = True
            lsib, rsib = left_nb[a], right_nb[b]
            left_nb[m], right_nb[m] = lsib, rsib
            if lsib >= 0:
                right_nb[lsib] = m
                heapq.heappush(heap, (ward_cost(stat(lsib), stat(m)), int(lo[lsib]), int(lsib), m))
            if rsib >= 0:
                left_nb[rsib] = m
                heapq.heappush(heap, (ward_cost(stat(m), stat(rsib)), int(lo[m]), m, int(rsib)))

        self.children_ = children
        self.merge_costs_ = costs
        self.merge_ranges_ = ranges
        self.labels_ = self._cut_labels(n, ranges, self.n_clusters)
        return self

    @staticmethod
    def _cut_labels(n: int, ranges: list[tuple[int, int, int]], n_clusters: int) -> np.ndarray:
        boundaries = set(range(n + 1))
        for lo, mid, hi in ranges[: n - n_clusters]:
            boundaries.discard(mid)
        cuts = sorted(boundaries)
        labels = np.zeros(n, dtype=np.int64)
        for k in range(len(cuts) - 1):
            labels[cuts[k] : cuts[k + 1]] = k
        return labels


@dataclass
class SegmentNode:
    id: int
    lo: int
    hi: int
    start_s: float
    end_s: float
    children: tuple[int, ...] = ()
    parent: int | None = None
    merge_cost: float | None = None
    caption_eligible: bool = False
    annotation_eligible: bool = False
    caption_leaf: bool = False

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class SegmentTree:
    video_id: str
    nodes: dict[int, SegmentNode]
    root: int
    frame_duration_s: float = 0.0

    def __iter__(self):
        return iter(sorted(self.nodes))

    def node(self, node_id: int) -> SegmentNode:
        return self.nodes[node_id]

    def leaves(self) -> list[SegmentNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def to_json_dict(self) -> dict:
        rows = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            rows.append(
                {
                    "id": n.id,
                    "parent": n.parent,
                    "children": list(n.children),
                    "lo": n.lo,
                    "hi": n.hi,
                    "start_s": n.start_s,
                    "end_s": n.end_s,
                    "merge_cost": n.merge_cost,
                    "caption_eligible": n.caption_eligible,
                    "annotation_eligible": n.annotation_eligible,
                    "caption_leaf": n.caption_leaf,
                }
            )
        return {"video_id": self.video_id, "frame_duration_s": self.frame_duration_s, "nodes": rows}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SegmentTree":
        nodes = {}
        root = None
        for row in obj["nodes"]:
            node = SegmentNode(
                id=row["id"],
                lo=row["lo"],
                hi=row["hi"],
                start_s=row["start_s"],
                end_s=row["end_s"],
                children=tuple(row["children"]),
                parent=row["parent"],
                merge_cost=row["merge_cost"],
                caption_eligible=row["caption_eligible"],
                annotation_eligible=row["annotation_eligible"],
                caption_leaf=row["caption_leaf"],
            )
            nodes[node.id] = node
            if node.parent is None:
                root = node.id
        if root is None:
            raise ValueError("tree has no root")
        return cls(
            video_id=obj["video_id"],
            nodes=nodes,
            root=root,
            frame_duration_s=obj.get("frame_duration_s", 0.0),
        )


def build_tree(
    seq: FrameEmbeddingSequence,
    frame_duration_s: float | None = None,
) -> SegmentTree:
    """Build the full merge tree over a frame embedding sequence.

    A node spanning frames [lo, hi) starts at ``timestamps[lo]`` and ends
    at ``timestamps[hi-1]`` plus one frame duration. When
    ``frame_duration_s`` is not given it is inferred from the spacing of
    the first two timestamps; a single-frame sequence has no spacing, so
    the value is required there.
    """
    n = len(seq)
    if n == 0:
        raise EmptySequence("cannot segment an empty embedding sequence")
    if frame_duration_s is None:
        if n < 2:
            raise ValueError("frame_duration_s is required for a single-frame sequence")
        frame_duration_s = seq.timestamps[1] - seq.timestamps[0]

    ts = seq.timestamps
    nodes: dict[int, SegmentNode] = {}
    for f in range(n):
        nodes[f] = SegmentNode(
            id=f, lo=f, hi=f + 1, start_s=float(ts[f]), end_s=float(ts[f] + frame_duration_s)
        )
    if n == 1:
        return SegmentTree(seq.video_id, nodes, root=0, frame_duration_s=frame_duration_s)

    seg = TemporalWardSegmenter().fit(seq.vectors)
    for step in range(n - 1):
        a, b = (int(c) for c in seg.children_[step])
        m = n + step
        nodes[m] = SegmentNode(
            id=m,
            lo=nodes[a].lo,
            hi=nodes[b].hi,
            start_s=float(ts[nodes[a].lo]),
            end_s=float(ts[nodes[b].hi - 1] + frame_duration_s),
            children=(a, b),
            merge_cost=float(seg.merge_costs_[step]),
        )
        nodes[a].parent = m
        nodes[b].parent = m
    return SegmentTree(seq.video_id, nodes, root=2 * n - 2, frame_duration_s=frame_duration_s)


def mark_eligibility(
    tree: SegmentTree,
    caption_threshold_s: float = CAPTION_THRESHOLD_S,
    annotation_threshold_s: float = ANNOTATION_THRESHOLD_S,
) -> SegmentTree:
    """Set caption/annotation flags in place; topology is untouched.

    Caption eligibility is strict (duration > threshold), annotation
    eligibility inclusive (duration >= threshold). A caption-eligible node
    none of whose children are caption-eligible is a caption leaf; nodes
    without children qualify vacuously.
    """
    for node in tree.nodes.values():
        node.caption_eligible = node.duration_s > caption_threshold_s
        node.annotation_eligible = node.duration_s >= annotation_threshold_s
    for node in tree.nodes.values():
        node.caption_leaf = node.caption_eligible and not any(
            tree.nodes[c].caption_eligible for c in node.children
        )
    return tree
