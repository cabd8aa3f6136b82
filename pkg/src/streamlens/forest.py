"""Online isolation forest over a sliding window.

An ensemble of axis-aligned trees maintained incrementally: each arriving
point increments bin counts along its root-to-leaf path in every tree and
may split the receiving leaf once its count exceeds a depth-dependent
threshold; each expiring point decrements counts and may collapse
underpopulated subtrees back into single leaves. Isolated points end up
in shallow leaves, so the anomaly score

    score(x) = 2 ** (-E(D) / log2(window / eta))

(with ``E(D)`` the mean leaf depth of ``x`` across trees) approaches 1
for anomalies and decays toward 0 for points deep inside dense regions.

Node arrays for all trees live in one flat slot arena (see ``_kernels``)
so descents run as compiled loops; structural edits (split, merge) are
infrequent and handled in Python. The forest does not own the sliding
window: callers learn and forget points explicitly and must replay the
original vector on forget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from streamlens import _kernels

SNAPSHOT_KIND = "streamlens.forest"


class ConfigError(ValueError):
    """Invalid configuration value."""


@dataclass
class ForestConfig:
    """Ensemble parameters.

    Attributes:
        num_trees: ensemble size.
        window: sliding-window length the score normalizer assumes.
        eta: depth-normalization constant; the score denominator is
            ``log2(window / eta)`` and must be positive.
        split_base: leaf split threshold at depth 0.
        split_growth: per-depth growth factor of the split threshold;
            ``split_threshold(d) = ceil(split_base * split_growth ** d)``.
        merge_hysteresis: an internal node merges when its count drops to
            ``merge_hysteresis * split_threshold(depth)`` or below. Kept
            below 1 so merges trigger well under the split bar.
        depth_cap: maximum node depth; default ``ceil(log2(window)) + 4``.
        seed: base seed; per-tree generators are spawned from it.
    """

    num_trees: int = 32
    window: int = 1024
    eta: float = 1.0
    split_base: int = 4
    split_growth: float = 1.5
    merge_hysteresis: float = 0.5
    depth_cap: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ConfigError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.window / self.eta <= 1.0:
            raise ConfigError(
                f"window/eta must exceed 1 for a positive depth normalizer, "
                f"got window={self.window}, eta={self.eta}"
            )
        if self.split_base < 2:
            raise ConfigError(f"split_base must be >= 2, got {self.split_base}")
        if self.split_growth < 1.0:
            raise ConfigError(f"split_growth must be >= 1, got {self.split_growth}")
        if not (0.0 < self.merge_hysteresis <= 1.0):
            raise ConfigError(
                f"merge_hysteresis must be in (0, 1], got {self.merge_hysteresis}"
            )
        if self.depth_cap is None:
            self.depth_cap = int(math.ceil(math.log2(self.window))) + 4
        if self.depth_cap < 1:
            raise ConfigError(f"depth_cap must be >= 1, got {self.depth_cap}")

    @property
    def depth_norm(self) -> float:
        return math.log2(self.window / self.eta)

    def split_threshold(self, depth: int) -> int:
        return int(math.ceil(self.split_base * self.split_growth**depth))

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "window": self.window,
            "eta": self.eta,
            "split_base": self.split_base,
            "split_growth": self.split_growth,
            "merge_hysteresis": self.merge_hysteresis,
            "depth_cap": self.depth_cap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(**d)


@dataclass(frozen=True)
class AnomalyScore:
    score: float
    mean_depth: float
    per_tree_depths: tuple[int, ...]


@dataclass(frozen=True)
class UpdateReport:
    """Per-tree outcome of one learn or forget.

    ``splits[t]`` is True when the learn split tree t's receiving leaf;
    ``merges[t]`` holds the depths of the internal nodes of tree t that
    collapsed during the forget, in bottom-up order.
    """

    point_id: int
    leaf_depths: tuple[int, ...]
    splits: tuple[bool, ...]
    merges: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class TreeStats:
    nodes: int
    leaves: int
    max_depth: int
    depth_histogram: tuple[int, ...]


@dataclass(frozen=True)
class ForestStats:
    per_tree: tuple[TreeStats, ...]
    total_nodes: int
    memory_bytes: int


@dataclass
class _Arena:
    """Growable node storage shared by all trees of one forest."""

    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32, -1 for leaves
    right: np.ndarray  # int32
    count: np.ndarray  # int64
    depth: np.ndarray  # int32
    parent: np.ndarray  # int32, -1 at roots
    tree_of: np.ndarray  # int32
    in_use: np.ndarray  # bool
    members: list = field(default_factory=list)  # point-id dict at leaves, else None

    @classmethod
    def with_capacity(cls, cap: int) -> "_Arena":
        return cls(
            feature=np.full(cap, -1, dtype=np.int32),
            threshold=np.zeros(cap, dtype=np.float64),
            left=np.full(cap, -1, dtype=np.int32),
            right=np.full(cap, -1, dtype=np.int32),
            count=np.zeros(cap, dtype=np.int64),
            depth=np.zeros(cap, dtype=np.int32),
            parent=np.full(cap, -1, dtype=np.int32),
            tree_of=np.full(cap, -1, dtype=np.int32),
            in_use=np.zeros(cap, dtype=bool),
            members=[None] * cap,
        )

    @property
    def capacity(self) -> int:
        return self.feature.shape[0]

    def grow(self) -> None:
        old = self.capacity
        new = old * 2
        self.feature = np.concatenate([self.feature, np.full(old, -1, dtype=np.int32)])
        self.threshold = np.concatenate([self.threshold, np.zeros(old)])
        self.left = np.concatenate([self.left, np.full(old, -1, dtype=np.int32)])
        self.right = np.concatenate([self.right, np.full(old, -1, dtype=np.int32)])
        self.count = np.concatenate([self.count, np.zeros(old, dtype=np.int64)])
        self.depth = np.concatenate([self.depth, np.zeros(old, dtype=np.int32)])
        self.parent = np.concatenate([self.parent, np.full(old, -1, dtype=np.int32)])
        self.tree_of = np.concatenate([self.tree_of, np.full(old, -1, dtype=np.int32)])
        self.in_use = np.concatenate([self.in_use, np.zeros(old, dtype=bool)])
        self.members.extend([None] * old)

    def nbytes(self) -> int:
        arrays = (
            self.feature, self.threshold, self.left, self.right,
            self.count, self.depth, self.parent, self.tree_of, self.in_use,
        )
        return int(sum(a.nbytes for a in arrays))


class OnlineIsolationForest:
    """Incrementally maintained isolation-tree ensemble.

    Args:
        config: ensemble parameters.
        dim: stream dimensionality; every learned/scored vector must have
            exactly this many finite values.
        backend: descent-kernel backend; defaults to the module-selected
            one (numba unless disabled via environment).
    """

    def __init__(self, config: ForestConfig, dim: int, backend=None):
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        self.config = config
        self.dim = int(dim)
        self._backend = backend if backend is not None else _kernels.active_backend()
        self._mask = np.ones(self.dim, dtype=bool)
        self._points: dict[int, np.ndarray] = {}

        cap = max(64, 2 * config.num_trees)
        self._arena = _Arena.with_capacity(cap)
        self._free = list(range(cap - 1, config.num_trees - 1, -1))
        self._roots = np.arange(config.num_trees, dtype=np.int64)
        a = self._arena
        for t in range(config.num_trees):
            a.in_use[t] = True
            a.tree_of[t] = t
            a.members[t] = {}

        # Depth-indexed tables; the merge/split checks sit on the hot path.
        self._thresholds = np.array(
            [config.split_threshold(d) for d in range(config.depth_cap + 1)],
            dtype=np.int64,
        )
        self._merge_bars = config.merge_hysteresis * self._thresholds.astype(np.float64)

        ss = np.random.SeedSequence(config.seed)
        self._rngs = [np.random.default_rng(child) for child in ss.spawn(config.num_trees)]

    # -- vector plumbing ---------------------------------------------------

    def validate_vector(self, x) -> np.ndarray:
        xv = np.array(x, dtype=np.float64, copy=True)
        if xv.ndim != 1 or xv.shape[0] != self.dim:
            raise ValueError(
                f"expected a {self.dim}-dimensional vector, got shape {xv.shape}"
            )
        if not np.all(np.isfinite(xv)):
            raise ValueError("vector contains non-finite values")
        return np.ascontiguousarray(xv)

    @property
    def backend_name(self) -> str:
        return self._backend.name

    @property
    def live_points(self) -> int:
        return len(self._points)

    # -- scoring -----------------------------------------------------------

    def _depth_matrix(self, X: np.ndarray) -> np.ndarray:
        a = self._arena
        return self._backend.forest_depths(
            a.feature, a.left, a.right, a.threshold, self._roots, X
        )

    def mean_depths(self, X: np.ndarray) -> np.ndarray:
        """Per-row mean leaf depth across trees for a (n, dim) batch."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return self._depth_matrix(X).mean(axis=0)

    def scores_from_depths(self, mean_depths) -> np.ndarray:
        return np.exp2(-np.asarray(mean_depths, dtype=np.float64) / self.config.depth_norm)

    def score_from_depth(self, mean_depth: float) -> float:
        return float(np.exp2(np.float64(-mean_depth / self.config.depth_norm)))

    def score(self, x) -> AnomalyScore:
        """Score ``x`` against the current trees without modifying them."""
        xv = self.validate_vector(x)
        depths = self._depth_matrix(xv.reshape(1, -1))
        mean_depth = float(depths.mean(axis=0)[0])
        return AnomalyScore(
            score=self.score_from_depth(mean_depth),
            mean_depth=mean_depth,
            per_tree_depths=tuple(int(d) for d in depths[:, 0]),
        )

    # -- learn / forget ----------------------------------------------------

    def learn(self, point_id: int, x) -> UpdateReport:
        """Insert a live point: bump path counts, maybe split the leaf."""
        xv = self.validate_vector(x)
        pid = int(point_id)
        if pid in self._points:
            raise ValueError(f"point id {pid} is already live")
        self._points[pid] = xv
        a = self._arena
        leaves, leaf_depths, wants_split = self._backend.forest_learn(
            a.feature, a.left, a.right, a.threshold, a.count, a.depth,
            self._roots, xv, self._thresholds, self.config.depth_cap,
        )
        leaves = leaves.tolist()
        splits = []
        members = a.members  # the list object survives arena growth
        for t in range(self.config.num_trees):
            leaf = leaves[t]
            members[leaf][pid] = None
            splits.append(bool(wants_split[t]) and self._split_leaf(t, leaf))
        n = self.config.num_trees
        return UpdateReport(pid, tuple(leaf_depths.tolist()), tuple(splits), ((),) * n)

    def forget(self, point_id: int, x) -> UpdateReport:
        """Remove a live point: drop path counts, merge starved subtrees."""
        xv = self.validate_vector(x)
        pid = int(point_id)
        stored = self._points.get(pid)
        if stored is None:
            raise ValueError(f"point id {pid} is not live")
        if not np.array_equal(stored, xv):
            raise ValueError(f"vector does not match the learned record for id {pid}")
        a = self._arena
        leaves, leaf_depths, candidates = self._backend.forest_forget(
            a.feature, a.left, a.right, a.threshold, a.count, a.depth, a.parent,
            self._roots, xv, self._merge_bars,
        )
        merges = []
        members = a.members
        depth = a.depth
        for t in range(self.config.num_trees):
            del members[int(leaves[t])][pid]
            merged_here: list[int] = []
            for node in candidates[t]:
                if node < 0:
                    break
                merged_here.append(int(depth[node]))
                self._merge_subtree(int(node))
            merges.append(tuple(merged_here))
        del self._points[pid]
        n = self.config.num_trees
        return UpdateReport(pid, tuple(leaf_depths.tolist()), (False,) * n, tuple(merges))

    # -- structural edits ----------------------------------------------------

    def _reserve(self, extra: int) -> None:
        while len(self._free) < extra:
            old_cap = self._arena.capacity
            self._arena.grow()
            self._free.extend(range(self._arena.capacity - 1, old_cap - 1, -1))

    def _alloc(self) -> int:
        self._reserve(1)
        i = self._free.pop()
        self._arena.in_use[i] = True
        return i

    def _release(self, i: int) -> None:
        a = self._arena
        a.in_use[i] = False
        a.feature[i] = -1
        a.left[i] = -1
        a.right[i] = -1
        a.threshold[i] = 0.0
        a.count[i] = 0
        a.depth[i] = 0
        a.parent[i] = -1
        a.tree_of[i] = -1
        a.members[i] = None
        self._free.append(i)

    def _split_leaf(self, t: int, leaf: int) -> bool:
        """Split a leaf on a random enabled feature, or skip if degenerate.

        The split value is drawn uniformly from the open min-max extent of
        the leaf's member values along the drawn feature, so both children
        are guaranteed nonempty.
        """
        a = self._arena
        ids = list(a.members[leaf])
        pts = np.empty((len(ids), self.dim))
        for i, pid in enumerate(ids):
            pts[i] = self._points[pid]
        mins = pts.min(axis=0)
        maxs = pts.max(axis=0)
        eligible = np.nonzero(self._mask & (maxs > mins))[0]
        if eligible.size == 0:
            return False
        rng = self._rngs[t]
        f = int(eligible[rng.integers(eligible.size)])
        lo = float(mins[f])
        hi = float(maxs[f])
        value = float(rng.uniform(lo, hi))
        if value <= lo:
            value = float(np.nextafter(lo, hi))
        col = pts[:, f]
        left_ids = {pid: None for pid, v in zip(ids, col) if v < value}
        right_ids = {pid: None for pid, v in zip(ids, col) if v >= value}
        lc = self._alloc()
        rc = self._alloc()
        a = self._arena  # re-fetch: _alloc may have grown the arrays
        child_depth = int(a.depth[leaf]) + 1
        for slot, child_ids in ((lc, left_ids), (rc, right_ids)):
            a.feature[slot] = -1
            a.count[slot] = len(child_ids)
            a.depth[slot] = child_depth
            a.parent[slot] = leaf
            a.tree_of[slot] = t
            a.members[slot] = child_ids
        a.feature[leaf] = f
        a.threshold[leaf] = value
        a.left[leaf] = lc
        a.right[leaf] = rc
        a.members[leaf] = None
        return True

    def _merge_subtree(self, node: int) -> None:
        """Collapse an internal node to a leaf holding all descendant members."""
        a = self._arena
        ids: dict[int, None] = {}

        def gather(i: int) -> None:
            if a.feature[i] < 0:
                ids.update(a.members[i])
            else:
                gather(int(a.left[i]))
                gather(int(a.right[i]))
            self._release(i)

        gather(int(a.left[node]))
        gather(int(a.right[node]))
        a.feature[node] = -1
        a.left[node] = -1
        a.right[node] = -1
        a.threshold[node] = 0.0
        a.members[node] = ids

    # -- feature mask --------------------------------------------------------

    def set_feature_mask(self, enabled) -> None:
        """Restrict future splits to the enabled features.

        Existing splits on disabled features stay until merged away.
        """
        mask = np.asarray(enabled, dtype=bool)
        if mask.shape != (self.dim,):
            raise ValueError(f"mask must have shape ({self.dim},), got {mask.shape}")
        if not mask.any():
            raise ValueError("at least one feature must stay enabled")
        self._mask = mask.copy()

    @property
    def feature_mask(self) -> np.ndarray:
        return self._mask.copy()

    # -- introspection ---------------------------------------------------------

    def stats(self) -> ForestStats:
        a = self._arena
        per_tree = []
        for t in range(self.config.num_trees):
            m = a.in_use & (a.tree_of == t)
            leaves_m = m & (a.feature == -1)
            depths = a.depth[m]
            hist = np.bincount(depths, minlength=int(depths.max()) + 1)
            per_tree.append(
                TreeStats(
                    nodes=int(m.sum()),
                    leaves=int(leaves_m.sum()),
                    max_depth=int(depths.max()),
                    depth_histogram=tuple(int(c) for c in hist),
                )
            )
        member_count = sum(len(m) for m in a.members if m is not None)
        # Rough live-heap estimate: arena arrays plus per-member list slots
        # plus the stored point vectors.
        memory = (
            self._arena.nbytes()
            + member_count * 32
            + len(self._points) * (self.dim * 8 + 64)
        )
        return ForestStats(
            per_tree=tuple(per_tree),
            total_nodes=int(a.in_use.sum()),
            memory_bytes=int(memory),
        )

    # -- snapshots ---------------------------------------------------------------

    def _node_dict(self, i: int) -> dict:
        a = self._arena
        node: dict = {"depth": int(a.depth[i]), "count": int(a.count[i])}
        if a.feature[i] < 0:
            node["members"] = [int(p) for p in a.members[i]]
        else:
            node["split"] = {"feature": int(a.feature[i]), "value": float(a.threshold[i])}
            node["left"] = self._node_dict(int(a.left[i]))
            node["right"] = self._node_dict(int(a.right[i]))
        return node

    def snapshot(self) -> dict:
        """Self-describing JSON-ready dump of every tree."""
        return {
            "kind": SNAPSHOT_KIND,
            "version": 1,
            "dim": self.dim,
            "config": self.config.to_dict(),
            "feature_mask": [bool(b) for b in self._mask],
            "trees": [self._node_dict(int(r)) for r in self._roots],
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_snapshot(cls, snap: dict, backend=None) -> "OnlineIsolationForest":
        """Rebuild tree structure from a snapshot.

        The restored forest scores exactly like the dumped one. Learned
        point vectors are not part of the snapshot (they live in the
        caller's window store), so splits and forgets of pre-snapshot
        members are not possible on the restored instance.
        """
        if snap.get("kind") != SNAPSHOT_KIND:
            raise ValueError(f"not a forest snapshot: kind={snap.get('kind')!r}")
        config = ForestConfig.from_dict(snap["config"])
        forest = cls(config, snap["dim"], backend=backend)
        forest._mask = np.asarray(snap["feature_mask"], dtype=bool)

        def count_nodes(node: dict) -> int:
            if "split" in node:
                return 1 + count_nodes(node["left"]) + count_nodes(node["right"])
            return 1

        # Reserve everything upfront so the arrays never move mid-build.
        needed = sum(count_nodes(t) for t in snap["trees"]) - config.num_trees
        forest._reserve(max(needed, 0))
        a = forest._arena

        def build(node: dict, slot: int, t: int, depth: int, parent: int) -> None:
            a.depth[slot] = depth
            a.count[slot] = node["count"]
            a.parent[slot] = parent
            a.tree_of[slot] = t
            if "split" in node:
                a.feature[slot] = node["split"]["feature"]
                a.threshold[slot] = node["split"]["value"]
                a.members[slot] = None
                lc = forest._alloc()
                rc = forest._alloc()
                a.left[slot] = lc
                a.right[slot] = rc
                build(node["left"], lc, t, depth + 1, slot)
                build(node["right"], rc, t, depth + 1, slot)
            else:
                a.feature[slot] = -1
                a.members[slot] = dict.fromkeys(int(p) for p in node["members"])

        for t, tree in enumerate(snap["trees"]):
            build(tree, int(forest._roots[t]), t, 0, -1)
        return forest
