"""Brute-force oracles and audit helpers shared by the test suite.

Everything here recomputes results from first principles (snapshot
walks, explicit weighted sums, O(n^2) pair counts) so the fast paths in
the package are checked against independent arithmetic.
"""

from __future__ import annotations

import math

import numpy as np


# -- forest snapshot oracles (pure-python walks of the nested JSON form) -----

def oracle_leaf_depth(tree: dict, x) -> int:
    node = tree
    depth = 0
    while "split" in node:
        s = node["split"]
        node = node["left"] if x[s["feature"]] < s["value"] else node["right"]
        depth += 1
    return depth


def oracle_score(snapshot: dict, x) -> float:
    cfg = snapshot["config"]
    depths = [oracle_leaf_depth(t, x) for t in snapshot["trees"]]
    mean_depth = sum(depths) / len(depths)
    return 2.0 ** (-mean_depth / math.log2(cfg["window"] / cfg["eta"]))


def audit_counts(snapshot: dict) -> list[int]:
    """Check internal count == child sum everywhere; return leaf sums."""

    def walk(node) -> int:
        if "split" not in node:
            assert node["count"] == len(node["members"]), (
                f"leaf count {node['count']} != member count {len(node['members'])}"
            )
            return node["count"]
        total = walk(node["left"]) + walk(node["right"])
        assert node["count"] == total, (
            f"internal count {node['count']} != child sum {total}"
        )
        return total

    return [walk(t) for t in snapshot["trees"]]


def audit_membership(snapshot: dict, points: dict) -> None:
    """Every leaf member's vector must satisfy all ancestor predicates."""

    def walk(node, constraints):
        if "split" not in node:
            for pid in node["members"]:
                x = points[pid]
                for feature, value, is_left in constraints:
                    if is_left:
                        assert x[feature] < value, (
                            f"point {pid} violates x[{feature}] < {value}"
                        )
                    else:
                        assert x[feature] >= value, (
                            f"point {pid} violates x[{feature}] >= {value}"
                        )
            return
        s = node["split"]
        walk(node["left"], constraints + [(s["feature"], s["value"], True)])
        walk(node["right"], constraints + [(s["feature"], s["value"], False)])

    for tree in snapshot["trees"]:
        walk(tree, [])


def audit_merge_bars(snapshot: dict) -> None:
    """No internal node may sit at or below its depth's merge bar."""
    cfg = snapshot["config"]
    mu = cfg["merge_hysteresis"]
    s0 = cfg["split_base"]
    rho = cfg["split_growth"]

    def walk(node):
        if "split" not in node:
            return
        bar = mu * math.ceil(s0 * rho ** node["depth"])
        assert node["count"] > bar, (
            f"internal node at depth {node['depth']} has count "
            f"{node['count']} <= merge bar {bar}"
        )
        walk(node["left"])
        walk(node["right"])

    for tree in snapshot["trees"]:
        walk(tree)


def node_count(snapshot: dict, tree_index: int) -> int:
    def walk(node) -> int:
        if "split" not in node:
            return 1
        return 1 + walk(node["left"]) + walk(node["right"])

    return walk(snapshot["trees"][tree_index])


def path_counts(tree: dict) -> dict[str, int]:
    """Map every node's root path (L/R string) to its count."""
    out: dict[str, int] = {}

    def walk(node, path: str):
        out[path] = node["count"]
        if "split" in node:
            walk(node["left"], path + "L")
            walk(node["right"], path + "R")

    walk(tree, "")
    return out


# -- metric oracles -----------------------------------------------------------

def pairwise_auc(scores, labels) -> float:
    """O(n^2) AUC: P(anomaly outscores normal), ties counting half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    pos = s[y]
    neg = s[~y]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


# -- iPDP oracle ---------------------------------------------------------------

def lerp_resample(old_points, old_values, new_points) -> np.ndarray:
    """Hand-rolled linear interpolation with endpoint clamping."""
    old_points = list(old_points)
    old_values = list(old_values)
    out = []
    for q in new_points:
        if q <= old_points[0]:
            out.append(old_values[0])
            continue
        if q >= old_points[-1]:
            out.append(old_values[-1])
            continue
        k = 0
        while old_points[k + 1] < q:
            k += 1
        x0, x1 = old_points[k], old_points[k + 1]
        w = (q - x0) / (x1 - x0)
        out.append(old_values[k] * (1 - w) + old_values[k + 1] * w)
    return np.array(out)


class EmaOracle:
    """Explicit-weighted-sum twin of the incremental PDP.

    Records every ICE curve; on a re-grid every stored curve is mapped
    through the same linear resample, so at any time the expected PDP is
    ``(1-a)^(n-1) C_1 + sum_i a (1-a)^(n-i) C_i`` over the mapped curves.
    """

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.curves: list[np.ndarray] = []
        self.grid_points: np.ndarray | None = None

    def observe_regrid(self, old_points, new_points) -> None:
        if self.grid_points is None or len(self.curves) == 0:
            self.grid_points = np.asarray(new_points).copy()
            return
        old = np.asarray(old_points)
        new = np.asarray(new_points)
        if np.allclose(old[0], old[-1]):
            self.curves = [np.full(new.shape, c[0]) for c in self.curves]
        else:
            self.curves = [lerp_resample(old, c, new) for c in self.curves]
        self.grid_points = new.copy()

    def observe_ice(self, values) -> None:
        self.curves.append(np.asarray(values, dtype=np.float64).copy())

    def expected_pdp(self) -> np.ndarray:
        assert self.curves, "no curves observed"
        a = self.alpha
        n = len(self.curves)
        acc = (1 - a) ** (n - 1) * self.curves[0]
        for i in range(1, n):
            acc = acc + a * (1 - a) ** (n - 1 - i) * self.curves[i]
        return acc
