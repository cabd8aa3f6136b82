"""Incremental per-feature explanations of the forest's response.

For each enabled feature of an incoming instance we evaluate an ICE
curve: the forest response over an evenly spaced grid between the
feature's current windowed min and max, all other coordinates pinned to
the instance. A per-feature PDP is maintained as an exponential moving
average of those ICE curves, and the feature-importance score is the
faded RMS deviation between the mean-centered ICE curve and the
mean-centered PDP, so level shifts carry no importance while shape
differences do.

Grids adapt: when a feature's extent moves materially (or the incoming
value falls outside the grid), the grid is rebuilt over the new extent
and the PDP plus retained ICE curves are resampled onto it by linear
interpolation, clamped at the old endpoints.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

RESPONSES = ("score", "mean_depth")


@dataclass(frozen=True)
class Grid:
    """Evenly spaced evaluation points for one feature."""

    feature_index: int
    lo: float
    hi: float
    points: np.ndarray

    @staticmethod
    def build(feature_index: int, lo: float, hi: float, size: int) -> "Grid":
        if lo > hi:
            raise ValueError(f"grid lo {lo} exceeds hi {hi}")
        if size < 2:
            raise ValueError(f"grid size must be >= 2, got {size}")
        pts = np.linspace(lo, hi, size)
        return Grid(feature_index=feature_index, lo=float(lo), hi=float(hi), points=pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def matches(self, other: "Grid") -> bool:
        return self.feature_index == other.feature_index and np.array_equal(
            self.points, other.points
        )


@dataclass(frozen=True)
class IceCurve:
    grid: Grid
    values: np.ndarray
    instance_id: int = -1


@dataclass(frozen=True)
class FiVector:
    values: np.ndarray  # one non-negative fi per feature
    instance_id: int


@dataclass
class ExplainConfig:
    grid_size: int = 20
    alpha: float = 0.05  # PDP fade
    beta: float = 0.05  # FI fade
    ice_ring: int = 15
    regrid_tol: float = 0.10
    response: str = "score"

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.ice_ring < 1:
            raise ValueError(f"ice_ring must be >= 1, got {self.ice_ring}")
        if self.regrid_tol < 0.0:
            raise ValueError(f"regrid_tol must be >= 0, got {self.regrid_tol}")
        if self.response not in RESPONSES:
            raise ValueError(f"response must be one of {RESPONSES}, got {self.response!r}")

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "alpha": self.alpha,
            "beta": self.beta,
            "ice_ring": self.ice_ring,
            "regrid_tol": self.regrid_tol,
            "response": self.response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExplainConfig":
        return cls(**d)


class PdpState:
    """Per-feature PDP estimate, FI state and recent-ICE ring."""

    def __init__(
        self,
        grid: Grid,
        alpha: float = 0.05,
        beta: float = 0.05,
        ring_size: int = 15,
        regrid_tol: float = 0.10,
    ):
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        if not (0.0 < beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.grid = grid
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.regrid_tol = float(regrid_tol)
        self.pdp = np.zeros(grid.size)
        self.fi = 0.0
        self.updates_seen = 0
        self.fi_seen = 0
        # (instance_id, values), newest first
        self.ring: deque = deque(maxlen=ring_size)

    @classmethod
    def initial(cls, feature_index: int, config: ExplainConfig) -> "PdpState":
        grid = Grid.build(feature_index, 0.0, 0.0, config.grid_size)
        return cls(
            grid,
            alpha=config.alpha,
            beta=config.beta,
            ring_size=config.ice_ring,
            regrid_tol=config.regrid_tol,
        )


def _require_matching_grid(state: PdpState, ice: IceCurve) -> None:
    if not state.grid.matches(ice.grid):
        raise ValueError(
            f"ICE grid does not match PDP grid for feature "
            f"{state.grid.feature_index}; re-grid before updating"
        )


def _resample(old: Grid, values: np.ndarray, new: Grid) -> np.ndarray:
    """Linear interpolation of a curve onto a new grid, clamped outside."""
    if old.hi == old.lo:
        return np.full(new.size, values[0])
    return np.interp(np.clip(new.points, old.lo, old.hi), old.points, values)


def compute_ice(forest, x, j: int, grid: Grid, response: str = "score",
                instance_id: int = -1) -> IceCurve:
    """Forest response at ``x`` as coordinate ``j`` sweeps the grid.

    Read-only on the forest.
    """
    if response not in RESPONSES:
        raise ValueError(f"response must be one of {RESPONSES}, got {response!r}")
    if grid.feature_index != j:
        raise ValueError(f"grid belongs to feature {grid.feature_index}, not {j}")
    xv = np.asarray(x, dtype=np.float64)
    if xv.ndim != 1 or xv.shape[0] != forest.dim:
        raise ValueError(f"expected a {forest.dim}-dimensional vector, got shape {xv.shape}")
    X = np.repeat(xv[None, :], grid.size, axis=0)
    X[:, j] = grid.points
    mean_depths = forest.mean_depths(X)
    values = forest.scores_from_depths(mean_depths) if response == "score" else mean_depths
    return IceCurve(grid=grid, values=values, instance_id=instance_id)


def update_grid(state: PdpState, new_lo: float, new_hi: float) -> PdpState:
    """Adapt the grid to a new extent, resampling the stored curves.

    No-op while the extent stays inside the grid and both endpoints move
    by at most ``regrid_tol`` of the current span; rebuilds whenever the
    new extent escapes the grid (coverage) or shrinks materially.
    """
    new_lo = float(new_lo)
    new_hi = float(new_hi)
    if new_lo > new_hi:
        raise ValueError(f"new_lo {new_lo} exceeds new_hi {new_hi}")
    g = state.grid
    tol = state.regrid_tol * (g.hi - g.lo)
    outward = new_lo < g.lo or new_hi > g.hi
    inward = (new_lo - g.lo) > tol or (g.hi - new_hi) > tol
    if not outward and not inward:
        return state
    new_grid = Grid.build(g.feature_index, new_lo, new_hi, g.size)
    state.pdp = _resample(g, state.pdp, new_grid)
    state.ring = deque(
        ((iid, _resample(g, vals, new_grid)) for iid, vals in state.ring),
        maxlen=state.ring.maxlen,
    )
    state.grid = new_grid
    return state


def update_pdp(state: PdpState, ice: IceCurve) -> PdpState:
    """Fold an ICE curve into the PDP moving average and the recent ring."""
    _require_matching_grid(state, ice)
    if state.updates_seen == 0:
        state.pdp = ice.values.copy()
    else:
        state.pdp = state.alpha * ice.values + (1.0 - state.alpha) * state.pdp
    state.updates_seen += 1
    state.ring.appendleft((ice.instance_id, ice.values.copy()))
    return state


def feature_importance(state: PdpState, ice: IceCurve) -> tuple[float, PdpState]:
    """Faded RMS deviation of the centered ICE curve from the centered PDP.

    Call with the PDP as it stood *before* this instance's update. Both
    curves are centered by their own grid mean first, so a pure level
    shift contributes zero deviation. The first observation seeds the fi
    average directly.
    """
    _require_matching_grid(state, ice)
    if state.updates_seen == 0:
        deviation = 0.0
    else:
        ice_c = ice.values - ice.values.mean()
        pdp_c = state.pdp - state.pdp.mean()
        diff = ice_c - pdp_c
        deviation = float(np.sqrt(np.mean(diff * diff)))
    if state.fi_seen == 0:
        state.fi = deviation
    else:
        state.fi = state.beta * deviation + (1.0 - state.beta) * state.fi
    state.fi_seen += 1
    return deviation, state


def explain_instance(
    forest,
    x,
    states: list[PdpState],
    enabled,
    extents,
    instance_id: int = -1,
    response: str = "score",
) -> tuple[FiVector, list[PdpState]]:
    """Run the per-instance explanation loop over all enabled features.

    For each enabled feature: refresh the grid from ``extents`` (the
    windowed min/max merged with the incoming value), evaluate the ICE
    curve, score its deviation against the pre-update PDP, then fold it
    into the PDP. Disabled features keep their prior fi untouched.

    All enabled features' ICE rows are evaluated in one forest batch; the
    arithmetic is identical to per-feature ``compute_ice`` calls.
    """
    dim = forest.dim
    if len(states) != dim or len(extents) != dim:
        raise ValueError(f"states and extents must cover all {dim} features")
    enabled = list(enabled)
    if len(enabled) != dim:
        raise ValueError(f"enabled mask must cover all {dim} features")
    xv = np.asarray(x, dtype=np.float64)
    active = [j for j in range(dim) if enabled[j]]
    if active:
        for j in active:
            lo, hi = extents[j]
            update_grid(states[j], lo, hi)
        grid_size = states[active[0]].grid.size
        if any(states[j].grid.size != grid_size for j in active):
            raise ValueError("all enabled features must share one grid size")
        X = np.repeat(xv[None, :], len(active) * grid_size, axis=0)
        for k, j in enumerate(active):
            X[k * grid_size : (k + 1) * grid_size, j] = states[j].grid.points
        mean_depths = forest.mean_depths(X)
        values = (
            forest.scores_from_depths(mean_depths)
            if response == "score"
            else mean_depths
        )
        # Vectorized equivalent of per-feature feature_importance followed
        # by update_pdp; row k of the (n_active, G) matrices is bitwise
        # identical to the standalone ops on feature active[k].
        V = values.reshape(len(active), grid_size)
        P = np.stack([states[j].pdp for j in active])
        seen = np.array([states[j].updates_seen > 0 for j in active])
        diff = (V - V.mean(axis=1, keepdims=True)) - (P - P.mean(axis=1, keepdims=True))
        deviations = np.sqrt(np.mean(diff * diff, axis=1))
        alphas = np.array([states[j].alpha for j in active])[:, None]
        P_new = alphas * V + (1.0 - alphas) * P
        for k, j in enumerate(active):
            s = states[j]
            deviation = float(deviations[k]) if seen[k] else 0.0
            if s.fi_seen == 0:
                s.fi = deviation
            else:
                s.fi = s.beta * deviation + (1.0 - s.beta) * s.fi
            s.fi_seen += 1
            s.pdp = P_new[k].copy() if seen[k] else V[k].copy()
            s.updates_seen += 1
            s.ring.appendleft((instance_id, V[k].copy()))
    fi = np.array([s.fi for s in states])
    return FiVector(values=fi, instance_id=instance_id), states


def pdp_snapshot(state: PdpState, feature) -> dict:
    """Immutable JSON-ready view: grid, PDP, fi and the fading ICE ring.

    Ring entries carry age (updates since the curve arrived, newest = 0)
    and the display fade weight ``(1 - alpha) ** age``.
    """
    return {
        "feature": feature,
        "grid": [float(v) for v in state.grid.points],
        "pdp": [float(v) for v in state.pdp],
        "fi": float(state.fi),
        "ice": [
            {
                "age": age,
                "weight": float((1.0 - state.alpha) ** age),
                "values": [float(v) for v in vals],
            }
            for age, (_iid, vals) in enumerate(state.ring)
        ],
    }


def window_min_max(window, j: int) -> tuple[float, float]:
    """Exact windowed extent of feature ``j`` (see ``window.WindowStore``)."""
    return window.min_max(j)


class Explainer:
    """Owns the per-feature PDP states for one engine."""

    def __init__(self, dim: int, config: ExplainConfig):
        self.dim = dim
        self.config = config
        self.states = [PdpState.initial(j, config) for j in range(dim)]
        self.enabled = [True] * dim

    def explain(self, forest, x, extents, instance_id: int) -> FiVector:
        fi, _ = explain_instance(
            forest,
            x,
            self.states,
            self.enabled,
            extents,
            instance_id=instance_id,
            response=self.config.response,
        )
        return fi

    def snapshot(self, feature_names) -> list[dict]:
        return [
            pdp_snapshot(state, feature_names[j])
            for j, state in enumerate(self.states)
        ]
