"""ICE curves, incremental PDP, feature importance, adaptive grids."""

import numpy as np
import pytest

from streamlens.explain import (
    ExplainConfig,
    Explainer,
    Grid,
    IceCurve,
    PdpState,
    compute_ice,
    explain_instance,
    feature_importance,
    pdp_snapshot,
    update_grid,
    update_pdp,
    window_min_max,
    _resample,
)
from streamlens.forest import ForestConfig, OnlineIsolationForest
from streamlens.ingest import Instance
from streamlens.window import WindowStore

from helpers import EmaOracle


def fresh_state(j=0, lo=0.0, hi=1.0, size=20, alpha=0.05, beta=0.05, ring=15, tol=0.10):
    return PdpState(Grid.build(j, lo, hi, size), alpha=alpha, beta=beta,
                    ring_size=ring, regrid_tol=tol)


def flat_ice(state, level, instance_id=-1):
    return IceCurve(state.grid, np.full(state.grid.size, float(level)), instance_id)


# -- grids ---------------------------------------------------------------------


def test_grid_is_evenly_spaced():
    g = Grid.build(3, -2.0, 7.0, 20)
    assert g.points[0] == -2.0 and g.points[-1] == 7.0
    expected = -2.0 + np.arange(20) * (9.0 / 19)
    assert np.max(np.abs(g.points - expected)) < 1e-9 * 9.0


def test_degenerate_grid_allowed():
    g = Grid.build(0, 1.5, 1.5, 20)
    assert np.all(g.points == 1.5)


def test_grid_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Grid.build(0, 1.0, 0.0, 20)


# -- compute_ice ------------------------------------------------------------------


def test_ice_on_empty_forest_is_flat_one():
    forest = OnlineIsolationForest(ForestConfig(num_trees=8, window=64), dim=2)
    grid = Grid.build(0, -1.0, 1.0, 20)
    ice = compute_ice(forest, np.zeros(2), 0, grid, response="score")
    assert np.all(ice.values == 1.0)


def test_ice_flat_when_paths_ignore_feature():
    # every split tests feature 0, so sweeping feature 1 cannot move the path
    forest = OnlineIsolationForest(
        ForestConfig(num_trees=4, window=64, seed=2), dim=2
    )
    rng = np.random.default_rng(0)
    for i in range(200):
        forest.learn(i, [rng.uniform(0, 10), 5.0])  # feature 1 degenerate
    grid = Grid.build(1, -100.0, 100.0, 20)
    x = np.array([3.3, 5.0])
    ice = compute_ice(forest, x, 1, grid, response="mean_depth")
    assert np.all(ice.values == ice.values[0])


def toy_depth2_forest():
    """One tree: root splits f0@0.5; left child splits again; right is a leaf.

    Points with f0 < 0.5 land at depth 2, points with f0 >= 0.5 at depth 1.
    """
    cfg = ForestConfig(num_trees=1, window=8, eta=1.0, depth_cap=8, seed=0).to_dict()
    tree = {
        "depth": 0, "count": 0,
        "split": {"feature": 0, "value": 0.5},
        "left": {
            "depth": 1, "count": 0,
            "split": {"feature": 0, "value": 0.25},
            "left": {"depth": 2, "count": 0, "members": []},
            "right": {"depth": 2, "count": 0, "members": []},
        },
        "right": {"depth": 1, "count": 0, "members": []},
    }
    snap = {
        "kind": "streamlens.forest", "version": 1, "dim": 2, "config": cfg,
        "feature_mask": [True, True], "trees": [tree],
    }
    return OnlineIsolationForest.from_snapshot(snap)


def test_ice_hand_traced_toy_tree():
    forest = toy_depth2_forest()
    grid = Grid.build(0, 0.0, 1.0, 20)
    ice = compute_ice(forest, np.array([0.9, 4.0]), 0, grid, response="mean_depth")
    expected = np.where(grid.points < 0.5, 2.0, 1.0)
    assert np.array_equal(ice.values, expected)


def test_ice_leaves_forest_unmodified():
    forest = OnlineIsolationForest(ForestConfig(num_trees=4, window=64, seed=5), dim=2)
    rng = np.random.default_rng(1)
    for i in range(100):
        forest.learn(i, rng.standard_normal(2))
    before = forest.to_json()
    compute_ice(forest, np.zeros(2), 0, Grid.build(0, -3, 3, 20))
    assert forest.to_json() == before


def test_ice_validates_inputs():
    forest = OnlineIsolationForest(ForestConfig(num_trees=2, window=64), dim=2)
    with pytest.raises(ValueError):
        compute_ice(forest, np.zeros(3), 0, Grid.build(0, 0, 1, 20))
    with pytest.raises(ValueError):
        compute_ice(forest, np.zeros(2), 1, Grid.build(0, 0, 1, 20))
    with pytest.raises(ValueError):
        compute_ice(forest, np.zeros(2), 0, Grid.build(0, 0, 1, 20), response="probit")


# -- update_pdp ---------------------------------------------------------------------


def test_alpha_one_tracks_last_ice():
    state = fresh_state(alpha=1.0)
    update_pdp(state, flat_ice(state, 3.0))
    update_pdp(state, flat_ice(state, 9.0))
    assert np.all(state.pdp == 9.0)


def test_first_update_ignores_alpha():
    state = fresh_state(alpha=0.05)
    values = np.linspace(4.0, 5.0, 20)
    update_pdp(state, IceCurve(state.grid, values, 1))
    assert np.array_equal(state.pdp, values)


def test_ema_unrolls_to_closed_form():
    # flat 0 seed, then three flat-1 curves with alpha=0.1:
    # pdp = 1 - 0.9**3 = 0.271
    state = fresh_state(alpha=0.1)
    update_pdp(state, flat_ice(state, 0.0))
    for _ in range(3):
        update_pdp(state, flat_ice(state, 1.0))
    expected = 1.0 - 0.9**3
    assert np.max(np.abs(state.pdp - expected)) < 1e-12


def test_pdp_matches_weighted_sum_oracle():
    rng = np.random.default_rng(8)
    state = fresh_state(alpha=0.3, size=10)
    oracle = EmaOracle(alpha=0.3)
    oracle.observe_regrid(None, state.grid.points)
    for i in range(60):
        values = rng.standard_normal(10)
        update_pdp(state, IceCurve(state.grid, values, i))
        oracle.observe_ice(values)
    assert np.max(np.abs(state.pdp - oracle.expected_pdp())) < 1e-9


def test_update_pdp_rejects_grid_mismatch():
    state = fresh_state()
    other = Grid.build(0, 5.0, 6.0, 20)
    with pytest.raises(ValueError, match="re-grid"):
        update_pdp(state, IceCurve(other, np.zeros(20), 1))


# -- update_grid -----------------------------------------------------------------


def test_update_grid_noop_on_identical_endpoints():
    state = fresh_state(lo=0.0, hi=1.0)
    update_pdp(state, flat_ice(state, 2.0))
    grid_before = state.grid
    pdp_before = state.pdp
    update_grid(state, 0.0, 1.0)
    assert state.grid is grid_before
    assert state.pdp is pdp_before


def test_update_grid_noop_within_tolerance():
    state = fresh_state(lo=0.0, hi=1.0, tol=0.10)
    grid_before = state.grid
    update_grid(state, 0.05, 0.95)  # inward by 5% of span: keep
    assert state.grid is grid_before
    update_grid(state, 0.0, 0.85)  # hi moved inward by 15%: rebuild
    assert state.grid is not grid_before
    assert (state.grid.lo, state.grid.hi) == (0.0, 0.85)


def test_update_grid_outward_always_rebuilds():
    state = fresh_state(lo=0.0, hi=1.0, tol=0.10)
    update_grid(state, 0.0, 1.01)  # beyond hi, though within 10%
    assert (state.grid.lo, state.grid.hi) == (0.0, 1.01)


def test_update_grid_clamps_resampled_tail():
    state = fresh_state(lo=0.0, hi=1.0)
    values = np.linspace(2.0, 7.0, 20)
    update_pdp(state, IceCurve(state.grid, values, 1))
    update_grid(state, 0.0, 2.0)
    # everything past the old hi takes the old endpoint value
    assert state.pdp[-1] == values[-1]
    outside = state.grid.points > 1.0
    assert np.all(state.pdp[outside] == values[-1])


def test_resample_exact_on_linear_curves():
    old = Grid.build(0, 0.0, 1.0, 20)
    values = 3.0 * old.points + 0.5
    same = _resample(old, values, Grid.build(0, 0.0, 1.0, 20))
    assert np.max(np.abs(same - values)) < 1e-9
    inner = Grid.build(0, 0.25, 0.75, 20)
    expected = 3.0 * inner.points + 0.5
    assert np.max(np.abs(_resample(old, values, inner) - expected)) < 1e-9


def test_update_grid_resamples_ring_too():
    state = fresh_state(lo=0.0, hi=1.0)
    update_pdp(state, IceCurve(state.grid, state.grid.points.copy(), 1))
    update_grid(state, 0.0, 2.0)
    (_iid, ring_values), = state.ring
    assert ring_values.shape == (20,)
    assert ring_values[-1] == 1.0  # clamped at the old endpoint


def test_update_grid_rejects_inverted():
    state = fresh_state()
    with pytest.raises(ValueError):
        update_grid(state, 2.0, 1.0)


# -- feature importance -------------------------------------------------------------


def test_fi_zero_when_ice_equals_pdp():
    state = fresh_state(beta=1.0)
    values = np.sin(np.linspace(0, 3, 20))
    update_pdp(state, IceCurve(state.grid, values, 1))
    dev, _ = feature_importance(state, IceCurve(state.grid, values.copy(), 2))
    assert dev == 0.0


def test_fi_ignores_level_shifts():
    state = fresh_state(beta=1.0)
    update_pdp(state, flat_ice(state, 3.0))
    dev, _ = feature_importance(state, flat_ice(state, 7.0))
    assert dev == 0.0


def test_fi_rms_of_half_split_deviation():
    # ice = pdp + (+0.2 on the first half, -0.2 on the second): the centered
    # difference has zero mean and RMS exactly 0.2
    state = fresh_state(beta=1.0)
    base = np.linspace(1.0, 2.0, 20)
    update_pdp(state, IceCurve(state.grid, base, 1))
    bump = np.concatenate([np.full(10, 0.2), np.full(10, -0.2)])
    dev, state = feature_importance(state, IceCurve(state.grid, base + bump, 2))
    assert abs(dev - 0.2) < 1e-12
    assert abs(state.fi - 0.2) < 1e-12  # beta=1 adopts the deviation


def test_fi_level_invariance_exact_on_dyadic_values():
    # dyadic values keep every intermediate float exact, so the centering
    # identity holds bitwise; random values then get a 1e-12 bound
    state1 = fresh_state(beta=1.0, size=4)
    state2 = fresh_state(beta=1.0, size=4)
    pdp = np.array([0.25, 0.5, 0.75, 1.0])
    update_pdp(state1, IceCurve(state1.grid, pdp, 1))
    update_pdp(state2, IceCurve(state2.grid, pdp.copy(), 1))
    ice = np.array([0.5, 0.25, 1.5, 0.125])
    d1, _ = feature_importance(state1, IceCurve(state1.grid, ice, 2))
    d2, _ = feature_importance(state2, IceCurve(state2.grid, ice + 2.0, 2))
    assert d1 == d2

    rng = np.random.default_rng(0)
    for _ in range(25):
        s1 = fresh_state(beta=1.0)
        s2 = fresh_state(beta=1.0)
        base = rng.standard_normal(20)
        update_pdp(s1, IceCurve(s1.grid, base, 1))
        update_pdp(s2, IceCurve(s2.grid, base.copy(), 1))
        probe = rng.standard_normal(20)
        c = rng.uniform(-5, 5)
        a, _ = feature_importance(s1, IceCurve(s1.grid, probe, 2))
        b, _ = feature_importance(s2, IceCurve(s2.grid, probe + c, 2))
        assert abs(a - b) < 1e-12


def test_fi_fades_with_beta():
    state = fresh_state(beta=0.5)
    base = np.zeros(20)
    update_pdp(state, IceCurve(state.grid, base, 1))
    bump = np.concatenate([np.full(10, 0.2), np.full(10, -0.2)])
    feature_importance(state, IceCurve(state.grid, bump, 2))
    assert abs(state.fi - 0.2) < 1e-12  # first observation seeds directly
    feature_importance(state, IceCurve(state.grid, base, 3))
    assert abs(state.fi - 0.1) < 1e-12  # 0.5*0 + 0.5*0.2


def test_fi_nonnegative_and_null_for_flat_streams():
    state = fresh_state(lo=2.0, hi=2.0)  # degenerate: constant feature
    for i in range(50):
        level = float(np.sin(i))  # level moves, shape never does
        ice = flat_ice(state, level, i)
        dev, _ = feature_importance(state, ice)
        update_pdp(state, ice)
        assert dev >= 0.0
        assert state.fi < 1e-12


# -- explain_instance ------------------------------------------------------------------


def test_explain_all_disabled_is_identity():
    forest = OnlineIsolationForest(ForestConfig(num_trees=2, window=64), dim=2)
    cfg = ExplainConfig()
    states = [PdpState.initial(j, cfg) for j in range(2)]
    states[0].fi = 0.7
    fi, out = explain_instance(
        forest, np.zeros(2), states, [False, False], [(0, 1), (0, 1)], 5
    )
    assert list(fi.values) == [0.7, 0.0]
    assert all(s.updates_seen == 0 for s in out)


def test_explain_single_feature_empty_forest_fi_zero():
    forest = OnlineIsolationForest(ForestConfig(num_trees=4, window=64), dim=1)
    cfg = ExplainConfig()
    states = [PdpState.initial(0, cfg)]
    for i in range(5):
        fi, _ = explain_instance(forest, [0.5], states, [True], [(0.0, 1.0)], i)
        assert fi.values[0] == 0.0


def test_explain_matches_scripted_recomputation():
    # two instances against the fixed toy tree, response = mean_depth;
    # every intermediate quantity recomputed inline with plain numpy
    forest = toy_depth2_forest()
    cfg = ExplainConfig(grid_size=4, alpha=0.5, beta=0.5, regrid_tol=0.0)
    states = [PdpState.initial(j, cfg) for j in range(2)]
    grid_pts = np.linspace(0.0, 1.0, 4)

    def expected_curve(x, j):
        out = []
        for g in grid_pts:
            p = np.array(x, dtype=float)
            p[j] = g
            out.append(2.0 if p[0] < 0.5 else 1.0)
        return np.array(out)

    instances = [np.array([0.9, 0.2]), np.array([0.1, 0.8])]
    pdp = {0: None, 1: None}
    fi = {0: 0.0, 1: 0.0}
    seen = {0: False, 1: False}
    for step, x in enumerate(instances):
        got, _ = explain_instance(
            forest, x, states, [True, True], [(0.0, 1.0), (0.0, 1.0)],
            instance_id=step, response="mean_depth",
        )
        for j in range(2):
            curve = expected_curve(x, j)
            if not seen[j]:
                dev = 0.0
                pdp[j] = curve
                fi[j] = dev
                seen[j] = True
            else:
                ic = curve - curve.mean()
                pc = pdp[j] - pdp[j].mean()
                dev = float(np.sqrt(np.mean((ic - pc) ** 2)))
                fi[j] = 0.5 * dev + 0.5 * fi[j]
                pdp[j] = 0.5 * curve + 0.5 * pdp[j]
            assert np.allclose(states[j].pdp, pdp[j], atol=1e-12)
            assert abs(got.values[j] - fi[j]) < 1e-12


def test_explain_is_read_only_on_forest():
    forest = OnlineIsolationForest(ForestConfig(num_trees=4, window=64, seed=3), dim=3)
    rng = np.random.default_rng(2)
    for i in range(150):
        forest.learn(i, rng.standard_normal(3))
    before = forest.to_json()
    cfg = ExplainConfig()
    states = [PdpState.initial(j, cfg) for j in range(3)]
    for i in range(10):
        x = rng.standard_normal(3)
        extents = [(-3.0, 3.0)] * 3
        explain_instance(forest, x, states, [True] * 3, extents, i)
    assert forest.to_json() == before


# -- pdp_snapshot -----------------------------------------------------------------------


def test_snapshot_fresh_state():
    snap = pdp_snapshot(fresh_state(), "Thermal Stress")
    assert snap["feature"] == "Thermal Stress"
    assert snap["fi"] == 0.0
    assert snap["ice"] == []
    assert len(snap["grid"]) == len(snap["pdp"]) == 20


def test_snapshot_fade_weights():
    state = fresh_state(alpha=0.2)
    for i in range(3):
        update_pdp(state, flat_ice(state, float(i), instance_id=i))
    snap = pdp_snapshot(state, 0)
    ages = [e["age"] for e in snap["ice"]]
    weights = [e["weight"] for e in snap["ice"]]
    assert ages == [0, 1, 2]
    assert weights == [1.0, 0.8, 0.8**2]
    assert snap["ice"][0]["values"][0] == 2.0  # newest first


def test_snapshot_ring_bounded():
    state = fresh_state(ring=15)
    for i in range(20):
        update_pdp(state, flat_ice(state, float(i), instance_id=i))
    snap = pdp_snapshot(state, 0)
    assert len(snap["ice"]) == 15
    assert snap["ice"][0]["values"][0] == 19.0


def test_window_min_max_alias():
    w = WindowStore(dim=2)
    w.push(Instance(1, 0, np.array([3.0, -1.0])))
    w.push(Instance(2, 1, np.array([5.0, -2.0])))
    assert window_min_max(w, 0) == (3.0, 5.0)
    assert window_min_max(w, 1) == (-2.0, -1.0)


def test_explainer_snapshot_names():
    ex = Explainer(2, ExplainConfig())
    snaps = ex.snapshot(("a", "b"))
    assert [s["feature"] for s in snaps] == ["a", "b"]
