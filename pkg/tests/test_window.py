"""Window store wedges against a brute-force min/max scan."""

import numpy as np
import pytest

from streamlens.ingest import Instance
from streamlens.window import WindowStore


def inst(i, values):
    return Instance(id=i, timestamp=i * 1000, x=np.asarray(values, dtype=float))


def test_basic_min_max():
    w = WindowStore(dim=1)
    for i, v in enumerate([3.0, 1.0, 2.0]):
        w.push(inst(i, [v]))
    assert w.min_max(0) == (1.0, 3.0)


def test_expiry_updates_extents():
    w = WindowStore(dim=1)
    for i, v in enumerate([3.0, 1.0, 2.0]):
        w.push(inst(i, [v]))
    out = w.popleft()
    assert out.x[0] == 3.0
    assert w.min_max(0) == (1.0, 2.0)


def test_empty_window_errors():
    w = WindowStore(dim=2)
    with pytest.raises(LookupError):
        w.min_max(0)
    with pytest.raises(LookupError):
        w.popleft()
    w.push(inst(1, [0.0, 0.0]))
    with pytest.raises(IndexError):
        w.min_max(5)


def test_duplicate_values_survive_expiry():
    w = WindowStore(dim=1)
    for i, v in enumerate([5.0, 5.0, 7.0]):
        w.push(inst(i, [v]))
    w.popleft()  # drop the first 5.0; the second one still holds the min
    assert w.min_max(0) == (5.0, 7.0)


def test_matches_brute_force_over_random_stream():
    rng = np.random.default_rng(3)
    w = WindowStore(dim=3)
    ring = []
    for i in range(10_000):
        if ring and (len(ring) >= 64 or rng.random() < 0.3):
            w.popleft()
            ring.pop(0)
        else:
            x = rng.standard_normal(3)
            # occasional duplicates to stress tie handling
            if ring and rng.random() < 0.1:
                x = ring[-1].copy()
            w.push(inst(i, x))
            ring.append(x)
        if ring:
            arr = np.array(ring)
            for j in range(3):
                lo, hi = w.min_max(j)
                assert lo == arr[:, j].min()
                assert hi == arr[:, j].max()
    assert len(w) == len(ring)
