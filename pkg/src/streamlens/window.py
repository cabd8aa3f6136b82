"""Sliding-window store with amortized O(1) per-feature min/max.

Each feature keeps two monotonic wedges (deques of ``(seq, value)``): the
min wedge stays strictly increasing in value, the max wedge strictly
decreasing, so the current extremum is always at the front and every
element is pushed and popped at most once.
"""

from __future__ import annotations

from collections import deque


class WindowStore:
    """Arrival-ordered ring of stream items exposing per-feature extents.

    Items must carry a ``.x`` sequence of ``dim`` floats (``Instance``
    does). The caller bounds the size: push, then pop the oldest when the
    window exceeds its capacity.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self._items: deque = deque()
        self._min: list[deque] = [deque() for _ in range(dim)]
        self._max: list[deque] = [deque() for _ in range(dim)]
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item) -> None:
        seq = self._next_seq
        self._next_seq += 1
        for j in range(self.dim):
            v = float(item.x[j])
            wmin = self._min[j]
            while wmin and wmin[-1][1] >= v:
                wmin.pop()
            wmin.append((seq, v))
            wmax = self._max[j]
            while wmax and wmax[-1][1] <= v:
                wmax.pop()
            wmax.append((seq, v))
        self._items.append((seq, item))

    def popleft(self):
        """Expire and return the oldest item."""
        if not self._items:
            raise LookupError("window is empty")
        seq, item = self._items.popleft()
        for j in range(self.dim):
            if self._min[j][0][0] == seq:
                self._min[j].popleft()
            if self._max[j][0][0] == seq:
                self._max[j].popleft()
        return item

    def min_max(self, j: int) -> tuple[float, float]:
        """Exact (min, max) of feature ``j`` over the current window."""
        if not self._items:
            raise LookupError("window is empty")
        if not 0 <= j < self.dim:
            raise IndexError(f"feature index {j} out of range for dim {self.dim}")
        return self._min[j][0][1], self._max[j][0][1]

    def oldest(self):
        if not self._items:
            raise LookupError("window is empty")
        return self._items[0][1]
