"""streamlens: real-time explainable anomaly detection for sensor streams.

An incrementally maintained isolation-tree ensemble scores each arriving
instance of a multivariate stream, a per-feature ICE/PDP layer explains
which features drive the score, and an engine plus HTTP service let an
operator steer the running system (threshold, feature relevance, event
labels) while it adapts to drift inside a sliding window.
"""

__version__ = "0.1.0"

from streamlens.forest import ForestConfig, OnlineIsolationForest

__all__ = [
    "ForestConfig",
    "OnlineIsolationForest",
    "Engine",
    "EngineConfig",
    "__version__",
]


def __getattr__(name):
    # Engine pulls in the full pipeline; import it lazily so forest-only
    # users (and the kernel benchmark) stay light.
    if name in ("Engine", "EngineConfig"):
        from streamlens import engine

        return getattr(engine, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
