"""Property appraisal with comparables-based prompting (Python interface)."""
import json as _json

from ._core import (
    AppraisalError,
    AuthError,
    ConfigError,
    DataError,
    haversine,
    interval_metrics,
    mape,
    parse_features,
    parse_interval,
    parse_price,
    render_tables,
    strategy_names,
)
from . import _core

__all__ = [
    "AppraisalError", "AuthError", "ConfigError", "DataError", "Appraiser", "haversine", "interval_metrics",
    "mape", "parse_features", "parse_interval", "parse_price", "render_tables", "run_grid", "strategies",
    "strategy_names",
]


def strategies():
    """The twelve prompting strategies, as served by GET /api/strategies."""
    return _json.loads(_core.strategies_json())["strategies"]


def run_grid(config, write_outputs=True):
    """Run an evaluation grid from a TOML config; returns one dict per report."""
    return _json.loads(_core.run_grid(str(config), write_outputs))


class Appraiser:
    """Single-property appraisal over a run config."""

    def __init__(self, config):
        self._impl = _core.Appraiser(str(config))

    def appraise(self, request):
        """Returns (status, body) for a request dict shaped like POST /api/appraise."""
        status, body = self._impl.appraise(_json.dumps(request))
        return status, _json.loads(body)

    def comparables(self, lat, lon, mode="geo", k=10, **extra):
        query = [("lat", repr(lat)), ("lon", repr(lon)), ("mode", mode), ("k", str(k))]
        query += [(key, str(v)) for key, v in extra.items()]
        return _json.loads(self._impl.comparables(query))

    def datasets(self):
        return _json.loads(self._impl.datasets())
