import numpy as np
import pytest

from spectracast.core import CHANNELS, N_CHANNELS, make_series


def series_from_channel(x, channel: str = "temperature", fill=None, station_id="t-0"):
    """Build a 5-channel TimeSeries with one channel of interest.

    Remaining channels default to their base levels plus a tiny wiggle so
    normalization and per-channel stats stay non-degenerate.
    """
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[0]
    steps = np.arange(t)
    values = np.empty((t, N_CHANNELS))
    base = {"temperature": 288.0, "pressure": 1013.0, "humidity": 60.0, "wind": 4.0,
            "precipitation": 0.0}
    for i, name in enumerate(CHANNELS):
        if name == channel:
            values[:, i] = x
        elif fill is not None:
            values[:, i] = fill
        elif name == "precipitation":
            values[:, i] = 0.0
        else:
            values[:, i] = base[name] + 0.01 * (i + 1) * np.sin(2 * np.pi * steps / 11.0)
    return make_series(values, station_id=station_id)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def logistic_map(n: int, seed: int = 0) -> np.ndarray:
    x = np.empty(n)
    x[0] = np.random.default_rng(seed).uniform(0.1, 0.9)
    for i in range(n - 1):
        x[i + 1] = 4.0 * x[i] * (1.0 - x[i])
    return x
