"""Shared test helpers: finite-difference gradient checks and tiny data builders."""

from __future__ import annotations

import numpy as np
import pytest

from proxkit.core import (
    CLASSES,
    DistanceClass,
    ExperimentMeta,
    Interval,
    SensorKind,
    SensorReading,
)


def numeric_gradient(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. every entry of arr."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        f_plus = f()
        arr[idx] = old - h
        f_minus = f()
        arr[idx] = old
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def check_layer_gradients(layer, x: np.ndarray, rng: np.random.Generator, tol: float = 1e-4):
    """Check input and parameter gradients of a layer against finite differences."""
    y = layer.forward(x)
    probe = rng.standard_normal(y.shape)

    def scalar_loss() -> float:
        return float((layer.forward(x) * probe).sum())

    for p in layer.params():
        p.zero_grad()
    layer.forward(x)
    dx = layer.backward(probe.copy())
    err = rel_error(dx, numeric_gradient(scalar_loss, x))
    assert err <= tol, f"input gradient rel err {err:.2e}"
    for p in layer.params():
        err = rel_error(p.grad, numeric_gradient(scalar_loss, p.value))
        assert err <= tol, f"{p.name} gradient rel err {err:.2e}"


def meta(experiment_id: str = "exp0", site: str = "site_a", **overrides) -> ExperimentMeta:
    values = dict(
        experiment_id=experiment_id,
        site=site,
        tx_model="phone_a",
        rx_model="phone_b",
        tx_power="high",
        carriage="hand",
    )
    values.update(overrides)
    return ExperimentMeta(**values)


def ble_reading(t: float, dbm: float) -> SensorReading:
    return SensorReading(t=t, kind=SensorKind.BLUETOOTH, values=(dbm,))


def make_interval(
    readings,
    label: DistanceClass = DistanceClass.M1_2,
    window: float = 4.0,
    **meta_overrides,
) -> Interval:
    return Interval(
        meta=meta(**meta_overrides),
        label=label,
        readings=tuple(readings),
        window=window,
    )


def full_sensor_interval(
    rng: np.random.Generator,
    label: DistanceClass = DistanceClass.M1_2,
    window: float = 4.0,
    n_per_kind: int = 5,
    **meta_overrides,
) -> Interval:
    """An interval with a few readings from every sensor kind."""
    readings = []
    for kind in SensorKind:
        for i in range(n_per_kind):
            t = window * i / n_per_kind
            readings.append(
                SensorReading(
                    t=t, kind=kind, values=tuple(rng.normal(0, 1, kind.dim))
                )
            )
    readings.sort(key=lambda r: r.t)
    return make_interval(readings, label=label, window=window, **meta_overrides)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
