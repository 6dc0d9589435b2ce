"""VTEAM voltage-controlled memristor model.

State motion follows a threshold power law with no window function::

    dw/dt = k_off * (v / v_off - 1) ** alpha_off    v > v_off
    dw/dt = k_on  * (v / v_on  - 1) ** alpha_on     v < v_on
    dw/dt = 0                                       otherwise

integrated by explicit Euler at ``dt`` and clamped to ``[w_min, w_max]``.
Resistance interpolates linearly from ``r_off`` at ``w_min`` to ``r_on`` at
``w_max``. With ``k_off < 0`` and ``k_on > 0`` a positive over-threshold
voltage pushes the device toward the high-resistance state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels
from .errors import DomainError, UsageError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PINCH_EPS_V = 1e-6
PINCH_EPS_I = 1e-9


@dataclass(frozen=True)
class DeviceParams:
    r_on: float
    r_off: float
    v_on: float
    v_off: float
    k_on: float
    k_off: float
    alpha_on: float
    alpha_off: float
    w_min: float
    w_max: float
    dt: float = 1e-10

    def __post_init__(self):
        if not self.r_off > self.r_on > 0:
            raise DomainError(f"need r_off > r_on > 0, got r_on={self.r_on}, r_off={self.r_off}")
        if not (self.v_off > 0 and self.v_on < 0):
            raise DomainError("thresholds must bracket zero (v_on < 0 < v_off)")
        if not self.w_max > self.w_min >= 0:
            raise DomainError("need w_max > w_min >= 0")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.alpha_on < 0 or self.alpha_off < 0:
            raise DomainError("alpha exponents must be non-negative")

    @property
    def g_on(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_off(self) -> float:
        return 1.0 / self.r_off

    @classmethod
    def preset(cls, name: str = "pt_hf_ti", **overrides) -> "DeviceParams":
        """Load a named parameter set from the bundled ``device_presets.toml``."""
        presets = load_presets()
        if name not in presets:
            raise DomainError(f"unknown device preset {name!r}; known: {sorted(presets)}")
        values = dict(presets[name])
        values.update(overrides)
        return cls(**values)


def load_presets() -> dict:
    text = resources.files("xbarsim").joinpath("data/device_presets.toml").read_text()
    return tomllib.loads(text)


@dataclass(frozen=True)
class DeviceState:
    w: float
    g: float


class WaveformSample(NamedTuple):
    t: float
    v: float


def conductance(params: DeviceParams, w):
    """Conductance G(w) = 1/R(w); accepts scalars or arrays."""
    w_arr = np.asarray(w, dtype=float)
    span = params.w_max - params.w_min
    tol = 1e-12 * span
    if np.any(w_arr < params.w_min - tol) or np.any(w_arr > params.w_max + tol):
        raise DomainError(f"state w outside [{params.w_min}, {params.w_max}]")
    x = np.clip((w_arr - params.w_min) / span, 0.0, 1.0)
    g = 1.0 / (params.r_on * x + params.r_off * (1.0 - x))
    return float(g) if g.ndim == 0 else g


def make_state(params: DeviceParams, w: float) -> DeviceState:
    return DeviceState(w=float(w), g=conductance(params, w))


def state_rate(params: DeviceParams, v: float) -> float:
    """dw/dt at voltage ``v`` (independent of w: the window is constant 1)."""
    if v > params.v_off:
        return params.k_off * (v / params.v_off - 1.0) ** params.alpha_off
    if v < params.v_on:
        return params.k_on * (v / params.v_on - 1.0) ** params.alpha_on
    return 0.0


def step_state(params: DeviceParams, state: DeviceState, v: float) -> DeviceState:
    """Advance one Euler step of length ``params.dt`` under constant voltage."""
    if not math.isfinite(v):
        raise UsageError("voltage must be finite")
    rate = state_rate(params, v)
    if rate == 0.0:
        return state
    w = min(max(state.w + rate * params.dt, params.w_min), params.w_max)
    return make_state(params, w)


@dataclass(frozen=True)
class Trace:
    """Sampled device response; arrays share one length."""

    t: np.ndarray
    v: np.ndarray
    i: np.ndarray
    w: np.ndarray

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        return zip(self.t.tolist(), self.v.tolist(), self.i.tolist(), self.w.tolist())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "v", "i", "w"])
            for row in self:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*(np.ascontiguousarray(data[:, k]) for k in range(4)))


def _as_waveform(waveform) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(waveform) if not isinstance(waveform, np.ndarray) else waveform,
                     dtype=float)
    if arr.size == 0:
        raise UsageError("waveform is empty")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise UsageError("waveform must be a sequence of (t, v) samples")
    t = np.ascontiguousarray(arr[:, 0])
    v = np.ascontiguousarray(arr[:, 1])
    if np.any(np.diff(t) <= 0):
        raise UsageError("waveform times must be strictly increasing")
    if not np.all(np.isfinite(v)):
        raise UsageError("waveform voltages must be finite")
    return t, v


def simulate_waveform(params: DeviceParams, initial: DeviceState, waveform) -> Trace:
    """Drive one device with a sampled voltage waveform.

    Between consecutive samples the voltage is interpolated linearly and the
    state is stepped with Euler steps no longer than ``params.dt``. The current
    at each sample is ``G(w) * v`` using the state reached at that sample.
    """
    t, v = _as_waveform(waveform)
    p = params
    i, w = kernels.vteam_integrate(
        t, v, float(initial.w), p.r_on, p.r_off, p.v_on, p.v_off, p.k_on, p.k_off,
        p.alpha_on, p.alpha_off, p.w_min, p.w_max, p.dt,
    )
    return Trace(t=t, v=v, i=np.asarray(i), w=np.asarray(w))


def sine_waveform(amplitude: float, frequency: float, periods: float = 1.0,
                  samples_per_period: int = 2000) -> list[WaveformSample]:
    n = int(round(periods * samples_per_period)) + 1
    t = np.arange(n) / (samples_per_period * frequency)
    v = amplitude * np.sin(2.0 * np.pi * frequency * t)
    # endpoints of whole half-periods land on exact zeros
    v[np.isclose(np.mod(2.0 * frequency * t, 1.0), 0.0, atol=1e-9)] = 0.0
    return [WaveformSample(a, b) for a, b in zip(t.tolist(), v.tolist())]


@dataclass(frozen=True)
class HysteresisMetrics:
    pinched_at_origin: bool
    loop_area: float


def _lobe_bounds(v: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges of the half-cycles between sign changes of v."""
    sign = np.sign(v)
    bounds, start, current = [], 0, 0.0
    for k, s in enumerate(sign):
        if s == 0:
            continue
        if current != 0 and s != current:
            # close the lobe at the last sample before the sign flip
            end = k - 1 if sign[k - 1] == 0 else k
            bounds.append((start, end))
            start = end
        current = s
    bounds.append((start, len(v) - 1))
    return bounds


def hysteresis_metrics(trace, period: float | None = None,
                       eps_v: float = PINCH_EPS_V, eps_i: float = PINCH_EPS_I) -> HysteresisMetrics:
    """Pinch check and enclosed I-V area of a traced sweep.

    The area is the sum over half-cycle lobes of ``|closed integral i dv|``
    (trapezoid rule). A pinched loop has two lobes traversed in opposite
    senses, so integrating the whole period at once would cancel them.
    """
    if isinstance(trace, Trace):
        t, v, i = trace.t, trace.v, trace.i
    else:
        arr = np.asarray(list(trace), dtype=float)
        if arr.ndim != 2 or arr.shape[1] < 3:
            raise UsageError("trace rows must be (t, v, i[, w])")
        t, v, i = arr[:, 0], arr[:, 1], arr[:, 2]
    if len(t) < 3:
        raise UsageError("trace too short to contain a period")
    if period is not None and (t[-1] - t[0]) < period * (1.0 - 1e-9):
        raise UsageError("trace does not cover one full period")

    near_zero = np.abs(v) < eps_v
    pinched = bool(np.all(np.abs(i[near_zero]) < eps_i))

    area = 0.0
    for a, b in _lobe_bounds(v):
        if b - a < 1:
            continue
        seg_v, seg_i = v[a:b + 1], i[a:b + 1]
        area += abs(float(np.sum(0.5 * (seg_i[1:] + seg_i[:-1]) * np.diff(seg_v))))
    return HysteresisMetrics(pinched_at_origin=pinched, loop_area=area)
