"""Weight to conductance mapping for the double-column scheme."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CalibrationError, ConfigError, DomainError

# calibrate_k probe defaults
CALIBRATION_SAMPLES = 64


@dataclass(frozen=True)
class WeightMatrix:
    """A real weight matrix plus the bounds used to map it onto conductances."""

    values: np.ndarray
    w_min: float
    w_max: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise DomainError("weight matrix must be 2-D")
        if not np.all(np.isfinite(vals)):
            raise DomainError("weight matrix has non-finite entries")
        if vals.size and (vals.min() < self.w_min or vals.max() > self.w_max):
            raise DomainError("weights fall outside the declared bounds")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, values, w_min=None, w_max=None) -> "WeightMatrix":
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        lo = float(vals.min()) if w_min is None else float(w_min)
        hi = float(vals.max()) if w_max is None else float(w_max)
        return cls(vals, lo, hi)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ConductancePlan:
    g_pos: np.ndarray
    g_neg: np.ndarray
    g_on: float
    g_off: float
    states: int = 0
    k: float = 0.0


def split_double_column(w: WeightMatrix) -> tuple[WeightMatrix, WeightMatrix]:
    """Split signed weights into non-negative positive and negative parts.

    Both halves share one set of bounds, ``[0, max|w|]``, so a single affine
    map turns ``w_plus - w_minus`` into ``g_pos - g_neg`` with the ``g_off``
    offsets cancelling.
    """
    vals = w.values
    plus = np.maximum(vals, 0.0)
    minus = np.maximum(-vals, 0.0)
    hi = float(max(plus.max(initial=0.0), minus.max(initial=0.0)))
    return WeightMatrix(plus, 0.0, hi), WeightMatrix(minus, 0.0, hi)


def weight_to_conductance(w_val, w_min: float, w_max: float, g_on: float, g_off: float):
    """Affine map of ``[w_min, w_max]`` onto ``[g_off, g_on]``.

    Raises DomainError when the weight range is empty; callers map such a
    matrix to the midpoint conductance instead.
    """
    if not w_max > w_min:
        raise DomainError("degenerate weight range (w_max == w_min)")
    if not g_on > g_off > 0:
        raise DomainError("need g_on > g_off > 0")
    w_arr = np.asarray(w_val, dtype=float)
    if np.any(w_arr < w_min) or np.any(w_arr > w_max):
        raise DomainError("weight outside [w_min, w_max]")
    frac = (w_arr - w_min) / (w_max - w_min)
    g = np.clip(g_off + (g_on - g_off) * frac, g_off, g_on)
    # pin the endpoints exactly
    g = np.where(w_arr == w_max, g_on, np.where(w_arr == w_min, g_off, g))
    return float(g) if g.ndim == 0 else g


def quantize_levels(frac, states: int):
    """Snap fractions in [0, 1] to ``states`` evenly spaced levels (ties go up)."""
    if states == 0:
        return frac
    if states == 1 or states < 0:
        raise ConfigError("states must be 0 (continuous) or >= 2", field="states")
    steps = states - 1
    scaled = np.asarray(frac, dtype=float) * steps
    # ties within rounding noise resolve toward the upper level
    idx = np.floor(scaled + 0.5 + 1e-9)
    out = np.clip(idx, 0, steps) / steps
    return float(out) if out.ndim == 0 else out


def quantize_linear(g, states: int, g_off: float, g_on: float):
    """Nearest of ``states`` evenly spaced conductances spanning [g_off, g_on]."""
    if states == 0:
        return g
    g_arr = np.asarray(g, dtype=float)
    frac = (g_arr - g_off) / (g_on - g_off)
    level = quantize_levels(frac, states)
    out = np.where(level == 1.0, g_on, g_off + (g_on - g_off) * np.asarray(level))
    return float(out) if np.ndim(out) == 0 else out


def plan_conductances(w: WeightMatrix, g_on: float, g_off: float, states: int = 0) -> ConductancePlan:
    """Split, map and quantize ``w`` into a (not yet calibrated) plan."""
    plus, minus = split_double_column(w)
    if plus.w_max == plus.w_min:
        mid = 0.5 * (g_on + g_off)
        g_pos = np.full(w.values.shape, mid)
        g_neg = np.full(w.values.shape, mid)
    else:
        g_pos = weight_to_conductance(plus.values, plus.w_min, plus.w_max, g_on, g_off)
        g_neg = weight_to_conductance(minus.values, minus.w_min, minus.w_max, g_on, g_off)
    g_pos = np.asarray(quantize_linear(g_pos, states, g_off, g_on))
    g_neg = np.asarray(quantize_linear(g_neg, states, g_off, g_on))
    return ConductancePlan(g_pos, g_neg, g_on, g_off, states)


def fit_scale(analog: np.ndarray, digital: np.ndarray) -> float:
    """Least-squares k minimising ||k * analog - digital||^2 (no intercept)."""
    a = np.asarray(analog, dtype=float).ravel()
    d = np.asarray(digital, dtype=float).ravel()
    denom = float(a @ a)
    if denom == 0.0:
        raise CalibrationError("analog outputs are all zero; nothing to regress")
    return float(a @ d) / denom


def calibrate_k(plan: ConductancePlan, source_weights: WeightMatrix,
                engine: Callable[[np.ndarray], np.ndarray],
                samples: int = CALIBRATION_SAMPLES, seed: int = 0,
                inputs: np.ndarray | None = None, x_scale: float = 1.0) -> float:
    """Recover the current-to-weight scale K by regression.

    ``engine`` maps a batch of inputs (n, rows) to raw analog column outputs
    (n, cols), i.e. the crossbar result before K. Probes are ``samples``
    seeded uniform draws in ``[0, x_scale]`` unless ``inputs`` is given.
    ``plan`` is accepted for symmetry with the mapped state the engine runs on.
    """
    if inputs is None:
        if samples < 1:
            raise ConfigError("samples must be >= 1", field="samples")
        rng = np.random.default_rng(seed)
        inputs = rng.uniform(0.0, 1.0, size=(samples, source_weights.cols)) * x_scale
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    digital = inputs @ source_weights.values.T
    analog = engine(inputs)
    return fit_scale(analog, digital)
