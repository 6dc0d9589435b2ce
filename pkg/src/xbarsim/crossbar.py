"""Tiled crossbar execution: DAC encode, Kirchhoff summation, ADC decode.

Crossbar orientation follows the hardware: word lines (rows) carry the layer
inputs and bit lines (columns) collect one output each, so a weight matrix of
shape (out, in) is programmed transposed, as an (in, out) conductance array.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .device import DeviceParams
from .errors import CalibrationError, ConfigError, DomainError, ShapeError, UsageError
from .mapping import WeightMatrix, calibrate_k, quantize_levels, split_double_column

FAULT_NONE, FAULT_LRS, FAULT_HRS = 0, 1, 2
FAULT_NAMES = {FAULT_NONE: "none", FAULT_LRS: "stuck_lrs", FAULT_HRS: "stuck_hrs"}


@dataclass(frozen=True, order=True)
class TileShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"tile shape must be positive, got {self.rows}x{self.cols}")

    @property
    def area(self) -> int:
        return self.rows * self.cols

    @classmethod
    def parse(cls, spec) -> "TileShape":
        """Accept ``64``, ``"64x32"``, ``(64, 32)`` or a TileShape."""
        if isinstance(spec, TileShape):
            return spec
        if isinstance(spec, int):
            return cls(spec, spec)
        if isinstance(spec, str):
            parts = spec.lower().split("x")
            if len(parts) == 1:
                return cls(int(parts[0]), int(parts[0]))
            return cls(int(parts[0]), int(parts[1]))
        rows, cols = spec
        return cls(int(rows), int(cols))

    def __str__(self):
        return f"{self.rows}x{self.cols}"


@dataclass(frozen=True)
class TilePlacement:
    shape: TileShape
    origin: tuple[int, int]
    occupied: tuple[int, int]


@dataclass(frozen=True)
class CrossbarTile:
    """One physical tile; cells outside ``occupied`` are padding at g_off."""

    shape: TileShape
    g: np.ndarray
    origin: tuple[int, int]
    occupied: tuple[int, int]


@dataclass(frozen=True)
class DacConfig:
    v_max: float = 9.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise ConfigError("v_max must be positive", field="v_max")


@dataclass(frozen=True)
class AdcConfig:
    """Uniform symmetric quantizer. ``bits=None`` models an ideal readout."""

    bits: int | None = 8
    overflow_rate: float = 0.0
    i_max: float | None = None

    def __post_init__(self):
        if self.bits is not None and self.bits < 1:
            raise ConfigError("ADC bits must be >= 1", field="bits")
        if not 0.0 <= self.overflow_rate <= 1.0:
            raise ConfigError("overflow_rate must lie in [0, 1]", field="overflow_rate")


def partition_tiles(rows: int, cols: int, available: Sequence[TileShape]) -> list[TilePlacement]:
    """Best-fit allocation of a rows x cols matrix onto tiles.

    A matrix that fits some tile goes to the smallest-area fitting shape
    (fewer rows on ties). Otherwise it is cut into a grid by the largest
    shape and every block is allocated best-fit on its own. Placements come
    back in row-major origin order.
    """
    shapes = [TileShape.parse(s) for s in available]
    if not shapes:
        raise ConfigError("no tile shapes available", field="tile_shapes")
    if rows < 1 or cols < 1:
        raise ShapeError(f"cannot tile an empty {rows}x{cols} matrix")

    def best_fit(r, c):
        fitting = [s for s in shapes if s.rows >= r and s.cols >= c]
        if not fitting:
            return None
        return min(fitting, key=lambda s: (s.area, s.rows, s.cols))

    whole = best_fit(rows, cols)
    if whole is not None:
        return [TilePlacement(whole, (0, 0), (rows, cols))]

    largest = max(shapes, key=lambda s: (s.area, s.rows, s.cols))
    out = []
    for r0 in range(0, rows, largest.rows):
        for c0 in range(0, cols, largest.cols):
            r = min(largest.rows, rows - r0)
            c = min(largest.cols, cols - c0)
            out.append(TilePlacement(best_fit(r, c), (r0, c0), (r, c)))
    return out


def dac_encode(x, dac: DacConfig, x_ref: float) -> np.ndarray:
    """Scale inputs to word-line voltages, saturating beyond ``x_ref``."""
    if not x_ref > 0:
        raise DomainError("DAC reference amplitude must be positive")
    return np.clip(np.asarray(x, dtype=float) / x_ref, -1.0, 1.0) * dac.v_max


def tile_mvm(tile: CrossbarTile, v) -> np.ndarray:
    """Bit-line currents I_j = sum_i V_i G_ij over the occupied cells."""
    v = np.asarray(v, dtype=float)
    r, c = tile.occupied
    if v.shape[-1] != r:
        raise UsageError(f"voltage vector has length {v.shape[-1]}, tile uses {r} rows")
    return v @ tile.g[:r, :c]


def adc_decode(i, adc: AdcConfig) -> np.ndarray:
    i = np.asarray(i, dtype=float)
    if adc.bits is None:
        return i
    if adc.i_max is None or not adc.i_max > 0:
        raise UsageError("ADC is not calibrated (i_max unset)")
    flat = np.ascontiguousarray(i.reshape(-1))
    return np.asarray(kernels.adc_quantize(flat, float(adc.i_max), int(adc.bits))).reshape(i.shape)


def calibrate_adc(adc: AdcConfig, observed, overflow_rate: float | None = None) -> AdcConfig:
    """Set full scale so that ``overflow_rate`` of |observed| would clip."""
    rate = adc.overflow_rate if overflow_rate is None else overflow_rate
    mags = np.abs(np.asarray(observed, dtype=float)).ravel()
    if mags.size == 0:
        raise UsageError("no observations to calibrate against")
    if not np.any(mags > 0):
        raise CalibrationError("all observed currents are zero")
    if rate == 0.0:
        i_max = float(mags.max())
    else:
        i_max = float(np.quantile(mags, 1.0 - rate, method="inverted_cdf"))
    if not i_max > 0:
        raise CalibrationError("calibrated full scale is zero")
    return replace(adc, overflow_rate=rate, i_max=i_max)


@dataclass(frozen=True)
class CellArray:
    """Per-cell state of one polarity, in crossbar orientation (in, out).

    A cell's conductance is ``(g_lo + level * (g_hi - g_lo)) * drift`` where
    ``level`` is its programmed fraction of the device's own range; stuck
    cells read as level 1 (LRS) or 0 (HRS).
    """

    level: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray
    drift: np.ndarray
    fault: np.ndarray

    @classmethod
    def nominal(cls, level, g_on: float, g_off: float) -> "CellArray":
        level = np.asarray(level, dtype=float)
        return cls(
            level=level,
            g_lo=np.full(level.shape, g_off),
            g_hi=np.full(level.shape, g_on),
            drift=np.ones(level.shape),
            fault=np.zeros(level.shape, dtype=np.int8),
        )

    @cached_property
    def g(self) -> np.ndarray:
        lvl = np.where(self.fault == FAULT_LRS, 1.0,
                       np.where(self.fault == FAULT_HRS, 0.0, self.level))
        return (self.g_lo + lvl * (self.g_hi - self.g_lo)) * self.drift


@dataclass(frozen=True)
class EngineConfig:
    tile_shapes: tuple = (TileShape(64, 64),)
    v_max: float = 9.0
    v_prog: float = 6.0
    adc_bits: int | None = 8
    overflow_rate: float = 0.0
    calibration_samples: int = 64

    def __post_init__(self):
        object.__setattr__(self, "tile_shapes", tuple(TileShape.parse(s) for s in self.tile_shapes))
        if not self.tile_shapes:
            raise ConfigError("tile_shapes is empty", field="tile_shapes")
        DacConfig(self.v_max)
        AdcConfig(self.adc_bits, self.overflow_rate)
        if not self.v_prog > 0:
            raise ConfigError("v_prog must be positive", field="v_prog")

    @property
    def reach(self) -> float:
        """Fraction of the conductance range reachable at this input voltage."""
        return min(1.0, self.v_max / self.v_prog)


@dataclass(frozen=True)
class MappedLayer:
    weights: WeightMatrix
    placements: tuple
    pos: CellArray
    neg: CellArray
    r_on: float
    r_off: float
    states: int
    reach: float
    dac: DacConfig
    x_ref: float
    adc_pos: tuple
    adc_neg: tuple
    k: float
    layer_id: int = 0

    @property
    def g_on(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_off(self) -> float:
        return 1.0 / self.r_off

    @property
    def in_features(self) -> int:
        return self.weights.cols

    @property
    def out_features(self) -> int:
        return self.weights.rows

    @cached_property
    def tiles_pos(self) -> tuple:
        return _build_tiles(self.pos.g, self.placements, self.g_off)

    @cached_property
    def tiles_neg(self) -> tuple:
        return _build_tiles(self.neg.g, self.placements, self.g_off)

    def with_cells(self, pos: CellArray, neg: CellArray) -> "MappedLayer":
        return replace(self, pos=pos, neg=neg)


def _build_tiles(g: np.ndarray, placements, g_off: float) -> tuple:
    tiles = []
    for p in placements:
        (r0, c0), (r, c) = p.origin, p.occupied
        padded = np.full((p.shape.rows, p.shape.cols), g_off)
        padded[:r, :c] = g[r0:r0 + r, c0:c0 + c]
        tiles.append(CrossbarTile(p.shape, padded, p.origin, p.occupied))
    return tuple(tiles)


def analog_columns(layer: MappedLayer, x) -> np.ndarray:
    """Aggregated ADC outputs ``I_pos - I_neg`` before the K scale."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[-1] != layer.in_features:
        raise UsageError(f"input has {x2.shape[-1]} features, layer expects {layer.in_features}")
    v = dac_encode(x2, layer.dac, layer.x_ref)
    y = np.zeros((x2.shape[0], layer.out_features))
    for tp, tn, ap, an in zip(layer.tiles_pos, layer.tiles_neg, layer.adc_pos, layer.adc_neg):
        (r0, c0), (r, c) = tp.origin, tp.occupied
        vs = v[:, r0:r0 + r]
        y[:, c0:c0 + c] += adc_decode(tile_mvm(tp, vs), ap) - adc_decode(tile_mvm(tn, vs), an)
    return y[0] if single else y


def mapped_mvm(layer: MappedLayer, x) -> np.ndarray:
    """Approximate ``W @ x`` through the analog pipeline (batched over rows of x)."""
    return layer.k * analog_columns(layer, x)


def _programmed_levels(w: WeightMatrix, reach: float, states: int):
    plus, minus = split_double_column(w)
    hi = plus.w_max
    if hi == 0.0:
        # nothing to map; both arrays sit at the same midpoint
        half = np.full(w.values.T.shape, 0.5)
        return half, half.copy()
    levels = []
    for part in (plus, minus):
        frac = np.minimum(part.values.T / hi, reach)
        levels.append(np.asarray(quantize_levels(frac / reach, states)) * reach)
    return levels[0], levels[1]


def _calibrate_adcs(layer: MappedLayer, v: np.ndarray, template: AdcConfig):
    """One full scale per tile, shared by its positive and negative arrays.

    The quantizer is mid-rise, so zero current reads as half a step; with a
    common full scale that offset cancels in ``I_pos - I_neg``.
    """
    if template.bits is None:
        ideal = tuple(template for _ in layer.placements)
        return ideal, ideal
    adcs = []
    for tp, tn in zip(layer.tiles_pos, layer.tiles_neg):
        (r0, _), (r, c) = tp.origin, tp.occupied
        currents = np.concatenate([tile_mvm(tp, v[:, r0:r0 + r]).ravel(),
                                   tile_mvm(tn, v[:, r0:r0 + r]).ravel()])
        if not np.any(currents):
            # rows never driven during calibration: fall back to full scale
            sums = max(tp.g[:r, :c].sum(axis=0).max(), tn.g[:r, :c].sum(axis=0).max())
            adcs.append(replace(template, i_max=layer.dac.v_max * float(sums)))
        else:
            adcs.append(calibrate_adc(template, currents))
    adcs = tuple(adcs)
    return adcs, adcs


def map_layer(weights, device: DeviceParams, engine: EngineConfig | None = None,
              states: int = 0, calibration=None, x_ref: float | None = None,
              seed: int = 0, layer_id: int = 0) -> MappedLayer:
    """Program a weight matrix (out, in) onto tiles and calibrate DAC, ADC and K.

    ``calibration`` is a batch of representative inputs (n, in). It fixes the
    DAC reference ``x_ref = max|x|``, the ADC full scale of every tile, and is
    the regression set for K. Without it, seeded uniform probes in
    ``[0, x_ref]`` are used (``x_ref`` defaults to 1).
    """
    engine = engine or EngineConfig()
    w = weights if isinstance(weights, WeightMatrix) else WeightMatrix.from_array(weights)
    reach = engine.reach
    lv_pos, lv_neg = _programmed_levels(w, reach, states)
    placements = tuple(partition_tiles(w.cols, w.rows, engine.tile_shapes))

    if calibration is None:
        scale = 1.0 if x_ref is None else float(x_ref)
        rng = np.random.default_rng([seed, layer_id, 0])
        calibration = rng.uniform(0.0, 1.0, size=(engine.calibration_samples, w.cols)) * scale
    calibration = np.atleast_2d(np.asarray(calibration, dtype=float))
    if x_ref is None:
        x_ref = float(np.abs(calibration).max())
    if not x_ref > 0:
        raise CalibrationError("calibration inputs are all zero")

    dac = DacConfig(engine.v_max)
    template = AdcConfig(engine.adc_bits, engine.overflow_rate)
    layer = MappedLayer(
        weights=w,
        placements=placements,
        pos=CellArray.nominal(lv_pos, device.g_on, device.g_off),
        neg=CellArray.nominal(lv_neg, device.g_on, device.g_off),
        r_on=device.r_on,
        r_off=device.r_off,
        states=states,
        reach=reach,
        dac=dac,
        x_ref=x_ref,
        adc_pos=(),
        adc_neg=(),
        k=0.0,
        layer_id=layer_id,
    )
    v = dac_encode(calibration, dac, x_ref)
    adc_pos, adc_neg = _calibrate_adcs(layer, v, template)
    layer = replace(layer, adc_pos=adc_pos, adc_neg=adc_neg)
    k = calibrate_k(None, w, lambda xs: analog_columns(layer, xs), inputs=calibration)
    return replace(layer, k=k)


def conductance_plan(layer: MappedLayer):
    """Current conductances as a ConductancePlan in weight orientation (out, in)."""
    from .mapping import ConductancePlan

    return ConductancePlan(layer.pos.g.T.copy(), layer.neg.g.T.copy(), layer.g_on,
                           layer.g_off, layer.states, layer.k)


def write_tile_layout(layer: MappedLayer, path) -> None:
    """CSV of tile placements; positive-array tiles first, then negative."""
    n = len(layer.placements)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tile_id", "origin_row", "origin_col", "rows", "cols",
                         "shape_rows", "shape_cols"])
        for offset in (0, n):
            for idx, p in enumerate(layer.placements):
                writer.writerow([offset + idx, p.origin[0], p.origin[1], p.occupied[0],
                                 p.occupied[1], p.shape.rows, p.shape.cols])
