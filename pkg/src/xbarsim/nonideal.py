"""Non-ideality injectors for mapped layers.

Every injector is a pure function of (layer, parameters, seed) and returns a
new MappedLayer; neutral parameters return the input layer itself. Random
draws come from a stream keyed on (seed, layer id, injector, polarity), so
layers can be processed in any order without changing results.

Composition order is fixed: variability, state discretization, stuck-at
faults, endurance, retention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .crossbar import FAULT_HRS, FAULT_LRS, FAULT_NAMES, FAULT_NONE, MappedLayer
from .errors import ConfigError
from .mapping import quantize_levels

BOLTZMANN_EV = 8.617333262e-5  # eV/K
REFERENCE_TEMPERATURE = 300.0

_STREAM_VARIABILITY = 1
_STREAM_SAF = 2
_STREAM_RETENTION = 3

_MAX_RESAMPLE_ROUNDS = 10_000


def arrhenius_factor(temperature: float, activation_energy: float = 0.5) -> float:
    """Wear acceleration relative to 300 K."""
    return math.exp(-activation_energy / (BOLTZMANN_EV * temperature)) / math.exp(
        -activation_energy / (BOLTZMANN_EV * REFERENCE_TEMPERATURE)
    )


def default_endurance_rate(activation_energy: float = 0.5) -> float:
    """Rate giving a contraction exponent of 1/2 after 1e4 cycles at 350 K."""
    return math.log(2.0) / (1e4 * arrhenius_factor(350.0, activation_energy))


@dataclass(frozen=True)
class NonIdealityConfig:
    sigma: float = 0.0
    states: int = 0
    p_lrs: float = 0.0
    p_hrs: float = 0.0
    cycles: int = 0
    temperature: float = 300.0
    drift_nu: float = 0.0
    drift_time: float = 0.0
    seed: int = 0
    activation_energy: float = 0.5
    endurance_rate: float | None = None

    def __post_init__(self):
        checks = [
            (self.sigma >= 0, "sigma", "must be >= 0"),
            (self.states == 0 or self.states >= 2, "states", "must be 0 or >= 2"),
            (0 <= self.p_lrs <= 1, "p_lrs", "must lie in [0, 1]"),
            (0 <= self.p_hrs <= 1, "p_hrs", "must lie in [0, 1]"),
            (self.p_lrs + self.p_hrs <= 1 + 1e-12, "p_hrs", "p_lrs + p_hrs must be <= 1"),
            (self.cycles >= 0, "cycles", "must be >= 0"),
            (self.temperature > 0, "temperature", "must be > 0"),
            (self.drift_nu >= 0, "drift_nu", "must be >= 0"),
            (self.drift_time >= 0, "drift_time", "must be >= 0"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(f"{name} {msg}", field=name)

    @property
    def rate(self) -> float:
        if self.endurance_rate is not None:
            return self.endurance_rate
        return default_endurance_rate(self.activation_energy)


def _rng(seed: int, layer_id: int, stream: int, polarity: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(layer_id), stream, polarity])


def _perturbed_bounds(rng, shape, r_on, r_off, sigma):
    n = int(np.prod(shape))
    ron = r_on + sigma * rng.standard_normal(n)
    roff = r_off + sigma * rng.standard_normal(n)
    bad = (ron <= 0) | (roff <= ron)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_RESAMPLE_ROUNDS:
            raise ConfigError("variability resampling did not converge; sigma too large",
                              field="sigma")
        idx = np.flatnonzero(bad)
        ron[idx] = r_on + sigma * rng.standard_normal(idx.size)
        roff[idx] = r_off + sigma * rng.standard_normal(idx.size)
        bad[idx] = (ron[idx] <= 0) | (roff[idx] <= ron[idx])
    return ron.reshape(shape), roff.reshape(shape)


def apply_variability(layer: MappedLayer, sigma: float, seed: int) -> MappedLayer:
    """Perturb every device's LRS/HRS resistances with Normal(0, sigma) ohms."""
    if sigma == 0:
        return layer
    cells = []
    for polarity, arr in enumerate((layer.pos, layer.neg)):
        rng = _rng(seed, layer.layer_id, _STREAM_VARIABILITY, polarity)
        ron, roff = _perturbed_bounds(rng, arr.level.shape, layer.r_on, layer.r_off, sigma)
        cells.append(replace(arr, g_lo=1.0 / roff, g_hi=1.0 / ron))
    return layer.with_cells(*cells)


def apply_states(layer: MappedLayer, states: int) -> MappedLayer:
    """Snap programmed levels to ``states`` even steps of the reachable range."""
    if states == 0:
        return layer
    cells = []
    for arr in (layer.pos, layer.neg):
        lvl = np.asarray(quantize_levels(arr.level / layer.reach, states)) * layer.reach
        cells.append(replace(arr, level=lvl))
    return replace(layer.with_cells(*cells), states=states)


@dataclass(frozen=True)
class FaultMask:
    """Fault codes for both arrays, crossbar orientation (in, out)."""

    pos: np.ndarray
    neg: np.ndarray

    def count(self, kind: int) -> int:
        return int((self.pos == kind).sum() + (self.neg == kind).sum())

    def to_csv(self, layer: MappedLayer, path) -> None:
        """Write faulted cells as ``tile_id,row,col,fault`` in tile-local coordinates."""
        n = len(layer.placements)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tile_id", "row", "col", "fault"])
            for offset, mask in ((0, self.pos), (n, self.neg)):
                for idx, p in enumerate(layer.placements):
                    (r0, c0), (r, c) = p.origin, p.occupied
                    block = mask[r0:r0 + r, c0:c0 + c]
                    for i, j in zip(*np.nonzero(block != FAULT_NONE)):
                        writer.writerow([offset + idx, int(i), int(j), FAULT_NAMES[int(block[i, j])]])


def apply_saf(layer: MappedLayer, p_lrs: float, p_hrs: float, seed: int):
    """Stick cells at LRS with probability p_lrs, at HRS with probability p_hrs.

    One uniform draw per cell decides both faults, so raising either
    probability only adds faults to an existing mask for a fixed seed.
    """
    if p_lrs + p_hrs > 1 + 1e-12:
        raise ConfigError("p_lrs + p_hrs must be <= 1", field="p_hrs")
    if p_lrs == 0 and p_hrs == 0:
        return layer, FaultMask(layer.pos.fault.copy(), layer.neg.fault.copy())
    cells, masks = [], []
    for polarity, arr in enumerate((layer.pos, layer.neg)):
        rng = _rng(seed, layer.layer_id, _STREAM_SAF, polarity)
        u = rng.random(arr.level.shape)
        fault = arr.fault.copy()
        fault[u < p_lrs] = FAULT_LRS
        fault[(u >= p_lrs) & (u < p_lrs + p_hrs)] = FAULT_HRS
        cells.append(replace(arr, fault=fault))
        masks.append(fault)
    return layer.with_cells(*cells), FaultMask(*masks)


def contraction_exponent(cycles: float, temperature: float, rate: float,
                         activation_energy: float = 0.5) -> float:
    return math.exp(-rate * cycles * arrhenius_factor(temperature, activation_energy))


def apply_endurance(layer: MappedLayer, cycles: int, temperature: float,
                    rate: float | None = None, activation_energy: float = 0.5) -> MappedLayer:
    """Shrink each device's [g_off, g_on] toward its geometric mean.

    Bounds become ``g_m * (g / g_m) ** f`` with ``f = exp(-rate * cycles * A(T))``;
    cells keep their programmed level within the narrower range.
    """
    if cycles == 0:
        return layer
    if rate is None:
        rate = default_endurance_rate(activation_energy)
    f = contraction_exponent(cycles, temperature, rate, activation_energy)
    cells = []
    for arr in (layer.pos, layer.neg):
        g_m = np.sqrt(arr.g_lo * arr.g_hi)
        cells.append(replace(arr, g_lo=g_m * (arr.g_lo / g_m) ** f,
                             g_hi=g_m * (arr.g_hi / g_m) ** f))
    return layer.with_cells(*cells)


def apply_retention(layer: MappedLayer, drift_nu: float, drift_time: float, seed: int) -> MappedLayer:
    """Power-law conductance decay ``(1 + t) ** -nu_i`` with nu_i ~ N(nu, nu/10) >= 0."""
    if drift_nu == 0 or drift_time == 0:
        return layer
    cells = []
    for polarity, arr in enumerate((layer.pos, layer.neg)):
        rng = _rng(seed, layer.layer_id, _STREAM_RETENTION, polarity)
        nu = np.maximum(drift_nu + 0.1 * drift_nu * rng.standard_normal(arr.level.shape), 0.0)
        cells.append(replace(arr, drift=arr.drift * (1.0 + drift_time) ** (-nu)))
    return layer.with_cells(*cells)


def apply_nonidealities(layer: MappedLayer, cfg: NonIdealityConfig):
    """Run all injectors in the fixed order; returns (layer, FaultMask)."""
    layer = apply_variability(layer, cfg.sigma, cfg.seed)
    layer = apply_states(layer, cfg.states)
    layer, mask = apply_saf(layer, cfg.p_lrs, cfg.p_hrs, cfg.seed)
    layer = apply_endurance(layer, cfg.cycles, cfg.temperature, cfg.rate, cfg.activation_energy)
    layer = apply_retention(layer, cfg.drift_nu, cfg.drift_time, cfg.seed)
    return layer, mask
