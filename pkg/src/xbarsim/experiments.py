"""Config-driven sweeps over the crossbar pipeline.

An experiment file is TOML with one experiment per file::

    experiment = "miv_sweep"
    network = "fixture:cnn"
    dataset = "fixture:digits-test"
    seed = 7
    output = "miv.csv"

    [grid]
    v_max = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]

Optional sections ``[device]`` (``preset`` plus parameter overrides),
``[engine]`` and ``[nonideal]`` set the values every grid point starts from.
The grid is the cartesian product of its lists, iterated in file order with
the last key varying fastest.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .crossbar import EngineConfig
from .device import DeviceParams, make_state, sine_waveform, simulate_waveform, hysteresis_metrics
from .errors import ConfigError
from .io import load_dataset, load_network, resolve_path
from .nn import evaluate, patch_network
from .nonideal import NonIdealityConfig

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

log = logging.getLogger(__name__)

_ENGINE_KEYS = {"v_max", "v_prog", "adc_bits", "overflow_rate", "tile_shapes"}
_NONIDEAL_KEYS = {f.name for f in fields(NonIdealityConfig)} - {"seed"}

GRID_KEYS = {
    "miv_sweep": ("v_max",),
    "adc_tile": ("adc_bits", "tile"),
    "sigma_states": ("sigma", "states", "trial"),
    "saf_grid": ("p_lrs", "p_hrs", "trial"),
    "endurance_retention": ("condition", "cycles", "temperature", "drift_nu", "drift_time", "trial"),
    "hysteresis": ("frequency", "amplitude"),
}
STOCHASTIC = {"sigma_states", "saf_grid", "endurance_retention"}
CONDITIONS = ("ideal", "endurance", "retention")

# Ageing defaults used by endurance_retention when the grid leaves them out.
AGEING_DEFAULTS = {"cycles": 10_000, "temperature": 350.0, "drift_nu": 0.1, "drift_time": 1e4}
HYSTERESIS_FREQUENCIES = (1e6, 1e7, 1e8)


@dataclass
class ExperimentConfig:
    experiment: str
    network: str = "fixture:cnn"
    dataset: str = "fixture:digits-test"
    calibration: str = "fixture:digits-train"
    calibration_samples: int = 64
    samples: int | None = None
    seed: int | None = None
    output: str | None = None
    device: dict = field(default_factory=dict)
    engine: dict = field(default_factory=dict)
    nonideal: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in GRID_KEYS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {sorted(GRID_KEYS)}",
                              field="experiment")
        allowed = GRID_KEYS[self.experiment]
        for key, values in self.grid.items():
            if key not in allowed:
                raise ConfigError(f"grid key {key!r} is not valid for {self.experiment}; "
                                  f"allowed: {list(allowed)}", field=f"grid.{key}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"grid.{key} must be a non-empty list", field=f"grid.{key}")
        if self.experiment != "hysteresis" and not self.grid:
            raise ConfigError("grid is empty", field="grid")
        if self.experiment in STOCHASTIC and self.seed is None:
            raise ConfigError(f"{self.experiment} is stochastic and needs a seed", field="seed")
        for name, keys in (("engine", _ENGINE_KEYS), ("nonideal", _NONIDEAL_KEYS)):
            for key in getattr(self, name):
                if key not in keys:
                    raise ConfigError(f"unknown key {name}.{key}", field=f"{name}.{key}")
        if self.calibration_samples < 1:
            raise ConfigError("calibration_samples must be >= 1", field="calibration_samples")

    @property
    def output_name(self) -> str:
        return self.output or f"{self.experiment}.csv"

    def points(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]

    def device_params(self) -> DeviceParams:
        overrides = dict(self.device)
        preset = overrides.pop("preset", "pt_hf_ti")
        try:
            return DeviceParams.preset(preset, **overrides)
        except TypeError as exc:
            raise ConfigError(f"bad device override: {exc}", field="device") from exc


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    """Parse a TOML experiment file; ``seed`` overrides the file's seed."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", field="config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", field="config") from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key!r}", field=key)
    if "experiment" not in raw:
        raise ConfigError("missing 'experiment'", field="experiment")
    if seed is not None:
        raw["seed"] = seed
    return ExperimentConfig(**raw)


def point_seed(master: int, trial: int) -> int:
    """Independent, reproducible seed for one (master seed, trial) pair."""
    return int(np.random.SeedSequence([int(master), int(trial)]).generate_state(1)[0])


def _adc_bits(value):
    if isinstance(value, str):
        if value.lower() in ("ideal", "none"):
            return None
        raise ConfigError(f"adc_bits must be an integer or 'ideal', got {value!r}", field="adc_bits")
    return value


def build_point(cfg: ExperimentConfig, params: dict) -> tuple[EngineConfig, NonIdealityConfig]:
    """Engine and non-ideality settings for one grid point (validated)."""
    engine = dict(cfg.engine)
    nonideal = dict(cfg.nonideal)
    trial = 0
    for key, value in params.items():
        if key == "tile":
            engine["tile_shapes"] = (value,)
        elif key == "trial":
            trial = value
        elif key == "condition":
            if value not in CONDITIONS:
                raise ConfigError(f"condition must be one of {CONDITIONS}, got {value!r}",
                                  field="grid.condition")
        elif key in _ENGINE_KEYS:
            engine[key] = value
        else:
            nonideal[key] = value
    condition = params.get("condition")
    if condition is not None:
        for key, default in AGEING_DEFAULTS.items():
            nonideal.setdefault(key, default)
        if condition != "endurance":
            nonideal["cycles"] = 0
        if condition != "retention":
            nonideal["drift_nu"] = 0.0
    if "adc_bits" in engine:
        engine["adc_bits"] = _adc_bits(engine["adc_bits"])
    if "tile_shapes" in engine and not isinstance(engine["tile_shapes"], (list, tuple)):
        engine["tile_shapes"] = (engine["tile_shapes"],)
    seed = point_seed(cfg.seed or 0, trial)
    try:
        eng = EngineConfig(**engine)
        non = NonIdealityConfig(seed=seed, **nonideal)
    except ConfigError as exc:
        name = exc.field or "grid"
        where = f"grid.{name}" if name in params or (name == "tile_shapes" and "tile" in params) else name
        raise ConfigError(f"{params}: {exc}", field=where) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{params}: {exc}", field="grid") from exc
    return eng, non


@dataclass
class ResultRow:
    experiment: str
    params: dict
    accuracy: float | None
    runtime_s: float
    seed: int
    error: str = ""
    per_class: list | None = None

    def csv_fields(self, timing: bool) -> list[str]:
        acc = "" if self.accuracy is None else f"{self.accuracy:.4f}"
        runtime = f"{self.runtime_s:.3f}" if timing else ""
        return [self.experiment, *(_fmt(v) for v in self.params.values()), acc, runtime,
                str(self.seed), self.error]


def _nan_to_none(values):
    if values is None:
        return None
    return [None if isinstance(v, float) and math.isnan(v) else v for v in values]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _Context:
    """Artefacts shared by every grid point of one run (loaded once)."""

    def __init__(self, cfg: ExperimentConfig):
        self.device = cfg.device_params()
        self.network = load_network(resolve_path(cfg.network))
        data = load_dataset(resolve_path(cfg.dataset))
        self.dataset = data if cfg.samples is None else data.take(cfg.samples)
        calib = load_dataset(resolve_path(cfg.calibration))
        self.calibration = calib.take(cfg.calibration_samples).images


def _run_point(cfg: ExperimentConfig, ctx: _Context, params: dict, eng, non) -> ResultRow:
    start = time.perf_counter()
    try:
        patched = patch_network(ctx.network, ctx.device, eng, non, ctx.calibration)
        result = evaluate(patched, ctx.dataset)
        return ResultRow(cfg.experiment, params, result.accuracy, time.perf_counter() - start,
                         non.seed, per_class=list(result.per_class))
    except Exception as exc:  # one bad point must not stop the sweep
        log.warning("grid point %s failed: %s", params, exc)
        message = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        return ResultRow(cfg.experiment, params, None, time.perf_counter() - start, non.seed,
                         error=message)


def run_experiment(cfg: ExperimentConfig, out_dir=".", threads: int = 1,
                   timing: bool = False) -> list[ResultRow]:
    """Evaluate every grid point and write ``<output>`` plus a JSON sidecar.

    Rows are written in grid order as soon as each point (and every point
    before it) finishes, so an interrupted run keeps its completed prefix.
    """
    if cfg.experiment == "hysteresis":
        raise ConfigError("use emit_hysteresis for hysteresis experiments", field="experiment")
    points = cfg.points()
    settings = [build_point(cfg, p) for p in points]  # fail fast on any bad grid value
    ctx = _Context(cfg)

    out = Path(out_dir) / cfg.output_name
    out.parent.mkdir(parents=True, exist_ok=True)
    rows: list[ResultRow] = []
    with open(out, "w", newline="") as fh, ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment", *cfg.grid, "accuracy", "runtime_s", "seed", "error"])
        fh.flush()
        jobs = pool.map(lambda job: _run_point(cfg, ctx, job[0], *job[1]), zip(points, settings))
        for row in jobs:
            writer.writerow(row.csv_fields(timing))
            fh.flush()
            rows.append(row)

    sidecar = {
        "config": asdict(cfg),
        "rows": [{"params": r.params, "accuracy": r.accuracy, "per_class": _nan_to_none(r.per_class),
                  "seed": r.seed, "error": r.error or None,
                  **({"runtime_s": r.runtime_s} if timing else {})} for r in rows],
    }
    out.with_suffix(out.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return rows


@dataclass
class HysteresisRow:
    amplitude: float
    frequency: float
    loop_area: float
    pinched: bool
    trace: str


def _trace_name(amplitude: float, frequency: float) -> str:
    return f"trace_a{amplitude:g}V_f{frequency:g}Hz.csv"


def emit_hysteresis(cfg: ExperimentConfig, out_dir=".") -> list[HysteresisRow]:
    """Sine sweeps through one device, one trace CSV per point plus a summary.

    Defaults: amplitude twice the OFF threshold, frequencies 1, 10 and 100 MHz,
    device starting in its high-resistance state.
    """
    params = cfg.device_params()
    frequencies = cfg.grid.get("frequency", list(HYSTERESIS_FREQUENCIES))
    amplitudes = cfg.grid.get("amplitude", [2.0 * params.v_off])
    periods = 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for amplitude in amplitudes:
        for frequency in frequencies:
            if not (isinstance(frequency, (int, float)) and frequency > 0):
                raise ConfigError(f"frequency must be positive, got {frequency!r}", field="grid.frequency")
            if not isinstance(amplitude, (int, float)) or not math.isfinite(amplitude):
                raise ConfigError(f"bad amplitude {amplitude!r}", field="grid.amplitude")
            wave = sine_waveform(float(amplitude), float(frequency), periods)
            trace = simulate_waveform(params, make_state(params, params.w_min), wave)
            metrics = hysteresis_metrics(trace, period=periods / float(frequency))
            name = _trace_name(float(amplitude), float(frequency))
            trace.to_csv(out / name)
            rows.append(HysteresisRow(float(amplitude), float(frequency), metrics.loop_area,
                                      metrics.pinched_at_origin, name))
    summary = out / (cfg.output or "hysteresis_summary.csv")
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["amplitude", "frequency", "loop_area", "pinched", "trace"])
        for r in rows:
            writer.writerow([repr(r.amplitude), repr(r.frequency), repr(r.loop_area),
                             str(r.pinched).lower(), r.trace])
    return rows

