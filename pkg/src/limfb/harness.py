"""Experiment configuration, figure sweeps and result emission.

A config is one JSON document::

    {
      "experiment": "fig1_mrt_rate_vs_B",
      "params": {"N": 4, "beta": 4.0, "lambda_bs": 3.183e-06},
      "sweep": {"axis": "B", "grid": [0, 1, 2]},
      "n_iter": 5000,
      "seed": 7,
      "output": {"dir": "results", "stem": "fig1"}
    }

Precedence, highest first: CLI flags (``--seed``, ``--out``), config fields,
built-in defaults. A missing seed is drawn from OS entropy and echoed in the
metadata so the run can be repeated.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import analytic as an
from . import simulator as sim
from .analytic import DEFAULT_LAMBDA, Mode, NetRateBasis, SystemParams
from .errors import ConfigError, DomainError
from .results import CurveResult, CurveRow, write_metadata

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "fig1_mrt_rate_vs_B",
    "fig2_mrt_bstar_vs_Tc",
    "fig3_zf_rate_vs_B",
    "fig4_zf_bstar_vs_Tc",
    "fig5_crossover",
    "ccdf",
    "custom_sweep",
)
DEFAULT_B_GRID = tuple(range(21))
DEFAULT_TC_GRID = (100, 200, 500, 1000, 2000, 5000, 10000)
DEFAULT_GAMMA_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)
SWEEP_AXES = ("B", "Tc", "gamma", "N", "beta")
SIMULATED = {"fig1_mrt_rate_vs_B", "fig3_zf_rate_vs_B", "ccdf"}

_DEFAULT_AXIS = {
    "fig1_mrt_rate_vs_B": ("B", DEFAULT_B_GRID),
    "fig3_zf_rate_vs_B": ("B", DEFAULT_B_GRID),
    "fig2_mrt_bstar_vs_Tc": ("Tc", DEFAULT_TC_GRID),
    "fig4_zf_bstar_vs_Tc": ("Tc", DEFAULT_TC_GRID),
    "fig5_crossover": ("Tc", DEFAULT_TC_GRID),
    "ccdf": ("gamma", DEFAULT_GAMMA_GRID),
}


def library_version() -> str:
    try:
        return importlib_metadata.version("limfb")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    N: int = 4
    beta: float = 4.0
    B: int = 0
    Tc: int = 1000
    lambda_bs: float = DEFAULT_LAMBDA
    mode: Mode = Mode.MRT
    axis: str = "B"
    grid: tuple[float, ...] = DEFAULT_B_GRID
    quantities: tuple[str, ...] = ("rate",)
    quantizer: sim.Quantizer = sim.Quantizer.RVQ
    simulate: bool = True
    n_iter: int = 5000
    seed: int | None = None
    out_dir: str = "results"
    stem: str | None = None
    net_rate_basis: NetRateBasis = NetRateBasis.PER_USER

    @property
    def output_stem(self) -> str:
        return self.stem or self.experiment

    @property
    def params(self) -> SystemParams:
        return SystemParams(N=self.N, beta=self.beta, B=self.B, Tc=self.Tc,
                            lambda_bs=self.lambda_bs, mode=self.mode)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def with_out_dir(self, out_dir: str | None) -> "ExperimentConfig":
        return self if out_dir is None else dataclasses.replace(self, out_dir=str(out_dir))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("mode", "quantizer", "net_rate_basis"):
            d[key] = d[key].value
        d["grid"] = list(d["grid"])
        d["quantities"] = list(d["quantities"])
        return d


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _number(raw: dict, key: str, path: str, cast, default):
    if key not in raw:
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if cast is int and value != int(value):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return cast(value)


def _enum(cls, value, path: str):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ConfigError(path, f"{value!r} is not one of: {choices}") from None


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config; errors name the offending field path."""
    _require(isinstance(raw, dict), "<root>", "config must be a JSON object")
    known = {"experiment", "params", "sweep", "n_iter", "seed", "output", "net_rate_basis",
             "quantizer", "simulate", "quantities"}
    for key in raw:
        _require(key in known, key, "unknown field")
    experiment = raw.get("experiment")
    _require(experiment in EXPERIMENTS, "experiment",
             f"must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}")

    params = raw.get("params", {})
    _require(isinstance(params, dict), "params", "must be an object")
    for key in params:
        _require(key in {"N", "beta", "B", "Tc", "lambda_bs", "mode"}, f"params.{key}",
                 "unknown field")
    default_mode = Mode.ZF if experiment in ("fig3_zf_rate_vs_B", "fig4_zf_bstar_vs_Tc") else Mode.MRT
    kw: dict[str, Any] = dict(
        N=_number(params, "N", "params.N", int, 4),
        beta=_number(params, "beta", "params.beta", float, 4.0),
        B=_number(params, "B", "params.B", int, 0),
        Tc=_number(params, "Tc", "params.Tc", int, 1000),
        lambda_bs=_number(params, "lambda_bs", "params.lambda_bs", float, DEFAULT_LAMBDA),
        mode=_enum(Mode, params.get("mode", default_mode), "params.mode"),
    )
    if experiment in ("fig1_mrt_rate_vs_B", "fig2_mrt_bstar_vs_Tc"):
        _require(kw["mode"] is Mode.MRT, "params.mode", f"{experiment} is an MRT experiment")
    if experiment in ("fig3_zf_rate_vs_B", "fig4_zf_bstar_vs_Tc"):
        _require(kw["mode"] is Mode.ZF, "params.mode", f"{experiment} is a ZF experiment")
    if experiment == "fig5_crossover":
        # compares both schemes; mode is not an input
        kw["mode"] = Mode.MRT

    sweep = raw.get("sweep", {})
    _require(isinstance(sweep, dict), "sweep", "must be an object")
    default_axis, default_grid = _DEFAULT_AXIS.get(experiment, ("B", DEFAULT_B_GRID))
    axis = sweep.get("axis", default_axis)
    _require(axis in SWEEP_AXES, "sweep.axis", f"must be one of {', '.join(SWEEP_AXES)}")
    if experiment != "custom_sweep":
        _require(axis == default_axis, "sweep.axis", f"{experiment} sweeps {default_axis}")
    grid = sweep.get("grid", list(default_grid))
    _require(isinstance(grid, list) and len(grid) > 0, "sweep.grid", "must be a non-empty list")
    for i, g in enumerate(grid):
        _require(isinstance(g, (int, float)) and not isinstance(g, bool) and math.isfinite(g),
                 f"sweep.grid[{i}]", f"expected a finite number, got {g!r}")
    diffs = np.diff(np.asarray(grid, dtype=float))
    _require(bool(np.all(diffs > 0) or np.all(diffs < 0)), "sweep.grid", "must be strictly monotone")
    if axis in ("B", "Tc", "N"):
        for i, g in enumerate(grid):
            _require(g == int(g), f"sweep.grid[{i}]", f"{axis} values must be integers")
        grid = [int(g) for g in grid]

    output = raw.get("output", {})
    _require(isinstance(output, dict), "output", "must be an object")
    for key in output:
        _require(key in {"dir", "stem"}, f"output.{key}", "unknown field")

    seed = raw.get("seed")
    if seed is not None:
        _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
                 "seed", "must be a non-negative integer")
    simulate = raw.get("simulate", True)
    _require(isinstance(simulate, bool), "simulate", "must be true or false")
    quantities = raw.get("quantities", ["rate"])
    _require(isinstance(quantities, list) and quantities, "quantities", "must be a non-empty list")
    for i, q in enumerate(quantities):
        _require(q in QUANTITIES, f"quantities[{i}]",
                 f"unknown quantity {q!r}; choose from {', '.join(sorted(QUANTITIES))}")

    cfg = ExperimentConfig(
        experiment=experiment,
        axis=axis,
        grid=tuple(grid),
        quantities=tuple(quantities),
        quantizer=_enum(sim.Quantizer, raw.get("quantizer", "SCVQ" if experiment == "ccdf" else "RVQ"),
                        "quantizer"),
        simulate=simulate,
        n_iter=_number(raw, "n_iter", "n_iter", int, 5000),
        seed=seed,
        out_dir=str(output.get("dir", "results")),
        stem=output.get("stem"),
        net_rate_basis=_enum(NetRateBasis, raw.get("net_rate_basis", "per_user"), "net_rate_basis"),
        **kw,
    )
    _validate_ranges(cfg)
    return cfg


def _validate_ranges(cfg: ExperimentConfig) -> None:
    try:
        cfg.params
    except DomainError as exc:
        raise ConfigError(_param_path(str(exc)), str(exc)) from None
    uses_sim = cfg.simulate and (cfg.experiment in SIMULATED or
                                 (cfg.experiment == "custom_sweep" and "simulated_rate" in cfg.quantities))
    if uses_sim:
        _require(cfg.n_iter >= 100, "n_iter", "simulation-backed experiments need n_iter >= 100")
    axis_checks = {
        "B": (lambda g: g >= 0, "B values must be >= 0"),
        "Tc": (lambda g: g >= 1, "Tc values must be >= 1"),
        "gamma": (lambda g: g > 0, "SIR thresholds must be positive"),
        "N": (lambda g: g >= (2 if cfg.mode is Mode.ZF else 1), "N too small for the mode"),
        "beta": (lambda g: g > 2, "pathloss exponent must exceed 2"),
    }
    ok, message = axis_checks[cfg.axis]
    for i, g in enumerate(cfg.grid):
        _require(ok(g), f"sweep.grid[{i}]", message)
    if cfg.experiment in ("fig2_mrt_bstar_vs_Tc", "fig4_zf_bstar_vs_Tc", "fig5_crossover"):
        _require(cfg.N >= 2, "params.N", "optimum-bit experiments need N >= 2")
    if cfg.experiment == "ccdf" and cfg.mode is Mode.MRT:
        _require(cfg.N <= an.MAX_CCDF_ANTENNAS, "params.N",
                 f"MRT CCDF supports N <= {an.MAX_CCDF_ANTENNAS}")


def _param_path(message: str) -> str:
    lowered = message.lower()
    for key, words in (("params.beta", ("pathloss",)), ("params.N", ("n must", "zf serves")),
                       ("params.B", ("b must",)), ("params.Tc", ("tc must",)),
                       ("params.lambda_bs", ("density",))):
        if any(w in lowered for w in words):
            return key
    return "params"


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(raw)


def resolve_seed(cfg: ExperimentConfig) -> tuple[ExperimentConfig, str]:
    if cfg.seed is not None:
        return cfg, "config"
    seed = int(np.random.SeedSequence().entropy % (2**63))
    return dataclasses.replace(cfg, seed=seed), "auto"


def validate(cfg: ExperimentConfig) -> dict:
    """Resolved-config report; an auto-drawn seed is included."""
    cfg, seed_source = resolve_seed(cfg)
    return {"valid": True, "seed_source": seed_source, "config": cfg.to_dict(),
            "outputs": [str(Path(cfg.out_dir) / f"{cfg.output_stem}.{ext}") for ext in ("csv", "json")]}


# --------------------------------------------------------------------------
# sweep machinery
# --------------------------------------------------------------------------


def thread_cap() -> int:
    raw = os.environ.get("LIMFB_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("LIMFB_THREADS", f"must be a positive integer, got {raw!r}") from None


@dataclass
class _Point:
    x: float
    rows: list[CurveRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _failed(x: float, series: str, source: str, exc: Exception) -> CurveRow:
    log.error("%s at x=%s failed: %s", series, x, exc)
    return CurveRow(float(x), series, math.nan, math.nan, math.nan, source,
                    f"failed:{type(exc).__name__}")


def _analytic_row(x, series, fn: Callable[[], float], source="analytic") -> CurveRow:
    try:
        v = float(fn())
    except (ArithmeticError, DomainError) as exc:
        return _failed(x, series, source, exc)
    return CurveRow(float(x), series, v, v, v, source)


def _sim_rate_row(x, series, p: SystemParams, cfg: ExperimentConfig, meta: dict) -> CurveRow:
    try:
        samples = sim.run_sir_batch(p, cfg.n_iter, cfg.quantizer, cfg.seed, workers=1)
    except (ArithmeticError, DomainError, np.linalg.LinAlgError) as exc:
        return _failed(x, series, "simulation", exc)
    for key in ("empty_network_redraws", "singular_zf_redraws"):
        meta[key] = meta.get(key, 0) + samples.meta[key]
    rate, (lo, hi) = sim.estimate_rate(samples)
    return CurveRow(float(x), series, rate, lo, hi, "simulation")


def _map_points(fn: Callable[[float], _Point], grid) -> list[_Point]:
    workers = min(thread_cap(), len(grid))
    if workers <= 1:
        return [fn(x) for x in grid]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, grid))


def _rate_vs_b(cfg: ExperimentConfig) -> list[_Point]:
    exact = an.mrt_rate if cfg.mode is Mode.MRT else an.zf_rate
    lower = an.mrt_rate_lower if cfg.mode is Mode.MRT else an.zf_rate_lower
    sim_series = f"simulation_{cfg.quantizer.value.lower()}"

    def point(B):
        pt = _Point(B)
        p = dataclasses.replace(cfg.params, B=int(B))
        pt.rows.append(_analytic_row(B, "analytic_scvq", lambda: exact(p)))
        pt.rows.append(_analytic_row(B, "lower_bound", lambda: lower(p), "bound"))
        if cfg.simulate:
            pt.rows.append(_sim_rate_row(B, sim_series, p, cfg, pt.meta))
        return pt

    return _map_points(point, cfg.grid)


def _bstar_vs_tc(cfg: ExperimentConfig) -> list[_Point]:
    N, beta = cfg.N, cfg.beta
    if cfg.mode is Mode.MRT:
        bounds = {"bound": lambda Tc: an.mrt_b_lower(N, beta, Tc),
                  "approx": lambda Tc: an.mrt_b_lower_approx(N, Tc)}
    else:
        bounds = {"bound": lambda Tc: an.zf_b_lower_tilde(N, beta, Tc),
                  "approx": lambda Tc: an.zf_b_lower_coarse(N, beta, Tc)}

    def point(Tc):
        pt = _Point(Tc)

        def exhaustive():
            return an.optimize_b(cfg.mode, N, beta, int(Tc), cfg.net_rate_basis)[0]

        pt.rows.append(_analytic_row(Tc, "optimum_exhaustive", exhaustive))
        for name, fn in bounds.items():
            pt.rows.append(_analytic_row(Tc, f"{name}_raw", lambda fn=fn: fn(Tc), "bound"))
            pt.rows.append(_analytic_row(Tc, f"{name}_ceil", lambda fn=fn: math.ceil(fn(Tc)), "bound"))
        return pt

    return _map_points(point, cfg.grid)


def _crossover(cfg: ExperimentConfig) -> list[_Point]:
    N, beta = cfg.N, cfg.beta

    def point(Tc):
        pt = _Point(Tc)
        Tc = int(Tc)
        b_mrt = math.ceil(an.mrt_b_lower(N, beta, Tc))
        b_zf = max(0, math.ceil(an.zf_b_lower_tilde(N, beta, Tc)))
        pt.rows += [CurveRow(float(Tc), "mrt_bits", float(b_mrt), float(b_mrt), float(b_mrt), "bound"),
                    CurveRow(float(Tc), "zf_bits", float(b_zf), float(b_zf), float(b_zf), "bound")]
        rows = {
            "mrt_sum_rate": lambda: an.sum_rate(Mode.MRT, N, beta, b_mrt),
            "zf_sum_rate": lambda: an.sum_rate(Mode.ZF, N, beta, b_zf),
            "mrt_sum_net_rate": lambda: an.sum_net_rate(Mode.MRT, N, beta, b_mrt, Tc),
            "zf_sum_net_rate": lambda: an.sum_net_rate(Mode.ZF, N, beta, b_zf, Tc),
        }
        for series, fn in rows.items():
            pt.rows.append(_analytic_row(Tc, series, fn))
        values = {r.series: r.value for r in pt.rows}
        diff = values["zf_sum_net_rate"] - values["mrt_sum_net_rate"]
        pt.rows.append(CurveRow(float(Tc), "zf_minus_mrt", diff, diff, diff, "analytic",
                                "ok" if math.isfinite(diff) else "failed:upstream"))
        return pt

    return _map_points(point, cfg.grid)


def crossover_report(result: CurveResult) -> dict:
    """Sign changes of ZF minus MRT net sum rate and a log-linear threshold estimate."""
    rows = [r for r in result.series("zf_minus_mrt") if math.isfinite(r.value)]
    changes = []
    for a, b in zip(rows, rows[1:]):
        if (a.value < 0) != (b.value < 0):
            t = a.value / (a.value - b.value)
            threshold = math.exp(math.log(a.x) + t * (math.log(b.x) - math.log(a.x)))
            changes.append({"between": [a.x, b.x], "threshold_Tc": threshold})
    return {"sign_changes": len(changes), "crossovers": changes,
            "mrt_wins_at_smallest_Tc": bool(rows and rows[0].value < 0),
            "zf_wins_at_largest_Tc": bool(rows and rows[-1].value > 0)}


def _ccdf(cfg: ExperimentConfig) -> list[_Point]:
    p = cfg.params
    pts = [_Point(g) for g in cfg.grid]
    grid = sorted(cfg.grid)
    try:
        values = dict(zip(grid, an.ccdf(grid, p)))
        for pt in pts:
            v = values[pt.x]
            pt.rows.append(CurveRow(float(pt.x), "analytic", v, v, v, "analytic"))
    except (ArithmeticError, DomainError) as exc:
        for pt in pts:
            pt.rows.append(_failed(pt.x, "analytic", "analytic", exc))
    if cfg.simulate:
        series = f"simulation_{cfg.quantizer.value.lower()}"
        try:
            samples = sim.run_sir_batch(p, cfg.n_iter, cfg.quantizer, cfg.seed,
                                        workers=thread_cap())
            curve = sim.estimate_ccdf(samples, grid, series)
            by_x = {r.x: r for r in curve}
            for pt in pts:
                pt.rows.append(by_x[float(pt.x)])
            pts[0].meta = {k: samples.meta[k] for k in ("empty_network_redraws", "singular_zf_redraws")}
        except (ArithmeticError, DomainError, np.linalg.LinAlgError) as exc:
            for pt in pts:
                pt.rows.append(_failed(pt.x, series, "simulation", exc))
    return pts


# quantity name -> callable(params) returning a number; gamma sweeps pass gamma via params
QUANTITIES: dict[str, Callable[..., float]] = {
    "rate": lambda p, g: an.rate(p),
    "rate_lower": lambda p, g: an.mrt_rate_lower(p) if p.mode is Mode.MRT else an.zf_rate_lower(p),
    "sum_rate": lambda p, g: an.sum_rate(p.mode, p.N, p.beta, p.B),
    "net_rate": lambda p, g: an.net_rate(an.rate(p), p.B, p.Tc).net_rate,
    "sum_net_rate": lambda p, g: an.sum_net_rate(p.mode, p.N, p.beta, p.B, p.Tc),
    "feedback_efficiency": lambda p, g: (an.mrt_feedback_efficiency(p) if p.mode is Mode.MRT
                                         else an.zf_feedback_efficiency(p)),
    "optimum_bits": lambda p, g: an.optimize_b(p.mode, p.N, p.beta, p.Tc)[0],
    "ccdf": lambda p, g: an.ccdf([g], p)[0],
    "simulated_rate": None,  # handled separately
}


def _custom(cfg: ExperimentConfig) -> list[_Point]:
    def point(x):
        pt = _Point(x)
        fields = {"B": "B", "Tc": "Tc", "N": "N", "beta": "beta"}
        try:
            p = (dataclasses.replace(cfg.params, **{fields[cfg.axis]: x})
                 if cfg.axis in fields else cfg.params)
        except DomainError as exc:
            for q in cfg.quantities:
                pt.rows.append(_failed(x, q, "analytic", exc))
            return pt
        gamma = float(x) if cfg.axis == "gamma" else 1.0
        for q in cfg.quantities:
            if q == "simulated_rate":
                if cfg.simulate:
                    pt.rows.append(_sim_rate_row(x, q, p, cfg, pt.meta))
                continue
            source = "bound" if q == "rate_lower" else "analytic"
            pt.rows.append(_analytic_row(x, q, lambda q=q: QUANTITIES[q](p, gamma), source))
        return pt

    return _map_points(point, cfg.grid)


_RUNNERS = {
    "fig1_mrt_rate_vs_B": _rate_vs_b,
    "fig3_zf_rate_vs_B": _rate_vs_b,
    "fig2_mrt_bstar_vs_Tc": _bstar_vs_tc,
    "fig4_zf_bstar_vs_Tc": lambda cfg: _bstar_vs_tc(dataclasses.replace(cfg, mode=Mode.ZF)),
    "fig5_crossover": _crossover,
    "ccdf": _ccdf,
    "custom_sweep": _custom,
}


@dataclass
class RunOutcome:
    result: CurveResult
    metadata: dict
    csv_path: Path
    json_path: Path

    @property
    def failed_rows(self) -> int:
        return self.metadata["failed_rows"]


def run(cfg: ExperimentConfig) -> RunOutcome:
    """Execute the configured experiment and write ``<stem>.csv`` and ``<stem>.json``."""
    cfg, seed_source = resolve_seed(cfg)
    start = time.perf_counter()
    points = _RUNNERS[cfg.experiment](cfg)
    result = CurveResult([row for pt in points for row in pt.rows]).sorted()
    wall = time.perf_counter() - start

    discards = {"empty_network_redraws": 0, "singular_zf_redraws": 0}
    for pt in points:
        for key in discards:
            discards[key] += pt.meta.get(key, 0)
    failed = sum(1 for r in result if r.status != "ok")
    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "seed_source": seed_source,
        "wall_time_s": round(wall, 3),
        "discards": discards,
        "failed_rows": failed,
        "library_version": library_version(),
        "numpy_version": np.__version__,
    }
    if cfg.experiment == "fig5_crossover":
        meta["crossover"] = crossover_report(result)
        meta["compared_quantity"] = "sum net rate, every served user pays B/Tc"
    out = Path(cfg.out_dir)
    csv_path = result.write_csv(out / f"{cfg.output_stem}.csv")
    json_path = write_metadata(out / f"{cfg.output_stem}.json", meta)
    return RunOutcome(result, meta, csv_path, json_path)
