"""Config ingestion, parameter sweeps and result emission."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .analytic import coverage_bound
from .model import ConfigError, NetworkConfig, db_to_linear
from .montecarlo import DEFAULT_SEED, Window, coverage_from_samples, estimate_coverage, max_sir_samples
from .zf import estimate_coverage_channel, max_sir_samples_channel

SWEEP_VARIABLES = ("target_sir_db", "delta_t", "delta_r", "power_db", "m_antennas", "k_users")
ENGINES = ("analytic", "montecarlo", "channel-level")
DEFAULT_TARGET_GRID_DB = tuple(float(t) for t in range(-10, 26))
CSV_COLUMNS = ("sweep_value", "analytic_raw", "analytic", "mc", "ci", "trials",
               "channel", "channel_ci", "bound_ok", "error")


@dataclass(frozen=True)
class SweepSpec:
    base: NetworkConfig
    variable: str = "target_sir_db"
    values: tuple = DEFAULT_TARGET_GRID_DB
    engines: tuple = ("analytic", "montecarlo")
    trials: int = 100_000
    seed: int = DEFAULT_SEED
    window: Window = Window()
    channel_trials: int = 10_000
    workers: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep values must be non-empty")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad or not self.engines:
            raise ConfigError(f"engines must be a non-empty subset of {ENGINES}, got {list(self.engines)}")
        if self.trials < 1 or self.channel_trials < 1:
            raise ConfigError("trials must be >= 1")
        object.__setattr__(self, "values", tuple(sorted(float(v) for v in self.values)))
        for v in self.values:
            self.config_for(v)

    def config_for(self, value: float) -> NetworkConfig:
        v = self.variable
        if v == "target_sir_db":
            return self.base.replace(target_sir=db_to_linear(value))
        if v == "power_db":
            return self.base.replace(power=db_to_linear(value))
        if v in ("m_antennas", "k_users"):
            if value != int(value):
                raise ConfigError(f"{v} sweep values must be integers, got {value}")
            return self.base.replace(**{v: int(value)})
        return self.base.replace(**{v: value})


@dataclass
class CurveRow:
    sweep_value: float
    analytic_raw: float | None = None
    analytic: float | None = None
    mc: float | None = None
    ci: float | None = None
    trials: int | None = None
    channel: float | None = None
    channel_ci: float | None = None
    bound_ok: bool | None = None
    error: str | None = None


@dataclass
class CoverageCurve:
    variable: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


# --------------------------------------------------------------------- config

_PAIRS = {
    "power": ("power_db", "power_linear"),
    "target_sir": ("target_sir_db", "target_sir_linear"),
    "noise_power": ("noise_power_db", "noise_power_linear"),
}
_ALIASES = {"M": "m_antennas", "K": "k_users"}
_PLAIN = ("lambda_b", "lambda_u", "alpha", "m_antennas", "k_users", "delta_t", "delta_r",
          "correlated_distortion")
_SECTIONS = {
    "sweep": ("variable", "values", "start", "stop", "step", "engines", "trials", "seed",
              "channel_trials", "workers"),
    "window": ("width_km", "height_km", "far_field"),
}


def _network_from_table(table: dict) -> NetworkConfig:
    kw = {}
    allowed = set(_PLAIN) | set(_ALIASES) | {k for pair in _PAIRS.values() for k in pair}
    unknown = sorted(set(table) - allowed - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    for key, value in table.items():
        if key in _SECTIONS:
            continue
        name = _ALIASES.get(key, key)
        if name in _PLAIN:
            if name in kw:
                raise ConfigError(f"field {name!r} given twice (via alias {key!r})")
            kw[name] = value
    for name, (db_key, lin_key) in _PAIRS.items():
        if db_key in table and lin_key in table:
            raise ConfigError(f"give only one of {db_key!r} and {lin_key!r}")
        if db_key in table:
            kw[name] = db_to_linear(_number(db_key, table[db_key]))
        elif lin_key in table:
            kw[name] = _number(lin_key, table[lin_key])
    missing = [k for k in ("lambda_b", "alpha", "m_antennas", "k_users") if k not in kw]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")
    for name in kw:
        if name != "correlated_distortion":
            kw[name] = _number(name, kw[name])
    return NetworkConfig(**kw)


def _number(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {name!r} must be a number, got {value!r}")
    return value


def _sweep_values(sweep: dict, variable: str):
    if "values" in sweep:
        if any(k in sweep for k in ("start", "stop", "step")):
            raise ConfigError("give either 'values' or 'start'/'stop'/'step' in [sweep]")
        return tuple(_number("values", v) for v in sweep["values"])
    if any(k in sweep for k in ("start", "stop", "step")):
        try:
            start, stop, step = (float(sweep[k]) for k in ("start", "stop", "step"))
        except KeyError as exc:
            raise ConfigError(f"[sweep] range needs start, stop and step (missing {exc})") from None
        if step <= 0 or stop < start:
            raise ConfigError("[sweep] range needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(n))
    if variable == "target_sir_db":
        return DEFAULT_TARGET_GRID_DB
    raise ConfigError(f"[sweep] needs values for variable {variable!r}")


def spec_from_dict(table: dict) -> SweepSpec:
    base = _network_from_table(table)
    sweep = dict(table.get("sweep", {}))
    win = dict(table.get("window", {}))
    for name, section in (("sweep", sweep), ("window", win)):
        unknown = sorted(set(section) - set(_SECTIONS[name]))
        if unknown:
            raise ConfigError(f"unknown field(s) in [{name}]: {', '.join(unknown)}")
    variable = sweep.get("variable", "target_sir_db")
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")
    try:
        window = Window(float(win.get("width_km", 5.0)), float(win.get("height_km", 6.0)),
                        bool(win.get("far_field", True)))
    except ValueError as exc:
        raise ConfigError(f"[window]: {exc}") from None
    return SweepSpec(
        base=base,
        variable=variable,
        values=_sweep_values(sweep, variable),
        engines=tuple(sweep.get("engines", ("analytic", "montecarlo"))),
        trials=int(sweep.get("trials", 100_000)),
        seed=int(sweep.get("seed", DEFAULT_SEED)),
        window=window,
        channel_trials=int(sweep.get("channel_trials", 10_000)),
        workers=int(sweep.get("workers", 1)),
    )


def load_config(path) -> SweepSpec:
    """Parse and validate a TOML sweep config.

    Raises ConfigError carrying the file name and, for syntax errors, the
    line and column reported by the TOML parser.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            table = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return spec_from_dict(table)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------- sweep

def run_sweep(spec: SweepSpec) -> CoverageCurve:
    """Evaluate every engine at every sweep value.

    Monte Carlo rows reuse the same seed, so rows that differ only in
    threshold, impairment or power share random numbers. An engine failure
    is recorded in the row's ``error`` field and the sweep continues.
    """
    t0 = time.perf_counter()
    rows = [CurveRow(sweep_value=v) for v in spec.values]
    cfgs = [spec.config_for(v) for v in spec.values]

    if "analytic" in spec.engines:
        for row, cfg in zip(rows, cfgs):
            try:
                res = coverage_bound(cfg)
                row.analytic_raw, row.analytic = res.value, res.clamped
            except Exception as exc:  # noqa: BLE001 - recorded per row
                _fail(row, "analytic", exc)

    if "montecarlo" in spec.engines:
        _run_mc(spec, rows, cfgs, "mc", "ci", spec.trials,
                lambda cfg: max_sir_samples(cfg, spec.window, spec.trials, spec.seed, spec.workers),
                lambda cfg: _est(estimate_coverage(cfg, spec.window, spec.trials, spec.seed,
                                                   spec.workers)))
        for row in rows:
            if row.mc is not None:
                row.trials = spec.trials

    if "channel-level" in spec.engines:
        n = spec.channel_trials
        _run_mc(spec, rows, cfgs, "channel", "channel_ci", n,
                lambda cfg: max_sir_samples_channel(cfg, spec.window, n, spec.seed, spec.workers),
                lambda cfg: estimate_coverage_channel(cfg, spec.window, n, spec.seed, spec.workers))

    for row in rows:
        if row.analytic_raw is not None and row.mc is not None:
            row.bound_ok = bool(row.analytic_raw >= row.mc - row.ci)

    meta = {
        "config": asdict(spec.base),
        "sweep": {"variable": spec.variable, "values": list(spec.values),
                  "engines": list(spec.engines), "trials": spec.trials,
                  "channel_trials": spec.channel_trials, "seed": spec.seed},
        "window": asdict(spec.window),
        "versions": {"ppp_coverage": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - t0,
    }
    return CoverageCurve(spec.variable, rows, meta)


def _est(e):
    return e.p_hat, e.ci_halfwidth


def _fail(row, engine, exc):
    msg = f"{engine}: {type(exc).__name__}: {exc}"
    row.error = msg if row.error is None else f"{row.error}; {msg}"


def _run_mc(spec, rows, cfgs, col, ci_col, trials, sampler, estimator):
    if spec.variable == "target_sir_db":
        # one pass, thresholded at every target
        try:
            samples = sampler(spec.base)
        except Exception as exc:  # noqa: BLE001
            for row in rows:
                _fail(row, col, exc)
            return
        p, ci = coverage_from_samples(samples, [c.target_sir for c in cfgs])
        for row, pi, ci_i in zip(rows, p, ci):
            setattr(row, col, float(pi))
            setattr(row, ci_col, float(ci_i))
        return
    for row, cfg in zip(rows, cfgs):
        try:
            pi, ci_i = estimator(cfg)
            setattr(row, col, float(pi))
            setattr(row, ci_col, float(ci_i))
        except Exception as exc:  # noqa: BLE001
            _fail(row, col, exc)


# ----------------------------------------------------------------------- emit

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.6g}"


def curve_to_csv(curve: CoverageCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in curve.rows:
        w.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def curve_to_dict(curve: CoverageCurve, include_timing: bool = False) -> dict:
    meta = dict(curve.metadata)
    if not include_timing:
        meta.pop("wall_time_s", None)
    return {"variable": curve.variable, "rows": [asdict(r) for r in curve.rows], "metadata": meta}


def curve_to_json(curve: CoverageCurve, include_timing: bool = False) -> str:
    return json.dumps(curve_to_dict(curve, include_timing), indent=2, sort_keys=True) + "\n"


def emit(curve: CoverageCurve, fmt: str = "csv", path=None, include_timing: bool = False) -> str:
    """Serialise ``curve`` as CSV or JSON and write it to ``path`` if given.

    Wall time is left out unless ``include_timing`` so that output files are
    byte-identical for identical inputs.
    """
    if fmt == "csv":
        text = curve_to_csv(curve)
    elif fmt == "json":
        text = curve_to_json(curve, include_timing)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_curve(path) -> CoverageCurve:
    data = json.loads(Path(path).read_text())
    names = {f.name for f in fields(CurveRow)}
    rows = [CurveRow(**{k: v for k, v in r.items() if k in names}) for r in data["rows"]]
    return CoverageCurve(data["variable"], rows, data.get("metadata", {}))
