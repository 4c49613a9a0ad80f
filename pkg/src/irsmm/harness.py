"""Monte-Carlo experiment orchestration with machine-readable CSV output.

An experiment is a sweep over one scenario parameter (transmit power,
reflection elements, antennas, or users per group), repeated over seeded
trials. Each trial draws one channel realization (seed = base_seed XOR
trial index, so trials are independent of execution order), runs every
selected algorithm from the shared deterministic initial point, and
records the final sum rate, energy efficiency, iteration count, and
wall clock. Per-trial solver failures are recorded as NaN rows plus an
entry in the error list; they never abort the sweep.
"""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .alg1 import Alg1Config, run_algorithm1
from .alg2 import Alg2Config, run_algorithm2
from .baselines import PowerModel, energy_efficiency, quantize_phases, without_irs
from .channel import ChannelConfig, gen_channels
from .model import Scenario, init_point, sum_rate

SWEEP_PARAMS = ("pt_dbm", "m", "n", "users_per_group")
ALGORITHM_NAMES = ("alg1", "alg2")
BASELINE_NAMES = ("no-irs",)

CSV_HEADER = (
    "sweep_param,sweep_value,trial,seed,algorithm,"
    "sum_rate_bpshz,ee_bit_hz_j,iters,wall_ms"
)
TRACE_HEADER = "iter,objective_bpshz,wall_ms"


def dbm_to_w(x_dbm):
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment end to end."""

    n: int = 4
    m: int = 16
    groups: int = 2
    users_per_group: int = 2
    pt_dbm: float = 20.0
    channel: ChannelConfig = ChannelConfig()
    algorithms: tuple = ("alg2",)
    alg1_opts: dict = field(default_factory=dict)
    alg2_opts: dict = field(default_factory=dict)
    baselines: tuple = ()
    quantize_bits: int = 0  # 0 disables the quantized variant
    sweep_param: str = "pt_dbm"
    sweep_values: tuple = ()  # empty: single point at the config's own value
    trials: int = 1
    base_seed: int = 0
    workers: int = 1
    save_traces: bool = False
    out_dir: str = ""

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.quantize_bits < 0:
            raise ValueError("quantize_bits must be nonnegative")
        if not self.algorithms:
            raise ValueError("at least one algorithm must be selected")
        for name in self.algorithms:
            if name not in ALGORITHM_NAMES:
                raise ValueError(f"unknown algorithm {name!r}, expected one of {ALGORITHM_NAMES}")
        for name in self.baselines:
            if name not in BASELINE_NAMES:
                raise ValueError(f"unknown baseline {name!r}, expected one of {BASELINE_NAMES}")
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.sweep_param!r}, expected one of {SWEEP_PARAMS}")
        values = self.sweep_values or (getattr(self, _CONFIG_FIELD[self.sweep_param]),)
        object.__setattr__(self, "sweep_values", tuple(values))
        for v in self.sweep_values:
            _check_axis_value(self.sweep_param, v)
        for nm, val in (("n", self.n), ("m", self.m), ("users_per_group", self.users_per_group)):
            _check_axis_value(nm, val)
        if self.groups < 1:
            raise ValueError("groups must be at least 1")
        # fail on option typos now, not per trial inside a worker
        Alg1Config(**self.alg1_opts)
        Alg2Config(**self.alg2_opts)


_CONFIG_FIELD = {"pt_dbm": "pt_dbm", "m": "m", "n": "n", "users_per_group": "users_per_group"}


def _check_axis_value(param, v):
    if param == "pt_dbm":
        if not np.isfinite(v):
            raise ValueError(f"pt_dbm value must be finite, got {v}")
        return
    if int(v) != v or v < 1:
        raise ValueError(f"{param} value must be a positive integer, got {v}")
    if param == "m" and int(v) % 4 != 0:
        raise ValueError(f"m must be divisible by 4 for the planar array, got {v}")


def scenario_for(cfg, value):
    """The Scenario at one sweep point; the swept field is replaced by value."""
    fields = {"n": cfg.n, "m": cfg.m, "users_per_group": cfg.users_per_group, "pt_dbm": cfg.pt_dbm}
    fields[cfg.sweep_param] = value
    upg = int(fields["users_per_group"])
    groups = tuple(tuple(range(g * upg, (g + 1) * upg)) for g in range(cfg.groups))
    return Scenario(
        N=int(fields["n"]),
        M=int(fields["m"]),
        G=cfg.groups,
        groups=groups,
        P_T=dbm_to_w(fields["pt_dbm"]),
        sigma2=cfg.channel.noise_power_w(),
    )


@dataclass(frozen=True)
class ResultRow:
    sweep_param: str
    sweep_value: float
    trial: int
    seed: int
    algorithm: str
    sum_rate_bpshz: float
    ee_bit_hz_j: float
    iters: int
    wall_ms: float


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple
    traces: dict  # (algorithm row name, trial) -> tuple of (iter, objective, wall_ms)
    errors: tuple  # (sweep_value, trial, algorithm, message)


_SOLVERS = {
    "alg1": (run_algorithm1, Alg1Config),
    "alg2": (run_algorithm2, Alg2Config),
}


def _run_trial(cfg, value, trial):
    """All algorithm and baseline runs for one (sweep value, trial) cell."""
    seed = cfg.base_seed ^ trial
    sc = scenario_for(cfg, value)
    channels = gen_channels(cfg.channel, sc, seed)
    bare = without_irs(channels) if "no-irs" in cfg.baselines else None
    F0, e0 = init_point(sc)
    pm = PowerModel(p_T=sc.P_T)

    rows, traces, errors = [], {}, []

    def record(name, chset, mode):
        solver, make_cfg = _SOLVERS[name.split("_")[0]]
        opts = cfg.alg1_opts if name.startswith("alg1") else cfg.alg2_opts
        t0 = time.perf_counter()
        try:
            res = solver(sc, chset, F0, e0, make_cfg(**opts))
        except Exception as exc:  # per-trial failures are data, not crashes
            errors.append((value, trial, name, f"{type(exc).__name__}: {exc}"))
            rows.append(ResultRow(cfg.sweep_param, value, trial, seed, name,
                                   float("nan"), float("nan"), 0,
                                   (time.perf_counter() - t0) * 1e3))
            return None
        wall_ms = (time.perf_counter() - t0) * 1e3
        rate = sum_rate(sc, chset, res.F, res.e)
        ee = energy_efficiency(rate, pm, mode, sc.N, sc.M)
        rows.append(ResultRow(cfg.sweep_param, value, trial, seed, name,
                               rate, ee, res.iterations, wall_ms))
        traces[(name, trial)] = tuple(zip(
            res.trace.iteration, res.trace.objective_bpshz, res.trace.wall_ms))
        return res

    for name in cfg.algorithms:
        res = record(name, channels, "irs")
        if res is not None and cfg.quantize_bits:
            e_q = quantize_phases(res.e, cfg.quantize_bits)
            rate_q = sum_rate(sc, channels, res.F, e_q)
            prev = rows[-1]
            rows.append(ResultRow(cfg.sweep_param, value, trial, seed,
                                   f"{name}_q{cfg.quantize_bits}", rate_q,
                                   energy_efficiency(rate_q, pm, "irs", sc.N, sc.M),
                                   prev.iters, prev.wall_ms))
        if bare is not None:
            record(f"{name}_noirs", bare, "no-irs")
    return rows, traces, errors


def run_experiment(cfg):
    """Run the full sweep. Deterministic up to wall-clock fields."""
    jobs = [(value, trial) for value in cfg.sweep_values for trial in range(cfg.trials)]
    if cfg.workers == 1:
        parts = [_run_trial(cfg, v, t) for v, t in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_trial,
                                  [cfg] * len(jobs),
                                  [v for v, _ in jobs],
                                  [t for _, t in jobs]))
    rows, traces, errors = [], {}, []
    for r, tr, er in parts:
        rows.extend(r)
        errors.extend(er)
        for key, val in tr.items():
            traces[key] = val
    return ExperimentResult(rows=tuple(rows), traces=traces, errors=tuple(errors))


def emit_csv(result, path, traces=False):
    """Write results to path; optionally convergence traces to sibling files.

    Trace file names carry only the algorithm and trial, so trace output is
    refused when the sweep has several values (the names would collide).
    """
    if not result.rows:
        raise ValueError("no results to write")
    if traces and len({r.sweep_value for r in result.rows}) > 1:
        raise ValueError("trace output needs a single sweep value; file names "
                         "trace_<algorithm>_<trial>.csv cannot distinguish values")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in result.rows:
                fh.write(",".join([
                    r.sweep_param, repr(r.sweep_value), str(r.trial), str(r.seed),
                    r.algorithm, repr(float(r.sum_rate_bpshz)),
                    repr(float(r.ee_bit_hz_j)), str(r.iters), repr(float(r.wall_ms)),
                ]) + "\n")
        if traces:
            base = os.path.dirname(os.path.abspath(path))
            for (name, trial), rows in sorted(result.traces.items()):
                tpath = os.path.join(base, f"trace_{name}_{trial}.csv")
                with open(tpath, "w", encoding="utf-8", newline="") as fh:
                    fh.write(TRACE_HEADER + "\n")
                    for it, obj, wall in rows:
                        fh.write(f"{it},{float(obj)!r},{float(wall)!r}\n")
    except OSError as exc:
        raise OSError(f"writing results under {path!r}: {exc}") from exc


def read_csv(path):
    """Parse a results CSV back into ResultRow objects."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"unexpected header in {path!r}: {reader.fieldnames}")
        for rec in reader:
            out.append(ResultRow(
                sweep_param=rec["sweep_param"],
                sweep_value=float(rec["sweep_value"]),
                trial=int(rec["trial"]),
                seed=int(rec["seed"]),
                algorithm=rec["algorithm"],
                sum_rate_bpshz=float(rec["sum_rate_bpshz"]),
                ee_bit_hz_j=float(rec["ee_bit_hz_j"]),
                iters=int(rec["iters"]),
                wall_ms=float(rec["wall_ms"]),
            ))
    return out


def load_config(path):
    """Build an ExperimentConfig from a JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path!r} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    raw = dict(raw)
    known = {
        "n", "m", "groups", "users_per_group", "pt_dbm", "channel",
        "algorithms", "alg1_opts", "alg2_opts", "baselines", "quantize_bits",
        "sweep", "trials", "base_seed", "workers", "save_traces", "out_dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in known - {"channel", "sweep"}:
        if key in raw:
            kwargs[key] = raw[key]
    if "channel" in raw:
        try:
            kwargs["channel"] = ChannelConfig(**{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in raw["channel"].items()})
        except TypeError as exc:
            raise ValueError(f"bad channel block: {exc}") from exc
    if "sweep" in raw:
        sweep = raw["sweep"]
        if not isinstance(sweep, dict) or set(sweep) != {"param", "values"}:
            raise ValueError('sweep block must be {"param": ..., "values": [...]}')
        kwargs["sweep_param"] = sweep["param"]
        kwargs["sweep_values"] = tuple(sweep["values"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad config: {exc}") from exc
