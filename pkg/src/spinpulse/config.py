"""Run and sweep configuration: JSON schema, validation, normalization.

Validation collects every error (with a config-path location) instead of
failing fast, fills defaults, and can echo back a normalized document whose
serialization round-trips byte-identically; the runner writes that dump next
to the outputs for provenance.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import RampSchedule
from .spin_algebra import ModelParams

__all__ = ["ConfigError", "RunConfig", "SweepConfig", "validate_config", "validate_sweep_config"]

BACKENDS = ("meanfield", "cumulant2", "master", "trajectories")

# which backends can produce which observable
OBSERVABLE_BACKENDS = {
    "moments": set(BACKENDS),
    "chi2": {"cumulant2", "master", "trajectories"},
    "c2": {"cumulant2", "master", "trajectories"},
    "c3": {"master"},
    "cn": {"master"},
    "qfunction": {"master", "trajectories"},
}

_DEFAULT_RTOL = {
    "meanfield": 1e-9,
    "cumulant2": 1e-9,
    "master": 1e-8,
    "trajectories": 1e-8,
}


class ConfigError(ValueError):
    """Aggregated configuration errors; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class RunConfig:
    backend: str
    params: ModelParams | None
    schedule: RampSchedule | None
    theta0: float | None
    phi0: float | None
    amplitudes: np.ndarray | None
    t_span: tuple
    sample_times: np.ndarray
    observables: tuple
    qfunction_times: tuple
    q_resolution: tuple  # (n_theta | None, n_phi | None)
    out_dir: str | None
    prefix: str
    seed: int
    n_trajectories: int
    dt_max: float
    jump_tolerance: float
    per_trajectory: bool
    rtol: float
    atol: float
    correlation_convention: str
    cn_order: int
    normalized: dict = field(repr=False, default_factory=dict)

    @property
    def drive(self):
        return self.params if self.params is not None else self.schedule

    @property
    def n_atoms(self) -> int:
        return self.drive.n_atoms

    def initial_vector(self) -> np.ndarray:
        from .spin_algebra import coherent_state

        if self.amplitudes is not None:
            return self.amplitudes
        return coherent_state(self.n_atoms, self.theta0, self.phi0)


@dataclass
class SweepConfig:
    base: RunConfig
    base_raw: dict
    n_atoms_values: tuple
    omega_values: tuple
    reductions: tuple
    workers: int
    checkpoint: str | None
    out_dir: str | None
    prefix: str
    normalized: dict = field(repr=False, default_factory=dict)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


class _Checker:
    def __init__(self, raw):
        self.raw = raw
        self.errors = []

    def error(self, path, msg):
        self.errors.append(f"{path}: {msg}")

    def require(self, obj, path, key, typ=None):
        if key not in obj:
            self.error(f"{path}.{key}" if path else key, "missing required field")
            return None
        v = obj[key]
        if typ == "number" and not _is_number(v):
            self.error(f"{path}.{key}" if path else key, f"must be a finite number, got {v!r}")
            return None
        return v

    def number(self, obj, path, key, default=None):
        if key not in obj or obj[key] is None:  # explicit null = unset
            return default
        v = obj[key]
        if not _is_number(v):
            self.error(f"{path}.{key}" if path else key, f"must be a finite number, got {v!r}")
            return default
        return float(v)


def _parse_params(chk, block, path):
    n = chk.require(block, path, "n_atoms")
    if n is not None and (not isinstance(n, int) or isinstance(n, bool) or n < 1):
        chk.error(f"{path}.n_atoms", f"must be a positive integer, got {n!r}")
        n = None
    kappa = chk.number(block, path, "kappa", 1.0)
    omega = chk.require(block, path, "omega", "number")
    lam = chk.require(block, path, "lambda", "number")
    if lam is not None and lam < 0:
        chk.error(f"{path}.lambda", "must be >= 0")
        lam = None
    if None in (n, kappa, omega, lam):
        return None
    try:
        return ModelParams(n_atoms=n, kappa=float(kappa), omega=float(omega), lambda_=float(lam))
    except ValueError as exc:
        chk.error(path, str(exc))
        return None


def _parse_schedule(chk, block, path):
    n = chk.require(block, path, "n_atoms")
    if n is not None and (not isinstance(n, int) or isinstance(n, bool) or n < 1):
        chk.error(f"{path}.n_atoms", f"must be a positive integer, got {n!r}")
        n = None
    kappa = chk.number(block, path, "kappa", 1.0)
    vals = {}
    for key in ("omega_max", "omega_min", "lambda_max", "lambda_min", "t_pulse", "t_ramp"):
        vals[key] = chk.require(block, path, key, "number")
    if n is None or kappa is None or any(v is None for v in vals.values()):
        return None
    try:
        return RampSchedule(n_atoms=n, kappa=float(kappa), **{k: float(v) for k, v in vals.items()})
    except ValueError as exc:
        chk.error(path, str(exc))
        return None


def validate_config(raw) -> RunConfig:
    """Parse and validate a run configuration (JSON text or dict).

    Raises ConfigError carrying the full list of problems; on success
    returns a RunConfig whose ``normalized`` dict has all defaults filled.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    chk = _Checker(raw)

    backend = raw.get("backend")
    if backend not in BACKENDS:
        chk.error("backend", f"must be one of {list(BACKENDS)}, got {backend!r}")
        backend = None

    has_params = "params" in raw
    has_schedule = "schedule" in raw
    params = schedule = None
    if has_params == has_schedule:
        chk.error("params", "exactly one of 'params' or 'schedule' is required")
    elif has_params:
        if isinstance(raw["params"], dict):
            params = _parse_params(chk, raw["params"], "params")
        else:
            chk.error("params", "must be an object")
    else:
        if isinstance(raw["schedule"], dict):
            schedule = _parse_schedule(chk, raw["schedule"], "schedule")
        else:
            chk.error("schedule", "must be an object")
    drive = params if params is not None else schedule

    # initial state
    theta0 = phi0 = None
    amplitudes = None
    init = raw.get("initial")
    if not isinstance(init, dict):
        chk.error("initial", "missing or not an object (need theta/phi or amplitudes)")
    else:
        if "amplitudes" in init:
            amp = init["amplitudes"]
            if not isinstance(amp, list) or not all(
                isinstance(p, list) and len(p) == 2 and _is_number(p[0]) and _is_number(p[1])
                for p in amp
            ):
                chk.error("initial.amplitudes", "must be a list of [re, im] pairs")
            else:
                a = np.array([complex(re, im) for re, im in amp])
                nrm = np.linalg.norm(a)
                if nrm == 0:
                    chk.error("initial.amplitudes", "must not be all zero")
                else:
                    amplitudes = a / nrm
                if drive is not None and a.size != drive.n_atoms + 1:
                    chk.error(
                        "initial.amplitudes",
                        f"length {a.size} does not match n_atoms + 1 = {drive.n_atoms + 1}",
                    )
            if backend == "meanfield":
                chk.error("initial.amplitudes", "meanfield backend needs theta/phi initial angles")
        else:
            theta0 = chk.require(init, "initial", "theta", "number")
            phi0 = chk.number(init, "initial", "phi", 0.0)
            if theta0 is not None and not 0 <= theta0 <= math.pi:
                chk.error("initial.theta", f"must be in [0, pi], got {theta0}")

    # time grid
    t_span = None
    sample_times = None
    tblock = raw.get("time")
    if not isinstance(tblock, dict):
        chk.error("time", "missing or not an object")
    else:
        span = chk.require(tblock, "time", "t_span")
        if span is not None:
            if (
                not isinstance(span, list)
                or len(span) != 2
                or not all(_is_number(x) for x in span)
                or not span[1] > span[0]
            ):
                chk.error("time.t_span", f"must be [t0, t1] with t1 > t0, got {span!r}")
            else:
                t_span = (float(span[0]), float(span[1]))
        if "sample_times" in tblock:
            st = tblock["sample_times"]
            if not isinstance(st, list) or not all(_is_number(x) for x in st) or len(st) < 1:
                chk.error("time.sample_times", "must be a nonempty list of numbers")
            else:
                sample_times = np.asarray(st, dtype=float)
                if np.any(np.diff(sample_times) < 0):
                    chk.error("time.sample_times", "must be sorted ascending")
                elif t_span and (
                    sample_times[0] < t_span[0] - 1e-12 or sample_times[-1] > t_span[1] + 1e-12
                ):
                    chk.error("time.sample_times", "must lie within t_span")
        else:
            ns = tblock.get("n_samples", 200)
            if not isinstance(ns, int) or isinstance(ns, bool) or ns < 2:
                chk.error("time.n_samples", f"must be an integer >= 2, got {ns!r}")
            elif t_span:
                sample_times = np.linspace(t_span[0], t_span[1], ns)

    # observables
    obs = raw.get("observables", ["moments"])
    if not isinstance(obs, list) or not all(isinstance(o, str) for o in obs):
        chk.error("observables", "must be a list of names")
        obs = ["moments"]
    obs = list(dict.fromkeys(["moments"] + obs))  # moments always on, dedup
    for o in obs:
        if o not in OBSERVABLE_BACKENDS:
            chk.error("observables", f"unknown observable {o!r}")
        elif backend and backend not in OBSERVABLE_BACKENDS[o]:
            chk.error(
                "observables",
                f"{o!r} is not available on backend {backend!r} "
                f"(supported: {sorted(OBSERVABLE_BACKENDS[o])})",
            )

    # q-function block
    q_times = ()
    q_res = (None, None)
    if "qfunction" in raw:
        qb = raw["qfunction"]
        if "qfunction" not in obs:
            chk.error("qfunction", "block given but 'qfunction' not in observables")
        if not isinstance(qb, dict):
            chk.error("qfunction", "must be an object")
        else:
            times = qb.get("times", [])
            if not isinstance(times, list) or not all(_is_number(x) for x in times):
                chk.error("qfunction.times", "must be a list of numbers")
            else:
                q_times = tuple(float(x) for x in times)
                if t_span and any(x < t_span[0] - 1e-12 or x > t_span[1] + 1e-12 for x in q_times):
                    chk.error("qfunction.times", "must lie within t_span")
            nth = qb.get("n_theta")
            nph = qb.get("n_phi")
            for name, v in (("n_theta", nth), ("n_phi", nph)):
                if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 8):
                    chk.error(f"qfunction.{name}", f"must be an integer >= 8, got {v!r}")
            q_res = (nth, nph)
    elif "qfunction" in obs:
        chk.error("qfunction", "observable requested but no qfunction block with times")

    # output
    out_dir = None
    prefix = "run"
    ob = raw.get("output", {})
    if not isinstance(ob, dict):
        chk.error("output", "must be an object")
    else:
        out_dir = ob.get("directory")
        if out_dir is not None and not isinstance(out_dir, str):
            chk.error("output.directory", "must be a string")
            out_dir = None
        prefix = ob.get("prefix", "run")
        if not isinstance(prefix, str) or not prefix:
            chk.error("output.prefix", "must be a nonempty string")
            prefix = "run"

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        chk.error("seed", f"must be an integer in [0, 2^64), got {seed!r}")
        seed = 0

    tb = raw.get("trajectories", {})
    n_traj, dt_max, jump_tol, per_traj = 500, None, 1e-9, False
    if not isinstance(tb, dict):
        chk.error("trajectories", "must be an object")
    else:
        n_traj = tb.get("n_trajectories", 500)
        if not isinstance(n_traj, int) or isinstance(n_traj, bool) or n_traj < 1:
            chk.error("trajectories.n_trajectories", f"must be a positive integer, got {n_traj!r}")
            n_traj = 500
        dt_max = chk.number(tb, "trajectories", "dt_max", None)
        if dt_max is not None and dt_max <= 0:
            chk.error("trajectories.dt_max", "must be positive")
            dt_max = None
        jump_tol = chk.number(tb, "trajectories", "jump_tolerance", 1e-9)
        if jump_tol is not None and not 0 < jump_tol < 1e-2:
            chk.error("trajectories.jump_tolerance", "must be in (0, 1e-2)")
            jump_tol = 1e-9
        per_traj = tb.get("per_trajectory", False)
        if not isinstance(per_traj, bool):
            chk.error("trajectories.per_trajectory", "must be a boolean")
            per_traj = False

    tol = raw.get("tolerances", {})
    rtol = atol = None
    if not isinstance(tol, dict):
        chk.error("tolerances", "must be an object")
    else:
        rtol = chk.number(tol, "tolerances", "rtol", None)
        atol = chk.number(tol, "tolerances", "atol", None)
        if rtol is not None and not 0 < rtol <= 1e-2:
            chk.error("tolerances.rtol", "must be in (0, 1e-2]")
            rtol = None
        if atol is not None and atol <= 0:
            chk.error("tolerances.atol", "must be positive")
            atol = None
    if rtol is None:
        rtol = _DEFAULT_RTOL.get(backend, 1e-8)
    if atol is None:
        atol = rtol * 1e-4

    conv = raw.get("correlation_convention", "ordered")
    if conv not in ("ordered", "symmetrized"):
        chk.error("correlation_convention", f"must be 'ordered' or 'symmetrized', got {conv!r}")
        conv = "ordered"

    cn_order = raw.get("cn_order", 3)
    if not isinstance(cn_order, int) or isinstance(cn_order, bool) or not 2 <= cn_order <= 4:
        chk.error("cn_order", f"must be an integer in [2, 4], got {cn_order!r}")
        cn_order = 3

    known = {
        "backend",
        "params",
        "schedule",
        "initial",
        "time",
        "observables",
        "qfunction",
        "output",
        "seed",
        "trajectories",
        "tolerances",
        "correlation_convention",
        "cn_order",
    }
    for key in raw:
        if key not in known:
            chk.error(key, "unknown configuration key")

    if chk.errors:
        raise ConfigError(chk.errors)

    cfg = RunConfig(
        backend=backend,
        params=params,
        schedule=schedule,
        theta0=theta0,
        phi0=phi0,
        amplitudes=amplitudes,
        t_span=t_span,
        sample_times=sample_times,
        observables=tuple(obs),
        qfunction_times=q_times,
        q_resolution=q_res,
        out_dir=out_dir,
        prefix=prefix,
        seed=seed,
        n_trajectories=n_traj,
        dt_max=dt_max if dt_max is not None else float("inf"),
        jump_tolerance=jump_tol,
        per_trajectory=per_traj,
        rtol=rtol,
        atol=atol,
        correlation_convention=conv,
        cn_order=cn_order,
    )
    cfg.normalized = normalized_dict(cfg)
    return cfg


def normalized_dict(cfg: RunConfig) -> dict:
    """Config with every default made explicit; serialization round-trips."""
    out = {"backend": cfg.backend}
    if cfg.params is not None:
        out["params"] = {
            "n_atoms": cfg.params.n_atoms,
            "kappa": cfg.params.kappa,
            "omega": cfg.params.omega,
            "lambda": cfg.params.lambda_,
        }
    else:
        s = cfg.schedule
        out["schedule"] = {
            "n_atoms": s.n_atoms,
            "kappa": s.kappa,
            "omega_max": s.omega_max,
            "omega_min": s.omega_min,
            "lambda_max": s.lambda_max,
            "lambda_min": s.lambda_min,
            "t_pulse": s.t_pulse,
            "t_ramp": s.t_ramp,
        }
    if cfg.amplitudes is not None:
        out["initial"] = {
            "amplitudes": [[float(a.real), float(a.imag)] for a in cfg.amplitudes]
        }
    else:
        out["initial"] = {"theta": cfg.theta0, "phi": cfg.phi0}
    out["time"] = {
        "t_span": [cfg.t_span[0], cfg.t_span[1]],
        "sample_times": [float(t) for t in cfg.sample_times],
    }
    out["observables"] = list(cfg.observables)
    if "qfunction" in cfg.observables:
        out["qfunction"] = {
            "times": list(cfg.qfunction_times),
            "n_theta": cfg.q_resolution[0],
            "n_phi": cfg.q_resolution[1],
        }
    out["output"] = {"directory": cfg.out_dir, "prefix": cfg.prefix}
    out["seed"] = cfg.seed
    out["trajectories"] = {
        "n_trajectories": cfg.n_trajectories,
        "dt_max": None if not math.isfinite(cfg.dt_max) else cfg.dt_max,
        "jump_tolerance": cfg.jump_tolerance,
        "per_trajectory": cfg.per_trajectory,
    }
    out["tolerances"] = {"rtol": cfg.rtol, "atol": cfg.atol}
    out["correlation_convention"] = cfg.correlation_convention
    out["cn_order"] = cfg.cn_order
    return out


def validate_sweep_config(raw) -> SweepConfig:
    """Parse a sweep configuration: a base run plus N / omega axes."""
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    errors = []
    base_raw = raw.get("base")
    if not isinstance(base_raw, dict):
        raise ConfigError(["base: missing or not an object (a run config)"])
    if base_raw.get("backend") != "master":
        errors.append("base.backend: sweeps run the master backend")
    sweep = raw.get("sweep")
    n_vals = omega_vals = None
    if not isinstance(sweep, dict):
        errors.append("sweep: missing or not an object")
    else:
        n_vals = sweep.get("n_atoms")
        omega_vals = sweep.get("omega")
        if n_vals is not None and (
            not isinstance(n_vals, list)
            or not n_vals
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in n_vals)
        ):
            errors.append("sweep.n_atoms: must be a nonempty list of positive integers")
            n_vals = None
        if omega_vals is not None and (
            not isinstance(omega_vals, list)
            or not omega_vals
            or not all(_is_number(v) for v in omega_vals)
        ):
            errors.append("sweep.omega: must be a nonempty list of numbers")
            omega_vals = None
        if n_vals is None and omega_vals is None:
            errors.append("sweep: at least one nonempty axis (n_atoms or omega) is required")

    reductions = raw.get("reductions", ["max_c2_over_N2", "max_c3_over_N3"])
    valid_red = {"max_c2_over_N2", "max_c3_over_N3"}
    if (
        not isinstance(reductions, list)
        or not reductions
        or not all(r in valid_red for r in reductions)
    ):
        errors.append(f"reductions: must be a nonempty subset of {sorted(valid_red)}")
        reductions = ["max_c2_over_N2", "max_c3_over_N3"]

    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        errors.append(f"workers: must be a positive integer, got {workers!r}")
        workers = 1
    checkpoint = raw.get("checkpoint")
    if checkpoint is not None and not isinstance(checkpoint, str):
        errors.append("checkpoint: must be a string path")
        checkpoint = None

    out_dir = None
    prefix = "sweep"
    ob = raw.get("output", {})
    if isinstance(ob, dict):
        out_dir = ob.get("directory")
        prefix = ob.get("prefix", "sweep")

    # ensure base parses on its own (with stand-in axis values substituted)
    base_for_check = json.loads(json.dumps(base_raw))
    if "params" in base_for_check and isinstance(base_for_check["params"], dict):
        base_for_check["params"].setdefault("n_atoms", (n_vals or [2])[0])
        if omega_vals is not None:
            base_for_check["params"].setdefault("omega", omega_vals[0])
    try:
        base_cfg = validate_config(base_for_check)
    except ConfigError as exc:
        errors.extend(f"base.{e}" for e in exc.errors)
        base_cfg = None

    # needed observables for the reductions
    if base_cfg is not None:
        need = {"max_c2_over_N2": "c2", "max_c3_over_N3": "c3"}
        for r in reductions:
            if need[r] not in base_cfg.observables:
                errors.append(f"base.observables: reduction {r} needs observable '{need[r]}'")

    if errors:
        raise ConfigError(errors)

    cfg = SweepConfig(
        base=base_cfg,
        base_raw=base_raw,
        n_atoms_values=tuple(n_vals) if n_vals else (base_cfg.n_atoms,),
        omega_values=tuple(float(v) for v in omega_vals)
        if omega_vals
        else (base_cfg.params.omega,),
        reductions=tuple(reductions),
        workers=workers,
        checkpoint=checkpoint,
        out_dir=out_dir,
        prefix=prefix,
    )
    cfg.normalized = {
        "base": normalized_dict(base_cfg),
        "sweep": {"n_atoms": list(cfg.n_atoms_values), "omega": list(cfg.omega_values)},
        "reductions": list(cfg.reductions),
        "workers": workers,
        "checkpoint": checkpoint,
        "output": {"directory": out_dir, "prefix": prefix},
    }
    return cfg
