"""Run/sweep execution: backend dispatch, CSV and JSON output.

CSV files carry one row per sample time with a fixed, documented column
order (first line) at full double precision, so identical configurations
produce byte-identical output.  Every run writes a normalized config dump
next to its results for provenance.
"""

import json
import os
import time as _time
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np

from .config import RunConfig, SweepConfig, normalized_dict, validate_config
from .cumulant import MomentState, integrate_cumulant2
from .lindblad import evolve
from .meanfield import equator_crossing_time, integrate_meanfield
from .observables import c2_from_moments, chi_squared_from_moments
from .spin_algebra import projector
from .trajectories import TrajectoryConfig, ensemble_average

__all__ = ["run", "sweep", "resolve_out_dir"]

ENV_OUTPUT_DIR = "SPINPULSE_OUTPUT_DIR"


def resolve_out_dir(cfg_dir) -> str:
    out = cfg_dir or os.environ.get(ENV_OUTPUT_DIR) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_csv(path, header, columns) -> None:
    """Write named columns (equal-length 1-D arrays) as CSV."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(cols[0].size):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _peak(times, series):
    i = int(np.argmax(series))
    return {"value": float(series[i]), "time": float(times[i])}


def _chi2_c2_columns(cfg, times, first, second_sym):
    """chi2/c2 series from sampled moments (cumulant & trajectory backends)."""
    cols = {}
    if "chi2" in cfg.observables:
        chi = np.empty(times.size)
        for i in range(times.size):
            ms = MomentState(first=first[i], second_sym=second_sym[i])
            chi[i] = chi_squared_from_moments(first[i], ms.ordered_pairs(), cfg.n_atoms)[0]
        cols["chi2"] = chi
    if "c2" in cfg.observables:
        c2 = np.empty(times.size)
        for i in range(times.size):
            ms = MomentState(first=first[i], second_sym=second_sym[i])
            c2[i] = c2_from_moments(
                first[i], ms.ordered_pairs(), convention=cfg.correlation_convention
            )
        cols["c2"] = c2
    return cols


def run(cfg: RunConfig, threads: int | None = None) -> dict:
    """Execute one configured run; returns the JSON summary (also written).

    Raises ConfigError/ValueError for bad input and IntegrationError for
    numerical failure; the CLI maps those onto exit codes 2 and 3.
    """
    out_dir = resolve_out_dir(cfg.out_dir)
    prefix = os.path.join(out_dir, cfg.prefix)
    t_start = _time.perf_counter()
    times = cfg.sample_times
    files = []
    summary = {
        "backend": cfg.backend,
        "n_atoms": cfg.n_atoms,
        "observables": list(cfg.observables),
        "seed": cfg.seed,
    }

    if cfg.backend == "meanfield":
        traj = integrate_meanfield(
            (cfg.theta0, cfg.phi0), cfg.drive, cfg.t_span, rtol=cfg.rtol, sample_times=times
        )
        j = cfg.n_atoms * traj.bloch
        path = f"{prefix}.csv"
        write_csv(
            path,
            ["time", "theta", "phi", "jx", "jy", "jz"],
            [times, traj.theta, traj.phi, j[:, 0], j[:, 1], j[:, 2]],
        )
        files.append(path)
        tc = equator_crossing_time(traj)
        summary["equator_crossing_time"] = tc
        summary["final"] = {"theta": float(traj.theta[-1]), "phi": float(traj.phi[-1])}

    elif cfg.backend == "cumulant2":
        traj = integrate_cumulant2(
            cfg.initial_vector(), cfg.drive, cfg.t_span, rtol=cfg.rtol, sample_times=times
        )
        header = ["time", "jx", "jy", "jz", "sxx", "sxy", "sxz", "syy", "syz", "szz"]
        cols = [times] + [traj.first[:, k] for k in range(3)] + [
            traj.second_sym[:, k] for k in range(6)
        ]
        conn = traj.connected
        header += ["cxx", "cxy", "cxz", "cyy", "cyz", "czz"]
        cols += [conn[:, k] for k in range(6)]
        extra = _chi2_c2_columns(cfg, times, traj.first, traj.second_sym)
        for name, series in extra.items():
            header.append(name)
            cols.append(series)
            summary[f"peak_{name}"] = _peak(times, series)
        path = f"{prefix}.csv"
        write_csv(path, header, cols)
        files.append(path)
        summary["final"] = {"jz": float(traj.first[-1, 2])}

    elif cfg.backend == "master":
        res = evolve(
            projector(cfg.initial_vector()),
            cfg.drive,
            cfg.t_span,
            times,
            rtol=cfg.rtol,
            atol=cfg.atol,
            observables=cfg.observables,
            qfunction_times=cfg.qfunction_times,
            q_resolution=cfg.q_resolution,
            correlation_convention=cfg.correlation_convention,
            cn_order=cfg.cn_order,
        )
        header = ["time", "jx", "jy", "jz", "sxx", "sxy", "sxz", "syy", "syz", "szz"]
        cols = [times] + [res.first[:, k] for k in range(3)] + [
            res.second_sym[:, k] for k in range(6)
        ]
        header += ["fidelity_dark", "trace_error"]
        cols += [res.fidelity_dark, res.trace_error]
        for name in ("chi2", "c2", "c3", "cn"):
            series = getattr(res, name)
            if series is not None:
                header.append(name)
                cols.append(series)
                summary[f"peak_{name}"] = _peak(times, series)
        path = f"{prefix}.csv"
        write_csv(path, header, cols)
        files.append(path)
        for tq, grid in sorted(res.qgrids.items()):
            qpath = f"{prefix}_qfunction_t{tq:g}.csv"
            grid.to_csv(qpath)
            files.append(qpath)
        summary["final"] = {
            "fidelity_dark": float(res.fidelity_dark[-1]),
            "jz": float(res.first[-1, 2]),
        }
        summary["n_steps"] = res.n_steps
        summary["max_trace_error"] = float(res.trace_error.max())

    elif cfg.backend == "trajectories":
        tc = TrajectoryConfig(
            n_trajectories=cfg.n_trajectories,
            master_seed=cfg.seed,
            dt_max=cfg.dt_max,
            jump_tolerance=cfg.jump_tolerance,
            sample_times=times,
            rtol=cfg.rtol,
            atol=cfg.atol,
        )
        ens = ensemble_average(
            cfg.initial_vector(),
            cfg.drive,
            cfg.t_span,
            tc,
            n_workers=threads,
            keep_per_trajectory=cfg.per_trajectory,
            snapshot_times=cfg.qfunction_times,
        )
        names = ["jx", "jy", "jz", "sxx", "sxy", "sxz", "syy", "syz", "szz"]
        header = ["time"]
        cols = [times]
        for k, nm in enumerate(names):
            header += [f"{nm}_mean", f"{nm}_se"]
            cols += [ens.mean[:, k], ens.stderr[:, k]]
        extra = _chi2_c2_columns(cfg, times, ens.mean[:, :3], ens.mean[:, 3:9])
        for name, series in extra.items():
            header.append(name)
            cols.append(series)
            summary[f"peak_{name}"] = _peak(times, series)
        path = f"{prefix}.csv"
        write_csv(path, header, cols)
        files.append(path)
        if cfg.per_trajectory:
            ph = ["time"]
            pc = [times]
            for m in range(cfg.n_trajectories):
                for k, nm in enumerate(("jx", "jy", "jz")):
                    ph.append(f"{nm}_t{m:03d}")
                    pc.append(ens.per_trajectory[m, :, k])
            tpath = f"{prefix}_trajectories.csv"
            write_csv(tpath, ph, pc)
            files.append(tpath)
        if cfg.qfunction_times:
            from .observables import q_function

            for tq in ens.snapshot_times:
                grid = q_function(ens.snapshot_rho[float(tq)], *cfg.q_resolution)
                qpath = f"{prefix}_qfunction_t{tq:g}.csv"
                grid.to_csv(qpath)
                files.append(qpath)
        summary["n_trajectories"] = cfg.n_trajectories
        summary["mean_jump_count"] = float(ens.jump_counts.mean())
        summary["final"] = {"jz": float(ens.mean[-1, 2])}
    else:
        raise ValueError(f"unknown backend {cfg.backend!r}")

    summary["runtime_seconds"] = round(_time.perf_counter() - t_start, 3)
    summary["files"] = [os.path.basename(f) for f in files]
    _write_json(f"{prefix}_config.json", cfg.normalized)
    _write_json(f"{prefix}_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# parameter sweep
# ---------------------------------------------------------------------------


def _sweep_point(base_norm: dict, n_atoms: int, omega: float) -> dict:
    """One master-backend grid point; returns the reduction payload."""
    raw = json.loads(json.dumps(base_norm))
    raw["params"]["n_atoms"] = n_atoms
    raw["params"]["omega"] = omega
    cfg = validate_config(raw)
    res = evolve(
        projector(cfg.initial_vector()),
        cfg.drive,
        cfg.t_span,
        cfg.sample_times,
        rtol=cfg.rtol,
        atol=cfg.atol,
        observables=cfg.observables,
        correlation_convention=cfg.correlation_convention,
    )
    out = {}
    if res.c2 is not None:
        i = int(np.argmax(res.c2))
        out["max_c2_norm"] = float(res.c2[i]) / n_atoms**2
        out["t_peak_c2"] = float(cfg.sample_times[i])
    if res.c3 is not None:
        i = int(np.argmax(res.c3))
        out["max_c3_norm"] = float(res.c3[i]) / n_atoms**3
        out["t_peak_c3"] = float(cfg.sample_times[i])
    return out


def _key(n, omega) -> str:
    return f"N{n}_omega{omega:g}"


def sweep(cfg: SweepConfig, threads: int | None = None) -> dict:
    """Grid sweep over (N, omega) with checkpoint/resume and slope fits.

    Per-point failures are recorded and the sweep continues; the summary
    reports them and the CLI exits nonzero if any point failed.
    """
    out_dir = resolve_out_dir(cfg.out_dir)
    prefix = os.path.join(out_dir, cfg.prefix)
    ck_path = cfg.checkpoint or f"{prefix}_checkpoint.json"
    if not os.path.isabs(ck_path) and os.path.dirname(ck_path) == "":
        ck_path = os.path.join(out_dir, ck_path)

    results = {}
    if os.path.exists(ck_path):
        with open(ck_path) as fh:
            results = json.load(fh)

    grid = [(n, w) for n in cfg.n_atoms_values for w in cfg.omega_values]
    todo = [(n, w) for (n, w) in grid if _key(n, w) not in results]
    base_norm = normalized_dict(cfg.base)

    def record(n, w, payload):
        results[_key(n, w)] = payload
        with open(ck_path, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)

    workers = threads or cfg.workers
    if todo:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = {
                    pool.submit(_sweep_point, base_norm, n, w): (n, w) for (n, w) in todo
                }
                for fut in as_completed(futs):
                    n, w = futs[fut]
                    try:
                        record(n, w, fut.result())
                    except Exception as exc:  # noqa: BLE001 - per-point isolation
                        record(n, w, {"error": f"{type(exc).__name__}: {exc}"})
        else:
            for n, w in todo:
                try:
                    record(n, w, _sweep_point(base_norm, n, w))
                except Exception as exc:  # noqa: BLE001
                    record(n, w, {"error": f"{type(exc).__name__}: {exc}"})

    # table, sorted for determinism
    rows = []
    for n in cfg.n_atoms_values:
        for w in cfg.omega_values:
            r = results[_key(n, w)]
            rows.append(
                (
                    n,
                    w,
                    r.get("max_c2_norm", float("nan")),
                    r.get("t_peak_c2", float("nan")),
                    r.get("max_c3_norm", float("nan")),
                    r.get("t_peak_c3", float("nan")),
                    "error" if "error" in r else "ok",
                )
            )
    table_path = f"{prefix}_table.csv"
    with open(table_path, "w") as fh:
        fh.write("n_atoms,omega,max_c2_norm,t_peak_c2,max_c3_norm,t_peak_c3,status\n")
        for row in rows:
            fh.write(
                ",".join(
                    [str(row[0]), _fmt(row[1])]
                    + [_fmt(v) for v in row[2:6]]
                    + [row[6]]
                )
                + "\n"
            )

    slopes = {}
    for w in cfg.omega_values:
        pts = [
            (n, results[_key(n, w)])
            for n in cfg.n_atoms_values
            if "error" not in results[_key(n, w)]
        ]
        entry = {"n_points": len(pts)}
        for red, field_name in (
            ("max_c2_over_N2", "max_c2_norm"),
            ("max_c3_over_N3", "max_c3_norm"),
        ):
            if red in cfg.reductions and len(pts) >= 2:
                xs = np.log([n for n, _ in pts])
                ys = np.log([r[field_name] for _, r in pts])
                coef = np.polyfit(xs, ys, 1)
                entry[f"slope_{field_name}"] = float(coef[0])
        slopes[f"{w:g}"] = entry

    failed = [k for k, v in results.items() if "error" in v]
    summary = {
        "grid": {"n_atoms": list(cfg.n_atoms_values), "omega": list(cfg.omega_values)},
        "slopes_per_omega": slopes,
        "failed_points": failed,
        "table": os.path.basename(table_path),
        "checkpoint": os.path.basename(ck_path),
    }
    _write_json(f"{prefix}_sweep_config.json", cfg.normalized)
    _write_json(f"{prefix}_sweep_summary.json", summary)
    return summary
