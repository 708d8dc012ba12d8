"""Monte-Carlo wave-function unraveling of the master equation.

Photon-counting scheme: between jumps the unnormalized state evolves under
the non-hermitian drift (both the twisting Hamiltonian and J+J- are diagonal
in the Dicke basis, so the drift is elementwise); a jump applies J- and
renormalizes whenever the squared norm crosses a uniform threshold.  The
crossing is bracketed by the monotone norm decay, located by bisection on
the integrator's dense output to a relative tolerance in norm^2, and the
final step is re-taken to land exactly on the jump time.

Randomness is counter-based: each trajectory draws its thresholds from a
Philox stream keyed by (master_seed, trajectory_index), one threshold per
inter-jump interval, so results are independent of scheduling and worker
count.  The whole per-trajectory loop is one kernel, numba-compiled by
default with a pure-numpy fallback (SPINPULSE_NUMBA=0).
"""

from dataclasses import dataclass, field

import numpy as np

from ._accel import maybe_njit, prange, set_num_threads
from .integrate import RK_A, RK_B, RK_C, RK_E, RK_P, IntegrationError
from .schedule import RampSchedule, as_schedule_array, drive_coeffs
from .spin_algebra import dicke_space

__all__ = [
    "TrajectoryConfig",
    "TrajectoryRecord",
    "EnsembleMoments",
    "run_trajectory",
    "ensemble_average",
]

# MCWF thresholds are clamped just above the norm floor; the bias is of
# order 1e-11 per jump and keeps legitimate draws off the abort path.
_NORM_FLOOR = 1e-12
_THRESHOLD_FLOOR = 1e-11

_STATUS_MESSAGES = {
    1: "step size underflow",
    2: "norm fell below floor before threshold crossing (tolerance too loose)",
    3: "jump budget exceeded",
    4: "jump bisection failed to converge",
    5: "step limit exceeded",
}


@dataclass(frozen=True)
class TrajectoryConfig:
    """Ensemble size, reproducibility seed and integration knobs."""

    n_trajectories: int = 1
    master_seed: int = 0
    dt_max: float = np.inf
    jump_tolerance: float = 1e-9
    sample_times: np.ndarray | None = None
    rtol: float = 1e-8
    atol: float = 1e-12

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.jump_tolerance <= 0:
            raise ValueError("jump_tolerance must be positive")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Sampled normalized-state expectations and jump times of one run."""

    trajectory_index: int
    times: np.ndarray
    moments: np.ndarray  # (n_samples, 9): Jx, Jy, Jz then symmetrized pairs
    jump_times: np.ndarray
    states: np.ndarray | None = None  # normalized states at snapshot times

    @property
    def bloch(self) -> np.ndarray:
        return self.moments[:, :3]


@dataclass(frozen=True)
class EnsembleMoments:
    """Indexed-reduction ensemble statistics over trajectories."""

    times: np.ndarray
    mean: np.ndarray  # (n_samples, 9)
    stderr: np.ndarray  # (n_samples, 9)
    n_trajectories: int
    jump_counts: np.ndarray
    per_trajectory: np.ndarray | None = None
    snapshot_times: np.ndarray | None = None
    snapshot_rho: dict = field(default_factory=dict)


def _thresholds(master_seed: int, index: int, count: int) -> np.ndarray:
    key = np.array([master_seed, index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return np.maximum(gen.random(count), _THRESHOLD_FLOOR)



@maybe_njit
def _drift(t, psi, hvec, ccvec, drive_arr, inv_n):
    a, b = drive_coeffs(t, drive_arr)
    return (1j * (a * inv_n)) * (hvec * psi) - (b * inv_n) * (ccvec * psi)


@maybe_njit
def _dense_eval(psi, k_stage, h, theta):
    """Quartic dense-output state at fraction theta of the last step."""
    p1 = theta
    p2 = p1 * theta
    p3 = p2 * theta
    p4 = p3 * theta
    out = psi.copy()
    for s in range(7):
        pv = RK_P[s, 0] * p1 + RK_P[s, 1] * p2 + RK_P[s, 2] * p3 + RK_P[s, 3] * p4
        if pv != 0.0:
            out += (h * pv) * k_stage[s]
    return out


@maybe_njit
def _rk_stages(t, psi, k0, h, k_stage, hvec, ccvec, drive_arr, inv_n):
    """Fill the 7 stages from (t, psi, k0); returns the 5th-order endpoint."""
    k_stage[0] = k0
    for s in range(1, 6):
        ys = psi.copy()
        for j in range(s):
            ys += (h * RK_A[s, j]) * k_stage[j]
        k_stage[s] = _drift(t + RK_C[s] * h, ys, hvec, ccvec, drive_arr, inv_n)
    y_new = psi.copy()
    for j in range(6):
        if RK_B[j] != 0.0:
            y_new += (h * RK_B[j]) * k_stage[j]
    k_stage[6] = _drift(t + h, y_new, hvec, ccvec, drive_arr, inv_n)
    return y_new


@maybe_njit
def _emit(psi_raw, cvec, mvec, out_m, traj, isamp):
    """Normalized first and symmetrized second moments of a raw state."""
    dim = psi_raw.shape[0]
    nrm2 = np.vdot(psi_raw, psi_raw).real
    psi = psi_raw / np.sqrt(nrm2)
    up = np.zeros(dim, dtype=np.complex128)
    um = np.zeros(dim, dtype=np.complex128)
    up[:-1] = cvec * psi[1:]
    um[1:] = cvec * psi[:-1]
    ux = 0.5 * (up + um)
    uy = -0.5j * (up - um)
    uz = mvec * psi

    jp = np.vdot(psi, up)
    out_m[traj, isamp, 0] = jp.real
    out_m[traj, isamp, 1] = jp.imag
    out_m[traj, isamp, 2] = np.vdot(psi, uz).real
    out_m[traj, isamp, 3] = np.vdot(ux, ux).real
    out_m[traj, isamp, 4] = np.vdot(ux, uy).real
    out_m[traj, isamp, 5] = np.vdot(ux, uz).real
    out_m[traj, isamp, 6] = np.vdot(uy, uy).real
    out_m[traj, isamp, 7] = np.vdot(uy, uz).real
    out_m[traj, isamp, 8] = np.vdot(uz, uz).real


@maybe_njit
def _one_trajectory(
    traj,
    psi0,
    hvec,
    ccvec,
    cvec,
    mvec,
    drive_arr,
    stops,
    t0,
    t1,
    samples,
    snap_slot,
    thresholds,
    rtol,
    atol,
    hmax,
    jump_tol,
    out_m,
    out_jump_t,
    out_njump,
    out_snap,
    out_status,
):
    dim = psi0.shape[0]
    n_samples = samples.shape[0]
    n_stops = stops.shape[0]
    inv_n = 1.0 / (dim - 1.0)
    max_steps = 20_000_000

    psi = psi0.copy()
    k_stage = np.empty((7, dim), dtype=np.complex128)
    t = t0
    njump = 0
    threshold = thresholds[traj, 0]
    isamp = 0
    istop = 0
    err_prev = 1.0
    status = 0
    nsteps = 0

    # emit samples sitting exactly at t0
    while isamp < n_samples and samples[isamp] <= t0 + 1e-14 * max(1.0, abs(t0)):
        _emit(psi, cvec, mvec, out_m, traj, isamp)
        if snap_slot[isamp] >= 0:
            nrm = np.sqrt(np.vdot(psi, psi).real)
            out_snap[traj, snap_slot[isamp]] = psi / nrm
        isamp += 1

    k0 = _drift(t, psi, hvec, ccvec, drive_arr, inv_n)  # FSAL seed

    # initial step guess
    sc = atol + rtol * np.abs(psi)
    d0 = np.sqrt(np.mean(np.abs(psi / sc) ** 2))
    d1 = np.sqrt(np.mean(np.abs(k0 / sc) ** 2))
    if d0 < 1e-5 or d1 < 1e-15:
        h = min(hmax, (t1 - t0) * 1e-3)
    else:
        h = min(hmax, (t1 - t0) * 1e-3, 0.01 * d0 / d1)
    if h <= 0.0:
        h = (t1 - t0) * 1e-6

    while t < t1 and status == 0:
        while istop < n_stops and stops[istop] <= t + 1e-14 * max(1.0, abs(t)):
            istop += 1
        bound = t1 if istop >= n_stops else min(t1, stops[istop])

        # ---- one accepted step ----
        accepted = False
        h_used = 0.0
        err = 0.0
        t_new = t
        y_new = psi
        while not accepted:
            nsteps += 1
            if nsteps > max_steps:
                status = 5
                break
            h_used = min(h, hmax, bound - t)
            if h_used < 1e-14 * max(1.0, abs(t)):
                status = 1
                break
            y_new = _rk_stages(t, psi, k0, h_used, k_stage, hvec, ccvec, drive_arr, inv_n)
            t_new = t + h_used
            if t_new > bound - 1e-14 * max(1.0, abs(bound)):
                t_new = bound
            ev = np.zeros(dim, dtype=np.complex128)
            for j in range(7):
                if RK_E[j] != 0.0:
                    ev += (h_used * RK_E[j]) * k_stage[j]
            scale = atol + rtol * np.maximum(np.abs(psi), np.abs(y_new))
            err = np.sqrt(np.mean(np.abs(ev / scale) ** 2))
            if np.isnan(err) or np.isinf(err):
                h = 0.1 * h_used
                continue
            if err <= 1.0:
                accepted = True
            else:
                fac = 0.9 * err ** (-0.2)
                if fac < 0.2:
                    fac = 0.2
                h = h_used * min(1.0, fac)
        if status != 0:
            break

        if err == 0.0:
            fac = 10.0
        else:
            fac = 0.9 * err ** (-0.14) * err_prev**0.08
            if fac > 10.0:
                fac = 10.0
            elif fac < 0.2:
                fac = 0.2
        err_prev = max(err, 1e-10)
        h_next = min(h_used * fac, hmax)

        nn = np.vdot(y_new, y_new).real

        if nn < threshold:
            # ---- bracket the crossing on the dense output ----
            lo = 0.0
            hi = 1.0
            theta = 1.0
            ok = False
            for _ in range(300):
                theta = 0.5 * (lo + hi)
                y_mid = _dense_eval(psi, k_stage, h_used, theta)
                nm = np.vdot(y_mid, y_mid).real
                if abs(nm - threshold) <= jump_tol * threshold:
                    ok = True
                    break
                if nm > threshold:
                    lo = theta
                else:
                    hi = theta
                if hi - lo < 1e-15:
                    ok = True
                    break
            if not ok:
                status = 4
                break
            h_jump = theta * h_used
            t_jump = t + h_jump
            if h_jump < 1e-15 * max(1.0, abs(t)):
                y_jump = psi.copy()
            else:
                # re-take the final step to land exactly on the jump time
                y_jump = _rk_stages(
                    t, psi, k0, h_jump, k_stage, hvec, ccvec, drive_arr, inv_n
                )

            # samples inside (t, t_jump]
            while isamp < n_samples and samples[isamp] <= t_jump + 1e-14 * max(
                1.0, abs(t_jump)
            ):
                th = (samples[isamp] - t) / h_jump if h_jump > 0 else 0.0
                y_s = _dense_eval(psi, k_stage, h_jump, th)
                _emit(y_s, cvec, mvec, out_m, traj, isamp)
                if snap_slot[isamp] >= 0:
                    nrm = np.sqrt(np.vdot(y_s, y_s).real)
                    out_snap[traj, snap_slot[isamp]] = y_s / nrm
                isamp += 1

            # apply J- and renormalize
            post = np.zeros(dim, dtype=np.complex128)
            post[1:] = cvec * y_jump[:-1]
            nrm = np.sqrt(np.vdot(post, post).real)
            if nrm <= 0.0:
                status = 2
                break
            psi = post / nrm
            out_jump_t[traj, njump] = t_jump
            njump += 1
            if njump >= thresholds.shape[1]:
                status = 3
                break
            threshold = thresholds[traj, njump]
            t = t_jump
            k0 = _drift(t, psi, hvec, ccvec, drive_arr, inv_n)
            err_prev = 1.0
            h = h_next
            continue

        # ---- no jump: emit samples inside (t, t_new] ----
        while isamp < n_samples and samples[isamp] <= t_new + 1e-14 * max(
            1.0, abs(t_new)
        ):
            th = (samples[isamp] - t) / h_used
            y_s = _dense_eval(psi, k_stage, h_used, th)
            _emit(y_s, cvec, mvec, out_m, traj, isamp)
            if snap_slot[isamp] >= 0:
                nrm = np.sqrt(np.vdot(y_s, y_s).real)
                out_snap[traj, snap_slot[isamp]] = y_s / nrm
            isamp += 1

        if nn < _NORM_FLOOR:
            status = 2
            break
        t = t_new
        psi = y_new
        k0 = k_stage[6].copy()
        h = h_next

    out_njump[traj] = njump
    out_status[traj] = status


@maybe_njit(parallel=True)
def _ensemble_kernel(
    psi0,
    hvec,
    ccvec,
    cvec,
    mvec,
    drive_arr,
    stops,
    t0,
    t1,
    samples,
    snap_slot,
    thresholds,
    rtol,
    atol,
    hmax,
    jump_tol,
    out_m,
    out_jump_t,
    out_njump,
    out_snap,
    out_status,
):
    for traj in prange(thresholds.shape[0]):
        _one_trajectory(
            traj,
            psi0,
            hvec,
            ccvec,
            cvec,
            mvec,
            drive_arr,
            stops,
            t0,
            t1,
            samples,
            snap_slot,
            thresholds,
            rtol,
            atol,
            hmax,
            jump_tol,
            out_m,
            out_jump_t,
            out_njump,
            out_snap,
            out_status,
        )


def _run_batch(psi0, drive, t_span, config, indices, snapshot_times=()):
    drive_arr = as_schedule_array(drive)
    n = drive.n_atoms
    dim = n + 1
    psi0 = np.ascontiguousarray(psi0, dtype=complex)
    if psi0.shape != (dim,):
        raise ValueError(f"psi0 must have length {dim}, got {psi0.shape}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("psi0 must be normalized")
    sp = dicke_space(n)
    hvec = n**2 / 4.0 - sp.m**2
    t0, t1 = float(t_span[0]), float(t_span[1])
    samples = (
        np.linspace(t0, t1, 200)
        if config.sample_times is None
        else np.asarray(config.sample_times, dtype=float)
    )
    if samples.size and (samples[0] < t0 - 1e-12 or samples[-1] > t1 + 1e-12):
        raise ValueError("sample_times outside t_span")

    snap_slot = np.full(samples.size, -1, dtype=np.int64)
    snap_times = []
    for k, ts in enumerate(snapshot_times):
        i = int(np.argmin(np.abs(samples - ts)))
        snap_slot[i] = k
        snap_times.append(float(samples[i]))
    n_snap = len(snap_times)

    if isinstance(drive, RampSchedule):
        stops = np.array([t for t in drive.breakpoints() if t0 < t < t1], dtype=float)
    else:
        stops = np.empty(0, dtype=float)

    m = len(indices)
    n_thr = n + 2
    thresholds = np.empty((m, n_thr))
    for row, idx in enumerate(indices):
        thresholds[row] = _thresholds(config.master_seed, idx, n_thr)

    out_m = np.empty((m, samples.size, 9))
    out_jump_t = np.full((m, n_thr), np.nan)
    out_njump = np.zeros(m, dtype=np.int64)
    out_snap = np.zeros((m, max(n_snap, 1), dim), dtype=complex)
    out_status = np.zeros(m, dtype=np.int64)

    _ensemble_kernel(
        psi0,
        hvec,
        sp.cc,
        sp.c,
        sp.m,
        drive_arr,
        stops,
        t0,
        t1,
        samples,
        snap_slot,
        thresholds,
        float(config.rtol),
        float(config.atol),
        float(config.dt_max),
        float(config.jump_tolerance),
        out_m,
        out_jump_t,
        out_njump,
        out_snap,
        out_status,
    )

    bad = np.nonzero(out_status)[0]
    if bad.size:
        row = int(bad[0])
        raise IntegrationError(
            f"trajectory {indices[row]} failed: "
            f"{_STATUS_MESSAGES.get(int(out_status[row]), 'unknown error')}"
        )
    return samples, out_m, out_jump_t, out_njump, out_snap[:, :n_snap, :], snap_times


def run_trajectory(psi0, drive, t_span, config: TrajectoryConfig, trajectory_index: int = 0):
    """Single MCWF trajectory; deterministic in (master_seed, index)."""
    samples, out_m, out_jump_t, out_njump, _, _ = _run_batch(
        psi0, drive, t_span, config, [trajectory_index]
    )
    nj = int(out_njump[0])
    return TrajectoryRecord(
        trajectory_index=trajectory_index,
        times=samples,
        moments=out_m[0],
        jump_times=out_jump_t[0, :nj].copy(),
    )


def ensemble_average(
    psi0,
    drive,
    t_span,
    config: TrajectoryConfig,
    n_workers: int | None = None,
    keep_per_trajectory: bool = False,
    snapshot_times=(),
) -> EnsembleMoments:
    """Mean and standard error of the sampled moments over the ensemble.

    Snapshot times (optional) additionally reconstruct the ensemble density
    matrix (1/M) sum |psi~><psi~| from the normalized states, enabling
    Q-function and correlation measures on the trajectory backend.
    """
    if n_workers:
        set_num_threads(int(n_workers))
    indices = list(range(config.n_trajectories))
    samples, out_m, _, out_njump, out_snap, snap_times = _run_batch(
        psi0, drive, t_span, config, indices, snapshot_times=snapshot_times
    )
    m = config.n_trajectories
    mean = out_m.mean(axis=0)
    if m > 1:
        stderr = out_m.std(axis=0, ddof=1) / np.sqrt(m)
    else:
        stderr = np.zeros_like(mean)
    snap_rho = {}
    for k, ts in enumerate(snap_times):
        states = out_snap[:, k, :]
        snap_rho[ts] = (states.conj()[:, None, :] * states[:, :, None]).mean(axis=0)
    return EnsembleMoments(
        times=samples,
        mean=mean,
        stderr=stderr,
        n_trajectories=m,
        jump_counts=out_njump.copy(),
        per_trajectory=out_m if keep_per_trajectory else None,
        snapshot_times=np.array(snap_times),
        snapshot_rho=snap_rho,
    )
