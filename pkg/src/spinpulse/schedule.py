"""Piecewise-linear quench of the drive parameters (omega, lambda).

A ramp holds (omega_max, lambda_max) during the dispersive stage, descends
linearly over the window [t_pulse - t_ramp, t_pulse], and stays at
(omega_min, lambda_min) afterwards.  t_ramp = 0 degenerates to a step at
t_pulse (right-continuous).  Every backend accepts either fixed ModelParams
or a RampSchedule; internally both are flattened to a 7-float array that the
jitted right-hand sides read through :func:`drive_coeffs`.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit
from .spin_algebra import ModelParams

__all__ = ["RampSchedule", "params_at", "drive_coeffs", "as_schedule_array"]


@dataclass(frozen=True)
class RampSchedule:
    n_atoms: int
    kappa: float
    omega_max: float
    omega_min: float
    lambda_max: float
    lambda_min: float
    t_pulse: float
    t_ramp: float

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError("n_atoms must be a positive integer")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ValueError("lambda values must be >= 0")
        if self.t_ramp < 0:
            raise ValueError("t_ramp must be >= 0")
        if self.t_pulse < 0:
            raise ValueError("t_pulse must be >= 0")
        if self.t_ramp > self.t_pulse:
            raise ValueError("t_ramp must not exceed t_pulse")
        if self.kappa == 0 and self.omega_max * self.omega_min <= 0:
            raise ValueError(
                "with kappa = 0 the ramp must keep omega away from zero "
                "(xi, eta undefined at kappa = omega = 0)"
            )

    @classmethod
    def constant(cls, params: ModelParams) -> "RampSchedule":
        """Degenerate schedule indistinguishable from fixed parameters."""
        return cls(
            n_atoms=params.n_atoms,
            kappa=params.kappa,
            omega_max=params.omega,
            omega_min=params.omega,
            lambda_max=params.lambda_,
            lambda_min=params.lambda_,
            t_pulse=0.0,
            t_ramp=0.0,
        )

    def breakpoints(self):
        """Times where the drive is only piecewise smooth."""
        if self.omega_max == self.omega_min and self.lambda_max == self.lambda_min:
            return ()
        return (self.t_pulse - self.t_ramp, self.t_pulse)


def _omega_lambda_at(schedule: RampSchedule, t: float):
    if t < schedule.t_pulse - schedule.t_ramp:
        return schedule.omega_max, schedule.lambda_max
    if t <= schedule.t_pulse and schedule.t_ramp > 0:
        frac = (t - (schedule.t_pulse - schedule.t_ramp)) / schedule.t_ramp
        return (
            schedule.omega_max + (schedule.omega_min - schedule.omega_max) * frac,
            schedule.lambda_max + (schedule.lambda_min - schedule.lambda_max) * frac,
        )
    return schedule.omega_min, schedule.lambda_min


def params_at(schedule: RampSchedule, t: float) -> ModelParams:
    """Instantaneous ModelParams at time t, with xi and eta recomputed."""
    if t < 0:
        raise ValueError("t must be >= 0")
    omega, lam = _omega_lambda_at(schedule, t)
    return ModelParams(
        n_atoms=schedule.n_atoms, kappa=schedule.kappa, omega=omega, lambda_=lam
    )


def as_schedule_array(drive) -> np.ndarray:
    """Flatten ModelParams or RampSchedule into the 7-float drive array.

    Layout: (omega_max, omega_min, lambda_max, lambda_min, t_pulse, t_ramp,
    kappa).  Constant parameters map onto a degenerate schedule.
    """
    if isinstance(drive, ModelParams):
        return np.array(
            [drive.omega, drive.omega, drive.lambda_, drive.lambda_, 0.0, 0.0, drive.kappa]
        )
    if isinstance(drive, RampSchedule):
        return np.array(
            [
                drive.omega_max,
                drive.omega_min,
                drive.lambda_max,
                drive.lambda_min,
                drive.t_pulse,
                drive.t_ramp,
                drive.kappa,
            ]
        )
    raise TypeError(f"drive must be ModelParams or RampSchedule, got {type(drive)!r}")


def drive_n_atoms(drive) -> int:
    return drive.n_atoms


@maybe_njit
def drive_coeffs(t, drive_arr):
    """(xi(t) * lambda(t)^2, eta(t) * lambda(t)^2) from a drive array."""
    w_max, w_min, l_max, l_min, t_pulse, t_ramp, kappa = (
        drive_arr[0],
        drive_arr[1],
        drive_arr[2],
        drive_arr[3],
        drive_arr[4],
        drive_arr[5],
        drive_arr[6],
    )
    if t < t_pulse - t_ramp:
        w = w_max
        lam = l_max
    elif t <= t_pulse and t_ramp > 0.0:
        frac = (t - (t_pulse - t_ramp)) / t_ramp
        w = w_max + (w_min - w_max) * frac
        lam = l_max + (l_min - l_max) * frac
    else:
        w = w_min
        lam = l_min
    denom = kappa * kappa + w * w
    lam2 = lam * lam
    return w / denom * lam2, kappa / denom * lam2


def pulse_time_at_peak_c3(
    schedule: RampSchedule,
    theta0: float,
    phi0: float,
    t_max: float,
    n_samples: int = 400,
    rtol: float = 1e-8,
) -> float:
    """Locate the correlation peak of the un-quenched pulse.

    Runs a master-equation pre-pass at the pre-ramp parameter values and
    returns the sample time where the third-order correlation total peaks,
    which is the natural choice of t_pulse.  Convenience only; any t_pulse
    can be set directly on the schedule.
    """
    from .lindblad import evolve
    from .spin_algebra import coherent_state, projector

    params = ModelParams(
        n_atoms=schedule.n_atoms,
        kappa=schedule.kappa,
        omega=schedule.omega_max,
        lambda_=schedule.lambda_max,
    )
    rho0 = projector(coherent_state(schedule.n_atoms, theta0, phi0))
    times = np.linspace(0.0, t_max, n_samples)
    result = evolve(rho0, params, (0.0, t_max), times, rtol=rtol, observables=("c3",))
    return float(times[int(np.argmax(result.c3))])
