"""Semiclassical (mean-field) dynamics on the Bloch sphere.

With operator products factorized, the collective spin reduces to the polar
pair (theta, phi) at fixed radius r = 1/2:

    d theta / dt = eta * lambda^2 * sin(theta)
    d phi   / dt = xi  * lambda^2 * cos(theta)

Integrating the angles keeps spin conservation exact by construction.  phi
is never wrapped during integration; wrap at presentation time if needed.
"""

from dataclasses import dataclass

import numpy as np

from .integrate import solve_fixed_samples
from .schedule import RampSchedule, as_schedule_array, drive_coeffs
from .spin_algebra import ModelParams

__all__ = [
    "BlochAngles",
    "MeanFieldTrajectory",
    "meanfield_rhs",
    "integrate_meanfield",
    "rabi_frequency",
    "equator_crossing_time",
]

_POLE_CLAMP = 1e-14


@dataclass(frozen=True)
class BlochAngles:
    """Polar angle theta in [0, pi] and (unwrapped) azimuth phi."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must be in [0, pi], got {self.theta}")


@dataclass(frozen=True)
class MeanFieldTrajectory:
    times: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    @property
    def bloch(self) -> np.ndarray:
        """(<Jx>, <Jy>, <Jz>)/N samples, shape (n, 3); radius is 1/2."""
        st, ct = np.sin(self.theta), np.cos(self.theta)
        return 0.5 * np.column_stack((st * np.cos(self.phi), st * np.sin(self.phi), ct))

    def angles_at(self, i: int) -> BlochAngles:
        return BlochAngles(float(np.clip(self.theta[i], 0.0, np.pi)), float(self.phi[i]))


def meanfield_rhs(angles: BlochAngles, params: ModelParams):
    """(d theta/dt, d phi/dt) at the given point."""
    a = params.xi * params.lambda_**2
    b = params.eta * params.lambda_**2
    return b * np.sin(angles.theta), a * np.cos(angles.theta)


def rabi_frequency(gamma: float, params: ModelParams) -> float:
    """Inversion-dependent precession rate 2 xi lambda^2 gamma, gamma = <Jz>/N."""
    if abs(gamma) > 0.5 + 1e-12:
        raise ValueError(f"|gamma| must be <= 1/2, got {gamma}")
    return 2.0 * params.xi * params.lambda_**2 * gamma


def integrate_meanfield(
    initial,
    drive,
    t_span,
    rtol: float = 1e-9,
    sample_times=None,
    n_samples: int = 500,
) -> MeanFieldTrajectory:
    """Adaptive integration of the angle equations with dense sampling.

    ``initial`` is a BlochAngles (or (theta, phi) pair); ``drive`` is fixed
    ModelParams or a RampSchedule.  Samples default to ``n_samples`` uniform
    times across ``t_span``.
    """
    if not isinstance(initial, BlochAngles):
        initial = BlochAngles(*initial)
    sched = as_schedule_array(drive)
    stops = drive.breakpoints() if isinstance(drive, RampSchedule) else ()

    theta0 = min(max(initial.theta, _POLE_CLAMP), np.pi - _POLE_CLAMP)
    y0 = np.array([theta0, initial.phi])
    if sample_times is None:
        sample_times = np.linspace(t_span[0], t_span[1], n_samples)

    def f(t, y):
        a, b = drive_coeffs(t, sched)
        return np.array([b * np.sin(y[0]), a * np.cos(y[0])])

    ys, _, _ = solve_fixed_samples(
        f, t_span, y0, sample_times, rtol=rtol, atol=rtol * 1e-3, t_stops=stops
    )
    return MeanFieldTrajectory(
        times=np.asarray(sample_times, dtype=float), theta=ys[:, 0], phi=ys[:, 1]
    )


def equator_crossing_time(trajectory: MeanFieldTrajectory):
    """First time theta(t) = pi/2, by local inverse interpolation.

    Returns None when the sampled trajectory never crosses the equator.
    Assumes sampling dense enough that theta - pi/2 changes sign at most
    once between consecutive samples.
    """
    g = trajectory.theta - 0.5 * np.pi
    if g[0] == 0.0:
        return float(trajectory.times[0])
    sign_change = np.nonzero(g[:-1] * g[1:] <= 0.0)[0]
    if sign_change.size == 0:
        return None
    i = int(sign_change[0])
    t0, t1 = trajectory.times[i], trajectory.times[i + 1]
    g0, g1 = g[i], g[i + 1]
    if g1 == g0:
        return float(t0)
    return float(t0 - g0 * (t1 - t0) / (g1 - g0))
