"""Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4) pair).

One integrator backs every dynamical backend in the package: steps are taken
with the 5th-order solution, the embedded 4th-order estimate drives a PI
step-size controller, and a quartic interpolant provides dense output inside
each accepted step.  Dense output is what the samplers and the jump locator
in the trajectory backend interrogate, so the interpolant coefficients below
(the standard quartic for this pair) are part of the contract.

Works for real and complex state vectors alike.
"""

import numpy as np

__all__ = ["IntegrationError", "Dopri5", "solve_fixed_samples"]

# Dormand-Prince 5(4) tableau.  Stage 7 is the FSAL evaluation at the new
# point; its row of A equals B.
RK_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])

RK_A = np.zeros((7, 7))
RK_A[1, :1] = [1 / 5]
RK_A[2, :2] = [3 / 40, 9 / 40]
RK_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
RK_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
RK_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
RK_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]

RK_B = RK_A[6].copy()  # 5th-order weights (B[6] = 0)

# Difference between 5th- and embedded 4th-order weights.
RK_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

# Quartic dense-output coefficients for this pair (Shampine's interpolant):
# y(t0 + theta*h) = y0 + h * sum_s K[s] * sum_j P[s, j] * theta**(j + 1)
RK_P = np.array(
    [
        [
            1.0,
            -8048581381 / 2820520608,
            8663915743 / 2820520608,
            -12715105075 / 11282082432,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_ORDER = 5
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI controller exponents (0.7/k and 0.4/k for a 5th-order pair)
_BETA1 = 0.7 / _ORDER
_BETA2 = 0.4 / _ORDER


class IntegrationError(RuntimeError):
    """Adaptive integration could not proceed (step underflow or bad RHS)."""


def _rms(x):
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


class Dopri5:
    """Step-wise Dormand-Prince 5(4) driver over ``[t0, t_end]``.

    Parameters
    ----------
    f : callable
        Right-hand side ``f(t, y) -> dy/dt``.
    t0, t_end : float
        Integration interval, ``t_end > t0``.
    y0 : ndarray
        Initial state (1-D, real or complex).
    rtol, atol : float
        Error tolerances entering the scaled RMS error norm.
    h_max : float
        Step-size cap.
    t_stops : sequence of float
        Times the stepper must land on exactly (parameter-ramp breakpoints).
    """

    def __init__(
        self,
        f,
        t0,
        t_end,
        y0,
        rtol=1e-9,
        atol=1e-12,
        h_max=np.inf,
        h0=None,
        t_stops=(),
        max_steps=5_000_000,
    ):
        if not t_end > t0:
            raise ValueError("t_end must exceed t0")
        if not 0 < rtol <= 1e-2:
            raise ValueError("rtol must be in (0, 1e-2]")
        self.f = f
        self.t = float(t0)
        self.t_end = float(t_end)
        self.y = np.atleast_1d(np.asarray(y0)).copy()
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.h_max = float(h_max)
        self.max_steps = int(max_steps)
        self.n_steps = 0
        self.n_rejected = 0
        stops = sorted(t for t in t_stops if t0 < t < t_end)
        self._stops = stops + [self.t_end]
        self._istop = 0
        self._err_prev = 1.0

        self._k_last = self.f(self.t, self.y)
        if not np.all(np.isfinite(self._k_last)):
            raise IntegrationError(f"non-finite RHS at t={self.t}")
        self.h = float(h0) if h0 else self._initial_step(self._k_last)

        # last accepted step, for dense output
        self.t_old = self.t
        self.h_old = 0.0
        self.y_old = self.y.copy()
        self._K = None

    def _initial_step(self, f0):
        scale = self.atol + self.rtol * np.abs(self.y)
        d0 = _rms(self.y / scale)
        d1 = _rms(f0 / scale)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, self.t_end - self.t, self.h_max)
        y1 = self.y + h0 * f0
        f1 = self.f(self.t + h0, y1)
        d2 = _rms((f1 - f0) / scale) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / _ORDER)
        return min(100 * h0, h1, self.h_max, self.t_end - self.t)

    @property
    def finished(self):
        return self.t >= self.t_end

    def _next_boundary(self):
        while self._istop < len(self._stops) - 1 and self._stops[
            self._istop
        ] <= self.t + 1e-14 * max(1.0, abs(self.t)):
            self._istop += 1
        return self._stops[self._istop]

    def step(self):
        """Advance by one accepted step; returns ``(t_old, t_new)``."""
        if self.finished:
            raise RuntimeError("integration already finished")
        bound = self._next_boundary()
        y, t = self.y, self.t
        n = y.shape[0]
        K = np.empty((7, n), dtype=y.dtype)
        K[0] = self._k_last

        while True:
            self.n_steps += 1
            if self.n_steps > self.max_steps:
                raise IntegrationError(f"exceeded {self.max_steps} steps at t={t}")
            h = min(self.h, bound - t)
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t}")
            hit_bound = h >= bound - t - 1e-14 * max(1.0, abs(t))

            for s in range(1, 6):
                ys = y + h * (RK_A[s, :s] @ K[:s])
                K[s] = self.f(t + RK_C[s] * h, ys)
            y_new = y + h * (RK_B[:6] @ K[:6])
            t_new = bound if hit_bound else t + h
            K[6] = self.f(t_new, y_new)

            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms((h * (RK_E @ K)) / scale)

            if np.isnan(err) or np.isinf(err):
                self.n_rejected += 1
                self.h = 0.1 * h
                continue
            if err <= 1.0:
                break
            self.n_rejected += 1
            factor = max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / _ORDER))
            self.h = h * min(1.0, factor)

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * err ** (-_BETA1) * self._err_prev**_BETA2
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        self._err_prev = max(err, 1e-10)
        self.h = min(h * factor, self.h_max)

        self.t_old, self.y_old, self.h_old = t, y, h
        self._K = K
        self.t = t_new
        self.y = y_new
        self._k_last = K[6]
        return self.t_old, self.t

    def dense(self, times):
        """Evaluate the interpolant of the last accepted step.

        ``times`` may be a scalar or 1-D array inside ``[t_old, t]``.
        """
        if self._K is None:
            raise RuntimeError("no accepted step yet")
        t_arr = np.atleast_1d(np.asarray(times, dtype=float))
        theta = (t_arr - self.t_old) / self.h_old
        pows = theta[:, None] ** np.arange(1, 5)[None, :]
        out = self.y_old[None, :] + self.h_old * (pows @ RK_P.T) @ self._K
        if np.isscalar(times) or np.asarray(times).ndim == 0:
            return out[0]
        return out


def solve_fixed_samples(
    f,
    t_span,
    y0,
    sample_times,
    rtol=1e-9,
    atol=1e-12,
    h_max=np.inf,
    t_stops=(),
    observer=None,
    max_steps=5_000_000,
):
    """Integrate ``f`` over ``t_span`` and report the state at ``sample_times``.

    When ``observer`` is given it is called as ``observer(i, t, y)`` for each
    sample instead of storing the state, so large systems can stream
    observables without retaining every snapshot.  Returns the array of
    sampled states (or ``None`` with an observer) as the first element,
    followed by the final state and the stepper (for diagnostics).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    samples = np.asarray(sample_times, dtype=float)
    if samples.size and (samples[0] < t0 - 1e-12 or samples[-1] > t1 + 1e-12):
        raise ValueError("sample_times outside t_span")
    if np.any(np.diff(samples) < 0):
        raise ValueError("sample_times must be sorted")

    y0 = np.atleast_1d(np.asarray(y0))
    store = None if observer is not None else np.empty((samples.size,) + y0.shape, dtype=y0.dtype)

    def emit(i, t, y):
        if observer is not None:
            observer(i, t, y)
        else:
            store[i] = y

    isamp = 0
    while isamp < samples.size and samples[isamp] <= t0 + 1e-14 * max(1.0, abs(t0)):
        emit(isamp, t0, y0.copy())
        isamp += 1

    stepper = Dopri5(
        f, t0, t1, y0, rtol=rtol, atol=atol, h_max=h_max, t_stops=t_stops, max_steps=max_steps
    )
    while not stepper.finished:
        _, t_new = stepper.step()
        hi = isamp
        while hi < samples.size and samples[hi] <= t_new + 1e-14 * max(1.0, abs(t_new)):
            hi += 1
        if hi > isamp:
            ys = stepper.dense(samples[isamp:hi])
            for j in range(isamp, hi):
                emit(j, samples[j], ys[j - isamp])
            isamp = hi
    while isamp < samples.size:  # samples at exactly t1 missed by round-off
        emit(isamp, stepper.t, stepper.y.copy())
        isamp += 1
    return store, stepper.y, stepper
