"""Exact master-equation backend for the dissipative twisting model.

Propagates the full (N+1)x(N+1) density matrix under

    d rho/dt = -i[H, rho] + (eta lambda^2 / N) (2 J- rho J+ - J+J- rho - rho J+J-),
    H = -(xi lambda^2 / N) (N^2/4 - Jz^2).

H is diagonal in the Dicke basis and J- is bidiagonal, so one right-hand
side evaluation is an O(N^2) elementwise pass rather than a matrix product;
that single hot kernel has a numba and a pure-numpy implementation (see
``spinpulse._accel``).  The trace is monitored, never renormalized: drift
beyond ``trace_tol`` aborts the run as an integrator failure.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit
from .integrate import IntegrationError, solve_fixed_samples
from .schedule import RampSchedule, as_schedule_array, drive_coeffs
from .spin_algebra import ModelParams, dicke_space

__all__ = ["hamiltonian", "lindblad_rhs", "evolve", "LindbladResult"]


def hamiltonian(params: ModelParams, ops=None) -> np.ndarray:
    """Twisting Hamiltonian -(xi lambda^2/N)(N^2/4 - Jz^2), diagonal here."""
    n = params.n_atoms
    if ops is not None and ops.j_z.shape[0] != n + 1:
        raise ValueError("operator dimension does not match params.n_atoms")
    sp = dicke_space(n)
    diag = -(params.xi * params.lambda_**2 / n) * (n**2 / 4.0 - sp.m**2)
    return np.diag(diag.astype(complex))


@lru_cache(maxsize=16)
def _rhs_tables(n_atoms: int):
    """Constant per-N coefficient tables for the elementwise RHS."""
    sp = dicke_space(n_atoms)
    m2 = sp.m**2
    md2 = m2[:, None] - m2[None, :]  # commutator phases (m_p^2 - m_q^2)
    ccs = sp.cc[:, None] + sp.cc[None, :]  # anticommutator decay weights
    gain = 2.0 * np.outer(sp.c, sp.c)  # J- rho J+ feed from the level above
    return md2, ccs, gain


@maybe_njit
def _rhs_kernel_jit(rho, a, b, md2, ccs, gain, out):
    n = rho.shape[0]
    for p in range(n):
        for q in range(n):
            w = -1j * (a * md2[p, q]) - b * ccs[p, q]
            v = w * rho[p, q]
            if p > 0 and q > 0:
                v += b * gain[p - 1, q - 1] * rho[p - 1, q - 1]
            out[p, q] = v


def _rhs_kernel_np(rho, a, b, md2, ccs, gain, out):
    np.multiply(rho, (-1j * a) * md2, out=out)
    out -= (b * ccs) * rho
    out[1:, 1:] += (b * gain) * rho[:-1, :-1]


_rhs_kernel = _rhs_kernel_jit if NUMBA_ENABLED else _rhs_kernel_np


def lindblad_rhs(rho: np.ndarray, params: ModelParams, ops=None) -> np.ndarray:
    """d rho/dt for fixed parameters (dissipator with the explicit factor 2)."""
    rho = np.ascontiguousarray(rho, dtype=complex)
    n = params.n_atoms
    if rho.shape != (n + 1, n + 1):
        raise ValueError(f"rho must be {(n + 1, n + 1)}, got {rho.shape}")
    md2, ccs, gain = _rhs_tables(n)
    a = params.xi * params.lambda_**2 / n
    b = params.eta * params.lambda_**2 / n
    out = np.empty_like(rho)
    _rhs_kernel(rho, a, b, md2, ccs, gain, out)
    return out


@dataclass
class LindbladResult:
    """Sampled observables of one master-equation run."""

    times: np.ndarray
    first: np.ndarray  # (n, 3) <Jx>, <Jy>, <Jz>
    second_sym: np.ndarray  # (n, 6) symmetrized xx, xy, xz, yy, yz, zz
    fidelity_dark: np.ndarray
    trace_error: np.ndarray
    herm_error: np.ndarray
    chi2: np.ndarray | None = None
    c2: np.ndarray | None = None
    c3: np.ndarray | None = None
    cn: np.ndarray | None = None
    min_eigenvalue: np.ndarray | None = None
    states: list | None = None
    qgrids: dict = field(default_factory=dict)
    n_steps: int = 0


def evolve(
    rho0: np.ndarray,
    drive,
    t_span,
    sample_times=None,
    rtol: float = 1e-8,
    atol: float | None = None,
    observables=("moments",),
    qfunction_times=(),
    q_resolution=None,
    correlation_convention: str = "ordered",
    cn_order: int = 3,
    positivity_check: bool = False,
    store_states: bool = False,
    trace_tol: float = 1e-6,
    n_samples: int = 200,
) -> LindbladResult:
    """Integrate the master equation, streaming observables at sample times.

    ``drive`` is fixed ModelParams or a RampSchedule (parameters refreshed
    at every RHS evaluation).  Observables are computed on the fly so the
    density history is only retained when ``store_states`` is set.
    Recognized observable names: moments (always on), chi2, c2, c3.
    """
    from . import observables as obsmod

    sched = as_schedule_array(drive)
    stops = drive.breakpoints() if isinstance(drive, RampSchedule) else ()
    n = drive.n_atoms
    dim = n + 1
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dim, dim):
        raise ValueError(f"rho0 must be {(dim, dim)}, got {rho0.shape}")
    tr0 = np.trace(rho0).real
    if abs(tr0 - 1.0) > 1e-8:
        raise ValueError(f"rho0 trace must be 1, got {tr0}")

    if sample_times is None:
        sample_times = np.linspace(t_span[0], t_span[1], n_samples)
    sample_times = np.asarray(sample_times, dtype=float)
    ns = sample_times.size

    want_chi2 = "chi2" in observables
    want_c2 = "c2" in observables
    want_c3 = "c3" in observables
    want_cn = "cn" in observables
    q_idx = {}
    for tq in qfunction_times:
        q_idx[int(np.argmin(np.abs(sample_times - tq)))] = float(tq)

    sp = dicke_space(n)
    md2, ccs, gain = _rhs_tables(n)
    inv_n = 1.0 / n

    def f(t, y):
        a, b = drive_coeffs(t, sched)
        rho = y.reshape(dim, dim)
        out = np.empty_like(rho)
        _rhs_kernel(rho, a * inv_n, b * inv_n, md2, ccs, gain, out)
        return out.ravel()

    res = LindbladResult(
        times=sample_times,
        first=np.empty((ns, 3)),
        second_sym=np.empty((ns, 6)),
        fidelity_dark=np.empty(ns),
        trace_error=np.empty(ns),
        herm_error=np.empty(ns),
        chi2=np.empty(ns) if want_chi2 else None,
        c2=np.empty(ns) if want_c2 else None,
        c3=np.empty(ns) if want_c3 else None,
        cn=np.empty(ns) if want_cn else None,
        min_eigenvalue=np.empty(ns) if positivity_check else None,
        states=[] if store_states else None,
    )

    def observer(i, t, y):
        rho = y.reshape(dim, dim)
        tr_err = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
        if tr_err > trace_tol:
            raise IntegrationError(
                f"trace drift {tr_err:.3e} beyond {trace_tol:.1e} at t={t:.6g}; "
                "tighten rtol/atol"
            )
        res.trace_error[i] = tr_err
        res.herm_error[i] = float(np.max(np.abs(rho - rho.conj().T)))
        first, pairs = obsmod.first_and_ordered_second(rho)
        res.first[i] = first
        res.second_sym[i] = pairs.real
        res.fidelity_dark[i] = rho[n, n].real
        if want_chi2:
            res.chi2[i] = obsmod.chi_squared_from_moments(first, pairs, n)[0]
        if want_c2:
            res.c2[i] = obsmod.c2_from_moments(first, pairs, convention=correlation_convention)
        if want_c3:
            third = obsmod.ordered_third_moments(rho)
            res.c3[i] = obsmod.c3_from_moments(first, pairs, third)
        if want_cn:
            res.cn[i] = obsmod.cn_total_symmetrized(rho, cn_order)
        if positivity_check:
            res.min_eigenvalue[i] = float(
                np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
            )
        if store_states:
            res.states.append(rho.copy())
        if i in q_idx:
            res.qgrids[q_idx[i]] = obsmod.q_function(rho, *(q_resolution or (None, None)))

    if atol is None:
        atol = rtol * 1e-4
    _, _, stepper = solve_fixed_samples(
        f,
        t_span,
        rho0.ravel(),
        sample_times,
        rtol=rtol,
        atol=atol,
        t_stops=stops,
        observer=observer,
    )
    res.n_steps = stepper.n_steps
    return res
