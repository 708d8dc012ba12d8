"""Fluctuation diagnostics: spin Q-function, deformation parameter,
connected-cumulant correlation totals.

All functions accept either a normalized state vector or a unit-trace
density matrix.  Moment extraction goes through the banded helpers in
``spin_algebra`` (O(N^2) per density-matrix moment), so these diagnostics
are cheap enough to stream while integrating.
"""

import itertools
import json
from dataclasses import dataclass
from math import factorial

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit
from .cumulant import cumulant_from_moments
from .spin_algebra import (
    PAIR_ORDER,
    coherent_amplitudes,
    dicke_space,
    first_and_ordered_second,
    ordered_third_moments,
    projector,
)

__all__ = [
    "QGrid",
    "CorrelationReport",
    "q_function",
    "q_point",
    "chi_squared",
    "moments_third",
    "c_total",
    "cn_total_symmetrized",
    "correlation_report",
]

_PAIR_INDEX = {p: i for i, p in enumerate(PAIR_ORDER)}
_LOG_TINY = -745.0  # exp() underflows to 0.0; avoids nan from 0 * (-inf)


# ---------------------------------------------------------------------------
# spin Q-function
# ---------------------------------------------------------------------------


@dataclass
class QGrid:
    """Q(theta_i, phi_j) on a Gauss-Legendre x uniform product grid.

    ``theta`` are Gauss-Legendre nodes mapped through arccos (so the sphere
    measure sin(theta) dtheta is integrated exactly), ``theta_weights`` the
    matching quadrature weights on [-1, 1]; ``phi`` is uniform on [0, 2 pi).
    """

    n_atoms: int
    theta: np.ndarray
    theta_weights: np.ndarray
    phi: np.ndarray
    values: np.ndarray

    def norm(self) -> float:
        """Quadrature estimate of (N+1)/(4 pi) * integral Q dOmega."""
        n_phi = self.phi.size
        return float(
            (self.n_atoms + 1) / (2.0 * n_phi) * (self.theta_weights @ self.values).sum()
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("theta,phi,q\n")
            for i, th in enumerate(self.theta):
                for j, ph in enumerate(self.phi):
                    fh.write(f"{th:.17g},{ph:.17g},{self.values[i, j]:.17g}\n")

    def to_json_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "theta": self.theta.tolist(),
            "theta_weights": self.theta_weights.tolist(),
            "phi": self.phi.tolist(),
            "values": self.values.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)


def sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre theta nodes (mapped to [0, pi]), weights, uniform phi."""
    u, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(u)[::-1].copy()
    weights = w[::-1].copy()
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    return theta, weights, phi


def _amplitude_matrix(n: int, thetas: np.ndarray) -> np.ndarray:
    from math import lgamma

    p = np.arange(n + 1, dtype=float)
    logbin = np.array(
        [lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1) for k in range(n + 1)]
    )
    half = 0.5 * np.asarray(thetas, dtype=float)
    c, s = np.cos(half), np.sin(half)
    logc = np.where(c > 0, np.log(np.maximum(c, 1e-320)), _LOG_TINY)
    logs = np.where(s > 0, np.log(np.maximum(s, 1e-320)), _LOG_TINY)
    la = 0.5 * logbin[None, :] + (n - p)[None, :] * logc[:, None] + p[None, :] * logs[:, None]
    return np.exp(np.maximum(la, _LOG_TINY))


@maybe_njit
def _q_values_jit(amp, rho, phis, out):
    n_theta, dim = amp.shape
    n_phi = phis.shape[0]
    d = np.empty(dim, dtype=np.complex128)
    for i in range(n_theta):
        for k in range(dim):
            s = 0.0 + 0.0j
            for p in range(dim - k):
                s += amp[i, p] * amp[i, p + k] * rho[p, p + k]
            d[k] = s
        for j in range(n_phi):
            acc = d[0].real
            for k in range(1, dim):
                ph = k * phis[j]
                acc += 2.0 * (d[k].real * np.cos(ph) - d[k].imag * np.sin(ph))
            out[i, j] = acc


def _q_values_np(amp, rho, phis, out):
    dim = rho.shape[0]
    diag_sums = np.empty((amp.shape[0], dim), dtype=complex)
    for k in range(dim):
        diag_sums[:, k] = (amp[:, : dim - k] * amp[:, k:]) @ np.diagonal(rho, k)
    diag_sums[:, 1:] *= 2.0
    phase = np.exp(1j * np.outer(np.arange(dim), phis))
    np.copyto(out, (diag_sums @ phase).real)


_q_values = _q_values_jit if NUMBA_ENABLED else _q_values_np


def q_function(state, n_theta=None, n_phi=None) -> QGrid:
    """Husimi spin Q-function Q(theta, phi) = <theta, phi| rho |theta, phi>.

    Default resolution is (2N+1) x (2N+2), which integrates any degree-2N
    polynomial on the sphere exactly; the grid must be at least 8 x 8.
    """
    state = np.asarray(state)
    rho = projector(state) if state.ndim == 1 else state
    n = rho.shape[0] - 1
    n_theta = int(n_theta) if n_theta else 2 * n + 1
    n_phi = int(n_phi) if n_phi else 2 * n + 2
    if n_theta < 8 or n_phi < 8:
        raise ValueError("Q-function grid must be at least 8x8")
    theta, weights, phi = sphere_quadrature(n_theta, n_phi)
    amp = _amplitude_matrix(n, theta)
    values = np.empty((n_theta, n_phi))
    _q_values(amp, np.ascontiguousarray(rho, dtype=complex), phi, values)
    return QGrid(n_atoms=n, theta=theta, theta_weights=weights, phi=phi, values=values)


def q_point(state, theta: float, phi: float) -> float:
    """Q-function at a single point on the sphere."""
    state = np.asarray(state)
    n = state.shape[0] - 1
    amps = coherent_amplitudes(n, theta) * np.exp(
        1j * phi * np.arange(n + 1, dtype=float)
    )
    if state.ndim == 1:
        return float(abs(np.vdot(amps, state)) ** 2)
    return float(np.real(amps.conj() @ state @ amps))


# ---------------------------------------------------------------------------
# deformation parameter
# ---------------------------------------------------------------------------


def chi_squared_from_moments(first, pairs, n_atoms):
    """chi^2 and extremal angles from first/second canonical moments.

    Builds the orthonormal frame (e1, e2) perpendicular to the mean spin
    with e1 along the longitudinal direction, forms the symmetrized 2x2
    perpendicular covariance, and returns the eigenvalue ratio together
    with the angles (measured from e1) of the maximal and minimal variance
    directions.
    """
    first = np.asarray(first, dtype=float)
    norm = float(np.linalg.norm(first))
    if norm < 1e-9 * n_atoms:
        raise ValueError(
            f"mean spin length {norm:.3e} below floor; chi^2 direction undefined"
        )
    sym = np.empty((3, 3))
    for (a, b), i in _PAIR_INDEX.items():
        sym[a, b] = sym[b, a] = np.real(pairs[i])
    cov = sym - np.outer(first, first)

    nhat = first / norm
    sin_t = float(np.hypot(nhat[0], nhat[1]))
    if sin_t < 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0]) * np.sign(nhat[2])
    else:
        cos_t = nhat[2]
        cos_p, sin_p = nhat[0] / sin_t, nhat[1] / sin_t
        e1 = np.array([cos_t * cos_p, cos_t * sin_p, -sin_t])  # longitudinal
        e2 = np.array([-sin_p, cos_p, 0.0])  # azimuthal
    frame = np.vstack([e1, e2])
    v = frame @ cov @ frame.T
    v = 0.5 * (v + v.T)
    evals, evecs = np.linalg.eigh(v)
    lo, hi = float(evals[0]), float(evals[1])
    if lo <= 0:
        raise ValueError(f"perpendicular covariance not positive ({lo:.3e})")
    if hi - lo <= 1e-12 * hi:
        return 1.0, 0.0, 0.5 * np.pi
    phi_min = float(np.arctan2(evecs[1, 0], evecs[0, 0])) % np.pi
    phi_max = float(np.arctan2(evecs[1, 1], evecs[0, 1])) % np.pi
    return hi / lo, phi_max, phi_min


def chi_squared(state):
    """Deformation parameter: max/min spin variance perpendicular to <J>.

    Returns (chi2, Phi_max, Phi_min); Phi = 0 is the longitudinal
    direction.  The variance uses the symmetrized product <{J_a, J_b}>/2.
    Coherent states give chi^2 = 1.
    """
    state = np.asarray(state)
    first, pairs = first_and_ordered_second(state)
    return chi_squared_from_moments(first, pairs, state.shape[0] - 1)


# ---------------------------------------------------------------------------
# correlation totals
# ---------------------------------------------------------------------------


def _ordered_pair_matrix(first, pairs):
    """Full <J_a J_b> matrix from the canonical six (hermitian state)."""
    m2 = np.empty((3, 3), dtype=complex)
    for a in range(3):
        for b in range(3):
            if a <= b:
                m2[a, b] = pairs[_PAIR_INDEX[(a, b)]]
            else:
                m2[a, b] = np.conj(pairs[_PAIR_INDEX[(b, a)]])
    return m2


def c2_from_moments(first, pairs, convention: str = "ordered") -> float:
    m2 = _ordered_pair_matrix(first, pairs)
    outer = np.outer(first, first)
    if convention == "ordered":
        return float(np.sum(np.abs(m2 - outer)))
    if convention == "symmetrized":
        total = 0.0
        for a, b in itertools.combinations_with_replacement(range(3), 2):
            sym = 0.5 * (m2[a, b] + m2[b, a])
            total += abs(2.0 * (sym - outer[a, b]))
        return float(total)
    raise ValueError(f"unknown convention {convention!r}")


def c3_from_moments(first, pairs, third) -> float:
    """Sum over all 27 ordered third-order connected cumulants."""
    m2 = _ordered_pair_matrix(first, pairs)
    f = np.asarray(first)
    total = 0.0
    for j in range(3):
        for k in range(3):
            for l in range(3):
                cum = (
                    third[j, k, l]
                    - f[j] * m2[k, l]
                    - f[k] * m2[j, l]
                    - f[l] * m2[j, k]
                    + 2.0 * f[j] * f[k] * f[l]
                )
                total += abs(cum)
    return float(total)


def moments_third(state) -> np.ndarray:
    """All 27 ordered <J_j J_k J_l> as a (3,3,3) complex array.

    Individual ordered products need not be hermitian, so values are
    complex; conjugation pairs entries with their reversed index order.
    """
    return ordered_third_moments(np.asarray(state))


def c_total(state, order: int, convention: str = "ordered") -> float:
    """Total degree of correlation: sum of |connected cumulants|.

    order 2: all 9 ordered pairs; order 3: all 27 ordered triples.
    """
    state = np.asarray(state)
    first, pairs = first_and_ordered_second(state)
    if order == 2:
        return c2_from_moments(first, pairs, convention=convention)
    if order == 3:
        return c3_from_moments(first, pairs, ordered_third_moments(state))
    raise ValueError(f"unsupported order {order} (need 2 or 3)")


def _word_moments(state, order: int) -> dict:
    """Moments of every ordered operator word up to the given length."""
    state = np.asarray(state)
    sp = dicke_space(state.shape[0] - 1)
    vals = {}
    is_vec = state.ndim == 1

    def value(x):
        return complex(np.vdot(state, x)) if is_vec else complex(np.trace(x))

    def rec(x, word, depth):
        for axis in range(3):
            xa = sp.apply_axis(axis, x)
            w = (axis,) + word
            vals[w] = value(xa)
            if depth + 1 < order:
                rec(xa, w, depth + 1)

    rec(state, (), 0)
    return vals


def cn_total_symmetrized(state, order: int) -> float:
    """Symmetrized total correlation at a given order (n <= 4).

    Sums |n! <S prod_i J_i^{k_i}>_c| over operator multisets, where S
    averages all n! orderings and the cumulant is the partition sum over
    symmetrized block moments.
    """
    if not 2 <= order <= 4:
        raise ValueError(f"unsupported order {order} (need 2 <= n <= 4)")
    state = np.asarray(state)
    vals = _word_moments(state, order)

    def sym_moment(word):
        perms = list(itertools.permutations(word))
        return sum(vals[w] for w in perms) / len(perms)

    total = 0.0
    nfact = float(factorial(order))
    for multiset in itertools.combinations_with_replacement(range(3), order):
        kappa = cumulant_from_moments(sym_moment, multiset)
        total += abs(nfact * kappa)
    return float(total)


@dataclass(frozen=True)
class CorrelationReport:
    """One-stop fluctuation summary of a state."""

    chi2: float
    c2_total: float
    c3_total: float
    mean_spin: np.ndarray
    perp_var_max: float
    perp_var_min: float
    phi_max: float
    phi_min: float


def correlation_report(state, convention: str = "ordered") -> CorrelationReport:
    state = np.asarray(state)
    n = state.shape[0] - 1
    first, pairs = first_and_ordered_second(state)
    chi2, phi_max, phi_min = chi_squared_from_moments(first, pairs, n)
    sym = np.empty((3, 3))
    for (a, b), i in _PAIR_INDEX.items():
        sym[a, b] = sym[b, a] = np.real(pairs[i])
    cov = sym - np.outer(first, first)
    norm = np.linalg.norm(first)
    nhat = first / norm
    sin_t = float(np.hypot(nhat[0], nhat[1]))
    if sin_t < 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0]) * np.sign(nhat[2])
    else:
        cos_t = nhat[2]
        cos_p, sin_p = nhat[0] / sin_t, nhat[1] / sin_t
        e1 = np.array([cos_t * cos_p, cos_t * sin_p, -sin_t])
        e2 = np.array([-sin_p, cos_p, 0.0])
    var_of = lambda e: float(e @ cov @ e)
    v_max = var_of(np.cos(phi_max) * e1 + np.sin(phi_max) * e2)
    v_min = var_of(np.cos(phi_min) * e1 + np.sin(phi_min) * e2)
    return CorrelationReport(
        chi2=chi2,
        c2_total=c2_from_moments(first, pairs, convention=convention),
        c3_total=c3_from_moments(first, pairs, ordered_third_moments(state)),
        mean_spin=first,
        perp_var_max=v_max,
        perp_var_min=v_min,
        phi_max=phi_max,
        phi_min=phi_min,
    )
