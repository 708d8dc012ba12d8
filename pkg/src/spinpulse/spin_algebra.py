"""Collective spin-N/2 algebra in the symmetric Dicke basis.

Everything downstream works in the (N+1)-dimensional maximal-spin manifold
with basis |J, m>, J = N/2, ordered by p = J - m (index 0 is the top state
|J, J>).  This module builds the dense operator matrices, spin coherent
states, expectation primitives, and the banded left-multiplication helpers
that let the other backends avoid O(N^3) matrix products.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import lgamma

import numpy as np

__all__ = [
    "ModelParams",
    "CollectiveOperators",
    "DickeSpace",
    "build_operators",
    "coherent_state",
    "expectation",
    "projector",
]

# binomial factors are evaluated in log space above this size to dodge
# overflow in cos/sin powers near the poles
_LOG_SPACE_N = 300


@dataclass(frozen=True)
class ModelParams:
    """System size and rates, with the derived dispersive/dissipative
    coefficients ``xi = omega/(kappa^2 + omega^2)`` and
    ``eta = kappa/(kappa^2 + omega^2)``.

    Rates are unit-agnostic but must be mutually consistent; kappa = 1 is
    the conventional choice.
    """

    n_atoms: int
    kappa: float
    omega: float
    lambda_: float
    xi: float = field(init=False)
    eta: float = field(init=False)

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be >= 0")
        denom = self.kappa**2 + self.omega**2
        if denom <= 0:
            raise ValueError("kappa^2 + omega^2 must be positive (xi, eta undefined)")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        object.__setattr__(self, "xi", self.omega / denom)
        object.__setattr__(self, "eta", self.kappa / denom)


@dataclass(frozen=True)
class CollectiveOperators:
    """Dense (N+1)x(N+1) collective spin matrices in the Dicke basis."""

    n_atoms: int
    j_plus: np.ndarray
    j_minus: np.ndarray
    j_x: np.ndarray
    j_y: np.ndarray
    j_z: np.ndarray


class DickeSpace:
    """Cached per-N basis data and banded operator applications.

    ``m`` holds the J_z eigenvalues (ordered J, J-1, ..., -J), ``c`` the N
    subdiagonal ladder amplitudes of J_-, and ``cc`` the diagonal of
    J_+ J_-.  The ``apply_*``/``trace_*`` helpers act by slicing, so a
    product like <J_x J_y J_z> costs O(N^2) on a density matrix and O(N)
    on a state vector.
    """

    def __init__(self, n_atoms: int):
        if int(n_atoms) != n_atoms or n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {n_atoms}")
        n = int(n_atoms)
        j = 0.5 * n
        self.n = n
        self.dim = n + 1
        self.j = j
        self.m = j - np.arange(n + 1, dtype=float)
        self.cc = j * (j + 1) - self.m * (self.m - 1)  # diag of J+ J-
        self.cc[-1] = 0.0  # exact dark-state zero
        self.c = np.sqrt(self.cc[:-1])

    # -- left multiplication, valid for vectors (ndim 1) and matrices --

    def apply_z(self, x):
        if x.ndim == 1:
            return self.m * x
        return self.m[:, None] * x

    def apply_minus(self, x):
        out = np.zeros_like(x)
        if x.ndim == 1:
            out[1:] = self.c * x[:-1]
        else:
            out[1:, :] = self.c[:, None] * x[:-1, :]
        return out

    def apply_plus(self, x):
        out = np.zeros_like(x)
        if x.ndim == 1:
            out[:-1] = self.c * x[1:]
        else:
            out[:-1, :] = self.c[:, None] * x[1:, :]
        return out

    def apply_x(self, x):
        return 0.5 * (self.apply_plus(x) + self.apply_minus(x))

    def apply_y(self, x):
        return -0.5j * (self.apply_plus(x) - self.apply_minus(x))

    def apply_axis(self, axis, x):
        return (self.apply_x, self.apply_y, self.apply_z)[axis](x)

    # -- traces tr(J_a X) against an arbitrary matrix X --

    def trace_minus(self, mat):
        return complex(np.dot(self.c, np.diagonal(mat, 1)))

    def trace_plus(self, mat):
        return complex(np.dot(self.c, np.diagonal(mat, -1)))

    def trace_z(self, mat):
        return complex(np.dot(self.m, np.diagonal(mat)))

    def trace_axis(self, axis, mat):
        if axis == 2:
            return self.trace_z(mat)
        p, mn = self.trace_plus(mat), self.trace_minus(mat)
        return 0.5 * (p + mn) if axis == 0 else -0.5j * (p - mn)


@lru_cache(maxsize=32)
def dicke_space(n_atoms: int) -> DickeSpace:
    return DickeSpace(n_atoms)


@lru_cache(maxsize=8)
def _cached_operators(n_atoms: int) -> CollectiveOperators:
    sp = dicke_space(n_atoms)
    dim = sp.dim
    j_minus = np.zeros((dim, dim), dtype=complex)
    j_minus[np.arange(1, dim), np.arange(dim - 1)] = sp.c
    j_plus = j_minus.conj().T.copy()
    j_z = np.diag(sp.m.astype(complex))
    j_x = 0.5 * (j_plus + j_minus)
    j_y = -0.5j * (j_plus - j_minus)
    for a in (j_plus, j_minus, j_x, j_y, j_z):
        a.setflags(write=False)
    return CollectiveOperators(n_atoms, j_plus, j_minus, j_x, j_y, j_z)


def build_operators(n_atoms: int) -> CollectiveOperators:
    """Construct the dense collective operators for N atoms.

    J_- carries sqrt(J(J+1) - m(m-1)) on its first subdiagonal, J_z the
    eigenvalues m on its diagonal; J_x, J_y, J_+ follow from those.  The
    returned matrices are read-only and cached per N, so they can be shared
    freely across threads.
    """
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms}")
    return _cached_operators(int(n_atoms))


def coherent_amplitudes(n_atoms: int, theta: float) -> np.ndarray:
    """Real amplitude profile sqrt(C(N,p)) cos(theta/2)^(N-p) sin(theta/2)^p."""
    n = int(n_atoms)
    p = np.arange(n + 1, dtype=float)
    half = 0.5 * theta
    c, s = np.cos(half), np.sin(half)
    if n <= _LOG_SPACE_N:
        logbin = np.array(
            [lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1) for k in range(n + 1)]
        )
        return np.sqrt(np.exp(logbin)) * c ** (n - p) * s**p
    # log-space evaluation: stable for large N where cos/sin powers underflow
    out = np.zeros(n + 1)
    with np.errstate(divide="ignore"):
        logc = np.log(c) if c > 0 else -np.inf
        logs = np.log(s) if s > 0 else -np.inf
    logbin = (
        lgamma(n + 1)
        - np.array([lgamma(k + 1) for k in range(n + 1)])
        - np.array([lgamma(n - k + 1) for k in range(n + 1)])
    )
    la = 0.5 * logbin + (n - p) * logc + p * logs
    finite = np.isfinite(la)
    out[finite] = np.exp(la[finite])
    return out


def coherent_state(n_atoms: int, theta: float, phi: float) -> np.ndarray:
    """Spin coherent state |theta, phi> as a length-(N+1) complex vector.

    Amplitude at index p is sqrt(C(N,p)) cos(theta/2)^(N-p) sin(theta/2)^p
    e^(i p phi).  theta must lie in [0, pi]; phi is periodic and reduced
    mod 2 pi.  The result is normalized to machine precision.
    """
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms}")
    if not 0.0 <= theta <= np.pi:
        raise ValueError(f"theta must be in [0, pi], got {theta}")
    phi = float(phi) % (2.0 * np.pi)
    amps = coherent_amplitudes(n_atoms, theta)
    p = np.arange(int(n_atoms) + 1, dtype=float)
    psi = amps * np.exp(1j * p * phi)
    return psi / np.linalg.norm(psi)


def projector(psi: np.ndarray) -> np.ndarray:
    """Rank-one density matrix |psi><psi|."""
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


def expectation(operator: np.ndarray, state: np.ndarray) -> complex:
    """<psi|A|psi> for a state vector or Tr(A rho) for a density matrix."""
    operator = np.asarray(operator)
    state = np.asarray(state)
    if state.ndim == 1:
        if operator.shape != (state.size, state.size):
            raise ValueError(
                f"operator shape {operator.shape} does not match state length {state.size}"
            )
        return complex(np.vdot(state, operator @ state))
    if state.ndim == 2:
        if operator.shape != state.shape:
            raise ValueError(
                f"operator shape {operator.shape} does not match state shape {state.shape}"
            )
        return complex(np.einsum("ij,ji->", operator, state))
    raise ValueError("state must be a vector or a square matrix")


def bloch_expectations(state: np.ndarray) -> np.ndarray:
    """(<Jx>, <Jy>, <Jz>) of a vector or density matrix, via banded ops.

    Vectors are normalized internally (the trajectory backend works with
    decaying norms); density matrices are assumed to have unit trace.
    """
    state = np.asarray(state)
    n = state.shape[0] - 1
    sp = dicke_space(n)
    if state.ndim == 1:
        nrm = float(np.vdot(state, state).real)
        jp = complex(np.vdot(state, sp.apply_plus(state)))
        jz = float(np.vdot(state, sp.apply_z(state)).real)
        return np.array([jp.real, jp.imag, jz]) / nrm
    jp = sp.trace_plus(state)
    jz = sp.trace_z(state).real
    return np.array([jp.real, jp.imag, jz])


# canonical storage order for second moments: pairs (a, b) with a <= b
PAIR_ORDER = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
# canonical (sorted) third-order words
TRIPLE_ORDER = tuple(
    (a, b, c) for a in range(3) for b in range(a, 3) for c in range(b, 3)
)


def first_and_ordered_second(state: np.ndarray):
    """First moments and the six canonical ordered second moments.

    Returns ``(first, pairs)`` where ``first`` is real (<Jx>, <Jy>, <Jz>)
    and ``pairs[i] = <J_a J_b>`` (complex, operator order as written) for
    (a, b) in :data:`PAIR_ORDER`.  The state must be normalized.
    """
    state = np.asarray(state)
    sp = dicke_space(state.shape[0] - 1)
    first = np.empty(3)
    pairs = np.empty(6, dtype=complex)
    if state.ndim == 1:
        w = [sp.apply_axis(b, state) for b in range(3)]
        for a in range(3):
            first[a] = np.vdot(state, w[a]).real
        for i, (a, b) in enumerate(PAIR_ORDER):
            pairs[i] = np.vdot(sp.apply_axis(a, state), w[b])
        return first, pairs
    x = [sp.apply_axis(b, state) for b in range(3)]
    for a in range(3):
        first[a] = sp.trace_axis(a, state).real
    for i, (a, b) in enumerate(PAIR_ORDER):
        pairs[i] = sp.trace_axis(a, x[b])
    return first, pairs


def ordered_third_moments(state: np.ndarray) -> np.ndarray:
    """All 27 ordered third moments <J_j J_k J_l> as a (3,3,3) complex array."""
    state = np.asarray(state)
    sp = dicke_space(state.shape[0] - 1)
    out = np.empty((3, 3, 3), dtype=complex)
    if state.ndim == 1:
        wl = [sp.apply_axis(l, state) for l in range(3)]
        wj = wl  # J hermitian: <J_j J_k J_l> = (J_j psi)^dag (J_k J_l psi)
        for l in range(3):
            for k in range(3):
                wkl = sp.apply_axis(k, wl[l])
                for j in range(3):
                    out[j, k, l] = np.vdot(wj[j], wkl)
        return out
    x = [sp.apply_axis(l, state) for l in range(3)]
    for l in range(3):
        for k in range(3):
            y = sp.apply_axis(k, x[l])
            for j in range(3):
                out[j, k, l] = sp.trace_axis(j, y)
    return out


def sorted_third_moments(state: np.ndarray) -> np.ndarray:
    """The 10 canonical sorted third moments, ordered as TRIPLE_ORDER."""
    full = ordered_third_moments(state)
    return np.array([full[w] for w in TRIPLE_ORDER])
