"""Second-order cumulant (Gaussian) backend.

The closed system evolves nine real quantities: the three first moments and
the real parts of the six canonical ordered second moments <J_a J_b>, a <= b
(the imaginary part of a mixed ordered product is fixed by the commutation
relations, so it is reconstructed rather than stored).

The right-hand sides are not transcribed from any printed equation set.
They are derived once at import time by a small noncommutative word algebra:
for each target A the adjoint generator

    d<A>/dt = i (xi l^2/N) <[Jz^2, A]> + (eta l^2/N) <[J+, A] J- + J+ [A, J-]>

is expanded into words over {Jx, Jy, Jz}, reduced to canonical (sorted)
ordering with [J_a, J_b] = i eps_abc J_c, and frozen into two coefficient
matrices over the canonical moment basis.  Third-order canonical moments are
replaced by the vanishing-third-cumulant closure.  The derivation is checked
structurally at import (Casimir conservation, commutator consistency) and
against the exact master-equation backend in the test suite.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .integrate import solve_fixed_samples
from .schedule import RampSchedule, as_schedule_array, drive_coeffs
from .spin_algebra import (
    PAIR_ORDER,
    TRIPLE_ORDER,
    ModelParams,
    first_and_ordered_second,
)

__all__ = [
    "MomentState",
    "CumulantTrajectory",
    "moment_rhs",
    "closure3",
    "integrate_cumulant2",
    "cumulant_from_moments",
]


# ---------------------------------------------------------------------------
# word algebra over (0, 1, 2) = (Jx, Jy, Jz); polynomials map word -> coeff
# ---------------------------------------------------------------------------


def _levi(a, b, c):
    if (a, b, c) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        return 1.0
    if (a, b, c) in ((0, 2, 1), (2, 1, 0), (1, 0, 2)):
        return -1.0
    return 0.0


def _pmul(pa, pb):
    out = {}
    for wa, ca in pa.items():
        for wb, cb in pb.items():
            w = wa + wb
            out[w] = out.get(w, 0.0) + ca * cb
    return out


def _padd(pa, pb, scale=1.0):
    out = dict(pa)
    for w, c in pb.items():
        out[w] = out.get(w, 0.0) + scale * c
    return out


def _canonicalize(poly):
    """Reorder every word to nondecreasing axes using the su(2) commutators."""
    out = {}
    work = list(poly.items())
    while work:
        w, coef = work.pop()
        if coef == 0.0:
            continue
        for i in range(len(w) - 1):
            a, b = w[i], w[i + 1]
            if a > b:
                # J_a J_b = J_b J_a + i eps_abc J_c
                work.append((w[:i] + (b, a) + w[i + 2 :], coef))
                c = 3 - a - b
                work.append((w[:i] + (c,) + w[i + 2 :], coef * 1j * _levi(a, b, c)))
                break
        else:
            out[w] = out.get(w, 0.0) + coef
    return {w: c for w, c in out.items() if c != 0.0}


def _commutator(pa, pb):
    return _padd(_pmul(pa, pb), _pmul(pb, pa), scale=-1.0)


_JP = {(0,): 1.0, (1,): 1j}  # J+ = Jx + i Jy
_JM = {(0,): 1.0, (1,): -1j}
_ZZ = {(2, 2): 1.0}

# canonical moment basis: 1, the 3 first moments, 6 pairs, 10 triples
_BASIS = [()] + [(a,) for a in range(3)] + list(PAIR_ORDER) + list(TRIPLE_ORDER)
_BASIS_INDEX = {w: i for i, w in enumerate(_BASIS)}
_TARGETS = [(0,), (1,), (2,)] + list(PAIR_ORDER)


def _rhs_polys(target):
    p_a = {target: 1.0}
    ham = _canonicalize(
        {w: 1j * c for w, c in _commutator(_ZZ, p_a).items()}
    )
    dis = _canonicalize(
        _padd(
            _pmul(_commutator(_JP, p_a), _JM),
            _pmul(_JP, _commutator(p_a, _JM)),
        )
    )
    return ham, dis


def _poly_to_row(poly):
    row = np.zeros(len(_BASIS), dtype=complex)
    for w, c in poly.items():
        if w not in _BASIS_INDEX:
            raise RuntimeError(f"derived word {w} outside canonical basis")
        row[_BASIS_INDEX[w]] = c
    return row


def _derive_matrices():
    m_xi = np.zeros((len(_TARGETS), len(_BASIS)), dtype=complex)
    m_eta = np.zeros_like(m_xi)
    for i, tgt in enumerate(_TARGETS):
        ham, dis = _rhs_polys(tgt)
        m_xi[i] = _poly_to_row(ham)
        m_eta[i] = _poly_to_row(dis)
    return m_xi, m_eta


_M_XI, _M_ETA = _derive_matrices()


def _structural_checks():
    # Casimir Jx^2 + Jy^2 + Jz^2 commutes with the full generator
    idx = [_TARGETS.index(p) for p in ((0, 0), (1, 1), (2, 2))]
    for m in (_M_XI, _M_ETA):
        if np.max(np.abs(m[idx].sum(axis=0))) > 1e-12:
            raise RuntimeError("derived moment equations violate Casimir conservation")
    # reversed mixed products must satisfy d<J_bJ_a>/dt = d<J_aJ_b>/dt - i eps d<J_c>/dt
    for (a, b) in ((0, 1), (0, 2), (1, 2)):
        c = 3 - a - b
        ham_r, dis_r = _rhs_polys((b, a))
        for m, pol in ((_M_XI, ham_r), (_M_ETA, dis_r)):
            expect = m[_TARGETS.index((a, b))] - 1j * _levi(a, b, c) * m[
                _TARGETS.index((c,))
            ]
            if np.max(np.abs(_poly_to_row(pol) - expect)) > 1e-12:
                raise RuntimeError("derived moment equations break commutator algebra")


_structural_checks()


# ---------------------------------------------------------------------------
# moment state and runtime evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentState:
    """First moments plus real parts of the canonical second moments.

    ``second_sym[i]`` stores Re <J_a J_b> for (a, b) in PAIR_ORDER, which
    equals the symmetrized product <{J_a, J_b}>/2; the ordered complex
    moment is recovered as Re + (i/2) eps_abc <J_c>.
    """

    first: np.ndarray
    second_sym: np.ndarray

    @classmethod
    def from_state(cls, state) -> "MomentState":
        first, pairs = first_and_ordered_second(np.asarray(state))
        return cls(first=first, second_sym=pairs.real.copy())

    @classmethod
    def from_vector(cls, v) -> "MomentState":
        v = np.asarray(v, dtype=float)
        return cls(first=v[:3].copy(), second_sym=v[3:9].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.first, self.second_sym])

    def ordered_pairs(self) -> np.ndarray:
        """Canonical ordered complex second moments <J_a J_b>, a <= b."""
        x, y, z = self.first
        s = self.second_sym
        return np.array(
            [
                s[0],
                s[1] + 0.5j * z,
                s[2] - 0.5j * y,
                s[3],
                s[4] + 0.5j * x,
                s[5],
            ]
        )

    def pair_matrix(self) -> np.ndarray:
        """Full ordered moment matrix M[a, b] = <J_a J_b> (complex)."""
        out = np.empty((3, 3), dtype=complex)
        for a in range(3):
            for b in range(3):
                sym = self.second_sym[_PAIR_INDEX[(min(a, b), max(a, b))]]
                c = 3 - a - b if a != b else 0
                out[a, b] = sym + (
                    0.5j * _levi(a, b, c) * self.first[c] if a != b else 0.0
                )
        return out

    def connected_sym(self) -> np.ndarray:
        """Symmetrized connected cumulants <J_aJ_b>_c for PAIR_ORDER."""
        out = np.empty(6)
        for i, (a, b) in enumerate(PAIR_ORDER):
            out[i] = self.second_sym[i] - self.first[a] * self.first[b]
        return out


_PAIR_INDEX = {p: i for i, p in enumerate(PAIR_ORDER)}


def closure3(state: MomentState) -> np.ndarray:
    """All 27 ordered third moments in the vanishing-third-cumulant closure.

    For each ordered triple (j, k, l):
    <J_jJ_kJ_l> ~ <J_j><J_kJ_l> + <J_k><J_jJ_l> + <J_l><J_jJ_k>
                  - 2 <J_j><J_k><J_l>,
    with each ordered second moment rebuilt from the canonical store via the
    commutation relations.  Shape (3, 3, 3), complex.
    """
    f = state.first
    m2 = state.pair_matrix()
    out = np.empty((3, 3, 3), dtype=complex)
    for j in range(3):
        for k in range(3):
            for l in range(3):
                out[j, k, l] = (
                    f[j] * m2[k, l]
                    + f[k] * m2[j, l]
                    + f[l] * m2[j, k]
                    - 2.0 * f[j] * f[k] * f[l]
                )
    return out


def _closed_triples(state: MomentState) -> np.ndarray:
    """Closure values for just the 10 canonical sorted triples."""
    full = closure3(state)
    return np.array([full[w] for w in TRIPLE_ORDER])


def _moment_vector(state: MomentState, triples=None) -> np.ndarray:
    v = np.empty(len(_BASIS), dtype=complex)
    v[0] = 1.0
    v[1:4] = state.first
    v[4:10] = state.ordered_pairs()
    v[10:20] = _closed_triples(state) if triples is None else triples
    return v


def moment_rhs(state: MomentState, params: ModelParams, triples=None) -> MomentState:
    """Time derivative of the stored moments.

    ``triples`` optionally injects exact canonical sorted third moments in
    place of the closure (used to validate the derived equations against the
    master-equation backend).
    """
    v = _moment_vector(state, triples)
    a = params.xi * params.lambda_**2 / params.n_atoms
    b = params.eta * params.lambda_**2 / params.n_atoms
    rhs = a * (_M_XI @ v) + b * (_M_ETA @ v)
    return MomentState(first=rhs[:3].real.copy(), second_sym=rhs[3:9].real.copy())


@dataclass(frozen=True)
class CumulantTrajectory:
    times: np.ndarray
    first: np.ndarray  # (n, 3)
    second_sym: np.ndarray  # (n, 6)

    @property
    def connected(self) -> np.ndarray:
        """Symmetrized connected second cumulants per sample, (n, 6)."""
        out = np.empty_like(self.second_sym)
        for i, (a, b) in enumerate(PAIR_ORDER):
            out[:, i] = self.second_sym[:, i] - self.first[:, a] * self.first[:, b]
        return out

    def moment_state(self, i: int) -> MomentState:
        return MomentState(first=self.first[i].copy(), second_sym=self.second_sym[i].copy())


def integrate_cumulant2(
    initial,
    drive,
    t_span,
    rtol: float = 1e-9,
    sample_times=None,
    n_samples: int = 500,
) -> CumulantTrajectory:
    """Integrate the closed moment system.

    ``initial`` may be a state vector (moments are then computed exactly
    from the operator algebra, valid for any vector, not just coherent
    states) or a prepared MomentState.
    """
    if isinstance(initial, MomentState):
        m0 = initial
    else:
        m0 = MomentState.from_state(initial)
    sched = as_schedule_array(drive)
    stops = drive.breakpoints() if isinstance(drive, RampSchedule) else ()
    n = drive.n_atoms
    inv_n = 1.0 / n

    if sample_times is None:
        sample_times = np.linspace(t_span[0], t_span[1], n_samples)

    def f(t, v):
        a, b = drive_coeffs(t, sched)
        state = MomentState.from_vector(v)
        mv = _moment_vector(state)
        rhs = (a * inv_n) * (_M_XI @ mv) + (b * inv_n) * (_M_ETA @ mv)
        return rhs.real

    ys, _, _ = solve_fixed_samples(
        f,
        t_span,
        m0.as_vector(),
        sample_times,
        rtol=rtol,
        atol=rtol * max(1.0, n) * 1e-3,
        t_stops=stops,
    )
    return CumulantTrajectory(
        times=np.asarray(sample_times, dtype=float),
        first=ys[:, :3],
        second_sym=ys[:, 3:9],
    )


# ---------------------------------------------------------------------------
# generic moments -> cumulants (partition formula)
# ---------------------------------------------------------------------------


def _set_partitions(items):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def cumulant_from_moments(moment_oracle, operators, order=None) -> complex:
    """Joint cumulant of ``operators`` from a moment oracle.

    ``moment_oracle(sub_tuple)`` must return the moment of any sub-tuple of
    ``operators`` taken in their original relative order.  Implements the
    partition sum  sum_p (|p|-1)! (-1)^(|p|-1) prod_B <prod_B A>,  which
    reduces to <AB> - <A><B> at n = 2.  Supported for n <= 4.
    """
    ops = tuple(operators)
    n = len(ops) if order is None else order
    if n != len(ops):
        raise ValueError("order must match the number of operators")
    if not 1 <= n <= 4:
        raise ValueError(f"unsupported cumulant order {n} (need 1 <= n <= 4)")
    total = 0.0 + 0.0j
    for part in _set_partitions(list(range(n))):
        k = len(part)
        term = factorial(k - 1) * (-1.0) ** (k - 1)
        prod = 1.0 + 0.0j
        for block in part:
            prod *= moment_oracle(tuple(ops[i] for i in sorted(block)))
        total += term * prod
    return complex(total)
