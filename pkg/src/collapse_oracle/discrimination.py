"""Reliability of collapse-detecting experiments and its optimum.

A yes/no experiment is represented by its "yes" effect E (0 <= E <= I).
Answering "collapsed" on yes, its reliability against the pair
(rho_1 = collapsed, rho_2 = uncollapsed) with prior p is

    1 - p + tr[A E],   A = p rho_1 - (1 - p) rho_2,

maximized by the projector onto the positive part of A.  For a known pure
state the optimum has a closed description through the decreasing bijection
f_psi(z) = sum_k |psi_k|^2 / (z + |psi_k|^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import linalg
from .errors import (
    BasisState,
    DimensionMismatch,
    InvariantViolation,
    NullState,
    OutOfRange,
    RankDeficient,
    ZeroComponent,
)
from .model import (
    CollapseBasis,
    DensityMatrix,
    StateVector,
    _coerce_basis,
    as_density,
    as_state,
)

ZERO_COMPONENT_TOL = 1e-12
EFFECT_TOL = 1e-10
BOUNDARY_TOL = 1e-12
FULL_RANK_TOL = 1e-10
F_INVERSE_TOL = 1e-12

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


@dataclass(frozen=True, eq=False)
class Effect:
    """The "yes" operator of a yes/no experiment: Hermitian, spectrum in [0, 1]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise InvariantViolation(f"effect must be square, got {m.shape}")
        if linalg.max_abs(m - linalg.dagger(m)) > EFFECT_TOL:
            raise InvariantViolation("effect is not Hermitian")
        m = linalg.hermitian_part(m)
        lam = np.linalg.eigvalsh(m)
        if lam[0] < -EFFECT_TOL or lam[-1] > 1 + EFFECT_TOL:
            raise InvariantViolation(f"effect spectrum [{lam[0]:.3e}, {lam[-1]:.3e}] leaves [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def zero(cls, dim: int) -> "Effect":
        return cls(np.zeros((dim, dim), dtype=np.complex128))

    @classmethod
    def identity(cls, dim: int) -> "Effect":
        return cls(np.eye(dim, dtype=np.complex128))

    @classmethod
    def blind_guess(cls, p: float, dim: int) -> "Effect":
        """0 when p <= 1/2 (always answer "no collapse"), I otherwise."""
        return cls.zero(dim) if p <= 0.5 else cls.identity(dim)

    @classmethod
    def complement(cls, psi) -> "Effect":
        """I - |psi><psi|."""
        psi = as_state(psi)
        return cls(np.eye(psi.dim) - psi.projector())

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def as_effect(e) -> Effect:
    return e if isinstance(e, Effect) else Effect(e)


@dataclass(frozen=True, eq=False)
class DiscriminationResult:
    p: float
    r_max: float
    e_opt: Effect
    lambda_plus: float
    lambda_minus: float
    helstrom_operand: np.ndarray
    negative_eigvec: Optional[StateVector] = None
    # p sits on d/(d+1): every I - kappa |phi><phi|, 0 <= kappa <= 1, is optimal
    boundary: bool = False
    eigenvalues: Optional[np.ndarray] = field(default=None, repr=False)


# ------------------------------------------------------------ reliabilities

def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"probability {p} outside [0, 1]")
    return p


def reliability_known_psi(psi, p: float, effect, basis=None) -> float:
    """p <psi|diag E|psi> + (1 - p) <psi|I - E|psi>."""
    psi = as_state(psi)
    e = as_effect(effect)
    if e.dim != psi.dim:
        raise DimensionMismatch(f"effect of dimension {e.dim} vs state of dimension {psi.dim}")
    basis = _coerce_basis(basis, psi.dim)
    p = _check_p(p)
    weights = np.abs(basis.components(psi)) ** 2
    b = basis.vectors
    e_kk = np.einsum("ik,ij,jk->k", np.conj(b), e.matrix, b).real
    v = psi.amplitudes
    yes_uncollapsed = np.vdot(v, e.matrix @ v).real
    return float(p * weights @ e_kk + (1 - p) * (1.0 - yes_uncollapsed))


def reliability_density(rho, p: float, effect, basis=None) -> float:
    """tr[rho (p diag E + (1 - p)(I - E))]."""
    rho = as_density(rho)
    e = as_effect(effect)
    if e.dim != rho.dim:
        raise DimensionMismatch(f"effect of dimension {e.dim} vs density of dimension {rho.dim}")
    basis = _coerce_basis(basis, rho.dim)
    p = _check_p(p)
    op = p * basis.diag(e.matrix) + (1 - p) * (np.eye(rho.dim) - e.matrix)
    return float(np.trace(rho.matrix @ op).real)


def reliability_pair(rho1, rho2, p: float, effect) -> float:
    """Probability of retrodicting correctly which of rho_1 (prior p) or rho_2 was prepared."""
    a = helstrom_operand(rho1, rho2, p)
    e = as_effect(effect)
    if e.dim != a.shape[0]:
        raise DimensionMismatch("effect and density matrices differ in dimension")
    return float(1 - p + np.trace(a @ e.matrix).real)


def helstrom_operand(rho1, rho2, p: float) -> np.ndarray:
    r1, r2 = as_density(rho1), as_density(rho2)
    if r1.dim != r2.dim:
        raise DimensionMismatch(f"rho_1 has dimension {r1.dim}, rho_2 has {r2.dim}")
    p = _check_p(p)
    return p * r1.matrix - (1 - p) * r2.matrix


def helstrom(rho1, rho2, p: float) -> DiscriminationResult:
    """Optimal discrimination of rho_1 (prior p) from rho_2 via the spectrum of A."""
    a = helstrom_operand(rho1, rho2, p)
    eig = linalg.hermitian_eig(a)
    lam = eig.eigenvalues
    tol = linalg.GROUP_TOL * max(1.0, linalg.max_abs(a))
    lam_plus = float(np.sum(lam[lam > 0]))
    lam_minus = float(np.sum(lam[lam < 0]))
    negative = lam < -tol
    phi = None
    if np.count_nonzero(negative) == 1:
        phi = StateVector.normalized(eig.eigenvectors[:, np.argmax(negative)])
    e_opt = Effect(eig.positive_projector(tol))
    return DiscriminationResult(
        p=float(p),
        r_max=(1 - p) + lam_plus,
        e_opt=e_opt,
        lambda_plus=lam_plus,
        lambda_minus=lam_minus,
        helstrom_operand=a,
        negative_eigvec=phi,
        eigenvalues=lam,
    )


# ------------------------------------------------------ the f_psi bijection

def _basis_weights(psi, basis) -> np.ndarray:
    psi = as_state(psi)
    basis = _coerce_basis(basis, psi.dim)
    return np.abs(basis.components(psi)) ** 2


def _require_nonzero(weights: np.ndarray) -> None:
    small = np.flatnonzero(weights <= ZERO_COMPONENT_TOL)
    if small.size:
        raise ZeroComponent(f"components {small.tolist()} vanish; reduce the dimension first")


def _f(weights: np.ndarray, z: float) -> float:
    return float(np.sum(weights / (z + weights)))


def _f_prime(weights: np.ndarray, z: float) -> float:
    return float(-np.sum(weights / (z + weights) ** 2))


def f_psi(psi, z: float, basis=None) -> float:
    """sum_k |psi_k|^2 / (z + |psi_k|^2), strictly decreasing from d at z=0 to 0."""
    w = _basis_weights(psi, basis)
    _require_nonzero(w)
    if z < 0:
        raise OutOfRange(f"z = {z} must be nonnegative")
    return _f(w, z)


def _f_inverse(weights: np.ndarray, u: float) -> float:
    d = weights.size
    if not 0.0 < u <= d * (1 + 1e-15):
        raise OutOfRange(f"u = {u} outside (0, {d}]")
    if u >= d:
        return 0.0
    lo, hi = 0.0, 1.0
    while _f(weights, hi) >= u:
        lo, hi = hi, 2.0 * hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _f(weights, mid) >= u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-3 * hi:
            break
    z = 0.5 * (lo + hi)
    # f is convex and decreasing: Newton from inside the bracket, clamped to it
    for _ in range(20):
        r = _f(weights, z) - u
        if abs(r) <= 0.1 * F_INVERSE_TOL:
            break
        if r > 0:
            lo = z
        else:
            hi = z
        step = z - r / _f_prime(weights, z)
        z = step if lo <= step <= hi else 0.5 * (lo + hi)
    return z


def f_psi_inverse(psi, u: float, basis=None) -> float:
    """The z >= 0 with f_psi(z) = u, for 0 < u <= d."""
    w = _basis_weights(psi, basis)
    _require_nonzero(w)
    return _f_inverse(w, float(u))


# ------------------------------------------------------- known initial state

@dataclass(frozen=True, eq=False)
class ReducedProblem:
    psi: StateVector  # coordinates on the surviving basis vectors
    basis: CollapseBasis  # standard basis of the reduced space
    kept: tuple  # original indices of the surviving basis vectors
    embedding: np.ndarray  # d x m, columns are the surviving b_k
    degenerate: bool  # one component left: no experiment beats blind guessing

    def lift(self, op) -> np.ndarray:
        """Embed an operator on the reduced space, acting as 0 on the complement."""
        return self.embedding @ np.asarray(op) @ linalg.dagger(self.embedding)


def reduce_dimension(psi, basis=None, tol: float = ZERO_COMPONENT_TOL) -> ReducedProblem:
    psi = as_state(psi)
    basis = _coerce_basis(basis, psi.dim)
    coeff = basis.components(psi)
    kept = np.flatnonzero(np.abs(coeff) ** 2 > tol)
    if kept.size == 0:
        raise NullState("every component is below the zero threshold")
    reduced = StateVector.normalized(coeff[kept])
    return ReducedProblem(
        psi=reduced,
        basis=CollapseBasis.standard(kept.size),
        kept=tuple(int(k) for k in kept),
        embedding=basis.vectors[:, kept],
        degenerate=kept.size == 1,
    )


def _regime(p: float, d: int) -> int:
    """-1 below d/(d+1), 0 on it, +1 above."""
    gap = p * (d + 1) - d
    if abs(gap) <= BOUNDARY_TOL:
        return 0
    return 1 if gap > 0 else -1


def optimal_known_psi(psi, p: float, basis=None) -> DiscriminationResult:
    """Closed-form optimum for a known psi with no vanishing components.

    Below p = d/(d+1) the optimal effect is I - |phi><phi| with phi proportional
    to (z + diag|psi><psi|)^{-1} psi and z = f_psi^{-1}(p/(1-p)); at or above it,
    E = I (blind guessing) is optimal.
    """
    psi = as_state(psi)
    basis = _coerce_basis(basis, psi.dim)
    p = _check_p(p)
    coeff = basis.components(psi)
    w = np.abs(coeff) ** 2
    _require_nonzero(w)
    d = psi.dim
    proj = psi.projector()
    a = p * basis.diag(proj) - (1 - p) * proj
    if p == 0.0:
        return helstrom(basis.diag(proj), proj, p)

    regime = _regime(p, d)
    if regime >= 0:
        return DiscriminationResult(
            p=p,
            r_max=p,
            e_opt=Effect.identity(d),
            lambda_plus=2 * p - 1,
            lambda_minus=0.0,
            helstrom_operand=a,
            negative_eigvec=None,
            boundary=regime == 0,
        )

    z = _f_inverse(w, p / (1 - p))
    phi = StateVector.normalized(basis.vectors @ (coeff / (z + w)))
    r_max = p * (1 + z)
    return DiscriminationResult(
        p=p,
        r_max=r_max,
        e_opt=Effect(np.eye(d) - phi.projector()),
        lambda_plus=r_max - (1 - p),
        lambda_minus=-p * z,
        helstrom_operand=a,
        negative_eigvec=phi,
    )


def rmax_known_psi(psi, p: float, basis=None) -> float:
    """Maximal reliability for a known psi, reducing away vanishing components."""
    red = reduce_dimension(psi, basis)
    p = _check_p(p)
    if red.degenerate:
        return max(p, 1 - p)
    return optimal_known_psi(red.psi, p).r_max


def rmax_2d_closed_form(psi, p: float, basis=None) -> float:
    psi = as_state(psi)
    if psi.dim != 2:
        raise DimensionMismatch(f"closed form needs d = 2, got {psi.dim}")
    p = _check_p(p)
    w1, w2 = _basis_weights(psi, basis)
    if p >= 2.0 / 3.0:
        return p
    return 0.5 + 0.5 * np.sqrt((1 - 2 * p) ** 2 + 4 * p * (2 - 3 * p) * w1 * w2)


def bloch_vector(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=np.complex128).reshape(-1)
    return np.array([np.vdot(v, s @ v).real for s in PAULI])


def stern_gerlach_direction(psi, p: float, basis=None) -> tuple[np.ndarray, StateVector]:
    """Spin axis w and the state chi with |chi><chi| the optimal effect (d = 2).

    Bloch coordinates are taken relative to the collapse basis, b_1 = +z.
    """
    psi = as_state(psi)
    if psi.dim != 2:
        raise DimensionMismatch(f"Stern-Gerlach construction needs d = 2, got {psi.dim}")
    if not 0.0 < p < 2.0 / 3.0:
        raise OutOfRange(f"p = {p} outside (0, 2/3)")
    basis = _coerce_basis(basis, 2)
    coeff = basis.components(psi)
    if np.min(np.abs(coeff) ** 2) <= ZERO_COMPONENT_TOL:
        raise BasisState("psi is proportional to a basis vector")
    # gauge with psi_1, psi_2 > 0
    theta = np.angle(coeff)
    r1, r2 = np.abs(coeff)
    dilation = 1 - p / (1 - p)
    w_gauge = np.array([2 * r1 * r2, 0.0, dilation * (r1 * r1 - r2 * r2)])
    norm = np.linalg.norm(w_gauge)
    s_plus = np.sqrt(norm + w_gauge[2])
    s_minus = np.sqrt(norm - w_gauge[2])
    chi_gauge = np.array([-s_minus, s_plus]) / np.sqrt(2 * norm)
    # undo: rotation about z by theta_2 - theta_1, basis phases back
    turn = np.exp(1j * (theta[1] - theta[0]))
    w = np.array([w_gauge[0] * turn.real, w_gauge[0] * turn.imag, w_gauge[2]])
    chi = StateVector(basis.vectors @ (np.exp(1j * theta) * chi_gauge))
    return w, chi


# ------------------------------------------------------------------- bounds

class Bounds(NamedTuple):
    lower: float
    upper: float
    delta_upper: float


def delta_bound(delta: float, p: float) -> float:
    """Dimension-independent upper bound on R_max given delta = max_k |psi_k|^2."""
    disc = (1 - p) ** 2 + 2 * p * (1 - p) * delta - (4 - 5 * p) * p * delta**2
    return 0.5 * (1 + p * (1 - delta) + np.sqrt(max(disc, 0.0)))


def delta_bound_finite(delta: float, p: float, d: int) -> float:
    """Upper bound on R_max at dimension d from the largest weight delta.

    Uses f_psi(z) <= delta/(z+delta) + (1-delta)/(z + (1-delta)/(d-1)).
    """
    if _regime(p, d) >= 0:
        return p
    u = p / (1 - p)
    a, b = delta, (1 - delta) / (d - 1)
    # u z^2 + (u(a+b) - 1) z + (u a b - delta b - (1-delta) a) = 0, larger root
    qa = u
    qb = u * (a + b) - 1
    qc = u * a * b - delta * b - (1 - delta) * a
    z = (-qb + np.sqrt(max(qb * qb - 4 * qa * qc, 0.0))) / (2 * qa)
    return p * (1 + max(z, 0.0))


def rmax_bounds_known_psi(psi, p: float, basis=None) -> Bounds:
    w = _basis_weights(psi, basis)
    p = _check_p(p)
    d = w.size
    return Bounds(
        lower=max(p, 1 - p * float(np.sum(w**2))),
        upper=max(p, 1 - p / d),
        delta_upper=delta_bound(float(np.max(w)), p),
    )


def rmax_density_upper_bound(rho, p: float, basis=None, reduce: bool = True) -> float:
    """p (1 + sum_i p_i f_{phi_i}^{-1}(p/(1-p))) over the eigenpairs (p_i, phi_i) of rho.

    Each term is p_i times the maximal reliability for the known state phi_i.
    Eigenvectors with vanishing basis components are reduced first when
    ``reduce`` is set; otherwise they raise ZeroComponent.  For degenerate rho
    the value depends on the eigenbasis returned by the solver.
    """
    rho = as_density(rho)
    basis = _coerce_basis(basis, rho.dim)
    p = _check_p(p)
    d = rho.dim
    if _regime(p, d) >= 0 or p <= 0.0:
        raise OutOfRange(f"p = {p} outside (0, d/(d+1))")
    eig = linalg.hermitian_eig(rho.matrix)
    total = 0.0
    covered = 0.0
    for weight, vec in zip(eig.eigenvalues, eig.eigenvectors.T):
        if weight <= ZERO_COMPONENT_TOL:
            continue
        phi = StateVector.normalized(vec)
        w = _basis_weights(phi, basis)
        if np.min(w) <= ZERO_COMPONENT_TOL:
            if not reduce:
                raise ZeroComponent("an eigenvector of rho has a vanishing basis component")
            term = rmax_known_psi(phi, p, basis)
        else:
            term = p * (1 + _f_inverse(w, p / (1 - p)))
        total += weight * term
        covered += weight
    # neglected spectral weight counted at reliability 1 keeps this an upper bound
    return float(total + max(0.0, 1.0 - covered))


def collapse_blind_threshold(rho, basis=None) -> float:
    """p' = p_d / (max_k <b_k|rho|b_k> + p_d): below it E = 0 is optimal."""
    rho = as_density(rho)
    basis = _coerce_basis(basis, rho.dim)
    p_d = max(float(linalg.hermitian_eig(rho.matrix).eigenvalues[0]), 0.0)
    top = float(np.max(np.diag(linalg.dagger(basis.vectors) @ rho.matrix @ basis.vectors).real))
    return p_d / (top + p_d)


def blind_guess_thresholds(rho1, rho2, basis=None) -> tuple[float, float]:
    """(p_lo, p_hi): E = 0 is optimal for p <= p_lo and E = I for p >= p_hi.

    Requires full-rank rho_1, rho_2, except for collapse pairs rho_1 = diag rho_2
    where p_lo follows from rho_2 alone and p_hi = d/(d+1).
    """
    r1, r2 = as_density(rho1), as_density(rho2)
    if r1.dim != r2.dim:
        raise DimensionMismatch(f"rho_1 has dimension {r1.dim}, rho_2 has {r2.dim}")
    lam1 = linalg.hermitian_eig(r1.matrix).eigenvalues
    lam2 = linalg.hermitian_eig(r2.matrix).eigenvalues
    if lam1[0] > FULL_RANK_TOL and lam2[0] > FULL_RANK_TOL:
        p_lo = lam2[0] / (lam1[-1] + lam2[0])
        p_hi = lam2[-1] / (lam1[0] + lam2[-1])
        return float(p_lo), float(p_hi)
    basis = _coerce_basis(basis, r1.dim)
    if linalg.max_abs(basis.diag(r2.matrix) - r1.matrix) <= FULL_RANK_TOL:
        d = r1.dim
        return collapse_blind_threshold(r2, basis), d / (d + 1)
    raise RankDeficient("rho_1 or rho_2 is rank deficient and the pair is not a collapse pair")
