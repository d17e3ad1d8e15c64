"""States, density matrices, collapse bases and the collapse channel.

The collapse channel replaces psi, with probability p, by one of the basis
vectors b_k (with Born weight |<b_k|psi>|^2).  Structured variants act on a
tensor factor, a joint basis, orthogonal subspaces or unsharp operators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InvalidScenario,
    InvariantViolation,
    WeightMismatch,
    ZeroNormBranch,
)

NORM_TOL = 1e-10
STRUCTURE_TOL = 1e-9


# ---------------------------------------------------------------- RNG streams

def make_stream(seed: int, *index: int) -> np.random.Generator:
    """Counter-based (Philox) generator for substream ``index`` of ``seed``.

    Streams with distinct index tuples are statistically independent; the same
    (seed, index) always yields the same sequence.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


# ------------------------------------------------------------------- values

@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise InvariantViolation("state needs at least one finite amplitude")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvariantViolation(f"state norm {norm!r} is not 1")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        v = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InvariantViolation("cannot normalize the zero vector")
        return cls(v / norm)

    @classmethod
    def from_weights(cls, weights) -> "StateVector":
        """Real nonnegative amplitudes sqrt(w_k), after normalizing the weights."""
        w = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvariantViolation("weights must be nonnegative with positive sum")
        return cls(np.sqrt(w / w.sum()))

    @classmethod
    def uniform(cls, dim: int) -> "StateVector":
        return cls(np.full(dim, 1.0 / np.sqrt(dim)))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return linalg.projector(self.amplitudes)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def __repr__(self):
        return f"StateVector({np.array2string(self.amplitudes, precision=4)})"


@dataclass(frozen=True, eq=False)
class CollapseBasis:
    """Orthonormal basis; ``vectors[:, k]`` is b_k."""

    vectors: np.ndarray

    def __post_init__(self):
        b = linalg.as_matrix(self.vectors)
        n = b.shape[0]
        if b.shape != (n, n):
            raise InvariantViolation(f"basis matrix must be square, got {b.shape}")
        gram_err = linalg.max_abs(linalg.dagger(b) @ b - np.eye(n))
        if gram_err > NORM_TOL:
            raise InvariantViolation(f"basis is not orthonormal (Gram error {gram_err:.2e})")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "vectors", b)

    @classmethod
    def standard(cls, dim: int) -> "CollapseBasis":
        return cls(np.eye(dim, dtype=np.complex128))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def components(self, psi) -> np.ndarray:
        """Coefficients psi_k = <b_k|psi>."""
        v = np.asarray(psi, dtype=np.complex128).reshape(-1)
        if v.size != self.dim:
            raise DimensionMismatch(f"state of dimension {v.size} vs basis of dimension {self.dim}")
        return linalg.dagger(self.vectors) @ v

    def rephased(self, phases) -> "CollapseBasis":
        return CollapseBasis(self.vectors * np.exp(1j * np.asarray(phases, dtype=float)))

    def diag(self, a) -> np.ndarray:
        return linalg.diag_part(a, self.vectors)


def _coerce_basis(basis, dim: int) -> CollapseBasis:
    if basis is None:
        return CollapseBasis.standard(dim)
    if not isinstance(basis, CollapseBasis):
        basis = CollapseBasis(basis)
    if basis.dim != dim:
        raise DimensionMismatch(f"basis dimension {basis.dim} vs {dim}")
    return basis


def as_state(psi) -> StateVector:
    return psi if isinstance(psi, StateVector) else StateVector(psi)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = linalg.as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise InvariantViolation(f"density matrix must be square, got {m.shape}")
        if linalg.max_abs(m - linalg.dagger(m)) > NORM_TOL:
            raise InvariantViolation("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_TOL:
            raise InvariantViolation(f"density matrix trace {tr!r} is not 1")
        lam_min = np.linalg.eigvalsh(linalg.hermitian_part(m))[0]
        if lam_min < -NORM_TOL:
            raise InvariantViolation(f"density matrix has negative eigenvalue {lam_min:.3e}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def as_density(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, StateVector):
        return rho.density()
    return DensityMatrix(rho)


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class Basis:
    basis: CollapseBasis


@dataclass(frozen=True)
class FactorSBasis:
    """Collapse on S relative to ``basis``; T (dimension ``dim_t``) untouched."""

    dim_t: int
    basis: CollapseBasis


@dataclass(frozen=True)
class FactorTBasis:
    """Collapse on T relative to ``basis``; Alice only sees S."""

    dim_s: int
    basis: CollapseBasis


@dataclass(frozen=True)
class JointBasis:
    basis: CollapseBasis
    dim_s: int
    dim_t: int


@dataclass(frozen=True, eq=False)
class Subspaces:
    projectors: tuple

    def __post_init__(self):
        ps = tuple(linalg.as_matrix(p) for p in self.projectors)
        object.__setattr__(self, "projectors", ps)
        if not ps:
            raise InvalidScenario("need at least one projector")
        n = ps[0].shape[0]
        if len(ps) >= n and n > 1:
            raise InvalidScenario(f"K = {len(ps)} subspaces must be fewer than d = {n}")
        for i, p in enumerate(ps):
            if p.shape != (n, n):
                raise InvalidScenario("projectors of unequal dimension")
            if linalg.max_abs(p @ p - p) > STRUCTURE_TOL or linalg.max_abs(p - linalg.dagger(p)) > STRUCTURE_TOL:
                raise InvalidScenario(f"P_{i} is not an orthogonal projector")
            for j in range(i):
                if linalg.max_abs(p @ ps[j]) > STRUCTURE_TOL:
                    raise InvalidScenario(f"P_{i} and P_{j} are not orthogonal")
        if linalg.max_abs(sum(ps) - np.eye(n)) > STRUCTURE_TOL:
            raise InvalidScenario("projectors do not sum to the identity")

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], dim: int) -> "Subspaces":
        """Coordinate subspaces: block [0, 1] spans e_0, e_1 and so on."""
        ps = []
        for blk in blocks:
            p = np.zeros((dim, dim), dtype=np.complex128)
            for k in blk:
                p[k, k] = 1.0
            ps.append(p)
        return cls(tuple(ps))


@dataclass(frozen=True, eq=False)
class Unsharp:
    """Positive operators with sum_k P_k^2 = I."""

    operators: tuple

    def __post_init__(self):
        ps = tuple(linalg.as_matrix(p) for p in self.operators)
        object.__setattr__(self, "operators", ps)
        if not ps:
            raise InvalidScenario("need at least one operator")
        n = ps[0].shape[0]
        for i, p in enumerate(ps):
            if p.shape != (n, n) or linalg.max_abs(p - linalg.dagger(p)) > STRUCTURE_TOL:
                raise InvalidScenario(f"P_{i} is not a Hermitian {n}x{n} matrix")
            if np.linalg.eigvalsh(linalg.hermitian_part(p))[0] < -NORM_TOL:
                raise InvalidScenario(f"P_{i} is not positive")
        if linalg.max_abs(sum(p @ p for p in ps) - np.eye(n)) > STRUCTURE_TOL:
            raise InvalidScenario("sum of P_k^2 is not the identity")


Structure = Union[Basis, FactorSBasis, FactorTBasis, JointBasis, Subspaces, Unsharp]


@dataclass(frozen=True)
class CollapseScenario:
    p: float
    structure: Structure

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidScenario(f"collapse probability {self.p} outside [0, 1]")

    @classmethod
    def basis(cls, p: float, basis=None, dim: Optional[int] = None) -> "CollapseScenario":
        if basis is None:
            basis = CollapseBasis.standard(dim)
        elif not isinstance(basis, CollapseBasis):
            basis = CollapseBasis(basis)
        return cls(p, Basis(basis))

    @property
    def dim(self) -> int:
        """Dimension of the state the scenario acts on (S or S (x) T)."""
        s = self.structure
        if isinstance(s, Basis):
            return s.basis.dim
        if isinstance(s, FactorSBasis):
            return s.basis.dim * s.dim_t
        if isinstance(s, FactorTBasis):
            return s.dim_s * s.basis.dim
        if isinstance(s, JointBasis):
            return s.dim_s * s.dim_t
        if isinstance(s, Subspaces):
            return s.projectors[0].shape[0]
        return s.operators[0].shape[0]


def _kraus_like(scenario: CollapseScenario) -> list[np.ndarray]:
    """Operators K_k with rho_1 = sum_k K_k X K_k^dagger, before any partial trace."""
    s = scenario.structure
    if isinstance(s, Basis):
        return [linalg.projector(s.basis.vectors[:, k]) for k in range(s.basis.dim)]
    if isinstance(s, FactorSBasis):
        eye_t = np.eye(s.dim_t)
        return [np.kron(linalg.projector(s.basis.vectors[:, k]), eye_t) for k in range(s.basis.dim)]
    if isinstance(s, FactorTBasis):
        eye_s = np.eye(s.dim_s)
        return [np.kron(eye_s, linalg.projector(s.basis.vectors[:, j])) for j in range(s.basis.dim)]
    if isinstance(s, JointBasis):
        if s.basis.dim != s.dim_s * s.dim_t:
            raise InvalidScenario("joint basis dimension differs from dim_S * dim_T")
        return [linalg.projector(s.basis.vectors[:, i]) for i in range(s.basis.dim)]
    if isinstance(s, Subspaces):
        return list(s.projectors)
    return list(s.operators)


def _reduced_dims(scenario: CollapseScenario) -> Optional[tuple[int, int]]:
    s = scenario.structure
    if isinstance(s, FactorSBasis):
        return s.basis.dim, s.dim_t
    if isinstance(s, FactorTBasis):
        return s.dim_s, s.basis.dim
    if isinstance(s, JointBasis):
        return s.dim_s, s.dim_t
    return None


def collapse_pair(rho, scenario: CollapseScenario) -> tuple[DensityMatrix, DensityMatrix]:
    """(rho_1, rho_2) as seen by the experimenter for an initial density matrix.

    ``rho`` lives on the full space the scenario acts on; for the factor and
    joint structures the returned pair is reduced to S by a partial trace.
    """
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=np.complex128)
    if m.shape != (scenario.dim, scenario.dim):
        raise DimensionMismatch(f"state of dimension {m.shape[0]} for a scenario on dimension {scenario.dim}")
    collapsed = sum(k @ m @ linalg.dagger(k) for k in _kraus_like(scenario))
    dims = _reduced_dims(scenario)
    if dims is not None:
        collapsed = linalg.partial_trace_T(collapsed, *dims)
        m = linalg.partial_trace_T(m, *dims)
    return DensityMatrix(linalg.hermitian_part(collapsed)), DensityMatrix(linalg.hermitian_part(m))


def apply_collapse_channel(psi, scenario: CollapseScenario) -> tuple[DensityMatrix, DensityMatrix]:
    """(rho_1, rho_2): collapsed-branch and uncollapsed density matrices for pure psi."""
    psi = as_state(psi)
    return collapse_pair(psi.projector(), scenario)


@dataclass(frozen=True)
class CollapseSampleOutcome:
    state: StateVector
    collapsed: bool
    branch: Optional[int] = None


def _branches(psi: np.ndarray, scenario: CollapseScenario) -> tuple[np.ndarray, list[np.ndarray]]:
    """Born weights and (unnormalized) post-collapse vectors of each branch."""
    s = scenario.structure
    if isinstance(s, Basis):
        coeff = s.basis.components(psi)
        weights = np.abs(coeff) ** 2
        vecs = [coeff[k] * s.basis.vectors[:, k] for k in range(s.basis.dim)]
        return weights, vecs
    if isinstance(s, (Subspaces, Unsharp)):
        ops = s.projectors if isinstance(s, Subspaces) else s.operators
        vecs = [op @ psi for op in ops]
        return np.array([np.vdot(v, v).real for v in vecs]), vecs
    raise InvalidScenario(f"sampling is not supported for {type(s).__name__}")


def collapse_branches(psi, scenario: CollapseScenario) -> tuple[np.ndarray, list[Optional[StateVector]]]:
    """Born weights and normalized outcome states (None for zero-weight branches)."""
    psi = as_state(psi)
    if psi.dim != scenario.dim:
        raise DimensionMismatch(f"state of dimension {psi.dim} vs scenario dimension {scenario.dim}")
    weights, vecs = _branches(psi.amplitudes, scenario)
    states = [StateVector.normalized(v) if w > 1e-30 else None for w, v in zip(weights, vecs)]
    return weights / weights.sum(), states


def _pick_branch(cum: np.ndarray, u):
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


def sample_collapse(psi, scenario: CollapseScenario, rng: np.random.Generator) -> CollapseSampleOutcome:
    psi = as_state(psi)
    weights, states = collapse_branches(psi, scenario)
    if rng.random() >= scenario.p:
        return CollapseSampleOutcome(psi, False)
    k = int(_pick_branch(np.cumsum(weights), rng.random() * np.sum(weights)))
    if states[k] is None:
        raise ZeroNormBranch(f"branch {k} selected with vanishing weight")
    return CollapseSampleOutcome(states[k], True, k)


def sample_collapse_batch(psi, scenario: CollapseScenario, n: int, rng: np.random.Generator):
    """Vectorized ``sample_collapse``: (collapsed flags, branch indices, -1 when not collapsed)."""
    psi = as_state(psi)
    weights, states = collapse_branches(psi, scenario)
    u = rng.random((2, n))
    collapsed = u[0] < scenario.p
    cum = np.cumsum(weights)
    branch = np.where(collapsed, _pick_branch(cum, u[1] * cum[-1]), -1)
    chosen = np.unique(branch[collapsed])
    if any(states[k] is None for k in chosen):
        raise ZeroNormBranch("a branch with vanishing weight was selected")
    return collapsed, branch, states


def density_from_ensemble(states: Sequence, weights: Sequence[float]) -> DensityMatrix:
    if len(states) != len(weights) or not len(states):
        raise WeightMismatch(f"{len(states)} states vs {len(weights)} weights")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > NORM_TOL:
        raise WeightMismatch("weights must be nonnegative and sum to 1")
    vecs = np.array([np.asarray(s, dtype=np.complex128).reshape(-1) for s in states])
    rho = np.einsum("n,ni,nj->ij", w, vecs, np.conj(vecs))
    return DensityMatrix(linalg.hermitian_part(rho))


def sample_uniform_states(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` unitarily invariant random unit vectors as rows of an (n, dim) array."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    g = rng.standard_normal((n, 2 * dim))
    z = g[:, :dim] + 1j * g[:, dim:]
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_uniform_state(dim: int, rng: np.random.Generator) -> StateVector:
    return StateVector(sample_uniform_states(dim, 1, rng)[0])


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix with phase fix."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ linalg.dagger(g)
    return DensityMatrix(linalg.hermitian_part(rho / np.trace(rho).real))


# ------------------------------------------------------------- serialization

def to_json_dict(value) -> dict:
    """{"dim": d, "re": [...], "im": [...]} for states (d entries) or matrices (d*d, row-major)."""
    arr = np.asarray(value, dtype=np.complex128)
    return {
        "dim": int(arr.shape[0]),
        "re": [float(x) for x in arr.real.reshape(-1)],
        "im": [float(x) for x in arr.imag.reshape(-1)],
    }


def dumps(value) -> str:
    return json.dumps(to_json_dict(value))


def array_from_json_dict(obj: dict) -> np.ndarray:
    try:
        d = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed state/matrix JSON: {exc}") from None
    if re.shape != im.shape:
        raise ValueError("'re' and 'im' have different lengths")
    z = re + 1j * im
    if z.size == d:
        return z
    if z.size == d * d:
        return z.reshape(d, d)
    raise ValueError(f"{z.size} entries do not fit dim={d}")


def state_from_json(text: str) -> StateVector:
    arr = array_from_json_dict(json.loads(text))
    if arr.ndim != 1:
        raise ValueError("expected a state vector")
    return StateVector(arr)


def density_from_json(text: str) -> DensityMatrix:
    arr = array_from_json_dict(json.loads(text))
    if arr.ndim != 2:
        raise ValueError("expected a matrix")
    return DensityMatrix(arr)
