"""Dense complex linear algebra: Hermitian eigensolver, diagonal part, partial trace.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Bases are
square arrays whose *columns* are the orthonormal basis vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, NonSquare, NotHermitian

HERMITIAN_TOL = 1e-8
GROUP_TOL = 1e-9
MAX_SWEEPS = 100
_OFF_REL_TOL = 1e-12


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a finite complex 2-d array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def projector(vec) -> np.ndarray:
    """|v><v| for a (not necessarily normalized) vector v."""
    v = np.asarray(vec, dtype=np.complex128).reshape(-1)
    return np.outer(v, np.conj(v))


@dataclass(frozen=True)
class HermitianEigenDecomposition:
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # column i pairs with eigenvalues[i]

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ dagger(v)

    def zero_tol(self, scale: Optional[float] = None) -> float:
        """Threshold below which an eigenvalue counts as zero."""
        if scale is None:
            scale = float(np.max(np.abs(self.eigenvalues))) if self.dim else 0.0
        return GROUP_TOL * max(1.0, scale)

    def projector(self, mask: np.ndarray) -> np.ndarray:
        v = self.eigenvectors[:, mask]
        return v @ dagger(v)

    def positive_projector(self, tol: Optional[float] = None) -> np.ndarray:
        tol = self.zero_tol() if tol is None else tol
        return self.projector(self.eigenvalues > tol)

    def negative_projector(self, tol: Optional[float] = None) -> np.ndarray:
        tol = self.zero_tol() if tol is None else tol
        return self.projector(self.eigenvalues < -tol)

    def kernel_projector(self, tol: Optional[float] = None) -> np.ndarray:
        tol = self.zero_tol() if tol is None else tol
        return self.projector(np.abs(self.eigenvalues) <= tol)

    def groups(self, tol: float = GROUP_TOL) -> list[tuple[float, np.ndarray]]:
        """Cluster eigenvalues closer than ``tol`` and return (mean value, projector) pairs."""
        out = []
        start = 0
        lam = self.eigenvalues
        for i in range(1, self.dim + 1):
            if i == self.dim or lam[i] - lam[i - 1] > tol:
                idx = np.arange(start, i)
                mask = np.zeros(self.dim, dtype=bool)
                mask[idx] = True
                out.append((float(np.mean(lam[idx])), self.projector(mask)))
                start = i
        return out


def _jacobi_rotation(a_pp: float, a_qq: float, a_pq: complex) -> np.ndarray:
    """2x2 unitary U with U^dagger [[a_pp, a_pq], [conj(a_pq), a_qq]] U diagonal."""
    r = abs(a_pq)
    phase = a_pq / r
    theta = (a_qq - a_pp) / (2.0 * r)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    # phase-reduce to a real symmetric block, then apply the real rotation
    return np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=np.complex128)


def hermitian_eig(a, tol: float = HERMITIAN_TOL, max_sweeps: int = MAX_SWEEPS) -> HermitianEigenDecomposition:
    """Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.

    The input is symmetrized as (A + A^dagger)/2 after checking that its
    anti-Hermitian part is below ``tol`` (max-abs norm).  Sweeps stop once the
    off-diagonal Frobenius norm drops below 1e-12 times ||A||_F.
    """
    m = as_matrix(a)
    n, k = m.shape
    if n != k:
        raise NonSquare(f"matrix is {n}x{k}")
    asym = max_abs(m - dagger(m))
    if asym > tol:
        raise NotHermitian(f"||A - A^dagger||_max = {asym:.3e} exceeds {tol:.1e}")
    work = hermitian_part(m)
    vecs = np.eye(n, dtype=np.complex128)
    threshold = _OFF_REL_TOL * np.linalg.norm(work)

    def off_norm() -> float:
        return float(np.linalg.norm(work - np.diag(np.diag(work))))

    sweeps = 0
    while off_norm() > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                a_pq = work[p, q]
                if abs(a_pq) <= 1e-300:
                    continue
                u = _jacobi_rotation(work[p, p].real, work[q, q].real, a_pq)
                cols = [p, q]
                work[:, cols] = work[:, cols] @ u
                work[cols, :] = dagger(u) @ work[cols, :]
                work[p, q] = work[q, p] = 0.0
                work[p, p] = work[p, p].real
                work[q, q] = work[q, q].real
                vecs[:, cols] = vecs[:, cols] @ u
    lam = np.real(np.diag(work)).copy()
    order = np.argsort(lam, kind="stable")
    return HermitianEigenDecomposition(lam[order], vecs[:, order])


def _check_basis(basis: Optional[np.ndarray], n: int) -> Optional[np.ndarray]:
    if basis is None:
        return None
    b = np.asarray(getattr(basis, "vectors", basis), dtype=np.complex128)
    if b.shape != (n, n):
        raise DimensionMismatch(f"basis of shape {b.shape} for dimension {n}")
    return b


def diag_part(a, basis=None) -> np.ndarray:
    """Sum_k |b_k><b_k| A |b_k><b_k|; the standard basis when ``basis`` is None."""
    m = as_matrix(a)
    n = m.shape[0]
    if m.shape[1] != n:
        raise NonSquare(f"matrix is {m.shape[0]}x{m.shape[1]}")
    b = _check_basis(basis, n)
    if b is None:
        return np.diag(np.diag(m))
    coeff = np.einsum("ik,ij,jk->k", np.conj(b), m, b)
    return (b * coeff) @ dagger(b)


def partial_trace_T(a, dim_s: int, dim_t: int) -> np.ndarray:
    """Trace out the second factor T of an operator on S (x) T."""
    m = as_matrix(a)
    if m.shape != (dim_s * dim_t, dim_s * dim_t):
        raise DimensionMismatch(f"matrix of shape {m.shape} is not ({dim_s}*{dim_t})^2")
    return np.einsum("ikjk->ij", m.reshape(dim_s, dim_t, dim_s, dim_t))


def partial_trace_S(a, dim_s: int, dim_t: int) -> np.ndarray:
    m = as_matrix(a)
    if m.shape != (dim_s * dim_t, dim_s * dim_t):
        raise DimensionMismatch(f"matrix of shape {m.shape} is not ({dim_s}*{dim_t})^2")
    return np.einsum("kikj->ij", m.reshape(dim_s, dim_t, dim_s, dim_t))
