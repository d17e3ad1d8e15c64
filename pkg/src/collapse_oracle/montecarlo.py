"""Monte Carlo validation: simulated experiments and the sphere fraction beating blind guessing.

Work is split into fixed-size chunks; chunk i draws from substream i of the
caller's seed and contributes integer counts, so results do not depend on the
number of worker threads or their scheduling.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import linalg
from .discrimination import Effect, as_effect, reliability_known_psi
from .errors import DimensionMismatch
from .model import (
    Basis,
    CollapseBasis,
    CollapseScenario,
    Subspaces,
    Unsharp,
    _coerce_basis,
    as_state,
    make_stream,
    random_unitary,
    sample_collapse_batch,
    sample_uniform_states,
)

CHUNK_SIZE = 8192
THREADS_ENV = "COLLAPSE_ORACLE_THREADS"
# guards the strict inequality against rounding in the reliability evaluation
STRICT_MARGIN = 1e-12


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def _chunks(n: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(i, min(chunk_size, n - start)) for i, start in enumerate(range(0, n, chunk_size))]


def _map_chunks(fn: Callable[[int, int], int], n: int, chunk_size: int, workers: Optional[int]) -> int:
    chunks = _chunks(n, chunk_size)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(chunks) <= 1:
        return sum(fn(i, size) for i, size in chunks)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda c: fn(*c), chunks))


@dataclass(frozen=True)
class EmpiricalReliability:
    successes: int
    trials: int
    estimate: float
    analytic: float
    z_score: float
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _z_score(estimate: float, analytic: float, trials: int) -> float:
    if 0.0 < analytic < 1.0:
        return (estimate - analytic) / math.sqrt(analytic * (1 - analytic) / trials)
    return 0.0 if estimate == analytic else math.copysign(math.inf, estimate - analytic)


def simulate_reliability(
    psi,
    scenario: CollapseScenario,
    effect,
    trials: int,
    seed: int,
    *,
    chunk_size: int = CHUNK_SIZE,
    workers: Optional[int] = None,
) -> EmpiricalReliability:
    """Run ``trials`` collapse-then-measure rounds and count correct verdicts.

    A round succeeds when the outcome is "yes" and a collapse happened, or
    "no" and none did.  ``analytic`` is the exact reliability of ``effect``.
    """
    psi = as_state(psi)
    e = as_effect(effect)
    if e.dim != psi.dim or scenario.dim != psi.dim:
        raise DimensionMismatch("state, effect and scenario dimensions differ")
    if trials < 1:
        raise ValueError("trials must be positive")
    s = scenario.structure
    if isinstance(s, Basis):
        analytic = reliability_known_psi(psi, scenario.p, e, s.basis)
    elif isinstance(s, (Subspaces, Unsharp)):
        ops = s.projectors if isinstance(s, Subspaces) else s.operators
        rho = psi.projector()
        rho1 = sum(k @ rho @ linalg.dagger(k) for k in ops)
        analytic = float(
            scenario.p * np.trace(rho1 @ e.matrix).real
            + (1 - scenario.p) * (1 - np.trace(rho @ e.matrix).real)
        )
    else:
        raise ValueError(f"simulation does not support {type(s).__name__}")

    def run(index: int, n: int) -> int:
        rng = make_stream(seed, 1, index)
        collapsed, branch, states = sample_collapse_batch(psi, scenario, n, rng)
        yes_prob = np.empty(len(states) + 1)
        yes_prob[-1] = np.vdot(psi.amplitudes, e.matrix @ psi.amplitudes).real
        for k, st in enumerate(states):
            yes_prob[k] = 0.0 if st is None else np.vdot(st.amplitudes, e.matrix @ st.amplitudes).real
        yes = rng.random(n) < yes_prob[branch]  # branch -1 picks the uncollapsed entry
        return int(np.count_nonzero(yes == collapsed))

    successes = _map_chunks(run, trials, chunk_size, workers)
    estimate = successes / trials
    return EmpiricalReliability(successes, trials, estimate, analytic, _z_score(estimate, analytic, trials), seed)


@dataclass(frozen=True)
class LambdaEstimate:
    fraction: float
    std_error: float
    n_samples: int
    p: float
    dim: int
    conjecture_bound: float
    count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def conjecture_bound(dim: int) -> float:
    """1 - (1 - 1/d)^(d-1), increasing in d towards 1 - 1/e."""
    return 1.0 - (1.0 - 1.0 / dim) ** (dim - 1)


def _lambda_counts(e: np.ndarray, basis: np.ndarray, ps: np.ndarray, n: int, rng) -> np.ndarray:
    """Counts over ``n`` uniform states of R(psi) > max(p, 1-p), one per p in ``ps``."""
    d = e.shape[0]
    states = sample_uniform_states(d, n, rng)
    e_kk = np.einsum("ik,ij,jk->k", np.conj(basis), e, basis).real
    weights = np.abs(states @ np.conj(basis)) ** 2  # |<b_k|psi>|^2
    diag_term = weights @ e_kk
    yes_term = np.einsum("ni,ij,nj->n", np.conj(states), e, states).real
    out = np.empty(len(ps), dtype=np.int64)
    for j, p in enumerate(ps):
        rel = p * diag_term + (1 - p) * (1.0 - yes_term)
        out[j] = np.count_nonzero(rel > max(p, 1 - p) + STRICT_MARGIN)
    return out


def _lambda_estimates(e, ps, n_samples, seed, basis, chunk_size, workers, stream) -> list[LambdaEstimate]:
    e = as_effect(e)
    d = e.dim
    b = _coerce_basis(basis, d).vectors
    ps = np.asarray(ps, dtype=float)
    chunks = _chunks(n_samples, chunk_size)

    def run(index: int, n: int) -> np.ndarray:
        return _lambda_counts(e.matrix, b, ps, n, make_stream(seed, *stream, index))

    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(chunks) <= 1:
        parts = [run(i, n) for i, n in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: run(*c), chunks))
    counts = np.sum(parts, axis=0)
    bound = conjecture_bound(d)
    out = []
    for p, c in zip(ps, counts):
        frac = int(c) / n_samples
        out.append(
            LambdaEstimate(
                fraction=frac,
                std_error=math.sqrt(frac * (1 - frac) / n_samples),
                n_samples=n_samples,
                p=float(p),
                dim=d,
                conjecture_bound=bound,
                count=int(c),
            )
        )
    return out


def estimate_lambda(
    effect,
    p: float,
    n_samples: int,
    seed: int,
    *,
    basis=None,
    chunk_size: int = CHUNK_SIZE,
    workers: Optional[int] = None,
) -> LambdaEstimate:
    """Fraction of the uniform sphere where ``effect`` is strictly more reliable than blind guessing.

    At p = 1/2 the comparison ties on average over the sphere, and the strict
    count is still well defined.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p = {p} outside (0, 1)")
    return _lambda_estimates(effect, [p], n_samples, seed, basis, chunk_size, workers, (2,))[0]


# --------------------------------------------------------- conjecture scan

def random_spectral_effect(dim: int, rng: np.random.Generator) -> Effect:
    """Haar-random eigenframe with i.i.d. uniform [0, 1] eigenvalues."""
    u = random_unitary(dim, rng)
    lam = rng.random(dim)
    return Effect(linalg.hermitian_part((u * lam) @ linalg.dagger(u)))


def random_structured_effect(dim: int, rng: np.random.Generator) -> Effect:
    """I - |phi><phi| for a uniformly random phi."""
    phi = sample_uniform_states(dim, 1, rng)[0]
    return Effect(np.eye(dim) - linalg.projector(phi))


EFFECT_SAMPLERS = {
    "spectral": random_spectral_effect,
    "structured": random_structured_effect,
}


def _sample_effect(strategy: str, index: int, dim: int, rng) -> tuple[str, Effect]:
    if strategy == "mixed":
        strategy = "spectral" if index % 2 == 0 else "structured"
    return strategy, EFFECT_SAMPLERS[strategy](dim, rng)


@dataclass
class ScanReport:
    dim: int
    p_grid: list
    strategy: str
    n_effects: int
    n_samples: int
    seed: int
    conjecture_bound: float
    max_fraction: float = 0.0
    max_fraction_p: Optional[float] = None
    exceeds_half: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    chunk_size: int = CHUNK_SIZE
    wall_time: float = 0.0

    @property
    def any_exceeds_half(self) -> bool:
        return bool(self.exceeds_half)

    @property
    def any_violation(self) -> bool:
        return bool(self.violations)

    def to_dict(self, include_estimates: bool = True) -> dict:
        d = asdict(self)
        d["any_exceeds_half"] = self.any_exceeds_half
        d["any_violation"] = self.any_violation
        if not include_estimates:
            d.pop("estimates")
        return d


def conjecture_scan(
    dim: int,
    p_grid: Sequence[float],
    effect_sampler: str = "mixed",
    n_effects: int = 200,
    n_samples: int = 20000,
    seed: int = 0,
    *,
    chunk_size: int = CHUNK_SIZE,
    workers: Optional[int] = None,
) -> ScanReport:
    """Estimate the blind-guess-beating fraction for many random effects.

    Each effect is evaluated on one sample of uniform states shared across the
    p grid.  Fractions above 1/2 are flagged; fractions above the conjectured
    bound by more than 4 standard errors are reported as violations.
    """
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if effect_sampler not in (*EFFECT_SAMPLERS, "mixed"):
        raise ValueError(f"unknown effect sampler {effect_sampler!r}")
    start = time.perf_counter()
    ps = [float(p) for p in p_grid]
    report = ScanReport(
        dim=dim,
        p_grid=ps,
        strategy=effect_sampler,
        n_effects=n_effects,
        n_samples=n_samples,
        seed=seed,
        conjecture_bound=conjecture_bound(dim),
        chunk_size=chunk_size,
    )
    if any(abs(p - 0.5) < 1e-15 for p in ps):
        report.notes.append("p = 1/2: blind guessing ties every effect on average; strict counts are reported")
    for i in range(n_effects):
        kind, e = _sample_effect(effect_sampler, i, dim, make_stream(seed, 3, i))
        ests = _lambda_estimates(e, ps, n_samples, seed, None, chunk_size, workers, (4, i))
        for est in ests:
            row = {"effect": i, "kind": kind, **est.to_dict()}
            report.estimates.append(row)
            if est.fraction > report.max_fraction:
                report.max_fraction, report.max_fraction_p = est.fraction, est.p
            if est.fraction > 0.5:
                report.exceeds_half.append(row)
            if est.fraction > est.conjecture_bound + 4 * est.std_error:
                report.violations.append(row)
    report.wall_time = time.perf_counter() - start
    return report
