"""Complete positivity of the block Pick map via Choi's criterion.

The map acts on ``N x N`` block matrices ``B``:

    B_ij  ->  S_ij(B_ij) - Lambda_i S_ij(B_ij) Lambda_j*,
    S - zeta_i* (I_E (x) S) zeta_j = B_ij.

For several vertices the displacement solve lives on the commutant, so the
argument is first compressed to its vertex-diagonal blocks (a conditional
expectation); this does not change complete positivity of the restriction.

Choi matrices use matrix units ``E_pq`` in row-major order: block ``(p, q)``
of the Choi matrix is ``Phi(E_pq)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .correspondence import DualPoint, free_context
from .errors import CommutantError, ShapeError
from .linalg import DEFAULT_TOL, PsdVerdict, ToleranceConfig, op_norm, psd_check
from .pick import ProblemData, _stein_operator, make_problem, pick_matrix, feasibility

__all__ = [
    "MsPickMap",
    "ChoiMatrix",
    "CpVerdict",
    "ExampleReport",
    "ms_map_apply",
    "choi_matrix",
    "cp_verdict",
    "example_cj_vs_ms",
    "example_problem",
    "identity_map",
    "transpose_map",
    "kraus_map",
]


def _conditional_expectation(ctx, B: np.ndarray) -> np.ndarray:
    out = np.zeros_like(B)
    for u in range(ctx.s):
        sl = ctx.vertex_slice(u)
        out[sl, sl] = B[sl, sl]
    return out


@dataclass(frozen=True, eq=False)
class MsPickMap:
    """The block Pick map of a problem as a linear map on ``M_{N m_tot}``."""

    problem: ProblemData
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.problem.N * self.problem.ctx.m_tot

    def _solve(self, i: int, j: int, B: np.ndarray) -> np.ndarray:
        ctx = self.problem.ctx
        if (i, j) not in self._ops:
            Op, off = _stein_operator(ctx, self.problem.points[i], self.problem.points[j])
            self._ops[(i, j)] = (np.linalg.inv(Op), off)
        inv, off = self._ops[(i, j)]
        vec = np.concatenate([B[ctx.vertex_slice(u), ctx.vertex_slice(u)].ravel(order="F")
                              for u in range(ctx.s)])
        x = inv @ vec
        S = np.zeros_like(B)
        for u in range(ctx.s):
            sl = ctx.vertex_slice(u)
            S[sl, sl] = x[off[u]:off[u + 1]].reshape(ctx.m[u], ctx.m[u], order="F")
        return S

    def __call__(self, B) -> np.ndarray:
        pr = self.problem
        ctx, N, m = pr.ctx, pr.N, pr.ctx.m_tot
        B = np.asarray(B, dtype=complex)
        if B.shape != (N * m, N * m):
            raise ShapeError(f"argument must be {N * m}-square, got {B.shape}")
        out = np.zeros_like(B)
        for i in range(N):
            Li = pr.targets[i].matrix
            for j in range(N):
                Bij = _conditional_expectation(ctx, B[i * m:(i + 1) * m, j * m:(j + 1) * m])
                S = self._solve(i, j, Bij)
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] = S - Li @ S @ pr.targets[j].matrix.conj().T
        return out


def ms_map_apply(problem: ProblemData, B) -> np.ndarray:
    """Apply the block Pick map to an ``N m_tot``-square matrix (``N``-block ordering)."""
    return MsPickMap(problem)(B)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    matrix: np.ndarray
    dim: int

    def hermitian_defect(self) -> float:
        return op_norm(self.matrix - self.matrix.conj().T)


def choi_matrix(fn: Callable, dim: int) -> ChoiMatrix:
    """``[Phi(E_pq)]_{p,q}``, of size ``dim**2``."""
    C = np.zeros((dim * dim, dim * dim), complex)
    for p in range(dim):
        for q in range(dim):
            E = np.zeros((dim, dim), complex)
            E[p, q] = 1.0
            C[p * dim:(p + 1) * dim, q * dim:(q + 1) * dim] = fn(E)
    return ChoiMatrix(C, dim)


@dataclass(frozen=True)
class CpVerdict:
    psd: PsdVerdict
    witness: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_cp(self) -> bool:
        return self.psd.is_psd

    @property
    def min_eigenvalue(self) -> float:
        return self.psd.min_eigenvalue


def cp_verdict(fn: Callable, dim: int, tol: ToleranceConfig = DEFAULT_TOL) -> CpVerdict:
    """Choi test.  The witness is the eigenvector ``v`` of the smallest
    eigenvalue reshaped to ``V[p, a] = v[p * dim + a]``, so that
    ``sum_{pq} <V[p], Phi(E_pq) V[q]> < 0``."""
    C = choi_matrix(fn, dim)
    v = psd_check(C.matrix, tol)
    W = None if v.witness is None else v.witness.reshape(dim, dim)
    return CpVerdict(v, W)


def identity_map(B):
    return np.asarray(B, dtype=complex).copy()


def transpose_map(B):
    return np.asarray(B, dtype=complex).T.copy()


def kraus_map(ops) -> Callable:
    """``B -> sum_k V_k* B V_k``; completely positive by construction."""
    ops = [np.asarray(V, dtype=complex) for V in ops]

    def fn(B):
        return sum(V.conj().T @ B @ V for V in ops)
    return fn


# ---------------------------------------------------------------------------
# the two-by-two example


def example_problem(r: float, eps: float, tol: ToleranceConfig = DEFAULT_TOL) -> ProblemData:
    """One point ``Z = [[0, r], [0, 0]]`` with target ``diag(eps, 0)`` on ``C^2``."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    ctx = free_context(1, 2)
    Z = np.array([[0.0, r], [0.0, 0.0]])
    return make_problem(ctx, [DualPoint.from_blocks(ctx, [Z])], [[np.diag([eps, 0.0])]], tol)


@dataclass(frozen=True, eq=False)
class ExampleReport:
    r: float
    eps: float
    cj_pick: np.ndarray
    cj_verdict: PsdVerdict
    interpolation_residual: float
    ms_cp: CpVerdict
    choi_minor: np.ndarray
    ms_at_identity: np.ndarray
    ms_identity_verdict: PsdVerdict

    @property
    def choi_minor_det(self) -> float:
        return float(np.linalg.det(self.choi_minor).real)

    def lines(self) -> list:
        return [
            f"CJ Pick matrix: diag({self.cj_pick[0, 0].real:.17g}, {self.cj_pick[1, 1].real:.17g})",
            f"CJ: {'feasible' if self.cj_verdict.is_psd else 'infeasible'} "
            f"(min eig {self.cj_verdict.min_eigenvalue:.17g})",
            f"interpolant residual ||F(Z) - Lambda|| = {self.interpolation_residual:.3e}",
            f"MS: {'CP' if self.ms_cp.is_cp else 'not CP'} "
            f"(min Choi eig {self.ms_cp.min_eigenvalue:.17g}; minor det {self.choi_minor_det:.17g})",
            f"MS map at B = I: min eig {self.ms_identity_verdict.min_eigenvalue:.17g} "
            f"({'PSD' if self.ms_identity_verdict.is_psd else 'not PSD'})",
        ]


def example_cj_vs_ms(r: float, eps: float, tol: ToleranceConfig = DEFAULT_TOL) -> ExampleReport:
    """Run both criteria on the nilpotent two-by-two example."""
    from .realization import synthesize, transfer_eval

    problem = example_problem(r, eps, tol)
    A = pick_matrix(problem)
    verdict = feasibility(A, tol)
    residual = float("nan")
    if verdict.is_psd:
        coll = synthesize(problem, A)
        residual = op_norm(transfer_eval(coll, problem.points[0]) - problem.targets[0].matrix)
    ms = MsPickMap(problem)
    cp = cp_verdict(ms, ms.dim, tol)
    C = choi_matrix(ms, ms.dim).matrix
    minor = C[np.ix_([0, 3], [0, 3])]
    at_I = ms(np.kron(np.ones((problem.N, problem.N)), np.eye(problem.ctx.m_tot)))
    return ExampleReport(r, eps, A.matrix, verdict, residual, cp, minor, at_I, psd_check(at_I, tol))
