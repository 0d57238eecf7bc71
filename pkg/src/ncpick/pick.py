"""Displacement operator, Pick matrix and feasibility verdict.

The Pick matrix of data ``(zeta_i, Lambda_i)`` is the unique solution of the
Stein-type displacement equation

    A - theta(A) = U U* - V V*,    theta(B)_ij = zeta_i* (I_E (x) B_ij) zeta_j,

with ``(U U* - V V*)_ij = I - Lambda_i* Lambda_j``.  It is computed two ways:
by an exact linear solve (:func:`pick_matrix`) and by the truncated Cauchy
kernel series (:func:`pick_matrix_series`), which serves as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .correspondence import (
    DEFAULT_LEVEL_CAP,
    CommutantElement,
    Context,
    DualPoint,
    amplify_apply,
    commutant_embed_check,
    commutant_leakage,
    validate_point,
)
from .errors import CommutantError, LevelCapError, NotContractiveError, ResidualError, ShapeError
from .linalg import DEFAULT_TOL, PsdVerdict, ToleranceConfig, op_norm, psd_check

__all__ = [
    "ProblemData",
    "PickMatrix",
    "make_problem",
    "theta_apply",
    "stein_solve",
    "pick_rhs",
    "pick_matrix",
    "pick_matrix_series",
    "feasibility",
    "displacement_residual",
]


@dataclass(frozen=True, eq=False)
class ProblemData:
    ctx: Context
    points: tuple
    targets: tuple
    tol: ToleranceConfig = DEFAULT_TOL
    level_cap: int = DEFAULT_LEVEL_CAP

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def margins(self) -> list:
        """``1 - ||zeta_i||`` per point."""
        return [1.0 - p.norm for p in self.points]


def make_problem(ctx: Context, points: Sequence, targets: Sequence,
                 tol: ToleranceConfig = DEFAULT_TOL,
                 level_cap: int = DEFAULT_LEVEL_CAP) -> ProblemData:
    """Validate interpolation data.

    ``points`` may be :class:`DualPoint` objects or lists of edge blocks;
    ``targets`` may be :class:`CommutantElement` objects, lists of vertex
    blocks, or full ``m_tot``-square matrices.
    """
    if len(points) == 0:
        raise ShapeError("need at least one interpolation point")
    if len(points) != len(targets):
        raise ShapeError(f"{len(points)} points but {len(targets)} targets")
    pts = []
    for i, p in enumerate(points):
        if not isinstance(p, DualPoint):
            p = DualPoint.from_blocks(ctx, p)
        norm, ok = validate_point(ctx, p)
        if not ok:
            raise NotContractiveError(f"point {i} has norm {norm:.6g}; need < 1")
        pts.append(p)
    tgts = []
    for t in targets:
        if isinstance(t, CommutantElement):
            tgts.append(t)
            continue
        arr = np.asarray(t, dtype=complex) if not isinstance(t, (list, tuple)) else None
        if arr is not None and arr.ndim == 2 and arr.shape == (ctx.m_tot, ctx.m_tot):
            tgts.append(commutant_embed_check(ctx, arr, tol.residual_tol))
        else:
            tgts.append(CommutantElement.from_blocks(ctx, t))
    return ProblemData(ctx, tuple(pts), tuple(tgts), tol, level_cap)


@dataclass(frozen=True, eq=False)
class PickMatrix:
    """``N x N`` array of commutant blocks and the assembled Hermitian matrix."""

    ctx: Context
    blocks: np.ndarray          # shape (N, N, m_tot, m_tot)
    provenance: str
    levels: int | None = None
    tail_bound: float = 0.0
    asymmetry: float = 0.0
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        N, _, m, _ = self.blocks.shape
        object.__setattr__(self, "matrix",
                           self.blocks.transpose(0, 2, 1, 3).reshape(N * m, N * m))

    @property
    def N(self) -> int:
        return self.blocks.shape[0]


def _as_blocks(B, N, m) -> np.ndarray:
    B = np.asarray(B, dtype=complex)
    if B.shape == (N * m, N * m):
        B = B.reshape(N, m, N, m).transpose(0, 2, 1, 3)
    if B.shape != (N, N, m, m):
        raise ShapeError(f"block matrix must have shape {(N, N, m, m)}, got {B.shape}")
    return B


def theta_apply(points: Sequence[DualPoint], B) -> np.ndarray:
    """``theta(B)_ij = zeta_i* (I_E (x) B_ij) zeta_j`` blockwise."""
    ctx = points[0].ctx
    N, m = len(points), ctx.m_tot
    B = _as_blocks(B, N, m)
    out = np.zeros_like(B)
    for i, zi in enumerate(points):
        for j, zj in enumerate(points):
            out[i, j] = zi.matrix.conj().T @ amplify_apply(B[i, j], zj.matrix, 1, 0, 0, ctx)
    return out


def _stein_operator(ctx: Context, Zi: DualPoint, Zj: DualPoint) -> np.ndarray:
    """Matrix of ``B -> B - zeta_i* (I_E (x) B) zeta_j`` on per-vertex blocks.

    Uses column-major ``vec(P B Q) = (Q^T (x) P) vec(B)``.
    """
    sq = [mu * mu for mu in ctx.m]
    off = np.concatenate([[0], np.cumsum(sq)]).astype(int)
    Op = np.eye(off[-1], dtype=complex)
    for e, (u, v) in enumerate(ctx.edges):
        P = Zi.blocks[e].conj().T
        Q = Zj.blocks[e]
        Op[off[u]:off[u + 1], off[v]:off[v + 1]] -= np.kron(Q.T, P)
    return Op, off


def stein_solve(points: Sequence[DualPoint], rhs, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Unique solution of ``A - theta(A) = rhs`` with commutant blocks."""
    ctx = points[0].ctx
    N, m = len(points), ctx.m_tot
    R = _as_blocks(rhs, N, m)
    for i in range(N):
        for j in range(N):
            leak = commutant_leakage(ctx, R[i, j])
            if leak > tol.residual_tol:
                raise CommutantError(
                    f"right-hand side block ({i},{j}) leaves the commutant by {leak:.3e}", leak)
    A = np.zeros_like(R)
    for i in range(N):
        for j in range(N):
            Op, off = _stein_operator(ctx, points[i], points[j])
            rhs_vec = np.concatenate([
                R[i, j][ctx.vertex_slice(u), ctx.vertex_slice(u)].ravel(order="F")
                for u in range(ctx.s)])
            try:
                x = np.linalg.solve(Op, rhs_vec)
            except np.linalg.LinAlgError as exc:
                raise NotContractiveError(
                    f"displacement equation is singular for block ({i},{j}); "
                    "point norms must be < 1") from exc
            for u in range(ctx.s):
                sl = ctx.vertex_slice(u)
                A[i, j][sl, sl] = x[off[u]:off[u + 1]].reshape(ctx.m[u], ctx.m[u], order="F")
    res = displacement_residual(points, A, R)
    if res > tol.residual_tol * (1.0 + op_norm(_assemble(R))):
        raise ResidualError(f"displacement residual {res:.3e} above tolerance",
                            {"displacement": res})
    return A


def _assemble(blocks: np.ndarray) -> np.ndarray:
    N, _, m, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(N * m, N * m)


def displacement_residual(points, A, rhs) -> float:
    """``||A - theta(A) - rhs||`` on the assembled matrices."""
    N, m = len(points), points[0].ctx.m_tot
    A = _as_blocks(A, N, m)
    R = _as_blocks(rhs, N, m)
    return op_norm(_assemble(A - theta_apply(points, A) - R))


def pick_rhs(problem: ProblemData) -> np.ndarray:
    """Blocks ``I - Lambda_i* Lambda_j`` of ``U U* - V V*``."""
    m = problem.ctx.m_tot
    L = [t.matrix for t in problem.targets]
    R = np.empty((problem.N, problem.N, m, m), complex)
    for i in range(problem.N):
        for j in range(problem.N):
            R[i, j] = np.eye(m) - L[i].conj().T @ L[j]
    return R


def _symmetrize(A: np.ndarray, tol: ToleranceConfig):
    M = _assemble(A)
    asym = op_norm(M - M.conj().T)
    if asym > tol.residual_tol * (1.0 + op_norm(M)):
        raise ResidualError(f"Pick matrix is not Hermitian (asymmetry {asym:.3e})",
                            {"asymmetry": asym})
    return 0.5 * (A + A.transpose(1, 0, 3, 2).conj()), asym


def pick_matrix(problem: ProblemData) -> PickMatrix:
    """Pick matrix by exact solution of the displacement equation."""
    A = stein_solve(problem.points, pick_rhs(problem), problem.tol)
    A, asym = _symmetrize(A, problem.tol)
    return PickMatrix(problem.ctx, A, "stein", asymmetry=asym)


def _series_levels(problem: ProblemData, tol: float) -> int:
    norms = [p.norm for p in problem.points]
    lam = [t.norm for t in problem.targets]
    K = 0
    while True:
        worst = 0.0
        for i in range(problem.N):
            for j in range(problem.N):
                q = norms[i] * norms[j]
                worst = max(worst, q ** (K + 1) / (1 - q) * (1 + lam[i] * lam[j]))
        if worst <= tol:
            return K
        K += 1


def series_tail(problem: ProblemData, K: int) -> float:
    norms = [p.norm for p in problem.points]
    lam = [t.norm for t in problem.targets]
    worst = 0.0
    for i in range(problem.N):
        for j in range(problem.N):
            q = norms[i] * norms[j]
            worst = max(worst, q ** (K + 1) / (1 - q) * (1 + lam[i] * lam[j]))
    return worst


def pick_matrix_series(problem: ProblemData, tol: float | None = None,
                       levels: int | None = None) -> PickMatrix:
    """Pick matrix from the truncated series ``sum_k (zeta_i^(k))* (I - Li* Lj)_k zeta_j^(k)``.

    The level is the smallest one whose tail bound is below ``tol`` (default
    ``truncation_tol``) unless ``levels`` is given explicitly.  Powers are
    materialized level by level, independent of the Stein solve.
    """
    ctx = problem.ctx
    if levels is None:
        tol = problem.tol.truncation_tol if tol is None else tol
        levels = _series_levels(problem, tol)
    entries = ctx.level_dim(levels) * ctx.m_tot
    if entries > problem.level_cap:
        raise LevelCapError(
            f"series needs level {levels} ({entries} entries) above cap {problem.level_cap}",
            levels, problem.level_cap)
    tail = series_tail(problem, levels)
    N, m = problem.N, ctx.m_tot
    R = pick_rhs(problem)
    A = np.zeros((N, N, m, m), complex)
    P = [np.eye(m, dtype=complex) for _ in range(N)]
    for k in range(levels + 1):
        for i in range(N):
            for j in range(N):
                A[i, j] += P[i].conj().T @ amplify_apply(R[i, j], P[j], k, 0, 0, ctx)
        if k < levels:
            P = [amplify_apply(z.matrix, Pi, k, 0, 1, ctx) for z, Pi in zip(problem.points, P)]
    A, asym = _symmetrize(A, problem.tol)
    return PickMatrix(ctx, A, "series", levels=levels, tail_bound=tail, asymmetry=asym)


def feasibility(A: PickMatrix, tol: ToleranceConfig = DEFAULT_TOL) -> PsdVerdict:
    """PSD verdict on the assembled Pick matrix."""
    return psd_check(A.matrix, tol)
