"""Finite-dimensional model of a W*-correspondence and its sigma-dual.

The algebra is ``M = C^s`` acting on ``H = H_0 + ... + H_{s-1}`` with
``dim H_u = m[u]``.  The correspondence ``E`` is a quiver: ``g[u][v]`` parallel
edges from ``u`` to ``v``.  The left action of ``M`` on an edge is the scalar of
its source vertex, the right action that of its target.  In these coordinates

* ``E^{(x)k} (x) H`` is the direct sum over length-``k`` paths ``p`` of
  ``H_{end(p)}`` (level 0 is ``H`` itself, one empty path per vertex);
* a point of the sigma-dual is one block ``Z[e] : H_{src(e)} -> H_{tgt(e)}``
  per edge;
* the commutant of ``sigma(M)`` is the block-diagonal algebra.

Paths are ordered lexicographically by edge index, edges by
``(source, target, parallel index)``.  The block of ``eta^(k)`` at the path
``(e_1, ..., e_k)`` is the reversed product ``Z[e_k] ... Z[e_1]``.

An operator ``T`` from level ``a`` to level ``b`` that commutes with the left
``M`` action (every intertwiner in this package) can be amplified to
``I_{E^{(x)k}} (x) T`` from level ``k + a`` to level ``k + b``.  All such
amplifications go through :func:`amplify_apply`, which never forms the
block-diagonal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    CommutantError,
    DegenerateCorrespondenceError,
    LevelCapError,
    NotContractiveError,
    ShapeError,
)
from .linalg import op_norm

__all__ = [
    "DEFAULT_LEVEL_CAP",
    "Context",
    "PathLevel",
    "DualPoint",
    "CommutantElement",
    "PointPower",
    "CauchyKernel",
    "build_context",
    "free_context",
    "validate_point",
    "point_power",
    "cauchy_kernel",
    "commutant_embed_check",
    "commutant_leakage",
    "amplify_apply",
    "amplify_apply_right",
    "amplify",
    "module_map_defect",
    "stack_permutation",
    "blockdiag_point",
]

DEFAULT_LEVEL_CAP = 2_000_000


@dataclass(frozen=True, eq=False)
class PathLevel:
    """All paths of one length, in lexicographic edge order.

    ``array`` holds one row of edge indices per path (zero columns at level 0,
    where the rows stand for the vertices).
    """

    level: int
    array: np.ndarray
    sources: np.ndarray
    ends: np.ndarray

    def __len__(self):
        return len(self.sources)

    @cached_property
    def paths(self) -> tuple:
        return tuple(tuple(int(e) for e in row) for row in self.array)

    def index(self, path) -> int:
        return self._index[tuple(path)]

    @cached_property
    def _index(self):
        if self.level == 0:
            raise KeyError("level-0 paths are vertices; index them by vertex")
        return {p: i for i, p in enumerate(self.paths)}


class _Quiver:
    """Edges and cached path levels, shared by contexts over the same quiver."""

    def __init__(self, s, g):
        self.s = s
        self.g = g
        edges = []
        for u in range(s):
            for v in range(s):
                edges.extend((u, v) for _ in range(g[u][v]))
        self.edges = tuple(edges)
        self.edge_source = np.array([e[0] for e in edges], dtype=int)
        self.edge_target = np.array([e[1] for e in edges], dtype=int)
        self.outdeg = np.array([sum(r) for r in g], dtype=int)
        # out-edges of u occupy a contiguous index range since edges sort by source
        self.out_start = np.concatenate([[0], np.cumsum(self.outdeg)[:-1]]).astype(int)
        self._levels = {}
        self._counts = {}

    def level(self, k: int) -> PathLevel:
        if k < 0:
            raise ValueError("level must be nonnegative")
        if k not in self._levels:
            if k == 0:
                verts = np.arange(self.s)
                lev = PathLevel(0, np.zeros((self.s, 0), dtype=int), verts, verts.copy())
            else:
                prev = self.level(k - 1)
                deg = self.outdeg[prev.ends]
                rep = np.repeat(np.arange(len(prev)), deg)
                first = (np.cumsum(deg) - deg).astype(int)
                within = np.arange(len(rep)) - np.repeat(first, deg)
                new_edge = self.out_start[prev.ends][rep] + within
                arr = np.hstack([prev.array[rep], new_edge[:, None]])
                lev = PathLevel(k, arr, prev.sources[rep], self.edge_target[new_edge])
            self._levels[k] = lev
        return self._levels[k]

    def count(self, k: int) -> np.ndarray:
        """Number of length-k paths per (source, end) pair, without enumeration."""
        if k not in self._counts:
            if k == 0:
                self._counts[0] = np.eye(self.s, dtype=int).astype(object)
            else:
                self._counts[k] = self.count(k - 1).dot(np.array(self.g, dtype=object))
        return self._counts[k]


@dataclass(frozen=True, eq=False)
class Context:
    """Coordinates for ``(M, E, sigma, H)``: vertex multiplicities and edge counts."""

    s: int
    m: tuple
    g: tuple
    quiver: _Quiver = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def edges(self):
        return self.quiver.edges

    @property
    def num_edges(self) -> int:
        return len(self.quiver.edges)

    @property
    def is_free(self) -> bool:
        return self.s == 1

    @property
    def d(self) -> int:
        """Number of letters in the free case."""
        if not self.is_free:
            raise AttributeError("d is defined only for s == 1")
        return self.g[0][0]

    @cached_property
    def m_tot(self) -> int:
        return int(sum(self.m))

    @cached_property
    def vertex_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.m)]).astype(int)

    @cached_property
    def dim_EH(self) -> int:
        return self.level_dim(1)

    def vertex_slice(self, u: int) -> slice:
        return slice(int(self.vertex_offsets[u]), int(self.vertex_offsets[u + 1]))

    def level(self, k: int) -> PathLevel:
        return self.quiver.level(k)

    def level_dim(self, k: int) -> int:
        """``dim E^{(x)k} (x) H`` computed from path counts (no enumeration)."""
        key = ("dim", k)
        if key not in self._cache:
            counts = self.quiver.count(k)
            self._cache[key] = int(sum(counts[u][v] * self.m[v]
                                       for u in range(self.s) for v in range(self.s)))
        return self._cache[key]

    def sizes(self, k: int) -> np.ndarray:
        return np.asarray(self.m, dtype=int)[self.level(k).ends]

    def offsets(self, k: int) -> np.ndarray:
        key = ("offsets", k)
        if key not in self._cache:
            self._cache[key] = np.concatenate([[0], np.cumsum(self.sizes(k))]).astype(int)
        return self._cache[key]

    def from_vertex(self, a: int, u: int) -> slice:
        """Coordinate range at level ``a`` of paths starting at vertex ``u``.

        Such paths are contiguous because edges are sorted by source.
        """
        key = ("from", a, u)
        if key not in self._cache:
            lev = self.level(a)
            idx = np.nonzero(lev.sources == u)[0]
            off = self.offsets(a)
            if len(idx) == 0:
                sl = slice(0, 0)
            else:
                sl = slice(int(off[idx[0]]), int(off[idx[-1] + 1]))
            self._cache[key] = sl
        return self._cache[key]

    def amplified(self, N: int) -> "Context":
        """Context for ``H^(N) = H (x) C^N`` grouped by vertex."""
        key = ("amplified", N)
        if key not in self._cache:
            self._cache[key] = Context(self.s, tuple(N * x for x in self.m), self.g, self.quiver)
        return self._cache[key]

    def check_cap(self, k: int, width: int, cap: int = DEFAULT_LEVEL_CAP, what="level"):
        entries = self.level_dim(k) * width
        if entries > cap:
            raise LevelCapError(
                f"{what} {k} needs {entries} matrix entries, above the cap of {cap}; "
                f"lower the level or raise the cap", k, cap)

    def describe(self) -> dict:
        return {"vertices": self.s, "multiplicities": list(self.m),
                "edge_multiplicity": [list(r) for r in self.g]}


def build_context(s: int, m: Sequence[int], g) -> Context:
    """Validate vertex/edge multiplicities and build a :class:`Context`."""
    s = int(s)
    if s < 1:
        raise ShapeError("need at least one vertex")
    m = tuple(int(x) for x in m)
    if len(m) != s or any(x < 1 for x in m):
        raise ShapeError(f"multiplicities must be {s} positive integers, got {m}")
    g = np.asarray(g)
    if g.shape != (s, s):
        raise ShapeError(f"edge multiplicity matrix must be {s}x{s}, got shape {g.shape}")
    if np.any(g < 0) or np.any(g != np.round(g)):
        raise ShapeError("edge multiplicities must be nonnegative integers")
    if not np.any(g > 0):
        raise DegenerateCorrespondenceError("degenerate correspondence: no edges")
    gt = tuple(tuple(int(x) for x in row) for row in g)
    return Context(s, m, gt, _Quiver(s, gt))


def free_context(d: int, m: int) -> Context:
    """``s = 1`` with ``d`` letters acting on ``C^m``."""
    return build_context(1, [m], [[d]])


# ---------------------------------------------------------------------------
# amplification of left-module maps


def _prefix_starts(ctx: Context, k: int, a: int) -> np.ndarray:
    """Start coordinate, inside level ``k + a``, of each level-``k`` prefix block."""
    key = ("prefix", k, a)
    if key not in ctx._cache:
        ends = ctx.level(k).ends
        cont = np.array([ctx.from_vertex(a, u).stop - ctx.from_vertex(a, u).start
                         for u in range(ctx.s)], dtype=int)
        sizes = cont[ends]
        ctx._cache[key] = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    return ctx._cache[key]


def amplify_apply(T, v, k: int, a: int, b: int, ctx_in: Context, ctx_out: Context | None = None):
    """Compute ``(I_{E^{(x)k}} (x) T) v``.

    ``T`` maps level ``a`` over ``ctx_in`` to level ``b`` over ``ctx_out``; only
    its left-module part (rows and columns of paths with the same source
    vertex) is used.  ``v`` has ``ctx_in.level_dim(k + a)`` rows.
    """
    ctx_out = ctx_in if ctx_out is None else ctx_out
    T = np.asarray(T)
    v = np.asarray(v)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    n_in = ctx_in.level_dim(k + a)
    if v.shape[0] != n_in:
        raise ShapeError(f"vector has {v.shape[0]} rows, level {k + a} has {n_in}")
    if T.shape != (ctx_out.level_dim(b), ctx_in.level_dim(a)):
        raise ShapeError(f"operator shape {T.shape} does not map level {a} to level {b}")
    out = np.zeros((ctx_out.level_dim(k + b), v.shape[1]), dtype=np.result_type(T, v, complex))
    if k == 0:
        # a single prefix per vertex: T acts as a module map on the whole level
        for u in range(ctx_in.s):
            rs, cs = ctx_out.from_vertex(b, u), ctx_in.from_vertex(a, u)
            out[rs] += T[rs, cs] @ v[cs]
        return out[:, 0] if squeeze else out
    ends = ctx_in.level(k).ends
    st_in = _prefix_starts(ctx_in, k, a)
    st_out = _prefix_starts(ctx_out, k, b)
    for u in range(ctx_in.s):
        P = np.nonzero(ends == u)[0]
        if len(P) == 0:
            continue
        cs, rs = ctx_in.from_vertex(a, u), ctx_out.from_vertex(b, u)
        n_c, n_r = cs.stop - cs.start, rs.stop - rs.start
        if n_r == 0 or n_c == 0:
            continue
        idx_in = st_in[P][:, None] + np.arange(n_c)
        idx_out = st_out[P][:, None] + np.arange(n_r)
        out[idx_out] = np.matmul(T[rs, cs], v[idx_in])
    return out[:, 0] if squeeze else out


def amplify_apply_right(Q, T, k: int, a: int, b: int, ctx_in: Context, ctx_out: Context | None = None):
    """Compute ``Q (I_{E^{(x)k}} (x) T)`` via the adjoint of :func:`amplify_apply`."""
    Q = np.asarray(Q)
    T = np.asarray(T)
    ctx_out = ctx_in if ctx_out is None else ctx_out
    res = amplify_apply(T.conj().T, Q.conj().T, k, b, a, ctx_out, ctx_in)
    return res.conj().T


def amplify(T, k: int, a: int, b: int, ctx_in: Context, ctx_out: Context | None = None,
            cap: int = DEFAULT_LEVEL_CAP):
    """Dense ``I_{E^{(x)k}} (x) T``; for small levels and tests."""
    ctx_out = ctx_in if ctx_out is None else ctx_out
    n = ctx_in.level_dim(k + a)
    if n * ctx_out.level_dim(k + b) > cap:
        raise LevelCapError(f"dense amplification at level {k} exceeds cap {cap}", k, cap)
    return amplify_apply(T, np.eye(n), k, a, b, ctx_in, ctx_out)


def module_map_defect(T, a: int, b: int, ctx_in: Context, ctx_out: Context | None = None) -> float:
    """Norm of the part of ``T`` that fails to commute with the left action.

    Zero exactly when ``T`` maps paths from ``u`` only to paths from ``u``.
    """
    ctx_out = ctx_in if ctx_out is None else ctx_out
    T = np.asarray(T)
    masked = T.copy()
    for u in range(ctx_in.s):
        masked[ctx_out.from_vertex(b, u), ctx_in.from_vertex(a, u)] = 0
    return op_norm(masked)


# ---------------------------------------------------------------------------
# points and commutant elements


@dataclass(frozen=True, eq=False)
class DualPoint:
    """Element of the sigma-dual: one block ``m[tgt(e)] x m[src(e)]`` per edge."""

    ctx: Context
    blocks: tuple

    def __post_init__(self):
        if len(self.blocks) != self.ctx.num_edges:
            raise ShapeError(f"expected {self.ctx.num_edges} edge blocks, got {len(self.blocks)}")
        for i, (Z, (u, v)) in enumerate(zip(self.blocks, self.ctx.edges)):
            if Z.shape != (self.ctx.m[v], self.ctx.m[u]):
                raise ShapeError(
                    f"edge {i} ({u}->{v}) needs a {self.ctx.m[v]}x{self.ctx.m[u]} block, "
                    f"got {Z.shape}")

    @classmethod
    def from_blocks(cls, ctx: Context, blocks) -> "DualPoint":
        return cls(ctx, tuple(np.atleast_2d(np.asarray(Z, dtype=complex)) for Z in blocks))

    @classmethod
    def zero(cls, ctx: Context) -> "DualPoint":
        return cls(ctx, tuple(np.zeros((ctx.m[v], ctx.m[u]), complex) for u, v in ctx.edges))

    @classmethod
    def from_matrix(cls, ctx: Context, M, tol: float = 1e-10) -> "DualPoint":
        M = np.asarray(M, dtype=complex)
        if M.shape != (ctx.dim_EH, ctx.m_tot):
            raise ShapeError(f"point matrix must be {ctx.dim_EH}x{ctx.m_tot}, got {M.shape}")
        leak = module_map_defect(M, 0, 1, ctx)
        if leak > tol:
            raise ShapeError(f"matrix does not intertwine the left action (leakage {leak:.3e})")
        off = ctx.offsets(1)
        blocks = [M[off[i]:off[i + 1], ctx.vertex_slice(u)] for i, (u, _) in enumerate(ctx.edges)]
        return cls(ctx, tuple(b.copy() for b in blocks))

    @cached_property
    def matrix(self) -> np.ndarray:
        """The column map ``H -> E (x) H``."""
        ctx = self.ctx
        M = np.zeros((ctx.dim_EH, ctx.m_tot), complex)
        off = ctx.offsets(1)
        for i, (u, _) in enumerate(ctx.edges):
            M[off[i]:off[i + 1], ctx.vertex_slice(u)] = self.blocks[i]
        return M

    @cached_property
    def norm(self) -> float:
        return op_norm(self.matrix)

    def is_central(self, tol: float = 1e-12) -> bool:
        """``(I_E (x) a) eta = eta a`` for every commutant ``a``."""
        for Z, (u, v) in zip(self.blocks, self.ctx.edges):
            if not np.any(Z):
                continue
            if u != v:
                return False
            if op_norm(Z - Z[0, 0] * np.eye(Z.shape[0])) > tol:
                return False
        return True


@dataclass(frozen=True, eq=False)
class CommutantElement:
    """Block-diagonal element of ``sigma(M)'``: one ``m[u] x m[u]`` block per vertex."""

    ctx: Context
    blocks: tuple

    def __post_init__(self):
        if len(self.blocks) != self.ctx.s:
            raise ShapeError(f"expected {self.ctx.s} vertex blocks, got {len(self.blocks)}")
        for u, A in enumerate(self.blocks):
            if A.shape != (self.ctx.m[u], self.ctx.m[u]):
                raise ShapeError(f"vertex {u} needs a {self.ctx.m[u]}-square block, got {A.shape}")

    @classmethod
    def from_blocks(cls, ctx, blocks) -> "CommutantElement":
        return cls(ctx, tuple(np.atleast_2d(np.asarray(A, dtype=complex)) for A in blocks))

    @classmethod
    def identity(cls, ctx) -> "CommutantElement":
        return cls(ctx, tuple(np.eye(mu, dtype=complex) for mu in ctx.m))

    @cached_property
    def matrix(self) -> np.ndarray:
        M = np.zeros((self.ctx.m_tot, self.ctx.m_tot), complex)
        for u, A in enumerate(self.blocks):
            sl = self.ctx.vertex_slice(u)
            M[sl, sl] = A
        return M

    @cached_property
    def norm(self) -> float:
        return max(op_norm(A) for A in self.blocks)

    def adjoint(self) -> "CommutantElement":
        return CommutantElement(self.ctx, tuple(A.conj().T for A in self.blocks))

    def is_central(self, tol: float = 1e-12) -> bool:
        return all(op_norm(A - A[0, 0] * np.eye(A.shape[0])) <= tol for A in self.blocks)


def commutant_leakage(ctx: Context, A) -> float:
    """Norm of the off-vertex blocks of an ``m_tot``-square matrix."""
    return module_map_defect(np.asarray(A), 0, 0, ctx)


def commutant_embed_check(ctx: Context, A, tol: float = 1e-8) -> CommutantElement:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.shape != (ctx.m_tot, ctx.m_tot):
        raise ShapeError(f"commutant element must be {ctx.m_tot}-square, got {A.shape}")
    leak = commutant_leakage(ctx, A)
    if leak > tol:
        raise CommutantError(f"matrix is not in the commutant: off-vertex norm {leak:.6g}", leak)
    return CommutantElement(ctx, tuple(A[ctx.vertex_slice(u), ctx.vertex_slice(u)].copy()
                                       for u in range(ctx.s)))


def validate_point(ctx: Context, zeta: DualPoint):
    """Return ``(||zeta||, ||zeta|| < 1)``."""
    if zeta.ctx.quiver is not ctx.quiver or zeta.ctx.m != ctx.m:
        raise ShapeError("point belongs to a different context")
    n = zeta.norm
    return n, bool(n < 1.0)


# ---------------------------------------------------------------------------
# powers and Cauchy kernels


@dataclass(frozen=True, eq=False)
class PointPower:
    """``eta^(k) : H -> E^{(x)k} (x) H`` as a dense matrix."""

    ctx: Context
    level: int
    matrix: np.ndarray

    def block(self, path, vertex: int | None = None) -> np.ndarray:
        """The block ``Z[e_k] ... Z[e_1]`` of the given path."""
        ctx = self.ctx
        if self.level == 0:
            sl = ctx.vertex_slice(vertex)
            return self.matrix[sl, sl]
        lev = ctx.level(self.level)
        i = lev.index(path)
        off = ctx.offsets(self.level)
        return self.matrix[off[i]:off[i + 1], ctx.vertex_slice(lev.sources[i])]

    @property
    def norm(self) -> float:
        return op_norm(self.matrix)


def point_power(zeta: DualPoint, k: int, cap: int = DEFAULT_LEVEL_CAP) -> PointPower:
    """``eta^(k+1) = (I_{E^{(x)k}} (x) eta) eta^(k)``, with ``eta^(0) = I_H``."""
    if k < 0:
        raise ValueError("power must be nonnegative")
    ctx = zeta.ctx
    ctx.check_cap(k, ctx.m_tot, cap)
    P = np.eye(ctx.m_tot, dtype=complex)
    for j in range(k):
        P = amplify_apply(zeta.matrix, P, j, 0, 1, ctx)
    return PointPower(ctx, k, P)


def _powers(zeta: DualPoint, K: int, cap: int = DEFAULT_LEVEL_CAP):
    ctx = zeta.ctx
    ctx.check_cap(K, ctx.m_tot, cap)
    P = np.eye(ctx.m_tot, dtype=complex)
    out = [P]
    for j in range(K):
        P = amplify_apply(zeta.matrix, P, j, 0, 1, ctx)
        out.append(P)
    return out


@dataclass(frozen=True, eq=False)
class CauchyKernel:
    """Truncated ``C(eta) = [I; eta; eta^(2); ...; eta^(K)]``."""

    ctx: Context
    levels: tuple
    tail_bound: float

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack(self.levels)


def cauchy_kernel(zeta: DualPoint, K: int, force: bool = False,
                  cap: int = DEFAULT_LEVEL_CAP) -> CauchyKernel:
    """Truncated Cauchy kernel with tail bound ``||eta||^(K+1) / (1 - ||eta||)``."""
    if K < 0:
        raise ValueError("truncation level must be nonnegative")
    n = zeta.norm
    if n >= 1.0:
        if not force:
            raise NotContractiveError(f"point norm {n:.6g} >= 1: no tail bound")
        tail = float("inf")
    else:
        tail = n ** (K + 1) / (1.0 - n)
    return CauchyKernel(zeta.ctx, tuple(_powers(zeta, K, cap)), tail)


# ---------------------------------------------------------------------------
# N-fold ampliation H^(N)


def stack_permutation(ctx: Context, N: int) -> np.ndarray:
    """Index map from vertex-grouped ``H^(N)`` to the ``N``-block ordering.

    ``x_grouped = x_blocks[perm]`` where the block ordering lists copy ``i``
    of ``H`` before copy ``i + 1`` and the grouped ordering lists vertex
    ``u`` (all copies) before vertex ``u + 1``.
    """
    perm = []
    for u in range(ctx.s):
        sl = ctx.vertex_slice(u)
        for i in range(N):
            perm.extend(i * ctx.m_tot + np.arange(sl.start, sl.stop))
    return np.array(perm, dtype=int)


def blockdiag_point(points: Sequence[DualPoint]) -> DualPoint:
    """``diag(zeta_1, ..., zeta_N)`` as a point over ``ctx.amplified(N)``."""
    ctx = points[0].ctx
    big = ctx.amplified(len(points))
    blocks = []
    for e, (u, v) in enumerate(ctx.edges):
        Z = np.zeros((big.m[v], big.m[u]), complex)
        for i, p in enumerate(points):
            Z[i * ctx.m[v]:(i + 1) * ctx.m[v], i * ctx.m[u]:(i + 1) * ctx.m[u]] = p.blocks[e]
        blocks.append(Z)
    return DualPoint(big, tuple(blocks))
