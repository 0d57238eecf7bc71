"""The interpolant as a noncommutative function.

A Schur-class operator ``T`` on the truncated Fock space is block upper
triangular with ``T_ij = I_{E^{(x)i}} (x) T_{0,j-i}``; it is determined by its
top row of coefficients ``T_0j`` (level ``j`` to level 0).  Point evaluation
is ``T(eta) = sum_r T_0r eta^(r)``.

All computations are on the ``T`` side.  An element ``X`` of the tensor
algebra corresponds to ``T = rho(X)*``, so the ``X``-side product ``p q``
has ``T_{pq} = T_q T_p`` and the ``X``-side coefficient ``c`` of a word
appears as ``conj(c)`` in ``T``.  Free-case words are stored as paths in
reversed order: ``W_1 W_2`` lives at path ``(2, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .correspondence import (
    DEFAULT_LEVEL_CAP,
    CommutantElement,
    Context,
    DualPoint,
    _powers,
    amplify,
    amplify_apply,
    amplify_apply_right,
    commutant_leakage,
)
from .errors import CommutantError, LevelCapError, NotContractiveError, ShapeError
from .linalg import DEFAULT_TOL, ToleranceConfig, op_norm

__all__ = [
    "SchurCoefficients",
    "TruncatedSchurOperator",
    "NCPolynomial",
    "PointValue",
    "coefficients_from_colligation",
    "eval_point",
    "schur_truncate_and_norm",
    "cauchy_intertwine_check",
    "generator_matrices",
    "commutation_check",
    "truncated_multiply",
]


@dataclass(frozen=True, eq=False)
class SchurCoefficients:
    """Top-row coefficients ``T_0j : E^{(x)j} (x) H -> H`` for ``j = 0..K``.

    ``tail_scale`` bounds ``sup_j ||T_0j||`` beyond ``K``: 1 for coefficients
    of a contraction, 0 for a polynomial (no tail).
    """

    ctx: Context
    coeffs: tuple
    tail_scale: float = 1.0

    def __post_init__(self):
        for j, C in enumerate(self.coeffs):
            if C.shape != (self.ctx.m_tot, self.ctx.level_dim(j)):
                raise ShapeError(f"coefficient {j} must be {self.ctx.m_tot}x"
                                 f"{self.ctx.level_dim(j)}, got {C.shape}")

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    def tail_bound(self, norm: float) -> float:
        if self.tail_scale == 0:
            return 0.0
        if norm >= 1.0:
            return float("inf")
        return self.tail_scale * norm ** (self.K + 1) / (1.0 - norm)

    def path_block(self, path, vertex: int | None = None) -> np.ndarray:
        """``F_p``: the part of ``T_0j`` acting on the path component ``p``."""
        ctx = self.ctx
        if len(path) == 0:
            sl = ctx.vertex_slice(vertex)
            return self.coeffs[0][sl, sl]
        lev = ctx.level(len(path))
        i = lev.index(path)
        off = ctx.offsets(len(path))
        return self.coeffs[len(path)][ctx.vertex_slice(lev.sources[i]), off[i]:off[i + 1]]

    def norms(self) -> list:
        return [op_norm(C) for C in self.coeffs]

    def intertwining_defect(self) -> float:
        """Largest part of any ``T_0j`` mapping a path from ``u`` outside ``H_u``."""
        from .correspondence import module_map_defect
        return max(module_map_defect(C, j, 0, self.ctx) for j, C in enumerate(self.coeffs))


def coefficients_from_colligation(coll, K: int, cap: int = DEFAULT_LEVEL_CAP) -> SchurCoefficients:
    """``T_00 = W``, ``T_0j = Q_j (I_{E^{(x)j}} (x) Z)`` with ``Q_1 = Y``,
    ``Q_{k+1} = Q_k (I_{E^{(x)k}} (x) X)``."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    ctx, big = coll.ctx, coll.big
    ctx.check_cap(K, ctx.m_tot, cap, what="coefficient level")
    big.check_cap(K, ctx.m_tot, cap, what="coefficient level")
    out = [coll.W.copy()]
    Q = coll.Y
    for j in range(1, K + 1):
        out.append(amplify_apply_right(Q, coll.Z, j, 0, 0, ctx, big))
        if j < K:
            Q = amplify_apply_right(Q, coll.X, j, 1, 0, big, big)
    return SchurCoefficients(ctx, tuple(out), 1.0)


@dataclass(frozen=True, eq=False)
class PointValue:
    value: CommutantElement
    tail_bound: float

    @property
    def matrix(self) -> np.ndarray:
        return self.value.matrix


def _evaluate(coeffs: SchurCoefficients, powers) -> np.ndarray:
    return sum(C @ P for C, P in zip(coeffs.coeffs, powers))


def eval_point(coeffs: SchurCoefficients, zeta: DualPoint,
               tol: ToleranceConfig = DEFAULT_TOL, cap: int = DEFAULT_LEVEL_CAP) -> PointValue:
    """``sum_{r<=K} T_0r zeta^(r)`` with tail bound ``||zeta||^(K+1)/(1-||zeta||)``."""
    n = zeta.norm
    if n >= 1.0:
        raise NotContractiveError(f"point norm {n:.6g} >= 1")
    F = _evaluate(coeffs, _powers(zeta, coeffs.K, cap))
    leak = commutant_leakage(coeffs.ctx, F)
    if leak > tol.residual_tol * (1.0 + op_norm(F)):
        raise CommutantError(f"point value leaves the commutant by {leak:.3e}", leak)
    blocks = tuple(F[coeffs.ctx.vertex_slice(u), coeffs.ctx.vertex_slice(u)].copy()
                   for u in range(coeffs.ctx.s))
    return PointValue(CommutantElement(coeffs.ctx, blocks), coeffs.tail_bound(n))


@dataclass(frozen=True, eq=False)
class TruncatedSchurOperator:
    """Levels ``0..K`` of ``T``; ``T_ij = I_{E^{(x)i}} (x) T_{0,j-i}``."""

    coeffs: SchurCoefficients
    K: int
    cap: int = DEFAULT_LEVEL_CAP
    _dense: list = field(default_factory=list, repr=False)

    @property
    def ctx(self) -> Context:
        return self.coeffs.ctx

    @property
    def offsets(self) -> np.ndarray:
        dims = [self.ctx.level_dim(k) for k in range(self.K + 1)]
        return np.concatenate([[0], np.cumsum(dims)]).astype(int)

    @property
    def matrix(self) -> np.ndarray:
        if not self._dense:
            off = self.offsets
            n = int(off[-1])
            if n * n > self.cap:
                raise LevelCapError(f"dense operator on {self.K} levels needs {n * n} entries, "
                                    f"above the cap of {self.cap}", self.K, self.cap)
            M = np.zeros((n, n), complex)
            for i in range(self.K + 1):
                for j in range(i, min(self.K, i + self.coeffs.K) + 1):
                    C = self.coeffs.coeffs[j - i]
                    # the top row is stored verbatim so that defects stay visible
                    M[off[i]:off[i + 1], off[j]:off[j + 1]] = C if i == 0 else amplify(
                        C, i, j - i, 0, self.ctx, cap=self.cap)
            self._dense.append(M)
        return self._dense[0]

    def apply(self, inputs: Sequence) -> list:
        """``y_i = sum_{j>=i} (I_{E^{(x)i}} (x) T_{0,j-i}) u_j`` without forming ``T``."""
        if len(inputs) != self.K + 1:
            raise ShapeError(f"need {self.K + 1} input levels, got {len(inputs)}")
        out = []
        for i in range(self.K + 1):
            acc = 0
            for j in range(i, min(self.K, i + self.coeffs.K) + 1):
                C, u = self.coeffs.coeffs[j - i], np.asarray(inputs[j])
                acc = acc + (C @ u if i == 0 else amplify_apply(C, u, i, j - i, 0, self.ctx))
            out.append(acc)
        return out

    def norm(self) -> float:
        return op_norm(self.matrix)


def schur_truncate_and_norm(coeffs: SchurCoefficients, K: int | None = None,
                            cap: int = DEFAULT_LEVEL_CAP):
    """Assemble levels ``0..K`` (default: all available) and return ``(operator, norm)``."""
    K = coeffs.K if K is None else K
    op = TruncatedSchurOperator(coeffs, K, cap)
    return op, op.norm()


@dataclass(frozen=True)
class IntertwineResult:
    residual: float
    bound: float
    per_level: tuple

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound


def cauchy_intertwine_check(coeffs: SchurCoefficients, zeta: DualPoint, K: int | None = None,
                            tol: ToleranceConfig = DEFAULT_TOL,
                            cap: int = DEFAULT_LEVEL_CAP) -> IntertwineResult:
    """Compare level ``k`` of ``T C(zeta)`` with ``(I (x) T(zeta)) zeta^(k)`` for ``k <= K``.

    Both sides are built from the available coefficients; each misses at most
    ``||zeta||^(Kc+1)/(1-||zeta||)`` (times ``||zeta||^k`` on the right), which
    together with ``residual_tol`` is the certified bound.
    """
    n = zeta.norm
    if n >= 1.0:
        raise NotContractiveError(f"point norm {n:.6g} >= 1")
    Kc = coeffs.K
    K = Kc if K is None else min(K, Kc)
    ctx = coeffs.ctx
    P = _powers(zeta, Kc, cap)
    value = _evaluate(coeffs, P)
    res, worst_bound = [], 0.0
    for k in range(K + 1):
        lhs = sum(amplify_apply(coeffs.coeffs[r], P[k + r], k, r, 0, ctx)
                  for r in range(Kc - k + 1))
        rhs = amplify_apply(value, P[k], k, 0, 0, ctx)
        res.append(op_norm(lhs - rhs))
        worst_bound = max(worst_bound, coeffs.tail_bound(n) * (1.0 + n ** k))
    return IntertwineResult(max(res), worst_bound + tol.residual_tol, tuple(res))


# ---------------------------------------------------------------------------
# generators of the two representations on the truncated Fock space


def _blank(ctx: Context, K: int, cap: int):
    off = np.concatenate([[0], np.cumsum([ctx.level_dim(k) for k in range(K + 1)])]).astype(int)
    n = int(off[-1])
    if n * n > cap:
        raise LevelCapError(f"generator on {K} levels needs {n * n} entries", K, cap)
    return np.zeros((n, n), complex), off


def generator_matrices(ctx: Context, kind: str, element, K: int,
                       cap: int = DEFAULT_LEVEL_CAP) -> np.ndarray:
    """Levels ``0..K`` of one generator.

    kind:
      ``"creation"``: ``rho(T_eta)``, subdiagonal ``I_{E^{(x)k}} (x) eta`` (element a DualPoint);
      ``"left"``: ``rho(phi(a)) = I (x) a`` (element a CommutantElement or matrix);
      ``"induced_creation"``: ``T_xi (x) I_H`` (element: one scalar per edge), which
      prepends edge ``e`` with weight ``xi_e``;
      ``"induced_left"``: ``phi_inf(b) (x) I_H`` (element: one scalar per vertex),
      which scales a path by ``b`` at its source.
    """
    M, off = _blank(ctx, K, cap)
    if kind == "creation":
        if not isinstance(element, DualPoint):
            element = DualPoint.from_blocks(ctx, element)
        for k in range(K):
            M[off[k + 1]:off[k + 2], off[k]:off[k + 1]] = amplify(element.matrix, k, 0, 1, ctx, cap=cap)
    elif kind == "left":
        a = element.matrix if isinstance(element, CommutantElement) else np.asarray(element, complex)
        if a.shape != (ctx.m_tot, ctx.m_tot):
            raise ShapeError(f"left action needs an {ctx.m_tot}-square matrix")
        for k in range(K + 1):
            M[off[k]:off[k + 1], off[k]:off[k + 1]] = amplify(a, k, 0, 0, ctx, cap=cap)
    elif kind == "induced_creation":
        xi = np.asarray(element, dtype=complex).ravel()
        if xi.shape != (ctx.num_edges,):
            raise ShapeError(f"xi needs one entry per edge ({ctx.num_edges})")
        tgt = ctx.quiver.edge_target
        for k in range(K):
            lo, hi = ctx.level(k), ctx.level(k + 1)
            o_lo, o_hi = ctx.offsets(k), ctx.offsets(k + 1)
            for i in range(len(lo)):
                src = lo.sources[i]
                mu = ctx.m[lo.ends[i]]
                for e in np.nonzero(tgt == src)[0]:
                    if xi[e] == 0:
                        continue
                    j = hi.index((int(e),) + lo.paths[i]) if k > 0 else hi.index((int(e),))
                    M[off[k + 1] + o_hi[j]:off[k + 1] + o_hi[j] + mu,
                      off[k] + o_lo[i]:off[k] + o_lo[i] + mu] = xi[e] * np.eye(mu)
    elif kind == "induced_left":
        b = np.asarray(element, dtype=complex).ravel()
        if b.shape != (ctx.s,):
            raise ShapeError(f"b needs one entry per vertex ({ctx.s})")
        diag = np.concatenate([np.repeat(b[ctx.level(k).sources], ctx.sizes(k))
                               for k in range(K + 1)])
        M[np.diag_indices_from(M)] = diag
    else:
        raise ValueError(f"unknown generator kind {kind!r}")
    return M


@dataclass(frozen=True)
class CommutationReport:
    shift_residual: float
    left_residual: float
    window: int

    @property
    def max_residual(self) -> float:
        return max(self.shift_residual, self.left_residual)


def commutation_check(op: TruncatedSchurOperator, xis: Sequence = (), bs: Sequence = ()) -> CommutationReport:
    """Norms of ``[T*, T_xi (x) I]`` and ``[T*, phi_inf(b) (x) I]`` on the safe window.

    The prepend generator raises the level by one, so its commutator with the
    truncation is exact only on columns at levels ``<= K - 1``; the
    left-action generator is block diagonal and is tested on all levels.
    """
    ctx, K = op.ctx, op.K
    if xis and K < 1:
        raise ValueError("the truncation-safe window is empty; need K >= 1")
    Ts = op.matrix.conj().T
    window = int(op.offsets[K])
    shift = 0.0
    for xi in xis:
        G = generator_matrices(ctx, "induced_creation", xi, K, op.cap)
        C = Ts @ G - G @ Ts
        shift = max(shift, op_norm(C[:, :window]))
    left = 0.0
    for b in bs:
        G = generator_matrices(ctx, "induced_left", b, K, op.cap)
        left = max(left, op_norm(Ts @ G - G @ Ts))
    return CommutationReport(shift, left, K - 1)


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True, eq=False)
class NCPolynomial:
    """Finite element of the tensor algebra, stored by its ``T``-side coefficients.

    ``coeffs[j]`` is ``T_0j``; the polynomial has degree ``len(coeffs) - 1``.
    """

    ctx: Context
    coeffs: tuple

    def __post_init__(self):
        SchurCoefficients(self.ctx, self.coeffs, 0.0)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def schur(self) -> SchurCoefficients:
        return SchurCoefficients(self.ctx, self.coeffs, 0.0)

    @classmethod
    def zero(cls, ctx: Context) -> "NCPolynomial":
        return cls(ctx, (np.zeros((ctx.m_tot, ctx.m_tot), complex),))

    @classmethod
    def unit(cls, ctx: Context) -> "NCPolynomial":
        return cls(ctx, (np.eye(ctx.m_tot, dtype=complex),))

    @classmethod
    def from_paths(cls, ctx: Context, terms: Mapping, constant=None) -> "NCPolynomial":
        """``T``-side blocks: ``terms[path]`` is ``m[src] x m[end]``; ``constant`` is ``T_00``."""
        deg = max([len(p) for p in terms] + [0])
        coeffs = [np.zeros((ctx.m_tot, ctx.level_dim(j)), complex) for j in range(deg + 1)]
        if constant is not None:
            c = constant.matrix if isinstance(constant, CommutantElement) else np.asarray(constant, complex)
            leak = commutant_leakage(ctx, c)
            if leak > 0:
                raise CommutantError("constant term must lie in the commutant", leak)
            coeffs[0] = c.copy()
        for path, block in terms.items():
            path = tuple(int(e) for e in path)
            if not path:
                raise ShapeError("use `constant` for the degree-0 term")
            lev = ctx.level(len(path))
            i = lev.index(path)
            off = ctx.offsets(len(path))
            rows = ctx.vertex_slice(lev.sources[i])
            block = np.atleast_2d(np.asarray(block, dtype=complex))
            if block.shape != (rows.stop - rows.start, off[i + 1] - off[i]):
                raise ShapeError(f"block for path {path} has shape {block.shape}")
            coeffs[len(path)][rows, off[i]:off[i + 1]] += block
        return cls(ctx, tuple(coeffs))

    @classmethod
    def from_words(cls, ctx: Context, words: Mapping, constant: complex = 0.0) -> "NCPolynomial":
        """``X = constant + sum_w c_w W_{w_1} ... W_{w_k}`` with scalar coefficients.

        Letters are edge indices and must be loops (always true in the free case).
        """
        terms = {}
        for w, c in words.items():
            w = tuple(int(e) for e in w)
            for e in w:
                u, v = ctx.edges[e]
                if u != v:
                    raise ShapeError(f"letter {e} is not a loop; use from_paths")
            path = tuple(reversed(w))
            mu = ctx.m[ctx.edges[path[-1]][1]]
            terms[path] = terms.get(path, 0) + np.conj(c) * np.eye(mu)
        return cls.from_paths(ctx, terms, np.conj(constant) * np.eye(ctx.m_tot))

    def words(self, tol: float = 1e-12) -> dict:
        """``X``-side scalar coefficients by word (inverse of :meth:`from_words`).

        Raises ``ValueError`` if some block is not a multiple of the identity.
        """
        ctx = self.ctx
        out = {}
        c0 = self.coeffs[0]
        if op_norm(c0 - c0[0, 0] * np.eye(ctx.m_tot)) > tol:
            raise ValueError("constant term is not scalar")
        if c0[0, 0] != 0:
            out[()] = complex(np.conj(c0[0, 0]))
        sc = self.schur()
        for j in range(1, self.degree + 1):
            for path in ctx.level(j).paths:
                B = sc.path_block(path)
                if B.shape[0] != B.shape[1] or op_norm(B - B[0, 0] * np.eye(B.shape[0])) > tol:
                    raise ValueError(f"block at path {path} is not scalar")
                if B[0, 0] != 0:
                    out[tuple(reversed(path))] = complex(np.conj(B[0, 0]))
        return out

    def __add__(self, other: "NCPolynomial") -> "NCPolynomial":
        n = max(self.degree, other.degree) + 1
        coeffs = []
        for j in range(n):
            a = self.coeffs[j] if j <= self.degree else 0
            b = other.coeffs[j] if j <= other.degree else 0
            coeffs.append(a + b + np.zeros((self.ctx.m_tot, self.ctx.level_dim(j)), complex))
        return NCPolynomial(self.ctx, tuple(coeffs))

    def scale(self, lam: complex) -> "NCPolynomial":
        """``lam * X``; stored coefficients scale by ``conj(lam)``."""
        return NCPolynomial(self.ctx, tuple(np.conj(lam) * C for C in self.coeffs))


def truncated_multiply(p: NCPolynomial, q: NCPolynomial, K: int | None = None,
                       cap: int = DEFAULT_LEVEL_CAP) -> NCPolynomial:
    """``X``-side product ``p q`` up to degree ``K`` (default: exact).

    On the ``T`` side this is ``T_q T_p``, whose top row is
    ``sum_k q_k (I_{E^{(x)k}} (x) p_{j-k})``.
    """
    ctx = p.ctx
    K = p.degree + q.degree if K is None else K
    ctx.check_cap(K, ctx.m_tot, cap, what="product degree")
    out = []
    for j in range(K + 1):
        acc = np.zeros((ctx.m_tot, ctx.level_dim(j)), complex)
        for k in range(max(0, j - p.degree), min(j, q.degree) + 1):
            acc += amplify_apply_right(q.coeffs[k], p.coeffs[j - k], k, j - k, 0, ctx)
        out.append(acc)
    return NCPolynomial(ctx, tuple(out))
