"""Maps on the commutant induced by point evaluation, and the central-case dictionary.

``phi_map`` realizes ``a -> <C(zeta), rho(phi(a)) rho(X) C(0)>``; on the ``T``
side this is ``(sum_r T_0r (I (x) a*) zeta^(r))*``.  The assignment
``X -> phi_map(X, zeta, .)`` reverses products.  ``psi_map`` is the pairing
with a constant, which collapses to ``a Lambda*``.

For central data (loop edges carrying scalar multiples of the identity,
vertex-scalar targets) the evaluation of ``X`` at ``zeta`` and the evaluation of
the tensor-algebra element with the same word coefficients at ``zeta*`` are
adjoint to each other; :func:`connection_check` verifies the resulting three
equivalent interpolation conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .correspondence import (
    DEFAULT_LEVEL_CAP,
    CommutantElement,
    Context,
    DualPoint,
    _powers,
    amplify_apply,
    cauchy_kernel,
)
from .errors import NonCentralError, NotContractiveError
from .linalg import DEFAULT_TOL, ToleranceConfig, op_norm
from .ncfunc import (
    NCPolynomial,
    SchurCoefficients,
    TruncatedSchurOperator,
    eval_point,
    generator_matrices,
    truncated_multiply,
)

__all__ = [
    "CbMapSample",
    "CentralData",
    "ConnectionReport",
    "phi_map",
    "phi_map_literal",
    "psi_map",
    "psi_map_literal",
    "antihom_check",
    "dual_eval",
    "dual_eval_literal",
    "central_data",
    "connection_check",
    "random_commutant",
]


def _schur(x) -> SchurCoefficients:
    return x.schur() if isinstance(x, NCPolynomial) else x


def _mat(a) -> np.ndarray:
    return a.matrix if isinstance(a, CommutantElement) else np.asarray(a, dtype=complex)


def _to_element(ctx: Context, M) -> CommutantElement:
    return CommutantElement(ctx, tuple(M[ctx.vertex_slice(u), ctx.vertex_slice(u)].copy()
                                       for u in range(ctx.s)))


def random_commutant(ctx: Context, rng: np.random.Generator) -> CommutantElement:
    return CommutantElement(ctx, tuple(rng.normal(size=(mu, mu)) + 1j * rng.normal(size=(mu, mu))
                                       for mu in ctx.m))


@dataclass(frozen=True)
class PhiValue:
    value: CommutantElement
    tail_bound: float

    @property
    def matrix(self):
        return self.value.matrix


def phi_map(X, zeta: DualPoint, a, cap: int = DEFAULT_LEVEL_CAP) -> PhiValue:
    """``Phi_X^zeta(a) = (sum_r T_0r (I_{E^{(x)r}} (x) a*) zeta^(r))*``.

    ``X`` is an :class:`NCPolynomial` (exact) or :class:`SchurCoefficients`
    (tail ``||a|| ||zeta||^(K+1)/(1-||zeta||)``).
    """
    co = _schur(X)
    n = zeta.norm
    if n >= 1.0:
        raise NotContractiveError(f"point norm {n:.6g} >= 1")
    A = _mat(a)
    astar = A.conj().T
    acc = np.zeros((co.ctx.m_tot, co.ctx.m_tot), complex)
    for r, (C, P) in enumerate(zip(co.coeffs, _powers(zeta, co.K, cap))):
        acc += C @ amplify_apply(astar, P, r, 0, 0, co.ctx)
    return PhiValue(_to_element(co.ctx, acc.conj().T), op_norm(A) * co.tail_bound(n))


def phi_map_literal(X, zeta: DualPoint, a, K: int | None = None) -> np.ndarray:
    """``C(zeta)* (I (x) a) T* C(0)`` on ``K`` dense Fock levels (oracle for small sizes)."""
    co = _schur(X)
    K = co.K if K is None else K
    op = TruncatedSchurOperator(co, K)
    G = generator_matrices(co.ctx, "left", _mat(a), K)
    C = cauchy_kernel(zeta, K).stacked
    m = co.ctx.m_tot
    return C.conj().T @ G @ op.matrix.conj().T[:, :m]


def psi_map(Lam, a) -> CommutantElement:
    """``Psi_Lambda(a) = a Lambda*``."""
    ctx = Lam.ctx if isinstance(Lam, CommutantElement) else a.ctx
    return _to_element(ctx, _mat(a) @ _mat(Lam).conj().T)


def psi_map_literal(Lam, zeta: DualPoint, a, K: int = 3) -> np.ndarray:
    """``<C(zeta), (I_F (x) a Lambda*) C(0)>`` assembled on ``K`` levels."""
    ctx = zeta.ctx
    G = generator_matrices(ctx, "left", _mat(a) @ _mat(Lam).conj().T, K)
    C = cauchy_kernel(zeta, K).stacked
    C0 = np.zeros_like(C)
    C0[:ctx.m_tot] = np.eye(ctx.m_tot)
    return C.conj().T @ G @ C0


@dataclass(frozen=True, eq=False)
class CbMapSample:
    """A linear map on the commutant, known through sample pairs ``(a, Phi(a))``."""

    samples: tuple

    def linearity_defect(self, rng: np.random.Generator, fn) -> float:
        """``||fn(x a + b) - x fn(a) - fn(b)||`` over consecutive sample pairs."""
        worst = 0.0
        for (a, fa), (b, fb) in zip(self.samples, self.samples[1:]):
            x = complex(rng.normal(), rng.normal())
            comb = x * _mat(a) + _mat(b)
            worst = max(worst, op_norm(_mat(fn(comb)) - x * _mat(fa) - _mat(fb)))
        return worst


def antihom_check(p: NCPolynomial, q: NCPolynomial, zeta: DualPoint, sample_size: int = 20,
                  rng: np.random.Generator | None = None) -> float:
    """``max_a ||Phi_{pq}(a) - Phi_q(Phi_p(a))||`` over random commutant ``a``."""
    rng = np.random.default_rng() if rng is None else rng
    pq = truncated_multiply(p, q)
    worst = 0.0
    for _ in range(sample_size):
        a = random_commutant(p.ctx, rng)
        lhs = phi_map(pq, zeta, a).matrix
        rhs = phi_map(q, zeta, phi_map(p, zeta, a).value).matrix
        worst = max(worst, op_norm(lhs - rhs) / (1.0 + op_norm(a.matrix)))
    return worst


# ---------------------------------------------------------------------------
# evaluation on the tensor-algebra side


def _words(Y, tol: float) -> dict:
    if isinstance(Y, dict):
        return {tuple(w): complex(c) for w, c in Y.items()}
    try:
        return Y.words(tol)
    except ValueError as exc:
        raise NonCentralError(f"coefficients are not scalar: {exc}") from exc


def dual_eval(Y, zeta: DualPoint, tol: float = 1e-9) -> CommutantElement:
    """``Y^(zeta*) = sum_w c_w (zeta^(k) at path w)*``; scalar case ``sum c_r conj(z)^r``.

    ``Y`` is an :class:`NCPolynomial` whose words (or a ``{word: c}`` dict)
    give the scalar coefficients of the tensor-algebra element.
    """
    ctx = zeta.ctx
    if zeta.norm >= 1.0:
        raise NotContractiveError(f"point norm {zeta.norm:.6g} >= 1")
    words = _words(Y, tol)
    out = np.zeros((ctx.m_tot, ctx.m_tot), complex)
    for w, c in words.items():
        if not w:
            out += c * np.eye(ctx.m_tot)
            continue
        M = np.eye(ctx.m_tot, dtype=complex)
        # (Z[w_k] ... Z[w_1])* = Z[w_1]* ... Z[w_k]*
        for e in w:
            u, v = ctx.edges[e]
            if u != v:
                raise NonCentralError(f"letter {e} is not a loop")
            step = np.zeros_like(M)
            sl = ctx.vertex_slice(u)
            step[sl, sl] = zeta.blocks[e].conj().T
            M = M @ step
        out += c * M
    return _to_element(ctx, out)


def dual_eval_literal(Y, zeta: DualPoint, tol: float = 1e-9) -> np.ndarray:
    """``C(zeta)* (Y (x) I_H) C(0)`` with the exact (finite) kernel."""
    ctx = zeta.ctx
    words = _words(Y, tol)
    K = max([len(w) for w in words] + [0])
    P = _powers(zeta, K)
    out = np.zeros((ctx.m_tot, ctx.m_tot), complex)
    for w, c in words.items():
        k = len(w)
        col = np.zeros((ctx.level_dim(k), ctx.m_tot), complex)
        if k == 0:
            col[:] = c * np.eye(ctx.m_tot)
        else:
            lev = ctx.level(k)
            i = lev.index(w)
            off = ctx.offsets(k)
            col[off[i]:off[i + 1], ctx.vertex_slice(lev.ends[i])] = c * np.eye(ctx.m[lev.ends[i]])
        out += P[k].conj().T @ col
    return out


# ---------------------------------------------------------------------------
# central data


@dataclass(frozen=True, eq=False)
class CentralData:
    """Per-edge scalars ``z[i][e]`` and per-vertex scalars ``lam[i][u]`` for each point."""

    ctx: Context
    z: np.ndarray
    lam: np.ndarray

    @property
    def N(self) -> int:
        return len(self.z)

    def points(self) -> list:
        ctx = self.ctx
        return [DualPoint.from_blocks(ctx, [zi[e] * np.eye(ctx.m[u]) if u == v else
                                            np.zeros((ctx.m[v], ctx.m[u]))
                                            for e, (u, v) in enumerate(ctx.edges)])
                for zi in self.z]

    def targets(self) -> list:
        return [CommutantElement.from_blocks(self.ctx, [li[u] * np.eye(mu) for u, mu in enumerate(self.ctx.m)])
                for li in self.lam]


def central_data(ctx: Context, points: Sequence[DualPoint], targets: Sequence[CommutantElement],
                 tol: float = 1e-10) -> CentralData:
    """Extract the scalar coordinates of central data or raise :class:`NonCentralError`."""
    z = np.zeros((len(points), ctx.num_edges), complex)
    lam = np.zeros((len(targets), ctx.s), complex)
    for i, p in enumerate(points):
        if not p.is_central(tol):
            raise NonCentralError(f"point {i} is not central")
        for e, (u, v) in enumerate(ctx.edges):
            if u == v:
                z[i, e] = p.blocks[e][0, 0]
    for i, t in enumerate(targets):
        if not t.is_central(tol):
            raise NonCentralError(f"target {i} is not a vertex scalar")
        lam[i] = [B[0, 0] for B in t.blocks]
    return CentralData(ctx, z, lam)


@dataclass(frozen=True)
class ConnectionReport:
    """Residuals of the three equivalent conditions.

    dual: ``||Y^(zeta_i*) - Lambda_i*||``; point: ``||X^(zeta_i) - Lambda_i||``;
    maps: ``||Phi_X(a) - Psi_Lambda(a)||`` over sampled ``a`` (relative to
    ``1 + ||a||``).  ``tail`` bounds the truncation error of each.
    """

    dual: float
    point: float
    maps: float
    tail: float

    def holds(self, tol: float = 1e-8) -> tuple:
        lim = self.tail + tol
        return (self.dual <= lim, self.point <= lim, self.maps <= lim)

    def consistent(self, tol: float = 1e-8) -> bool:
        """All three conditions agree (all hold or all fail)."""
        h = self.holds(tol)
        return all(h) or not any(h)


def connection_check(data: CentralData, X, samples: int = 10,
                     rng: np.random.Generator | None = None,
                     tol: ToleranceConfig = DEFAULT_TOL) -> ConnectionReport:
    """Evaluate the three interpolation conditions for ``X`` and ``Y = Gamma^{-1}(X)``.

    ``Gamma`` is the identity on word coefficients, so ``Y`` is read off the
    scalar blocks of ``X``.
    """
    rng = np.random.default_rng() if rng is None else rng
    co = _schur(X)
    ctx = data.ctx
    words = _scalar_words(co, 1e3 * tol.residual_tol)
    pts, tgts = data.points(), data.targets()
    r_dual = r_point = r_maps = tail = 0.0
    for z, lam in zip(pts, tgts):
        r_dual = max(r_dual, op_norm(dual_eval(words, z).matrix - lam.matrix.conj().T))
        pv = eval_point(co, z, tol)
        tail = max(tail, pv.tail_bound)
        r_point = max(r_point, op_norm(pv.matrix - lam.matrix))
        for _ in range(samples):
            a = random_commutant(ctx, rng)
            d = phi_map(co, z, a).matrix - psi_map(lam, a).matrix
            r_maps = max(r_maps, op_norm(d) / (1.0 + op_norm(a.matrix)))
    return ConnectionReport(r_dual, r_point, r_maps, tail)


def _scalar_words(co: SchurCoefficients, tol: float) -> dict:
    poly = NCPolynomial(co.ctx, co.coeffs)
    try:
        return poly.words(tol)
    except ValueError as exc:
        raise NonCentralError(f"interpolant coefficients are not scalar: {exc}") from exc
