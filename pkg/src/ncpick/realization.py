"""Constructive interpolation: Douglas factorization and the colligation.

Given a PSD Pick matrix ``A = L L*`` the displacement equation reads
``Ahat* Ahat = Bhat* Bhat`` with

    Ahat = [L*; V*],    Bhat = [(I_E (x) L*) zeta; U*].

The unique partial isometry ``Omega`` with ``Omega Bhat = Ahat`` and initial
space inside ``closure(range Bhat)`` splits as ``[[X, Z], [Y, W]]``; the
anti-causal system driven by ``I (x) Omega`` has the interpolant as transfer
map.

Internally ``H^(N)`` is ordered vertex by vertex (see
:func:`~ncpick.correspondence.stack_permutation`) so that ``H^(N)`` is just
``H`` over the amplified context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correspondence import (
    Context,
    DualPoint,
    amplify_apply,
    blockdiag_point,
    commutant_leakage,
    module_map_defect,
    stack_permutation,
)
from .errors import InfeasibleError, ResidualError, ShapeError
from .linalg import DEFAULT_TOL, ToleranceConfig, op_norm, pinv, psd_sqrt_factor, svd
from .pick import PickMatrix, ProblemData, feasibility, pick_matrix

__all__ = [
    "HatPair",
    "Colligation",
    "SimulationResult",
    "assemble_hats",
    "douglas_factor",
    "split_and_verify",
    "synthesize",
    "simulate_system",
    "transfer_eval",
    "system_residuals",
    "colligation_residuals",
    "random_colligation",
    "POLAR_BAND",
]

# singular values of Ahat Bhat^+ are moved to 1 (polar correction); a larger
# deviation than this means the factorization is too ill-conditioned to trust
POLAR_BAND = 1e-6


@dataclass(frozen=True, eq=False)
class HatPair:
    ctx: Context
    N: int
    A_hat: np.ndarray
    B_hat: np.ndarray
    L: np.ndarray           # vertex-grouped ordering of H^(N)
    U_star: np.ndarray
    V_star: np.ndarray
    zeta: DualPoint         # diag(zeta_1, ..., zeta_N) over ctx.amplified(N)
    residual: float


def _grouped(M: np.ndarray, perm: np.ndarray) -> np.ndarray:
    return M[np.ix_(perm, perm)]


def assemble_hats(L, problem: ProblemData) -> HatPair:
    """Build ``Ahat`` and ``Bhat`` from a factor ``L`` of the Pick matrix.

    ``L`` is given in ``N``-block ordering (the same as
    :attr:`PickMatrix.matrix`).
    """
    ctx, N = problem.ctx, problem.N
    big = ctx.amplified(N)
    L = np.asarray(L, dtype=complex)
    if L.shape != (N * ctx.m_tot, N * ctx.m_tot):
        raise ShapeError(f"factor must be {N * ctx.m_tot}-square, got {L.shape}")
    perm = stack_permutation(ctx, N)
    Lg = _grouped(L, perm)
    leak = commutant_leakage(big, Lg)
    if leak > problem.tol.residual_tol:
        raise ResidualError(f"factor leaves the commutant by {leak:.3e}", {"leakage": leak})
    U_star = np.zeros((ctx.m_tot, big.m_tot), complex)
    V_star = np.zeros((ctx.m_tot, big.m_tot), complex)
    for u in range(ctx.s):
        mu, rows, cols = ctx.m[u], ctx.vertex_slice(u), big.vertex_slice(u)
        for i in range(N):
            c = slice(cols.start + i * mu, cols.start + (i + 1) * mu)
            U_star[rows, c] = np.eye(mu)
            V_star[rows, c] = problem.targets[i].blocks[u]
    zeta = blockdiag_point(problem.points)
    Lstar = Lg.conj().T
    A_hat = np.vstack([Lstar, V_star])
    B_hat = np.vstack([amplify_apply(Lstar, zeta.matrix, 1, 0, 0, big), U_star])
    res = op_norm(A_hat.conj().T @ A_hat - B_hat.conj().T @ B_hat)
    if res > problem.tol.residual_tol * (1.0 + op_norm(A_hat) ** 2):
        raise ResidualError(
            f"||Ahat*Ahat - Bhat*Bhat|| = {res:.3e}: factor does not solve the "
            "displacement equation", {"hat": res})
    return HatPair(ctx, N, A_hat, B_hat, Lg, U_star, V_star, zeta, res)


def douglas_factor(hats: HatPair, tol: ToleranceConfig = DEFAULT_TOL):
    """Partial isometry ``Omega`` with ``Omega Bhat = Ahat``.

    ``Omega_0 = Ahat Bhat^+`` is isometric on ``range(Bhat)`` up to rounding;
    its polar factor is taken (nonzero singular values set to 1) and the
    result is compressed to ``range(Bhat)``.  Returns ``(Omega, report)``.
    """
    A_hat, B_hat = hats.A_hat, hats.B_hat
    Bp = pinv(B_hat, tol)
    proj = B_hat @ Bp
    omega0 = A_hat @ Bp
    U, s, Vh = svd(omega0)
    keep = s > 0.5
    rank_b = int(np.linalg.matrix_rank(B_hat, tol=None)) if B_hat.size else 0
    deviation = float(np.max(np.abs(s[keep] - 1.0))) if np.any(keep) else 0.0
    dropped = float(np.max(s[~keep])) if np.any(~keep) else 0.0
    omega = U[:, keep] @ Vh[keep]
    omega = omega @ proj
    report = {
        "polar_deviation": deviation,
        "dropped_singular_value": dropped,
        "rank": int(np.count_nonzero(keep)),
        "rank_B_hat": rank_b,
    }
    report.update(colligation_residuals(omega, A_hat, B_hat, proj))
    if deviation > POLAR_BAND or dropped > POLAR_BAND:
        raise ResidualError(
            f"Ahat Bhat^+ is not a partial isometry to {POLAR_BAND:g} "
            f"(deviation {deviation:.3e}, dropped {dropped:.3e}); Pick data too "
            "ill-conditioned", report)
    for key in ("partial_isometry", "douglas", "range"):
        if report[key] > tol.residual_tol:
            raise ResidualError(f"{key} residual {report[key]:.3e} above tolerance", report)
    return omega, report


def colligation_residuals(omega, A_hat, B_hat, proj=None) -> dict:
    if proj is None:
        proj = B_hat @ pinv(B_hat)
    P = omega.conj().T @ omega
    return {
        "partial_isometry": op_norm(P @ P - P),
        "douglas": op_norm(omega @ B_hat - A_hat) / (1.0 + op_norm(A_hat)),
        "range": op_norm(omega - omega @ proj),
        "norm": op_norm(omega),
    }


@dataclass(frozen=True, eq=False)
class Colligation:
    """``Omega = [[X, Z], [Y, W]]`` from ``(E (x) H^(N)) + H`` to ``H^(N) + H``."""

    ctx: Context
    N: int
    omega: np.ndarray
    residuals: dict = field(default_factory=dict)
    hats: HatPair | None = field(default=None, repr=False)
    pick: PickMatrix | None = field(default=None, repr=False)

    def __post_init__(self):
        big = self.ctx.amplified(self.N)
        shape = (big.m_tot + self.ctx.m_tot, big.dim_EH + self.ctx.m_tot)
        if self.omega.shape != shape:
            raise ShapeError(f"colligation must have shape {shape}, got {self.omega.shape}")

    @property
    def big(self) -> Context:
        return self.ctx.amplified(self.N)

    @property
    def _r(self):
        return self.big.m_tot

    @property
    def _c(self):
        return self.big.dim_EH

    @property
    def X(self):
        return self.omega[:self._r, :self._c]

    @property
    def Z(self):
        return self.omega[:self._r, self._c:]

    @property
    def Y(self):
        return self.omega[self._r:, :self._c]

    @property
    def W(self):
        return self.omega[self._r:, self._c:]

    def intertwining_defects(self) -> dict:
        ctx, big = self.ctx, self.big
        return {
            "X": module_map_defect(self.X, 1, 0, big, big),
            "Z": module_map_defect(self.Z, 0, 0, ctx, big),
            "Y": module_map_defect(self.Y, 1, 0, big, ctx),
            "W": module_map_defect(self.W, 0, 0, ctx, ctx),
        }

    @classmethod
    def from_blocks(cls, ctx, N, X, Z, Y, W, **kw) -> "Colligation":
        omega = np.block([[np.asarray(X), np.asarray(Z)], [np.asarray(Y), np.asarray(W)]])
        return cls(ctx, N, omega.astype(complex), **kw)


def split_and_verify(omega, ctx: Context, N: int, tol: ToleranceConfig = DEFAULT_TOL,
                     hats: HatPair | None = None, residuals: dict | None = None,
                     pick: PickMatrix | None = None) -> Colligation:
    """Split ``Omega`` into ``X, Z, Y, W`` and check structure and the system of equations."""
    coll = Colligation(ctx, N, np.asarray(omega, dtype=complex), dict(residuals or {}), hats, pick)
    defects = coll.intertwining_defects()
    coll.residuals.update({f"intertwining_{k}": v for k, v in defects.items()})
    for k, v in defects.items():
        if v > tol.residual_tol:
            raise ResidualError(f"{k} violates the intertwining relation by {v:.3e}", coll.residuals)
    if hats is not None:
        coll.residuals.update(system_residuals(coll, hats))
        for key, label in (("state_equation", "state equation L* = X(I(x)L*)zeta + ZU*"),
                           ("output_equation", "output equation V* = Y(I(x)L*)zeta + WU*")):
            if coll.residuals[key] > tol.residual_tol:
                raise ResidualError(f"{label} fails by {coll.residuals[key]:.3e}", coll.residuals)
    return coll


def system_residuals(coll: Colligation, hats: HatPair) -> dict:
    """Relative residuals of the two block equations encoded by ``Omega Bhat = Ahat``."""
    Lstar = hats.L.conj().T
    state = amplify_apply(Lstar, hats.zeta.matrix, 1, 0, 0, coll.big)
    eq1 = op_norm(Lstar - coll.X @ state - coll.Z @ hats.U_star)
    eq2 = op_norm(hats.V_star - coll.Y @ state - coll.W @ hats.U_star)
    scale = 1.0 + op_norm(hats.A_hat)
    return {"state_equation": eq1 / scale, "output_equation": eq2 / scale}


def synthesize(problem: ProblemData, pick: PickMatrix | None = None) -> Colligation:
    """Pick matrix, PSD factor, hats, Douglas factor, split."""
    tol = problem.tol
    pick = pick_matrix(problem) if pick is None else pick
    verdict = feasibility(pick, tol)
    if not verdict.is_psd:
        raise InfeasibleError(
            f"Pick matrix not PSD: min eigenvalue {verdict.min_eigenvalue:.6g}", verdict)
    L = psd_sqrt_factor(pick.matrix, tol)
    hats = assemble_hats(L, problem)
    omega, report = douglas_factor(hats, tol)
    report["hat"] = hats.residual
    report["pick_min_eigenvalue"] = verdict.min_eigenvalue
    return split_and_verify(omega, problem.ctx, problem.N, tol, hats, report, pick)


# ---------------------------------------------------------------------------
# time-varying system


@dataclass(frozen=True, eq=False)
class SimulationResult:
    outputs: list
    states: list
    input_energy: float
    output_energy: float

    @property
    def slack(self) -> float:
        return self.input_energy - self.output_energy


def simulate_system(coll: Colligation, inputs, check_energy: bool = True,
                    slack: float = 1e-10) -> SimulationResult:
    """Run ``x(t) = A(t)x(t+1) + B(t)u(t)``, ``y(t) = C(t)x(t+1) + D(t)u(t)`` backwards.

    ``inputs[t]`` lives in ``E^{(x)t} (x) H`` (a vector, or a matrix whose
    columns are simulated together); ``x(T+1) = 0``.  With ``check_energy``
    the inequality ``sum ||y||^2 <= sum ||u||^2`` is asserted.
    """
    ctx, big = coll.ctx, coll.big
    T = len(inputs) - 1
    for t, u in enumerate(inputs):
        if np.shape(u)[0] != ctx.level_dim(t):
            raise ShapeError(f"input at level {t} has {np.shape(u)[0]} rows, "
                             f"expected {ctx.level_dim(t)}")
    X, Z, Y, W = coll.X, coll.Z, coll.Y, coll.W
    ncols = np.shape(inputs[0])[1:] if np.ndim(inputs[0]) > 1 else ()
    x_next = np.zeros((big.level_dim(T + 1),) + ncols, complex)
    outputs = [None] * (T + 1)
    states = [None] * (T + 2)
    states[T + 1] = x_next
    for t in range(T, -1, -1):
        u = np.asarray(inputs[t], dtype=complex)
        x = amplify_apply(X, x_next, t, 1, 0, big, big) + amplify_apply(Z, u, t, 0, 0, ctx, big)
        y = amplify_apply(Y, x_next, t, 1, 0, big, ctx) + amplify_apply(W, u, t, 0, 0, ctx, ctx)
        outputs[t] = y
        states[t] = x
        x_next = x
    e_in = float(sum(np.sum(np.abs(np.asarray(u)) ** 2) for u in inputs))
    e_out = float(sum(np.sum(np.abs(y) ** 2) for y in outputs))
    if check_energy and e_out > e_in + slack * (1.0 + e_in):
        raise ResidualError(f"energy inequality fails: output {e_out:.6g} > input {e_in:.6g}",
                            {"input_energy": e_in, "output_energy": e_out})
    return SimulationResult(outputs, states, e_in, e_out)


def transfer_eval(coll: Colligation, zeta: DualPoint) -> np.ndarray:
    """Untruncated value ``T(zeta)`` of the transfer function.

    Solves ``Q = Z + X (I_E (x) Q) zeta`` for the module map ``Q : H -> H^(N)``
    and returns ``W + Y (I_E (x) Q) zeta`` (an ``m_tot``-square matrix).
    """
    ctx, big = coll.ctx, coll.big
    if zeta.norm >= 1.0:
        raise ValueError("transfer function is evaluated only on the open unit ball")
    coords = []
    for u in range(ctx.s):
        rs, cs = big.vertex_slice(u), ctx.vertex_slice(u)
        coords.extend((r, c) for c in range(cs.start, cs.stop) for r in range(rs.start, rs.stop))
    n = len(coords)
    Op = np.zeros((n, n), complex)
    for k, (r, c) in enumerate(coords):
        E = np.zeros((big.m_tot, ctx.m_tot), complex)
        E[r, c] = 1.0
        img = E - coll.X @ amplify_apply(E, zeta.matrix, 1, 0, 0, ctx, big)
        Op[:, k] = [img[rr, cc] for rr, cc in coords]
    rhs = np.array([coll.Z[rr, cc] for rr, cc in coords])
    q = np.linalg.solve(Op, rhs)
    Q = np.zeros((big.m_tot, ctx.m_tot), complex)
    for (rr, cc), val in zip(coords, q):
        Q[rr, cc] = val
    return coll.W + coll.Y @ amplify_apply(Q, zeta.matrix, 1, 0, 0, ctx, big)


def random_colligation(ctx: Context, N: int, rng: np.random.Generator,
                       norm: float = 1.0) -> Colligation:
    """Random colligation of the given norm that respects the intertwining structure."""
    big = ctx.amplified(N)
    rows, cols = big.m_tot + ctx.m_tot, big.dim_EH + ctx.m_tot
    omega = np.zeros((rows, cols), complex)
    for u in range(ctx.s):
        r = np.r_[np.arange(rows)[big.vertex_slice(u)],
                  big.m_tot + np.arange(ctx.m_tot)[ctx.vertex_slice(u)]]
        c = np.r_[np.arange(cols)[big.from_vertex(1, u)],
                  big.dim_EH + np.arange(ctx.m_tot)[ctx.vertex_slice(u)]]
        omega[np.ix_(r, c)] = rng.normal(size=(len(r), len(c))) + 1j * rng.normal(size=(len(r), len(c)))
    omega *= norm / op_norm(omega)
    return Colligation(ctx, N, omega)
