"""Dense numerical substrate with a single tolerance policy.

Everything here is a thin, checked wrapper around LAPACK routines exposed by
numpy.  The wrappers fix conventions (ascending eigenvalues, relative rank
cutoff, principal square root) so the rest of the package never calls
``numpy.linalg`` with ad hoc thresholds.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IndefiniteError, NotHermitianError

__all__ = [
    "ToleranceConfig",
    "PsdVerdict",
    "hermitian_eig",
    "svd",
    "op_norm",
    "pinv",
    "psd_check",
    "psd_sqrt_factor",
]

_ENV_PREFIX = "NCPICK_"


@dataclass(frozen=True)
class ToleranceConfig:
    """Tolerances used across the package.

    psd_tol and residual_tol are relative to ``1 + ||A||`` of the matrix being
    tested.  rank_tol_factor is scaled by ``max(shape) * sigma_max``.
    """

    psd_tol: float = 1e-9
    rank_tol_factor: float = 1e-12
    residual_tol: float = 1e-8
    truncation_tol: float = 1e-10

    def __post_init__(self):
        for name in ("psd_tol", "rank_tol_factor", "residual_tol", "truncation_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_env(cls, **overrides) -> "ToleranceConfig":
        """Defaults, then ``NCPICK_PSD_TOL`` style variables, then overrides."""
        values = {}
        for name in ("psd_tol", "rank_tol_factor", "residual_tol", "truncation_tol"):
            raw = os.environ.get(_ENV_PREFIX + name.upper())
            if raw is not None:
                values[name] = float(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_(self, **changes) -> "ToleranceConfig":
        return replace(self, **changes)


DEFAULT_TOL = ToleranceConfig()


@dataclass(frozen=True)
class PsdVerdict:
    is_psd: bool
    min_eigenvalue: float
    threshold: float
    eigenvalues: np.ndarray = field(repr=False)
    witness: np.ndarray | None = field(default=None, repr=False)


def op_norm(A) -> float:
    """Largest singular value (0 for empty matrices)."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    if A.ndim == 1:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A, 2))


def _check_hermitian(A, tol: ToleranceConfig) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.shape[0] != A.shape[1]:
        raise NotHermitianError(f"matrix is not square: shape {A.shape}")
    if A.size == 0:
        return A
    defect = op_norm(A - A.conj().T)
    if defect > tol.residual_tol * (1.0 + op_norm(A)):
        raise NotHermitianError(f"matrix is not Hermitian: ||A - A*|| = {defect:.3e}")
    return 0.5 * (A + A.conj().T)


def hermitian_eig(A, tol: ToleranceConfig = DEFAULT_TOL):
    """Eigenvalues (ascending) and unitary eigenvector matrix of Hermitian ``A``."""
    H = _check_hermitian(A, tol)
    w, Q = np.linalg.eigh(H)
    return w, Q


def svd(A):
    """Thin SVD ``A = U @ diag(s) @ Vh``."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.size == 0:
        k = min(A.shape)
        return (np.zeros((A.shape[0], k), complex), np.zeros(k),
                np.zeros((k, A.shape[1]), complex))
    return np.linalg.svd(A, full_matrices=False)


def rank_cutoff(s, shape, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    if len(s) == 0:
        return 0.0
    return tol.rank_tol_factor * max(shape) * float(s[0])


def pinv(A, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose inverse with relative rank cutoff."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    U, s, Vh = svd(A)
    cut = rank_cutoff(s, A.shape, tol)
    keep = s > cut
    if not np.any(keep):
        return np.zeros((A.shape[1], A.shape[0]), complex)
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def psd_check(A, tol: ToleranceConfig = DEFAULT_TOL) -> PsdVerdict:
    """Decide ``A >= 0`` up to ``psd_tol * (1 + ||A||)``.

    When the answer is negative, the eigenvector of the smallest eigenvalue is
    returned as a witness: ``<v, A v> = lambda_min ||v||^2``.
    """
    H = _check_hermitian(A, tol)
    if H.size == 0:
        return PsdVerdict(True, 0.0, 0.0, np.zeros(0))
    w, Q = np.linalg.eigh(H)
    threshold = -tol.psd_tol * (1.0 + float(np.max(np.abs(w))))
    lam = float(w[0])
    ok = lam >= threshold
    return PsdVerdict(ok, lam, threshold, w, None if ok else Q[:, 0])


def psd_sqrt_factor(A, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Principal square root ``L = L* >= 0`` with ``L L* = A``.

    Eigenvalues that are negative but within the PSD tolerance are clamped to
    zero.  Block-diagonal input gives block-diagonal output.
    """
    verdict = psd_check(A, tol)
    if not verdict.is_psd:
        raise IndefiniteError(
            f"matrix is indefinite: min eigenvalue {verdict.min_eigenvalue:.6g}", verdict)
    H = _check_hermitian(A, tol)
    if H.size == 0:
        return H
    w, Q = np.linalg.eigh(H)
    root = np.sqrt(np.clip(w, 0.0, None))
    L = (Q * root) @ Q.conj().T
    return 0.5 * (L + L.conj().T)
