"""JSON problem and solution files.

Matrices are nested row-major lists; a complex entry is either a plain number
or a pair ``[re, im]``.  Floats are written with ``repr`` precision so files
round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

from .correspondence import DEFAULT_LEVEL_CAP, Context, build_context
from .errors import NCPickError
from .linalg import ToleranceConfig

__all__ = [
    "ProblemFormatError",
    "encode_matrix",
    "decode_matrix",
    "parse_problem",
    "load_problem",
    "problem_to_dict",
    "problem_hash",
    "dump_json",
]

_TOL_FIELDS = ("psd_tol", "rank_tol_factor", "residual_tol", "truncation_tol")


class ProblemFormatError(NCPickError, ValueError):
    """Malformed problem or solution file; the message names the offending field."""


def encode_matrix(M) -> list:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return [[[float(x.real), float(x.imag)] for x in row] for row in M]


def _entry(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ProblemFormatError(f"{where}: booleans are not numbers")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
        return complex(x[0], x[1])
    raise ProblemFormatError(f"{where}: expected a number or [re, im], got {x!r}")


def decode_matrix(obj, where: str = "matrix") -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ProblemFormatError(f"{where}: expected a nonempty list of rows")
    width = len(obj[0])
    rows = []
    for i, row in enumerate(obj):
        if len(row) != width:
            raise ProblemFormatError(f"{where}[{i}]: row has {len(row)} entries, expected {width}")
        rows.append([_entry(x, f"{where}[{i}][{j}]") for j, x in enumerate(row)])
    return np.array(rows, dtype=complex)


def _context(doc: dict) -> Context:
    corr = doc.get("correspondence")
    if not isinstance(corr, dict):
        raise ProblemFormatError("correspondence: missing or not an object")
    alg = doc.get("algebra", {})
    if not isinstance(alg, dict):
        raise ProblemFormatError("algebra: not an object")
    try:
        if "d" in corr:
            m = corr.get("m", alg.get("multiplicities", [1]))
            m = m if isinstance(m, list) else [m]
            if alg.get("vertices", 1) != 1:
                raise ProblemFormatError("correspondence.d: the shortcut requires a single vertex")
            return build_context(1, m, [[int(corr["d"])]])
        if "edge_multiplicity" not in corr:
            raise ProblemFormatError("correspondence: need 'edge_multiplicity' or 'd'")
        g = corr["edge_multiplicity"]
        s = alg.get("vertices", len(g))
        m = alg.get("multiplicities")
        if m is None:
            raise ProblemFormatError("algebra.multiplicities: required with edge_multiplicity")
        return build_context(s, m, g)
    except ProblemFormatError:
        raise
    except (NCPickError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"correspondence: {exc}") from exc


def parse_problem(doc: Any, tol_overrides: dict | None = None, level_cap: int | None = None):
    """Build a validated :class:`~ncpick.pick.ProblemData` from a decoded JSON document.

    Tolerances: defaults, then ``NCPICK_*`` environment variables, then the
    file's ``tolerances`` object, then ``tol_overrides``.
    """
    from .correspondence import CommutantElement, DualPoint
    from .pick import make_problem

    if not isinstance(doc, dict):
        raise ProblemFormatError("top level: expected an object")
    ctx = _context(doc)
    pts_raw, tgt_raw = doc.get("points"), doc.get("targets")
    if not isinstance(pts_raw, list) or not pts_raw:
        raise ProblemFormatError("points: expected a nonempty list")
    if not isinstance(tgt_raw, list) or len(tgt_raw) != len(pts_raw):
        raise ProblemFormatError(f"targets: expected a list of {len(pts_raw)} entries")
    points, targets = [], []
    for i, p in enumerate(pts_raw):
        if not isinstance(p, list) or len(p) != ctx.num_edges:
            raise ProblemFormatError(f"points[{i}]: expected {ctx.num_edges} edge matrices")
        blocks = [decode_matrix(Z, f"points[{i}][{e}]") for e, Z in enumerate(p)]
        try:
            points.append(DualPoint.from_blocks(ctx, blocks))
        except NCPickError as exc:
            raise ProblemFormatError(f"points[{i}]: {exc}") from exc
    for i, t in enumerate(tgt_raw):
        if not isinstance(t, list) or len(t) != ctx.s:
            raise ProblemFormatError(f"targets[{i}]: expected {ctx.s} vertex matrices")
        blocks = [decode_matrix(A, f"targets[{i}][{u}]") for u, A in enumerate(t)]
        try:
            targets.append(CommutantElement.from_blocks(ctx, blocks))
        except NCPickError as exc:
            raise ProblemFormatError(f"targets[{i}]: {exc}") from exc
    overrides = doc.get("tolerances", {}) or {}
    if not isinstance(overrides, dict) or any(k not in _TOL_FIELDS for k in overrides):
        raise ProblemFormatError(f"tolerances: keys must be among {_TOL_FIELDS}")
    try:
        values = {k: float(v) for k, v in overrides.items()}
        values.update({k: v for k, v in (tol_overrides or {}).items() if v is not None})
        base = ToleranceConfig.from_env(**values)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"tolerances: {exc}") from exc
    cap = doc.get("level_cap", DEFAULT_LEVEL_CAP) if level_cap is None else level_cap
    if not isinstance(cap, int) or cap <= 0:
        raise ProblemFormatError("level_cap: expected a positive integer")
    return make_problem(ctx, points, targets, base, cap)


def load_problem(path, tol_overrides: dict | None = None, level_cap: int | None = None):
    """Read a problem file; returns ``(problem, raw_document)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFormatError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_problem(doc, tol_overrides, level_cap), doc


def problem_to_dict(problem) -> dict:
    ctx = problem.ctx
    return {
        "algebra": {"vertices": ctx.s, "multiplicities": list(ctx.m)},
        "correspondence": {"edge_multiplicity": [list(r) for r in ctx.g]},
        "points": [[encode_matrix(Z) for Z in p.blocks] for p in problem.points],
        "targets": [[encode_matrix(A) for A in t.blocks] for t in problem.targets],
        "tolerances": {k: getattr(problem.tol, k) for k in _TOL_FIELDS},
        "level_cap": problem.level_cap,
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=True)


def problem_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
