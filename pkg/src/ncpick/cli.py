"""Command-line interface: ``ncpick <subcommand> ...``.

Exit codes: 0 success or feasible, 1 input error, 2 infeasible / not CP /
not certified, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from .correspondence import DualPoint
from .cpcheck import MsPickMap, cp_verdict, example_cj_vs_ms, example_problem
from .duality import central_data, connection_check
from .errors import InfeasibleError, LevelCapError, NCPickError, NonCentralError, ResidualError
from .io import (
    ProblemFormatError,
    decode_matrix,
    dump_json,
    encode_matrix,
    load_problem,
    parse_problem,
    problem_hash,
    problem_to_dict,
)
from .linalg import op_norm, psd_sqrt_factor
from .ncfunc import coefficients_from_colligation, eval_point, schur_truncate_and_norm
from .pick import feasibility, pick_matrix
from .realization import (
    Colligation,
    assemble_hats,
    colligation_residuals,
    synthesize,
    system_residuals,
    transfer_eval,
)

EXIT_OK, EXIT_INPUT, EXIT_DECISION, EXIT_CAP = 0, 1, 2, 3
SOLUTION_FORMAT = "ncpick-solution/1"
NORM_DIM_LIMIT = 600
REVERIFY_TOL = 1e-12


class _Output:
    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = sys.stdout if stream is None else stream
        self.payload = {}

    def put(self, key, value, text=None):
        self.payload[key] = value
        if self.fmt == "human":
            print(text if text is not None else f"{key}: {_fmt(value)}", file=self.stream)

    def note(self, text):
        if self.fmt == "human":
            print(text, file=self.stream)

    def finish(self):
        if self.fmt == "machine":
            print(dump_json(self.payload), file=self.stream)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


# ---------------------------------------------------------------------------
# shared pipeline pieces


def choose_levels(problem, levels: int | None) -> int:
    """Explicit ``levels`` or the smallest ``K`` whose evaluation tail meets ``truncation_tol``."""
    if levels is not None:
        if levels < 0:
            raise ProblemFormatError("--levels must be nonnegative")
        return levels
    worst = max(p.norm for p in problem.points)
    K = 0
    while worst > 0 and worst ** (K + 1) / (1 - worst) > problem.tol.truncation_tol:
        K += 1
    return K


def norm_levels(ctx, K: int) -> int:
    k, total = 0, ctx.level_dim(0)
    while k < K and total + ctx.level_dim(k + 1) <= NORM_DIM_LIMIT:
        k += 1
        total += ctx.level_dim(k)
    return k


def residual_table(problem, coll: Colligation, K: int, k_norm: int) -> dict:
    """Recompute every certificate of a colligation from scratch."""
    pick = pick_matrix(problem)
    verdict = feasibility(pick, problem.tol)
    hats = assemble_hats(psd_sqrt_factor(pick.matrix, problem.tol), problem)
    table = {"pick_min_eigenvalue": verdict.min_eigenvalue, "hat": hats.residual}
    table.update(colligation_residuals(coll.omega, hats.A_hat, hats.B_hat))
    table.update(system_residuals(coll, hats))
    table.update({f"intertwining_{k}": v for k, v in coll.intertwining_defects().items()})
    coeffs = coefficients_from_colligation(coll, K, problem.level_cap)
    exact, series, tails = [], [], []
    for z, lam in zip(problem.points, problem.targets):
        exact.append(op_norm(transfer_eval(coll, z) - lam.matrix))
        pv = eval_point(coeffs, z, problem.tol, problem.level_cap)
        series.append(op_norm(pv.matrix - lam.matrix))
        tails.append(pv.tail_bound)
    table["interpolation_exact"] = exact
    table["interpolation_series"] = series
    table["tail_bound"] = tails
    table["schur_norm"] = schur_truncate_and_norm(coeffs, k_norm, problem.level_cap)[1]
    return table


def certify(table: dict, tol) -> list:
    """Names of the certificates that fail."""
    rt = tol.residual_tol
    bad = [k for k in ("partial_isometry", "douglas", "range", "state_equation", "output_equation",
                       "intertwining_X", "intertwining_Y", "intertwining_Z", "intertwining_W")
           if not table[k] <= rt]
    for k in ("norm", "schur_norm"):
        if not table[k] <= 1 + rt:
            bad.append(k)
    if not all(r <= rt for r in table["interpolation_exact"]):
        bad.append("interpolation_exact")
    if not all(r <= t + rt for r, t in zip(table["interpolation_series"], table["tail_bound"])):
        bad.append("interpolation_series")
    return bad


def build_solution(problem, coll: Colligation, K: int) -> dict:
    k_norm = norm_levels(problem.ctx, K)
    table = residual_table(problem, coll, K, k_norm)
    coeffs = coefficients_from_colligation(coll, K, problem.level_cap)
    pdoc = problem_to_dict(problem)
    failures = certify(table, problem.tol)
    return {
        "format": SOLUTION_FORMAT,
        "problem_sha256": problem_hash(pdoc),
        "problem": pdoc,
        "N": problem.N,
        "levels": K,
        "norm_levels": k_norm,
        "colligation": {name: encode_matrix(getattr(coll, name)) for name in "XZYW"},
        "coefficients": [encode_matrix(C) for C in coeffs.coeffs],
        "residuals": table,
        "certified": not failures,
        "failures": failures,
    }


def load_solution(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != SOLUTION_FORMAT:
        raise ProblemFormatError(f"format: expected {SOLUTION_FORMAT!r}")
    for key in ("problem", "colligation", "levels", "norm_levels", "residuals"):
        if key not in doc:
            raise ProblemFormatError(f"{key}: missing")
    problem = parse_problem(doc["problem"])
    if problem_hash(doc["problem"]) != doc.get("problem_sha256"):
        raise ProblemFormatError("problem_sha256: does not match the embedded problem")
    blocks = {k: decode_matrix(doc["colligation"].get(k), f"colligation.{k}") for k in "XZYW"}
    try:
        coll = Colligation.from_blocks(problem.ctx, problem.N, *(blocks[k] for k in "XZYW"))
    except (NCPickError, ValueError) as exc:
        raise ProblemFormatError(f"colligation: {exc}") from exc
    return problem, coll


def compare_tables(recorded: dict, fresh: dict, tol: float = REVERIFY_TOL) -> list:
    bad = []
    for key, new in fresh.items():
        old = recorded.get(key)
        a = np.atleast_1d(np.asarray(old, dtype=float)) if old is not None else None
        b = np.atleast_1d(np.asarray(new, dtype=float))
        if a is None or a.shape != b.shape or not np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))):
            bad.append(key)
    return bad


# ---------------------------------------------------------------------------
# subcommands


def _tol_overrides(args) -> dict:
    return {"residual_tol": args.tol} if getattr(args, "tol", None) is not None else {}


def _load(args):
    problem, _ = load_problem(args.problem, _tol_overrides(args), args.cap)
    return problem


def cmd_check(args, out: _Output) -> int:
    problem = _load(args)
    A = pick_matrix(problem)
    v = feasibility(A, problem.tol)
    out.put("pick_eigenvalues", [float(x) for x in v.eigenvalues])
    out.put("min_eigenvalue", v.min_eigenvalue)
    out.put("threshold", v.threshold)
    out.put("margins", [float(x) for x in problem.margins])
    out.put("feasible", bool(v.is_psd), f"verdict: {'feasible' if v.is_psd else 'infeasible'}")
    out.finish()
    return EXIT_OK if v.is_psd else EXIT_DECISION


def cmd_solve(args, out: _Output) -> int:
    problem = _load(args)
    K = choose_levels(problem, args.levels)
    problem.ctx.check_cap(K, problem.ctx.m_tot, problem.level_cap, what="coefficient level")
    try:
        coll = synthesize(problem)
    except InfeasibleError as exc:
        out.put("feasible", False, f"infeasible: {exc}")
        out.put("min_eigenvalue", exc.verdict.min_eigenvalue)
        out.put("witness", encode_matrix(exc.verdict.witness[:, None]), "witness: eigenvector of min eigenvalue")
        out.finish()
        return EXIT_DECISION
    sol = build_solution(problem, coll, K)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dump_json(sol))
        out.note(f"solution written to {args.out}")
    out.put("levels", K)
    for key, val in sol["residuals"].items():
        out.put(key, val)
    out.put("certified", sol["certified"])
    if sol["failures"]:
        out.put("failures", sol["failures"])
    out.finish()
    return EXIT_OK if sol["certified"] else EXIT_DECISION


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ProblemFormatError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def cmd_verify(args, out: _Output) -> int:
    doc = _read_json(args.solution)
    problem, coll = load_solution(doc)
    fresh = residual_table(problem, coll, int(doc["levels"]), int(doc["norm_levels"]))
    mismatched = compare_tables(doc["residuals"], fresh)
    failures = certify(fresh, problem.tol)
    for key, val in fresh.items():
        out.put(key, val)
    out.put("reproduced", not mismatched)
    if mismatched:
        out.put("mismatched", mismatched)
    out.put("certified", not failures)
    if failures:
        out.put("failures", failures)
    out.finish()
    return EXIT_OK if not mismatched and not failures else EXIT_DECISION


def cmd_eval(args, out: _Output) -> int:
    doc = _read_json(args.solution)
    problem, coll = load_solution(doc)
    ctx = problem.ctx
    if args.points:
        raw = _read_json(args.points)
        raw = raw.get("points") if isinstance(raw, dict) else raw
        if not isinstance(raw, list) or not raw:
            raise ProblemFormatError("points: expected a nonempty list")
        pts = []
        for i, p in enumerate(raw):
            if not isinstance(p, list) or len(p) != ctx.num_edges:
                raise ProblemFormatError(f"points[{i}]: expected {ctx.num_edges} edge matrices")
            pts.append(DualPoint.from_blocks(ctx, [decode_matrix(Z, f"points[{i}][{e}]")
                                                   for e, Z in enumerate(p)]))
    else:
        pts = list(problem.points)
    K = choose_levels(problem, args.levels if args.levels is not None else int(doc["levels"]))
    coeffs = coefficients_from_colligation(coll, K, problem.level_cap)
    values = []
    for i, z in enumerate(pts):
        if z.norm >= 1:
            raise ProblemFormatError(f"points[{i}]: norm {z.norm:.6g} is not below 1")
        pv = eval_point(coeffs, z, problem.tol)
        exact = transfer_eval(coll, z)
        values.append({"blocks": [encode_matrix(B) for B in pv.value.blocks],
                       "tail_bound": pv.tail_bound,
                       "series_vs_exact": op_norm(pv.matrix - exact)})
        out.note(f"point {i}: tail bound {pv.tail_bound!r}, |series - exact| = "
                 f"{op_norm(pv.matrix - exact)!r}")
        for u, B in enumerate(pv.value.blocks):
            out.note(f"  vertex {u}:\n{np.array2string(B, precision=6)}")
    out.payload["values"] = values
    out.payload["levels"] = K
    out.finish()
    return EXIT_OK


def cmd_ms_cp(args, out: _Output) -> int:
    problem = _load(args)
    ms = MsPickMap(problem)
    if ms.dim ** 4 > problem.level_cap:
        raise LevelCapError(f"Choi matrix of size {ms.dim ** 2} exceeds the cap", 0, problem.level_cap)
    v = cp_verdict(ms, ms.dim, problem.tol)
    out.put("choi_min_eigenvalue", v.min_eigenvalue)
    out.put("completely_positive", v.is_cp, f"verdict: {'CP' if v.is_cp else 'not CP'}")
    if v.witness is not None:
        out.put("witness", encode_matrix(v.witness), "witness: eigenvector of min Choi eigenvalue")
    out.finish()
    return EXIT_OK if v.is_cp else EXIT_DECISION


def _example_lines(rep, out: _Output):
    for line in rep.lines():
        out.note(line)
    out.payload.update({
        "cj_pick": encode_matrix(rep.cj_pick),
        "cj_feasible": bool(rep.cj_verdict.is_psd),
        "cj_min_eigenvalue": rep.cj_verdict.min_eigenvalue,
        "interpolation_residual": rep.interpolation_residual,
        "ms_cp": bool(rep.ms_cp.is_cp),
        "ms_choi_min_eigenvalue": rep.ms_cp.min_eigenvalue,
        "choi_minor_det": rep.choi_minor_det,
        "ms_at_identity_min_eigenvalue": rep.ms_identity_verdict.min_eigenvalue,
    })


def cmd_compare(args, out: _Output) -> int:
    if args.example is not None:
        rep = example_cj_vs_ms(*args.example)
        _example_lines(rep, out)
        out.finish()
        return EXIT_OK
    if not args.problem:
        raise ProblemFormatError("compare: give a problem file or --example R EPS")
    problem = _load(args)
    v = feasibility(pick_matrix(problem), problem.tol)
    ms = MsPickMap(problem)
    if ms.dim ** 4 > problem.level_cap:
        raise LevelCapError(f"Choi matrix of size {ms.dim ** 2} exceeds the cap", 0, problem.level_cap)
    cp = cp_verdict(ms, ms.dim, problem.tol)
    out.put("cj_feasible", bool(v.is_psd),
            f"CJ: {'feasible' if v.is_psd else 'infeasible'} (min eig {v.min_eigenvalue!r})")
    out.put("ms_cp", bool(cp.is_cp),
            f"MS: {'CP' if cp.is_cp else 'not CP'} (min Choi eig {cp.min_eigenvalue!r})")
    out.payload["cj_min_eigenvalue"] = v.min_eigenvalue
    out.payload["ms_choi_min_eigenvalue"] = cp.min_eigenvalue
    try:
        data = central_data(problem.ctx, problem.points, problem.targets)
    except NonCentralError:
        data = None
    if data is not None and v.is_psd:
        coll = synthesize(problem)
        K = choose_levels(problem, args.levels)
        coeffs = coefficients_from_colligation(coll, K, problem.level_cap)
        rep = connection_check(data, coeffs, rng=np.random.default_rng(args.seed), tol=problem.tol)
        out.put("connection", {"dual": rep.dual, "point": rep.point, "maps": rep.maps, "tail": rep.tail},
                f"central data: dual {rep.dual!r}, point {rep.point!r}, maps {rep.maps!r} "
                f"(tail {rep.tail!r})")
    out.finish()
    return EXIT_OK


def cmd_example(args, out: _Output) -> int:
    problem = example_problem(args.r, args.eps)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dump_json(problem_to_dict(problem)))
        out.note(f"problem written to {args.out}")
    _example_lines(example_cj_vs_ms(args.r, args.eps), out)
    out.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, help="residual tolerance (overrides file and env)")
    common.add_argument("--levels", type=int, help="truncation level K for coefficients")
    common.add_argument("--cap", type=int, help="storage cap in matrix entries")
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("human", "machine"), default="human")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled checks")

    parser = argparse.ArgumentParser(prog="ncpick", description="Operator Nevanlinna-Pick interpolation "
                                     "over finite-dimensional correspondences.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", parents=[common], help="decide feasibility")
    p.add_argument("problem")
    p.set_defaults(fn=cmd_check)
    p = sub.add_parser("solve", parents=[common], help="synthesize an interpolant")
    p.add_argument("problem")
    p.set_defaults(fn=cmd_solve)
    p = sub.add_parser("verify", parents=[common], help="re-verify a solution file")
    p.add_argument("solution")
    p.set_defaults(fn=cmd_verify)
    p = sub.add_parser("eval", parents=[common], help="evaluate a stored interpolant")
    p.add_argument("solution")
    p.add_argument("--points", help="JSON list of points (default: the problem's points)")
    p.set_defaults(fn=cmd_eval)
    p = sub.add_parser("ms-cp", parents=[common], help="Choi test of the block Pick map")
    p.add_argument("problem")
    p.set_defaults(fn=cmd_ms_cp)
    p = sub.add_parser("compare", parents=[common], help="both criteria side by side")
    p.add_argument("problem", nargs="?")
    p.add_argument("--example", nargs=2, type=float, metavar=("R", "EPS"))
    p.set_defaults(fn=cmd_compare)
    p = sub.add_parser("example", parents=[common], help="the nilpotent two-by-two example")
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=0.5)
    p.set_defaults(fn=cmd_example)
    return parser


def main(argv: Sequence[str] | None = None, stream=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    out = _Output(args.format, stream)
    err = sys.stderr
    try:
        return args.fn(args, out)
    except LevelCapError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CAP
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=err)
        return EXIT_DECISION
    except ResidualError as exc:
        print(f"not certified: {exc}", file=err)
        return EXIT_DECISION
    except (NCPickError, ValueError) as exc:
        print(f"input error: {exc}", file=err)
        return EXIT_INPUT


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
