"""Command-line interface and machine-readable reports.

Exit codes: 0 solved/verified, 1 hypothesis refusal (with witness in the
report), 2 no solution exists, 3 input error.  Reports are deterministic
for a fixed (document, seed) pair and are written atomically.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, Sequence

from . import _jsonout
from .document import ProblemDocument, load_problem
from .errors import (
    EmptyFeasible,
    HypothesisViolation,
    RandoptError,
    SchemaError,
)
from .optimize import (
    GlobalMinResult,
    LocalMinCertificate,
    StationarySearch,
    find_stationary_points,
    global_min_compact,
)
from .probspace import (
    MeasurabilityVerdict,
    RandomVariableRn,
    Witness,
    is_measurable_rv,
    is_measurable_setmap,
)
from .randfunc import Box, check_joint_measurability, default_probe_grid
from .selection import (
    GlobalCert,
    NecessaryOnly,
    NoPDStationaryPoint,
    NoStationaryPoints,
    Selection,
    check_necessary_conditions,
    solve_rlop,
    solve_rop,
)

COMMANDS = (
    "solve-rop",
    "solve-rlop",
    "check-measurable",
    "stationary",
    "necessary",
    "oracle",
)

EXIT_OK = 0
EXIT_REFUSED = 1
EXIT_NO_SOLUTION = 2
EXIT_INPUT_ERROR = 3


def _thread_count() -> int:
    raw = os.environ.get("RANDOPT_THREADS", "1")
    try:
        v = int(raw)
    except ValueError:
        return 1
    if v == 0:
        return os.cpu_count() or 1
    return max(v, 1)


def _pmap(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, threaded when RANDOPT_THREADS allows."""
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- JSON rendering of domain objects ------------------------------------------


def _point_json(p: Iterable[float]) -> list:
    return [float(v) for v in p]


def _witness_json(w: Witness) -> dict:
    out = {
        "atom": list(w.atom),
        "scenario_a": w.scenario_a,
        "scenario_b": w.scenario_b,
        "gap": float(w.gap),
    }
    if w.probe is not None:
        out["probe"] = _point_json(w.probe)
    if isinstance(w.value_a, (int, float)) and isinstance(w.value_b, (int, float)):
        out["value_a"] = float(w.value_a)
        out["value_b"] = float(w.value_b)
    elif isinstance(w.value_a, tuple) and isinstance(w.value_b, tuple):
        out["value_a"] = _point_json(w.value_a)
        out["value_b"] = _point_json(w.value_b)
    return out


def _verdict_json(v: MeasurabilityVerdict) -> dict:
    out = {"measurable": v.measurable}
    if v.witness is not None:
        out["witness"] = _witness_json(v.witness)
    return out


def _cert_json(cert) -> dict:
    if isinstance(cert, GlobalCert):
        return {"kind": "global", "value": float(cert.value)}
    if isinstance(cert, LocalMinCertificate):
        return {
            "kind": "local_min",
            "delta": float(cert.delta),
            "samples_checked": cert.samples_checked,
            "min_margin": float(cert.min_margin),
        }
    if isinstance(cert, NecessaryOnly):
        return {"kind": "necessary_only"}
    raise TypeError(f"unknown certificate {cert!r}")


def _selection_json(sel: Selection) -> dict:
    return {
        "points": {str(s): _point_json(sel.points[s]) for s in sel.space.scenarios},
        "measurable": _verdict_json(sel.measurable),
        "certificates": {
            str(s): _cert_json(sel.certificates[s]) for s in sel.space.scenarios
        },
        "notes": list(sel.notes),
    }


def _global_min_json(res: GlobalMinResult) -> dict:
    return {
        "x": _point_json(res.x),
        "value": float(res.value),
        "grid_x": _point_json(res.grid_x),
        "grid_value": float(res.grid_value),
        "excluded": res.excluded,
        "polished": res.polished,
    }


# --- command implementations -----------------------------------------------------


def _probe_region(doc: ProblemDocument) -> Box:
    if doc.search_box is not None:
        return doc.search_box
    if doc.feasible is not None:
        return doc.feasible.bounding_box()
    raise SchemaError(
        "/search_box", "this command needs a search_box or a feasible_set"
    )


def _require(condition: bool, pointer: str, message: str) -> None:
    if not condition:
        raise SchemaError(pointer, message)


def _cmd_check_measurable(doc: ProblemDocument) -> tuple[int, dict, dict]:
    region = _probe_region(doc)
    results = {
        "objective": _verdict_json(
            check_joint_measurability(doc.rf, default_probe_grid(region))
        )
    }
    if doc.feasible is not None:
        results["feasible_set"] = _verdict_json(
            is_measurable_setmap(doc.space, doc.feasible, tol=0.0)
        )
    if doc.candidate is not None:
        results["candidate"] = _verdict_json(
            is_measurable_rv(doc.space, doc.candidate, tol=0.0)
        )
    return EXIT_OK, results, {}


def _cmd_stationary(doc: ProblemDocument) -> tuple[int, dict, dict]:
    _require(doc.search_box is not None, "/search_box", "stationary needs a search_box")

    def search_one(omega) -> StationarySearch:
        return find_stationary_points(doc.rf, omega, doc.search_box, doc.options)

    searches = _pmap(search_one, doc.space.scenarios)
    per_scenario = {}
    skipped = stalled = 0
    for omega, search in zip(doc.space.scenarios, searches):
        skipped += search.skipped_singular
        stalled += search.stalled
        per_scenario[str(omega)] = [
            {
                "x": _point_json(sp.x),
                "grad_norm": float(sp.grad_norm),
                "minors": _point_json(sp.minors),
                "classification": sp.classification.value,
                "newton_iters": sp.newton_iters,
            }
            for sp in search.points
        ]
    diag = {"skipped_newton_starts": skipped, "stalled_newton_starts": stalled}
    return EXIT_OK, {"stationary_points": per_scenario}, diag


def _cmd_necessary(doc: ProblemDocument) -> tuple[int, dict, dict]:
    _require(doc.candidate is not None, "/candidate", "necessary needs a candidate")
    report = check_necessary_conditions(doc.rf, doc.space, doc.candidate)
    per = {}
    for omega in doc.space.scenarios:
        c = report.per_scenario[omega]
        per[str(omega)] = {
            "grad_ok": c.grad_ok,
            "psd_ok": c.psd_ok,
            "grad_norm": float(c.grad_norm),
            "classification": c.classification.value,
        }
    results = {
        "per_scenario": per,
        "candidate_measurable": _verdict_json(report.measurable),
        "all_ok": report.all_ok,
    }
    return EXIT_OK, results, {}


def _cmd_oracle(doc: ProblemDocument) -> tuple[int, dict, dict]:
    if doc.feasible is not None:
        descs = doc.feasible.descriptions
    else:
        _require(
            doc.search_box is not None,
            "/feasible_set",
            "oracle needs a feasible_set or a search_box",
        )
        descs = {s: doc.search_box for s in doc.space.scenarios}

    def min_one(omega) -> GlobalMinResult:
        return global_min_compact(doc.rf, omega, descs[omega], doc.options.grid_m)

    mins = _pmap(min_one, doc.space.scenarios)
    eta = {}
    per = {}
    excluded = 0
    for omega, res in zip(doc.space.scenarios, mins):
        eta[str(omega)] = float(res.grid_value)
        per[str(omega)] = _global_min_json(res)
        excluded += res.excluded
    return (
        EXIT_OK,
        {"eta": eta, "per_scenario": per},
        {"excluded_grid_points": excluded},
    )


def _cmd_solve_rop(doc: ProblemDocument) -> tuple[int, dict, dict]:
    _require(doc.feasible is not None, "/feasible_set", "solve-rop needs a feasible_set")
    sel = solve_rop(doc.rf, doc.space, doc.feasible, doc.options)
    # the certificate values are the computed optimal values eta(omega)
    eta = RandomVariableRn(
        doc.space, {s: (sel.certificates[s].value,) for s in doc.space.scenarios}
    )
    results = {
        "selection": _selection_json(sel),
        "eta": {str(s): float(eta.values[s][0]) for s in doc.space.scenarios},
        "eta_measurable": _verdict_json(is_measurable_rv(doc.space, eta, tol=1e-9)),
    }
    return EXIT_OK, results, dict(sel.diagnostics)


def _cmd_solve_rlop(doc: ProblemDocument) -> tuple[int, dict, dict]:
    _require(doc.search_box is not None, "/search_box", "solve-rlop needs a search_box")
    outcome = solve_rlop(doc.rf, doc.space, doc.search_box, doc.options)
    if isinstance(outcome, NoStationaryPoints):
        return (
            EXIT_NO_SOLUTION,
            {"no_solution": {"kind": "NoStationaryPoints", "atom": list(outcome.atom)}},
            {},
        )
    if isinstance(outcome, NoPDStationaryPoint):
        return (
            EXIT_NO_SOLUTION,
            {
                "no_solution": {
                    "kind": "NoPDStationaryPoint",
                    "atom": list(outcome.atom),
                }
            },
            {},
        )
    return EXIT_OK, {"selection": _selection_json(outcome)}, dict(outcome.diagnostics)


_DISPATCH = {
    "check-measurable": _cmd_check_measurable,
    "stationary": _cmd_stationary,
    "necessary": _cmd_necessary,
    "oracle": _cmd_oracle,
    "solve-rop": _cmd_solve_rop,
    "solve-rlop": _cmd_solve_rlop,
}


# --- run + report ------------------------------------------------------------------


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".randopt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(command: str, doc: ProblemDocument, output_path: str) -> int:
    """Execute one command against a loaded document and write the report."""
    if command not in _DISPATCH:
        raise ValueError(f"unknown command {command!r}")
    report = {
        "schema_version": 1,
        "command": command,
        "seed": doc.options.seed,
        "grid": doc.options.grid_m,
        "polish": doc.options.polish,
        "scenarios": list(doc.space.scenarios),
    }
    try:
        code, results, diagnostics = _DISPATCH[command](doc)
        if code == EXIT_NO_SOLUTION:
            report["status"] = "no_solution"
            report["no_solution"] = results["no_solution"]
        else:
            report["status"] = "ok"
            report["results"] = results
        report["diagnostics"] = diagnostics
    except HypothesisViolation as e:
        code = EXIT_REFUSED
        report["status"] = "refused"
        refusal = {"error": type(e).__name__, "message": str(e)}
        if e.witness is not None:
            refusal["witness"] = _witness_json(e.witness)
        report["refusal"] = refusal
    except EmptyFeasible as e:
        code = EXIT_NO_SOLUTION
        report["status"] = "no_solution"
        report["no_solution"] = {"kind": "EmptyFeasible", "scenarios": [e.scenario]}
    except SchemaError as e:
        code = EXIT_INPUT_ERROR
        report["status"] = "input_error"
        report["error"] = {"type": "SchemaError", "message": str(e)}
    report["exit_code"] = code
    _write_atomic(output_path, _jsonout.dumps(report))
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="randopt",
        description="Solve and verify scenario-indexed optimization problems.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input", required=True, help="problem document (JSON)")
    parser.add_argument("--output", required=True, help="report path (JSON)")
    parser.add_argument("--grid", type=int, default=None, help="grid points per dimension")
    parser.add_argument("--seed", type=int, default=None, help="sampling seed")
    parser.add_argument("--polish", action="store_true", help="Newton-polish grid minima")
    args = parser.parse_args(argv)

    try:
        doc = load_problem(args.input)
    except (RandoptError, OSError) as e:
        report = {
            "schema_version": 1,
            "command": args.command,
            "status": "input_error",
            "error": {"type": type(e).__name__, "message": str(e)},
            "exit_code": EXIT_INPUT_ERROR,
        }
        try:
            _write_atomic(args.output, _jsonout.dumps(report))
        except OSError:
            pass
        print(f"randopt {args.command}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    overrides = {}
    if args.grid is not None:
        overrides["grid_m"] = args.grid
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.polish:
        overrides["polish"] = True
    if overrides:
        doc = ProblemDocument(
            doc.space,
            doc.n,
            doc.objective_source,
            doc.rf,
            doc.feasible,
            doc.search_box,
            doc.candidate,
            doc.options.with_(**overrides),
        )

    code = run(args.command, doc, args.output)
    status = {0: "ok", 1: "refused", 2: "no solution", 3: "input error"}[code]
    print(f"randopt {args.command}: {status} (exit {code}); report: {args.output}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
