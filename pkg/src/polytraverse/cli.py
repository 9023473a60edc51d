"""Command-line entry point: ``polytraverse {traverse,verify,dump-polytopes,convert}``.

Exit codes: 0 verified / completed, 1 violated, 2 bad input, 3 solver
failure, 4 truncated by a limit.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._config import default_workers, get_tolerances, use_tolerances
from .errors import InvalidInputError, ParseError, SolverStallError, UnsupportedConfigurationError
from .netio import guess_format, read_network, write_network
from .network import ActivationCode, ReluNetwork, forward, local_linear_model
from .polytope import BoundedRegion, polytope_from_code
from .traversal import TraversalConfig, traverse
from . import verifiers as V

EXIT_OK, EXIT_VIOLATED, EXIT_PARSE, EXIT_SOLVER, EXIT_TRUNCATED = 0, 1, 2, 3, 4
SCHEMA = "report_v1"
_NEGATIVE = re.compile(r"^-\.?\d")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(" ", "").split(",") if t], dtype=np.float64)
    except ValueError:
        raise ParseError(f"cannot read vector {text!r}") from None


def _json_arg(text: str, what: str):
    """Inline JSON (starting with '{') or a path to a JSON file."""
    if text.lstrip().startswith("{"):
        src = text
    else:
        try:
            src = Path(text).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {what} file {text}: {exc.strerror}") from None
    try:
        return json.loads(src)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {what}: {exc.msg}", line=exc.lineno) from None


def _region(text: Optional[str]) -> Optional[BoundedRegion]:
    return None if text is None else BoundedRegion.from_json(_json_arg(text, "region"))


def _default_region(net: ReluNetwork) -> BoundedRegion:
    if net.input_bounds is not None and np.all(np.isfinite(net.input_bounds[0])) \
            and np.all(np.isfinite(net.input_bounds[1])):
        return BoundedRegion.box(*net.input_bounds)
    return BoundedRegion.sentinel(net.input_dim)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, ActivationCode):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _config(args, region) -> TraversalConfig:
    return TraversalConfig(region, args.max_polytopes, args.time_budget,
                           not args.no_prescreen, args.workers)


def _report(args, net, config: TraversalConfig, result: dict, stats, exit_code: int) -> dict:
    tol = get_tolerances()
    return {
        "schema": SCHEMA,
        "version": __version__,
        "command": list(args.argv),
        "network": {"fingerprint": net.fingerprint(), "input_dim": net.input_dim,
                    "widths": list(net.widths), "output_dim": net.output_dim},
        "config": {"region": None if config.region is None else config.region.to_json(),
                   "max_polytopes": config.max_polytopes, "time_budget": config.time_budget,
                   "prescreen": config.prescreen, "workers": config.workers or default_workers(),
                   "tolerances": {"eps_int": tol.eps_int, "eps_num": tol.eps_num,
                                  "sentinel": tol.sentinel}},
        "result": _jsonable(result),
        "stats": None if stats is None else stats.to_dict(),
        "exit_code": exit_code,
    }


def _emit(text: str, out: Optional[str]):
    if out in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_traverse(args) -> int:
    net = read_network(args.net, args.format)
    region = _region(args.region) or _default_region(net)
    config = _config(args, region)
    start = _vector(args.start) if args.start else V._region_start(region, get_tolerances())
    codes, stats = traverse(net, start, config)
    result = {"kind": "traverse", "truncated": stats.truncated, "n_codes": len(codes),
              "codes": [str(c) for c in codes]}
    if args.models:
        result["models"] = [{"code": str(c), **_model_json(local_linear_model(net, c))} for c in codes]
    code = EXIT_TRUNCATED if stats.truncated else EXIT_OK
    _emit(json.dumps(_report(args, net, config, result, stats, code), indent=1), args.out)
    return code


def _model_json(model) -> dict:
    return {"weights": model.weights.tolist(), "bias": model.bias.tolist()}


def _verdict_code(status: str) -> int:
    return {V.VERIFIED: EXIT_OK, V.VIOLATED: EXIT_VIOLATED, V.TRUNCATED: EXIT_TRUNCATED}[status]


def _verdict_json(kind: str, v: "V.Verdict", net: ReluNetwork) -> dict:
    return {"kind": kind, "status": v.status, "witness": v.witness, "code": v.code,
            "value": v.value, "witness_output": None if v.witness is None else forward(net, v.witness),
            "detail": v.detail, "per_polytope": v.per_polytope}


def cmd_verify(args) -> int:
    net = read_network(args.net, args.format)
    region = _region(args.region)
    clip = _region(args.clip)

    if args.property is not None:
        spec = V.PropertySpec.from_json(_json_arg(args.property, "property"))
        region = region or spec.region or _default_region(net)
        config = _config(args, region)
        v = V.verify_output_property(net, region, spec, config)
        result = _verdict_json("property", v, net)
        code = _verdict_code(v.status)
    elif args.robust is not None:
        x0, eps = _vector(args.robust[0]), float(args.robust[1])
        ball = BoundedRegion.linf_ball(x0, eps)
        config = _config(args, ball if clip is None else BoundedRegion.intersection([ball, clip]))
        v = V.robustness_check(net, x0, eps, clip=clip, gamma=args.gamma, label=args.label, config=config)
        result = _verdict_json("robustness", v, net)
        code = _verdict_code(v.status)
    elif args.monotone is not None:
        j, direction = int(args.monotone[0]), args.monotone[1]
        region = region or _default_region(net)
        config = _config(args, region)
        rep = V.monotonicity(net, region, j, direction, args.output_index, config)
        result = {"kind": "monotonicity", "feature": rep.feature, "claimed": rep.claimed,
                  "verdict": rep.verdict, "holds": rep.holds, "violations": rep.violations,
                  "per_polytope": rep.coefficients}
        if rep.truncated:
            code = EXIT_TRUNCATED
        else:
            code = EXIT_OK if rep.holds else EXIT_VIOLATED
        v = rep
    elif args.range:
        region = region or _default_region(net)
        config = _config(args, region)
        rr = V.output_range(net, region, args.output_index, config)
        result = {"kind": "range", "status": V.TRUNCATED if rr.truncated else "optimal",
                  "min": rr.min, "max": rr.max, "argmin": rr.argmin, "argmax": rr.argmax,
                  "per_polytope": rr.per_polytope}
        code = EXIT_TRUNCATED if rr.truncated else EXIT_OK
        v = rr
    else:
        x0, norm = _vector(args.counterfactual[0]), args.counterfactual[1]
        spec = V.CounterfactualSpec(x0, norm, args.gamma, region)
        config = _config(args, region)
        cf = V.counterfactual(net, spec, config)
        result = {"kind": "counterfactual", "status": V.TRUNCATED if cf.truncated else cf.status,
                  "point": cf.point, "distance": cf.distance, "norm": str(args.counterfactual[1]),
                  "code": cf.code, "origin_class": cf.origin_class, "achieved_class": cf.achieved_class,
                  "duality_gap": cf.gap, "per_polytope": cf.per_polytope}
        code = EXIT_TRUNCATED if cf.truncated else EXIT_OK
        v = cf
    _emit(json.dumps(_report(args, net, config, result, v.stats, code), indent=1), args.out)
    return code


def _polygon(system, tol) -> np.ndarray:
    """Vertices of a bounded 2-D polygon ``A x <= b``, counter-clockwise."""
    A, b = system.A, system.b
    pts = []
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            M = A[[i, j]]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, b[[i, j]])
            if np.all(A @ v <= b + 1e-9 * (1.0 + np.abs(b))):
                pts.append(v)
    if not pts:
        return np.zeros((0, 2))
    P = np.unique(np.round(np.array(pts), 12), axis=0)
    c = P.mean(axis=0)
    return P[np.argsort(np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0]))]


def _row_owner(net: ReluNetwork, row: int) -> tuple:
    for level, width in enumerate(net.widths, start=1):
        if row < width:
            return level, row
        row -= width
    raise IndexError(row)


def cmd_dump(args) -> int:
    net = read_network(args.net, args.format)
    if net.input_dim != 2:
        raise UnsupportedConfigurationError("dump-polytopes needs a network with 2 inputs")
    tol = get_tolerances()
    region = _region(args.region) or _default_region(net)
    config = _config(args, region)
    start = V._region_start(region, tol)
    codes, stats = traverse(net, start, config)
    region_sys = region.to_system(tol)
    cells = []
    pieces = defaultdict(list)
    for idx, code in enumerate(codes):
        poly = polytope_from_code(net, code)
        closure = poly.system.stack(region_sys).closed()
        verts = _polygon(closure, tol)
        model = local_linear_model(net, code)
        cell = {"index": idx, "code": str(code), "vertices": verts.tolist(), **_model_json(model)}
        if net.output_dim == 1:
            cell["decision"] = _decision_segment(verts, model, args.gamma)
        cells.append(cell)
        n = len(verts)
        A, b = poly.system.A, poly.system.b
        for k in range(n):
            p, q = verts[k], verts[(k + 1) % n]
            for r in range(len(b)):
                if not A[r].any():
                    continue
                scale = 1e-7 * (1.0 + abs(b[r]))
                if abs(A[r] @ p - b[r]) <= scale and abs(A[r] @ q - b[r]) <= scale:
                    level, neuron = _row_owner(net, r)
                    parent = str(code.prefix(level - 1))
                    pieces[(level, neuron, parent)].append((p, q))
                    break
    segments = []
    for (level, neuron, parent), edges in sorted(pieces.items()):
        for p, q in _merge_collinear(edges):
            segments.append({"level": level, "neuron": neuron, "parent": parent,
                             "points": [p.tolist(), q.tolist()]})
    code = EXIT_TRUNCATED if stats.truncated else EXIT_OK
    if args.csv:
        _emit(_dump_csv(cells, segments), args.out)
    else:
        result = {"kind": "dump", "truncated": stats.truncated, "cells": cells, "segments": segments}
        _emit(json.dumps(_report(args, net, config, result, stats, code), indent=1), args.out)
    return code


def _decision_segment(verts: np.ndarray, model, gamma: float):
    """Part of ``w.x + b = gamma`` inside a convex polygon, or None."""
    w, c = model.weights[0], float(model.bias[0]) - gamma
    if len(verts) < 2 or not w.any():
        return None
    vals = verts @ w + c
    pts = []
    n = len(verts)
    for k in range(n):
        a, b = vals[k], vals[(k + 1) % n]
        if a == 0.0:
            pts.append(verts[k])
        elif a * b < 0:
            t = a / (a - b)
            pts.append(verts[k] + t * (verts[(k + 1) % n] - verts[k]))
    if len(pts) < 2:
        return None
    return [pts[0].tolist(), pts[-1].tolist()]


def _merge_collinear(edges):
    """Union of collinear segments, each returned as (start, end)."""
    p0, q0 = edges[0]
    d = (q0 - p0) / np.linalg.norm(q0 - p0)
    spans = sorted(sorted((float(p @ d), float(q @ d))) for p, q in edges)
    off = p0 - (p0 @ d) * d
    merged = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1] + 1e-9:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(off + lo * d, off + hi * d) for lo, hi in merged]


def _dump_csv(cells, segments) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "index", "code", "level", "neuron", "x", "y", "w0", "w1", "bias"])
    for c in cells:
        for x, y in c["vertices"]:
            w.writerow(["vertex", c["index"], c["code"], "", "", x, y, "", "", ""])
        for q, (row, bias) in enumerate(zip(c["weights"], c["bias"])):
            w.writerow(["model", c["index"], c["code"], "", q, "", "", row[0], row[1], bias])
    for i, s in enumerate(segments):
        for x, y in s["points"]:
            w.writerow(["segment", i, s["parent"], s["level"], s["neuron"], x, y, "", "", ""])
    return buf.getvalue()


def cmd_convert(args) -> int:
    net = read_network(args.input, args.from_format)
    write_network(net, args.output, args.to_format or guess_format(args.output))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--net", required=True, help="network file (.json or .nnet)")
    common.add_argument("--format", choices=("json", "nnet"), help="override the network format")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--max-polytopes", type=int)
    common.add_argument("--time-budget", type=float, help="seconds")
    common.add_argument("--no-prescreen", action="store_true")
    common.add_argument("--workers", type=int, default=None,
                        help="LP worker threads (default: $POLYTRAVERSE_WORKERS or 1)")
    common.add_argument("--eps-int", type=float, help="margin on strict inequalities (1e-7)")
    common.add_argument("--eps-num", type=float, help="slack on closed inequalities (1e-9)")
    common.add_argument("--sentinel", type=float, help="half-width of the box for unbounded runs (1e6)")

    p = _ArgumentParser(prog="polytraverse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    t = sub.add_parser("traverse", parents=[common], help="list every polytope meeting a region")
    t.add_argument("--region", help="region JSON (inline or file); default: network input bounds")
    t.add_argument("--start", help="comma-separated start point; default: a region interior point")
    t.add_argument("--models", action="store_true", help="include per-polytope local models")
    t.set_defaults(func=cmd_traverse)

    v = sub.add_parser("verify", parents=[common], help="run one verifier")
    mode = v.add_mutually_exclusive_group(required=True)
    mode.add_argument("--property", metavar="FILE", help="property JSON (inline or file)")
    mode.add_argument("--robust", nargs=2, metavar=("X0", "EPS"))
    mode.add_argument("--monotone", nargs=2, metavar=("J", "DIR"))
    mode.add_argument("--range", action="store_true")
    mode.add_argument("--counterfactual", nargs=2, metavar=("X0", "NORM"))
    v.add_argument("--region", help="region JSON (inline or file)")
    v.add_argument("--clip", help="clipping region for --robust")
    v.add_argument("--gamma", type=float, default=0.0, help="class threshold for scalar outputs")
    v.add_argument("--label", type=int, help="true class for --robust (default: predicted)")
    v.add_argument("--output-index", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("dump-polytopes", parents=[common], help="cells and hyperplane segments of a 2-D net")
    d.add_argument("--region", help="region JSON (inline or file)")
    d.add_argument("--csv", action="store_true", help="CSV instead of a JSON report")
    d.add_argument("--gamma", type=float, default=0.0, help="level drawn as the decision segment")
    d.set_defaults(func=cmd_dump)

    c = sub.add_parser("convert", help="convert between JSON and NNet")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", dest="output", required=True)
    c.add_argument("--from", dest="from_format", choices=("json", "nnet"))
    c.add_argument("--to", dest="to_format", choices=("json", "nnet"))
    c.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # argparse reads "-0.5,0" as an option flag; a leading space marks it as a value
    args = parser.parse_args([" " + a if _NEGATIVE.match(a) else a for a in argv])
    args.argv = argv
    overrides = {k: getattr(args, k) for k in ("eps_int", "eps_num", "sentinel")
                 if getattr(args, k, None) is not None}
    try:
        with use_tolerances(**overrides):
            return args.func(args)
    except (ParseError, InvalidInputError, UnsupportedConfigurationError) as exc:
        print(f"polytraverse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SolverStallError as exc:
        print(f"polytraverse: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"polytraverse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as exc:  # keep the exit-code contract total
        print(f"polytraverse: internal error: {exc!r}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
