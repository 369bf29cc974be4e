"""Command-line entry point.

Every command prints (or writes with --out) one JSON report that embeds the
parsed configuration and the library version.  Exit codes: 0 on success,
2 when the computation ran but the verdict is negative, 1 on errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CardinalityShortfall,
    HypblendError,
    HypothesisFails,
    ParseError,
    SearchExhausted,
    ValidationError,
)

NEGATIVE = (HypothesisFails, CardinalityShortfall, SearchExhausted)
BUILTIN_MODELS = ("smale", "blender", "disjoint", "integrable")


def to_jsonable(obj):
    """Plain JSON data for reports: arrays to lists, fractions to 'p/q', non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_text"):
            return obj.to_text()
        return to_jsonable({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    if hasattr(obj, "to_text"):
        return obj.to_text()
    return obj


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"file not found: {path}", file=path)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", file=path, line=exc.lineno) from exc


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"file not found: {path}", file=path)
    return p.read_text()


def load_horseshoe(source: str):
    from . import horseshoe as hs

    if source in BUILTIN_MODELS:
        return getattr(hs, f"{source}_model")()
    return hs.StandardAffineHorseshoe.from_json(_read_json(source))


def load_ifs(source: str):
    from .ifs import CenterIfs, extract_center_ifs

    if source not in BUILTIN_MODELS:
        obj = _read_json(source)
        if "translations" in obj:
            return CenterIfs(obj["L"], obj["translations"])
    return extract_center_ifs(load_horseshoe(source))


def load_sft(args):
    from .subshift import SubshiftOfFiniteType, parse_sft

    if getattr(args, "sft", None):
        return parse_sft(_read_text(args.sft))
    if getattr(args, "golden", False):
        return SubshiftOfFiniteType.golden_mean()
    return SubshiftOfFiniteType.full_shift(getattr(args, "full", None) or 2)


def _floats(text: str) -> list:
    return [float(Fraction(t)) for t in text.split(",") if t.strip()]


def _matrix(text: str) -> np.ndarray:
    try:
        return np.asarray(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ParseError(f"bad matrix literal: {text}") from exc


def _point(obj):
    from .cocycle import SymbolicPoint

    return SymbolicPoint(tuple(obj["left"]), tuple(obj["core"]), tuple(obj["right"]), int(obj.get("start", 0)))


# ---------------------------------------------------------------------------
# command handlers return (result, negative)


def cmd_sft(args):
    from .subshift import extract_full_shift, marker_positions_aligned, top_entropy

    sft = load_sft(args)
    if args.action == "entropy":
        return {"entropy": top_entropy(sft), "alphabet_size": sft.alphabet_size}, False
    ext = extract_full_shift(sft, args.epsilon)
    return {"k": ext.k, "count": ext.count, "entropy": ext.entropy, "marker": ext.marker,
            "aligned": marker_positions_aligned(ext)}, False


def cmd_cocycle(args):
    from . import cocycle as co
    from .subshift import parry_measure

    if args.action == "common-measure":
        res = co.common_invariant_measure_test(_matrix(args.B), _matrix(args.Bp), args.tol)
        return res, res["verdict"] != "Exists"
    if args.action == "pinching":
        blocks = [tuple(b) for b in json.loads(args.blocks)]
        res = co.pinching_bunching_check(blocks, args.j, args.alpha, args.n)
        return res, not (res["pinched"] and res["bunched"])
    if not args.model:
        raise ParseError("--model is required")
    coc = co.LocallyConstantCocycle.from_json(_read_json(args.model))
    if args.action == "lyapunov":
        return co.lyapunov_exponents(coc, parry_measure(coc.base), args.orbits, args.length, args.seed), False
    if args.action == "holonomy":
        x, y = _point(json.loads(args.x)), _point(json.loads(args.y))
        return co.holonomy(coc, x, y, args.side, args.tol), False
    res = co.fiber_bunching_check(coc, args.C, args.eps, seed=args.seed)
    return res, not res["passed"]


def cmd_horseshoe(args):
    from . import horseshoe as hs

    h = load_horseshoe(args.model)
    if args.action == "validate":
        res = hs.validate(h, raise_on_fail=False)
        return res, not res["ok"]
    if args.action == "spectrum":
        return hs.lyapunov_spectrum(h), False
    if args.action == "hypothesis":
        res = hs.blender_entropy_hypothesis(h, args.k, raise_on_fail=False)
        return res, not res["entropy_ok"]
    if args.action == "essential":
        res = hs.essential_center_test(h)
        return res, res["verdict"] != "Essential"
    res = hs.reverse_doubling_search(h, _floats(args.rho_grid), _floats(args.eta_grid), seed=args.seed)
    return res, not res.get("certified", False)


def cmd_ifs(args):
    from . import ifs as fs

    ifs = load_ifs(args.model)
    if args.action == "check-recurrent":
        K = fs.GridSet.from_text(_read_text(args.set))
        res = fs.recurrent_compact_check(ifs, K)
        return res, not res["certified"]
    if args.action == "search-recurrent":
        res = fs.search_recurrent_compact(ifs, args.resolution)
        if res["found"] and args.save:
            Path(args.save).write_text(res["set"].to_text())
        return res, not res["found"]
    if args.action == "claim":
        res = fs.coverage_claim_bruteforce(ifs, args.n, args.beta)
        return res, not res["claim_ok"]
    res = fs.perturb_and_verify(ifs, args.n, args.c, args.beta, args.trials, seed=args.seed)
    return res, res["success_count"] == 0


def cmd_blender(args):
    from . import blender as bl
    from .ifs import extract_center_ifs, recurrent_compact_check, search_recurrent_compact

    h = load_horseshoe(args.model)
    if args.action == "test":
        res = bl.monte_carlo_blender(h, args.graphs, args.max_iter, seed=args.seed)
        return res, res["intersect_count"] < args.graphs
    ifs = extract_center_ifs(h)
    found = search_recurrent_compact(ifs, args.resolution)
    if not found["found"]:
        return {"certified": False, "reason": "no recurrent center set"}, True
    # the largest recurrent set has no slack, so any translation shift can break it
    K_c = found["set"].erode(math.ceil(args.margin * args.resolution - 1e-9))
    if K_c.is_empty() or not recurrent_compact_check(ifs, K_c)["certified"]:
        return {"certified": False, "reason": "eroded center set is not recurrent", "margin": args.margin}, True
    K = bl.build_transversal_recurrent_set(h, K_c)
    res = bl.robustness_probe(h, K, args.perturbations, args.delta, args.seed)
    return res, not res["all_certified"]


def _load_sequence(obj: dict):
    from .shadowing import HyperbolicSequence

    steps = len(obj["offsets"])
    seq = HyperbolicSequence(int(obj["n_min"]), obj["linear_u"], obj["linear_s"], obj["offsets"])
    scale = float(obj.get("remainder_scale", 0.0))
    if scale:
        # r(x) = scale * sin(x) componentwise has C^1 size |scale|
        seq.remainders = [lambda x, s=scale: s * np.sin(x)] * steps
        seq.eta = abs(scale)
    return seq


def cmd_shadow(args):
    from .shadowing import PseudoOrbit, shadow_affine, shadow_nonlinear

    seq = _load_sequence(_read_json(args.seq))
    po = _read_json(args.pseudo)
    pseudo = PseudoOrbit(int(po.get("n_min", seq.n_min)), np.asarray(po["points"], dtype=float))
    if args.nonlinear or seq.remainders is not None:
        orbit = shadow_nonlinear(seq, pseudo, tol=args.tol)
    else:
        orbit = shadow_affine(seq, pseudo)
    eps = pseudo.epsilon(seq) if seq.remainders is None else float("nan")
    return {"orbit": orbit, "epsilon": eps, "theta": seq.theta, "kappa": seq.kappa}, False


def cmd_katok(args):
    from . import katok as kt

    sft = load_sft(args)
    if args.action == "refine":
        res = kt.marker_refine(sft, args.N, args.delta, seed=args.seed)
        res.pop("filtered_words", None)
        return res, False
    depth = -math.log2(args.rho)
    if abs(depth - round(depth)) > 1e-12 or depth < 0:
        raise ValidationError("rho must be a power 2^-j with j >= 0", rho=args.rho)
    ret = kt.select_return_set(sft, args.delta, args.xi, args.m, gamma=args.gamma, rho_depth=int(round(depth)),
                               ball_depth=args.ball_depth)
    if args.action == "select":
        return ret.summary(), False
    h = load_horseshoe(args.model) if args.model else None
    res = kt.assemble_horseshoe(ret, h=h, seed=args.seed)
    res["return_set"] = ret.summary()
    return res, not res["exceeds_target"]


def cmd_cover(args):
    from .circle_cover import cover_circle, verify_cover

    pts = [Fraction(t) for t in args.points.split(",") if t.strip()]
    cover = cover_circle(pts, Fraction(args.a))
    check = verify_cover(cover)
    return {"kappa": cover.kappa, "arcs": [(s, (s + cover.kappa) % 1) for s in cover.starts],
            "points": cover.points, "check": check}, False


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypblend", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--threads", type=int, default=int(os.environ.get("HYPBLEND_THREADS", "1")),
                   help="worker count (default from HYPBLEND_THREADS); reports do not depend on it")
    sub = p.add_subparsers(dest="command", required=True)

    def shift_args(q):
        q.add_argument("--sft", help="file in the 'sft <n>' format or JSON")
        q.add_argument("--full", type=int, help="full shift on this many symbols")
        q.add_argument("--golden", action="store_true", help="golden-mean shift")

    q = sub.add_parser("sft", help="entropy and full-shift extraction")
    q.add_argument("action", choices=["entropy", "extract"])
    shift_args(q)
    q.add_argument("--epsilon", type=float, default=0.3)
    q.set_defaults(func=cmd_sft)

    q = sub.add_parser("cocycle", help="linear cocycles over subshifts")
    q.add_argument("action", choices=["lyapunov", "holonomy", "bunching", "common-measure", "pinching"])
    q.add_argument("--model", help="cocycle JSON")
    q.add_argument("--orbits", type=int, default=100)
    q.add_argument("--length", type=int, default=100)
    q.add_argument("--x", help="point JSON {left, core, right, start}")
    q.add_argument("--y")
    q.add_argument("--side", choices=["stable", "unstable"], default="stable")
    q.add_argument("--tol", type=float, default=1e-8)
    q.add_argument("--C", type=float, default=10.0)
    q.add_argument("--eps", type=float, default=0.1)
    q.add_argument("--B", help="matrix literal, e.g. [[2,0],[0,1]]")
    q.add_argument("--Bp")
    q.add_argument("--blocks", help="JSON list of [min, max] rates in increasing order")
    q.add_argument("--j", type=int, default=0)
    q.add_argument("--alpha", type=float, default=0.1)
    q.add_argument("--n", type=int, default=1)
    q.set_defaults(func=cmd_cocycle)

    q = sub.add_parser("horseshoe", help="standard affine horseshoes")
    q.add_argument("action", choices=["validate", "spectrum", "hypothesis", "essential", "reverse-doubling"])
    q.add_argument("--model", default="smale", help=f"JSON file or one of {', '.join(BUILTIN_MODELS)}")
    q.add_argument("--k", type=int, default=1)
    q.add_argument("--rho-grid", default="0.1,0.05")
    q.add_argument("--eta-grid", default="1/2,1/4,1/8,1/16,1/32,1/64")
    q.set_defaults(func=cmd_horseshoe)

    q = sub.add_parser("ifs", help="center iterated function systems")
    q.add_argument("action", choices=["check-recurrent", "search-recurrent", "perturb", "claim"])
    q.add_argument("--model", default="blender", help="IFS JSON {L, translations}, horseshoe JSON or builtin")
    q.add_argument("--set", help="grid set file")
    q.add_argument("--resolution", type=int, default=1000)
    q.add_argument("--save", help="write the found set here")
    q.add_argument("--n", type=int, default=2)
    q.add_argument("--c", type=float, default=0.5)
    q.add_argument("--beta", type=float, default=1.0)
    q.add_argument("--trials", type=int, default=10)
    q.set_defaults(func=cmd_ifs)

    q = sub.add_parser("blender", help="blender criterion and robustness")
    q.add_argument("action", choices=["test", "robustness"])
    q.add_argument("--model", default="blender")
    q.add_argument("--graphs", type=int, default=200)
    q.add_argument("--max-iter", type=int, default=60)
    q.add_argument("--resolution", type=int, default=1000)
    q.add_argument("--perturbations", type=int, default=20)
    q.add_argument("--delta", type=float, default=1e-3)
    q.add_argument("--margin", type=float, default=0.1, help="erode the searched center set by this width")
    q.set_defaults(func=cmd_blender)

    q = sub.add_parser("shadow", help="shadow a pseudo-orbit")
    q.add_argument("--seq", required=True, help="sequence JSON {n_min, linear_u, linear_s, offsets}")
    q.add_argument("--pseudo", required=True, help="pseudo-orbit JSON {n_min, points}")
    q.add_argument("--nonlinear", action="store_true")
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_shadow)

    q = sub.add_parser("katok", help="return sets, assembly and marker refinement")
    q.add_argument("action", choices=["select", "assemble", "refine"])
    shift_args(q)
    q.add_argument("--delta", type=float, default=0.2)
    q.add_argument("--rho", type=float, default=0.125)
    q.add_argument("--xi", type=float, default=1 / 24)
    q.add_argument("--m", type=int, default=24)
    q.add_argument("--gamma", type=float, default=0.5)
    q.add_argument("--ball-depth", type=int, default=0)
    q.add_argument("--model", help="affine horseshoe for assembly by shadowing")
    q.add_argument("--N", type=int, default=8)
    q.set_defaults(func=cmd_katok)

    q = sub.add_parser("cover-circle", help="equal-arc covers of finite circle sets")
    q.add_argument("--points", required=True, help="comma-separated rationals in [0, 1)")
    q.add_argument("--a", required=True)
    q.set_defaults(func=cmd_cover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "threads")}
    report = {"command": args.command, "config": config, "version": __version__}
    code = 0
    try:
        result, negative = args.func(args)
        report["result"] = result
        code = 2 if negative else 0
    except NEGATIVE as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc), "details": exc.details}
        code = 2
    except (HypblendError, ValueError) as exc:
        details = getattr(exc, "details", {})
        print(f"hypblend: {type(exc).__name__}: {exc}", file=sys.stderr)
        report["error"] = {"type": type(exc).__name__, "message": str(exc), "details": details}
        code = 1
    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
