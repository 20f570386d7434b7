"""Batch command-line front end.

Subcommands: toy, relax, qslb-check, jqcb-check, envelope, generate, trace,
dm-convert, characterize.  All randomness is seeded (default 0); a config
file overrides flags; outputs are JSON records and CSV tables written under
--out.  Exit codes: 0 success, 2 refused relaxation hypothesis, 1 any other
error, each with a distinct message.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import gym as gym_mod
from . import relax as relax_mod
from .boundary import jqcb_falsify, qslb_infimum
from .integrands import convex_envelope_1d, hom_linear, hom_piecewise_1d, make_integrand
from .measures import BVField
from .meshes import interval_mesh
from .relax import HypothesisError, ProblemSpec, toy_spec
from .soucek import outer_trace, soucek_pair


def _write_json(path: Path, record: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(record, f, sort_keys=True, indent=2)
        f.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _parse_levels(s: str) -> list[int]:
    return [int(t) for t in s.split(",") if t.strip()]


def _parse_vector(s: str) -> np.ndarray:
    return np.array([float(t) for t in s.split(",") if t.strip()])


def _homogeneous_from_name(name: str, N: int):
    """1-homogeneous integrands for the boundary verifiers."""
    base, _, par = name.partition(":")
    dims = (1, N)
    if base in ("abs", "euclid_sqrt1p"):
        from .integrands import hom_abs

        return hom_abs(dims)
    if base == "neg_abs":
        from .integrands import hom_neg_abs

        return hom_neg_abs(dims)
    if base == "linear_form":
        return hom_linear(_parse_vector(par), dims=dims)
    if base == "pw1h":
        cp, cm = (float(t) for t in par.split(","))
        return hom_piecewise_1d(cp, cm)
    v = make_integrand(name, dims)
    if v.recession is None:
        raise KeyError(f"integrand {name!r} has no recession function to check")
    return v.recession


WEIGHTS = {
    "toy": lambda par: relax_mod.toy_weight(float(par)),
    "const": lambda par: (lambda x, c=float(par): c * np.ones_like(np.asarray(x, dtype=float))),
}

PENALTIES = {
    "none": lambda par: None,
    "square_to": lambda par: relax_mod.square_penalty(float(par or 0.0)),
    "abs_to": lambda par: relax_mod.abs_penalty(float(par or 0.0)),
    "linear": lambda par: relax_mod.linear_penalty(float(par or 1.0)),
}


def load_problem_config(path: str) -> tuple[ProblemSpec, dict]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"config file {path!r} not found")
    dom = cp["domain"] if "domain" in cp else {}
    a = float(dom.get("a", 0.0))
    b = float(dom.get("b", 1.0))
    wname = cp.get("f", "weight", fallback="const:1.0")
    base, _, par = wname.partition(":")
    if base not in WEIGHTS:
        raise KeyError(f"unknown integrand weight {wname!r}; choose from {sorted(WEIGHTS)}")
    weight = WEIGHTS[base](par)
    from .integrands import weighted_tv_integrand

    f = weighted_tv_integrand(weight, name=wname)
    boundary = {}
    gsec = cp["g"] if "g" in cp else {}
    for key, point in (("left", a), ("right", b)):
        name = gsec.get(key, "none")
        pb, _, ppar = name.partition(":")
        if pb not in PENALTIES:
            raise KeyError(f"unknown boundary penalty {name!r}; choose from {sorted(PENALTIES)}")
        term = PENALTIES[pb](ppar)
        if term is not None:
            boundary[point] = term
    C = float(cp.get("bounds", "C", fallback="10.0"))
    run = {
        "levels": _parse_levels(cp.get("run", "levels", fallback="4,6,8")),
        "seed": int(cp.get("run", "seed", fallback="0")),
    }
    spec = ProblemSpec(a, b, f, boundary, C=C, name=f"config:{Path(path).name}")
    return spec, run


def _toy_sequence_fields(kind: str, ns, eps: float):
    if kind == "toy":
        return [relax_mod.toy_field(n, eps) for n in ns]
    if kind == "oscillation":
        fields = []
        for k in ns:
            mesh = interval_mesh(0, 1, 4 * int(k))
            nodal = np.zeros(mesh.nodes.size)
            mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
            s = np.sign(np.sin(2 * np.pi * int(k) * mids))
            nodal[1:] = np.cumsum(s * mesh.cell_volumes)
            fields.append(BVField.from_nodal(mesh, nodal))
        return fields
    raise KeyError(f"unknown sequence kind {kind!r}; use toy:eps or oscillation")


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_toy(args) -> int:
    out = Path(args.out)
    levels = tuple(range(max(2, args.levels - 4), args.levels + 1, 2))
    res = relax_mod.relax_minimize(toy_spec(args.eps, C=args.C), levels=levels)
    rec = res.to_record()
    rec["closed_form_infimum"] = relax_mod.toy_infimum(args.eps)
    _write_json(out / "toy_result.json", rec)
    _write_csv(
        out / "toy_convergence.csv",
        ["level", "direct_value"],
        zip(res.direct_table["levels"], res.direct_table["values"]),
    )
    if args.emit_plot_data:
        u = res.direct_table["minimizers"][-1]
        xs = u.mesh.nodes
        ys = np.concatenate([[u.values[0, 0]], u.values[:, 1]])
        _write_csv(out / "toy_minimizer.csv", ["x", "u"], zip(xs, ys))
    note = res.toy_note or {}
    print(f"toy eps={args.eps}: inf_direct={res.inf_direct:.6f} "
          f"min_extended={res.min_extended:.6f} min_gym={res.min_gym:.6f} "
          f"(closed form {relax_mod.toy_infimum(args.eps):.6f})")
    if note and not note["quoted_limit_matches"]:
        print(f"note: quoted sequence limit {note['quoted_limit']:.6f} differs from the "
              f"computed limit {note['infimum']:.6f} by {note['quoted_limit_discrepancy']:.6f}")
    return 0


def cmd_relax(args) -> int:
    spec, run = load_problem_config(args.config)
    res = relax_mod.relax_minimize(spec, levels=tuple(run["levels"]))
    out = Path(args.out)
    _write_json(out / "relax_result.json", res.to_record())
    _write_csv(
        out / "relax_convergence.csv",
        ["level", "direct_value"],
        zip(res.direct_table["levels"], res.direct_table["values"]),
    )
    print(f"{spec.name}: inf_direct={res.inf_direct:.6f} min_extended={res.min_extended:.6f} "
          f"min_gym={res.min_gym:.6f}")
    return 0


def cmd_qslb_check(args) -> int:
    normal = _parse_vector(args.normal)
    v = _homogeneous_from_name(args.integrand, normal.size)
    res = qslb_infimum(v, normal, mesh_level=args.level, iter_budget=args.budget, seed=args.seed)
    rec = {"integrand": args.integrand, "normal": normal.tolist(), "inf_est": res["inf_est"],
           "verdict": res["verdict"], "per_level": res["per_level"]}
    out = Path(args.out)
    if res["witness"] is not None:
        wfile = out / "qslb_witness.json"
        _write_json(wfile, {
            "vertices": res["witness"].vertices.tolist(),
            "triangles": res["witness"].triangles.tolist(),
            "values": res["witness"].values.tolist(),
        })
        rec["witness_file"] = str(wfile)
    _write_json(out / "qslb_result.json", rec)
    print(f"qslb-check {args.integrand} normal={args.normal}: {res['verdict']} "
          f"(inf_est={res['inf_est']:.6g})")
    return 0


def cmd_jqcb_check(args) -> int:
    normal = _parse_vector(args.normal)
    v = _homogeneous_from_name(args.integrand, normal.size)
    res = jqcb_falsify(v, normal, budget=args.budget, seed=args.seed)
    disproved = res["counterexample"] is not None
    rec = {"integrand": args.integrand, "normal": normal.tolist(), "gap": res["gap"],
           "status": "disproved" if disproved else "not disproved"}
    _write_json(Path(args.out) / "jqcb_result.json", rec)
    print(f"jqcb-check {args.integrand}: {rec['status']} (gap={res['gap']:.3g})")
    return 0


def cmd_envelope(args) -> int:
    a, b, n = args.grid.split(",")
    grid = np.linspace(float(a), float(b), int(n))
    v = make_integrand(args.integrand)
    env = convex_envelope_1d(v, grid)
    rows = [(t, float(v(t)), float(env(t))) for t in grid]
    out = Path(args.out)
    _write_csv(out / "envelope.csv", ["t", "v", "envelope"], rows)
    _write_json(out / "envelope_result.json", {
        "integrand": args.integrand,
        "grid": [float(a), float(b), int(n)],
        "max_drop": max(r[1] - r[2] for r in rows),
    })
    print(f"envelope {args.integrand}: wrote {int(n)} samples")
    return 0


def cmd_generate(args) -> int:
    kind, _, par = args.sequence.partition(":")
    eps = float(par) if par else 0.5
    ns = [int(t) for t in args.n.split(",")]
    fields = _toy_sequence_fields(kind, ns, eps)
    gm, report = gym_mod.generate_from_fields(fields, window_h=args.window, tol=args.tol)
    out = Path(args.out)
    _write_json(out / "lambda.json", gm.to_record())
    _write_json(out / "generate_report.json", report)
    print(f"generate {args.sequence}: max pairing gap {report['max_gap']:.3e} "
          f"(tol {report['tol']:.1e}), lambda atoms "
          f"{[(p, round(m, 6)) for p, m in gm.lam_atoms]}")
    return 0


def cmd_trace(args) -> int:
    if args.toy is not None:
        eps = args.toy
        mesh = interval_mesh(0, 1, 32)
        u = BVField.constant(mesh, eps / 2)
        pair = soucek_pair(u, {1.0: 1.0 - eps})
    else:
        with open(args.pair) as f:
            rec = json.load(f)
        from .measures import DiscreteMeasure
        from .soucek import SoucekPair

        pair = SoucekPair(BVField.from_record(rec["u"]), DiscreteMeasure.from_record(rec["alpha"]))
    tp = outer_trace(pair)
    rec = tp.to_record()
    _write_json(Path(args.out) / "trace_result.json", rec)
    print("point  inner  outer")
    for x in sorted(tp.inner):
        print(f"{x:5g}  {np.asarray(tp.inner[x]).ravel()}  {np.asarray(tp.outer[x]).ravel()}")
    return 0


def cmd_dm_convert(args) -> int:
    with open(args.infile) as f:
        gm = gym_mod.GenYoungMeasure.from_record(json.load(f))
    dm = gym_mod.to_diperna_majda(gm)
    out = Path(args.out)
    _write_json(out / "dm.json", dm.to_record())
    rec = {"converted": True}
    if args.roundtrip:
        back = gym_mod.from_diperna_majda(dm)
        worst = 0.0
        for label, g, v in gym_mod.default_dictionary(gm.dims):
            worst = max(worst, abs(gym_mod.pairing(gm, g, v) - gym_mod.pairing(back, g, v)))
            worst = max(worst, abs(gym_mod.pairing(gm, g, v) - dm.pairing(g, v)))
        rec["max_pairing_gap"] = worst
        print(f"dm-convert: round-trip max pairing gap {worst:.3e}")
    _write_json(out / "dm_convert_report.json", rec)
    return 0


def cmd_characterize(args) -> int:
    if args.toy is not None:
        gm = relax_mod.toy_limit_gym(args.toy)
    else:
        with open(args.infile) as f:
            gm = gym_mod.GenYoungMeasure.from_record(json.load(f))
    if gm.underlying is None:
        raise ValueError("characterization requires an underlying deformation in the record")
    report = gym_mod.check_characterization(gm, gm.underlying)
    rec = {
        k: {kk: vv for kk, vv in report[k].items() if kk in ("pass", "worst", "value")}
        for k in ("i", "ii", "iii", "iv")
    }
    rec["all_pass"] = report["all_pass"]
    _write_json(Path(args.out) / "characterize_result.json", rec)
    for k in ("i", "ii", "iii", "iv"):
        print(f"({k}) {'PASS' if report[k]['pass'] else 'FAIL'}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bvgym", description=__doc__)
    ap.add_argument("--out", default="bvgym_out", help="output directory for records and tables")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", help="solve the weighted-TV model problem")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--C", type=float, default=10.0)
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("relax", help="relaxation from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("qslb-check", help="quasi-sublinear-from-below verdict")
    p.add_argument("--integrand", required=True)
    p.add_argument("--normal", required=True, help='e.g. "1,0"')
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--budget", type=int, default=2000)
    p.set_defaults(func=cmd_qslb_check)

    p = sub.add_parser("jqcb-check", help="boundary Jensen inequality falsifier")
    p.add_argument("--integrand", required=True)
    p.add_argument("--normal", required=True)
    p.add_argument("--budget", type=int, default=400)
    p.set_defaults(func=cmd_jqcb_check)

    p = sub.add_parser("envelope", help="1D convex envelope of a catalog integrand")
    p.add_argument("--integrand", required=True)
    p.add_argument("--grid", default="-3,3,1201", help="a,b,n")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("generate", help="generate a Young measure from a sequence")
    p.add_argument("--sequence", required=True, help="toy:eps or oscillation")
    p.add_argument("--n", default="100,300,1000", help="sequence indices")
    p.add_argument("--window", type=float, default=1.0 / 32)
    p.add_argument("--tol", type=float, default=1e-2)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("trace", help="inner and outer traces of a pair")
    p.add_argument("--pair", help="JSON pair record")
    p.add_argument("--toy", type=float, help="use the toy limit pair at this eps")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("dm-convert", help="convert to the compactified-ball form")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--roundtrip", action="store_true")
    p.set_defaults(func=cmd_dm_convert)

    p = sub.add_parser("characterize", help="gradient characterization checks")
    p.add_argument("--in", dest="infile")
    p.add_argument("--toy", type=float)
    p.set_defaults(func=cmd_characterize)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    for name in ("tol", "window", "budget"):
        if getattr(args, name, None) is not None and getattr(args, name) <= 0:
            print(f"error: {name} must be positive", file=sys.stderr)
            return 1
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except HypothesisError as e:
        print(f"hypothesis refused: {e}", file=sys.stderr)
        return 2
    except (KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
