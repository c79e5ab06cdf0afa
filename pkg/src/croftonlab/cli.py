"""Command-line front end: every table and check as a subcommand.

Subcommands:
  coeffs    exact coefficient tables (--crofton/--gb/--total-gauss/--variation)
            and the identity suite (--identities --max-n N)
  volumes   valuation table of a shape, optionally with Richardson error bars
  check     one named verification with tolerances and a pass/fail exit code:
            gauss-bonnet | gamma-b | crofton-mc | crofton-cpn | variation |
            crofton-variation | total-gauss | grassmann-pointwise

Reports are JSON (default) or CSV, embed the full configuration, seed and
tolerance, and contain no timestamps: identical (config, seed) runs emit
byte-identical output regardless of CROFTONLAB_THREADS.
"""

from __future__ import annotations

import argparse
import json
import sys
from math import pi, sqrt
from typing import Dict, List, Optional

import numpy as np

from . import __version__, geom, planes, valuations, varcheck
from . import coeffcore as cc

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Report plumbing
# ---------------------------------------------------------------------------


def _flatten(prefix: str, obj, out: Dict[str, object]) -> None:
    if isinstance(obj, dict):
        for key in sorted(obj, key=str):
            # CSV columns flatten (k,q) keys as "k.q"
            part = str(key).replace(",", ".")
            _flatten(f"{prefix}.{part}" if prefix else part, obj[key], out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, out)
    else:
        out[prefix] = obj


def _emit(report: dict, args) -> None:
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2)
    else:
        flat: Dict[str, object] = {}
        _flatten("", report, flat)
        keys = list(flat)
        text = ",".join(keys) + "\n" + ",".join(str(flat[k]) for k in keys)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _report(args, config: dict, results: dict, passed: Optional[bool] = None) -> dict:
    # no timestamps and no thread count: identical (config, seed) runs must
    # emit byte-identical reports regardless of CROFTONLAB_THREADS
    rep = {
        "schemaVersion": SCHEMA_VERSION,
        "tool": "croftonlab",
        "version": __version__,
        "config": config,
        "results": results,
    }
    if passed is not None:
        rep["pass"] = bool(passed)
    return rep


def _parse_axes(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _shape_from_args(args) -> geom.Shape:
    if args.shape == "ellipsoid":
        if not args.axes:
            raise SystemExit("--axes required for ellipsoids")
        return geom.Ellipsoid.from_axes(_parse_axes(args.axes))
    if args.shape == "ball":
        return geom.GeodesicBall(n=args.n, eps=args.eps, R=args.R)
    raise SystemExit(f"unknown shape {args.shape!r}")


def _shape_config(args) -> dict:
    if args.shape == "ellipsoid":
        return {"type": "ellipsoid", "axes": _parse_axes(args.axes)}
    return {"type": "ball", "n": args.n, "eps": args.eps, "R": args.R}


# ---------------------------------------------------------------------------
# coeffs
# ---------------------------------------------------------------------------


def cmd_coeffs(args) -> int:
    config = {
        "subcommand": "coeffs",
        "n": args.n,
        "r": args.r,
        "maxN": args.max_n,
    }
    if args.identities:
        results = {"solver": {}, "cancellation": {}, "epsIndependence": {}, "normalizations": {}}
        ok = True
        for n in range(2, args.max_n + 1):
            for r in range(1, n):
                sol = cc.solve_crofton_system(n, r)
                good = sol.closed_form_matches() and all(
                    v == 0 for v in sol.d_equation_residuals().values()
                )
                results["solver"][f"{n},{r}"] = good
                ok &= good
                results["cancellation"][f"{n},{r}"] = cc.verify_cancellation_identity(n, r)
                ok &= results["cancellation"][f"{n},{r}"]
            for r in range(1, n + 1):
                results["epsIndependence"][f"{n},{r}"] = cc.check_epsilon_independence(n, r)
                ok &= results["epsIndependence"][f"{n},{r}"]
        for m in range(1, 2 * args.max_n):
            good = cc.sphere_volume_coeff(m) == cc.ball_volume_coeff(m + 1) * (m + 1)
            if m % 2 == 1:
                rr = (m + 1) // 2
                good &= cc.sphere_volume_coeff(m) == cc.ball_volume_coeff(m + 1) * 2 * rr
            results["normalizations"][str(m)] = good
            ok &= good
        _emit(_report(args, config, results, ok), args)
        return 0 if ok else 1

    if args.gb:
        table = cc.gauss_bonnet_coeffs(args.n)
    elif args.crofton:
        table = cc.crofton_coeffs(args.n, args.r)
    elif args.total_gauss:
        table = cc.total_gauss_coeffs(args.n, args.r)
    elif args.variation:
        op = cc.variation_operator(args.n)
        results = {}
        for key in op.keys():
            name = "vol" if key == "vol" else f"{key[0]}:{key[1]},{key[2]}"
            results[name] = [
                {"kind": kind, "k": k, "q": q, "epsPow": p, "coeff": str(coeff)}
                for kind, k, q, p, coeff in op.targets(key)
            ]
        _emit(_report(args, config, results), args)
        return 0
    else:
        raise SystemExit("choose one of --gb/--crofton/--total-gauss/--variation/--identities")
    _emit(_report(args, config, table.to_json()), args)
    return 0


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------


def cmd_volumes(args) -> int:
    shape = _shape_from_args(args)
    config = {"subcommand": "volumes", "shape": _shape_config(args), "level": args.level}
    if args.closed_form:
        if not isinstance(shape, geom.GeodesicBall):
            raise SystemExit("--closed-form applies to balls")
        table = valuations.ball_closed_form(shape.eps, shape.n, shape.R)
    else:
        table = valuations.hermitian_volumes(shape, args.level, richardson=args.richardson)
    results = {"table": table.to_json()}
    if table.error:
        results["richardsonError"] = table.error
    _emit(_report(args, config, results), args)
    return 0


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _default_ellipsoids(n: int) -> List[List[float]]:
    if n == 2:
        return [[1, 1, 2, 2], [1, 2, 2, 3], [1, 1, 1, 2]]
    if n == 3:
        return [[1, 1, 1, 1, 2, 2], [1, 1, 2, 2, 2, 2], [1, 2, 2, 2, 2, 2]]
    raise SystemExit("default ellipsoid families exist for n in {2, 3}")


def _check_gauss_bonnet(args) -> dict:
    tol = args.tol if args.tol is not None else 1e-8
    o = cc.sphere_volume_coeff(2 * args.n - 1).to_float()
    if args.shape == "ball":
        shape: geom.Shape = geom.GeodesicBall(n=args.n, eps=args.eps, R=args.R)
    else:
        shape = _shape_from_args(args)
    r_mu, r_plane = valuations.gauss_bonnet_residual(shape, level=args.level)
    results = {
        "residualMuForm": r_mu,
        "residualPlaneForm": r_plane,
        "relativeMuForm": abs(r_mu) / o,
        "relativePlaneForm": abs(r_plane) / o,
        "tolerance": tol,
    }
    results["pass"] = results["relativeMuForm"] < tol and results["relativePlaneForm"] < tol
    return results


def _check_gamma_b(args) -> dict:
    tol = args.tol if args.tol is not None else 1e-9
    shape = geom.GeodesicBall(n=args.n, eps=args.eps, R=args.R)
    table = valuations.ball_closed_form(shape.eps, shape.n, shape.R)
    res = valuations.check_gamma_b_relation(table)
    worst = max((abs(v) for v in res.values()), default=0.0)
    return {
        "residuals": {f"{k},{q}": v for (k, q), v in sorted(res.items())},
        "worst": worst,
        "tolerance": tol,
        "pass": worst < tol,
    }


def _check_crofton_mc(args) -> dict:
    ztol = args.tol if args.tol is not None else 3.0
    n, r = args.n, args.r
    level = args.level if n == 2 else 1
    ref = geom.Ellipsoid.from_axes([1.0] * (2 * n))
    cal = planes.calibrate(n, r, 0.0, ref, args.samples, args.seed, level=level)
    items = []
    ok = True
    for i, axes in enumerate(_default_ellipsoids(n)):
        shape = geom.Ellipsoid.from_axes(axes)
        table = valuations.hermitian_volumes(shape, level)
        rhs = planes.crofton_rhs(table, n, r, 0.0)
        est = planes.chi_measure_estimate(shape, r, args.samples, args.seed + 1 + i)
        z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
        rel_sd = est.stderr / est.mean if est.mean else float("inf")
        good = abs(z) < ztol and rel_sd < 0.01
        ok &= good
        items.append(
            {
                "axes": axes,
                "estimate": est.to_json(),
                "prediction": cal.kappa * rhs,
                "z": z,
                "stderrOverMean": rel_sd,
                "pass": good,
            }
        )
    return {"kappa": cal.kappa, "kappaStderr": cal.stderr, "items": items,
            "zTolerance": ztol, "pass": ok}


def _check_crofton_cpn(args) -> dict:
    ztol = args.tol if args.tol is not None else 3.0
    n, r = args.n, args.r
    radii = [0.3, 0.6, 0.9, 1.2]
    ref = geom.GeodesicBall(n=n, eps=1.0, R=0.75)
    cal = planes.calibrate(n, r, 1.0, ref, args.samples, args.seed)
    items = []
    ok = True
    for i, R in enumerate(radii):
        ball = geom.GeodesicBall(n=n, eps=1.0, R=R)
        rhs = planes.crofton_rhs(valuations.ball_closed_form(1.0, n, R), n, r, 1.0)
        est = planes.chi_measure_estimate(ball, r, args.samples, args.seed + 1 + i)
        z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
        good = abs(z) < ztol
        ok &= good
        items.append({"R": R, "estimate": est.to_json(), "prediction": cal.kappa * rhs,
                      "z": z, "pass": good})
    return {"kappa": cal.kappa, "kappaStderr": cal.stderr, "items": items,
            "zTolerance": ztol, "pass": ok}


def _variation_keys(n: int):
    keys = [("B", k, q) for (k, q) in cc.beta_indices(n)]
    keys += [("G", 2 * q, q) for q in range(n)]
    keys.append("vol")
    return keys


def _check_variation(args) -> dict:
    shape = _shape_from_args(args)
    items = {}
    ok = True
    if isinstance(shape, geom.GeodesicBall):
        tol = args.tol if args.tol is not None else 1e-6
        flow: varcheck.Flow = varcheck.RadialFlow()
        deriv = valuations.ball_closed_form_derivative(shape.eps, shape.n, shape.R)
        tilde = varcheck.tilde_integrals(shape, flow)
        scale = max(abs(varcheck.valuation_value(deriv, key)) for key in _variation_keys(shape.n))
        for key in _variation_keys(shape.n):
            formula = varcheck.variation_formula(shape, flow, key, tilde=tilde)
            oracle = varcheck.valuation_value(deriv, key)
            err = abs(formula - oracle) / max(abs(oracle), 1e-6 * scale)
            name = "vol" if key == "vol" else f"{key[0]}:{key[1]},{key[2]}"
            items[name] = {"formula": formula, "oracle": oracle, "relErr": err}
            ok &= err < tol
    else:
        tol = args.tol if args.tol is not None else 1e-4
        d2 = 2 * shape.n
        stretch = np.diag([0.3 - 0.07 * i for i in range(d2)])
        flow = varcheck.LinearFlow(stretch)
        tilde = varcheck.tilde_integrals(shape, flow, level=args.level)
        fds = {
            key: varcheck.variation_fd(shape, flow, key, h_step=1e-3, level=args.level)
            for key in _variation_keys(shape.n)
        }
        scale = max(abs(v) for v in fds.values())
        for key in _variation_keys(shape.n):
            formula = varcheck.variation_formula(shape, flow, key, level=args.level, tilde=tilde)
            fd = fds[key]
            err = abs(formula - fd) / max(abs(fd), 1e-6 * scale)
            name = "vol" if key == "vol" else f"{key[0]}:{key[1]},{key[2]}"
            items[name] = {"formula": formula, "fd": fd, "relErr": err}
            ok &= err < tol
    return {"keys": items, "tolerance": tol, "pass": ok}


def _check_crofton_variation(args) -> dict:
    shape = _shape_from_args(args)
    if isinstance(shape, geom.GeodesicBall):
        tol = args.tol if args.tol is not None else 1e-6
        flow: varcheck.Flow = varcheck.RadialFlow()
        h = 1e-4
    else:
        tol = args.tol if args.tol is not None else 1e-4
        d2 = 2 * shape.n
        flow = varcheck.LinearFlow(np.diag([0.3 - 0.07 * i for i in range(d2)]))
        h = 1e-3
    lhs, rhs = varcheck.crofton_variation_check(shape, flow, args.r, level=args.level, h_step=h)
    err = abs(lhs - rhs) / max(abs(rhs), 1e-12)
    return {"fd": lhs, "formula": rhs, "relErr": err, "tolerance": tol, "pass": err < tol}


def _check_total_gauss(args) -> dict:
    ztol = args.tol if args.tol is not None else 3.0
    n, r = args.n, args.r
    ref = geom.Ellipsoid.from_axes([1.0] * (2 * n))
    cal = planes.calibrate(n, r, 0.0, ref, args.samples, args.seed, level=args.level)
    o = cc.sphere_volume_coeff(2 * r - 1).to_float()
    items = []
    ok = True
    for i, axes in enumerate(_default_ellipsoids(n)[:2]):
        shape = geom.Ellipsoid.from_axes(axes)
        res = planes.total_gauss_estimate(shape, r, args.samples, args.seed + 1 + i)
        table = valuations.hermitian_volumes(shape, args.level)
        pred = cal.kappa * cc.total_gauss_coeffs(n, r).eval(table.mu_dict(), table.vol, 0.0)
        z_table = res.total.z_score(pred, extra_stderr=cal.stderr * pred / cal.kappa)
        ratio = res.total.mean / res.chi.mean
        # identical plane stream for both estimates: the ratio is quadrature-exact
        ratio_err = abs(ratio - o) / o
        good = abs(z_table) < ztol and ratio_err < 1e-9
        ok &= good
        items.append(
            {
                "axes": axes,
                "total": res.total.to_json(),
                "chi": res.chi.to_json(),
                "ratio": ratio,
                "ratioTarget": o,
                "prediction": pred,
                "zTable": z_table,
                "pass": good,
            }
        )
    return {"kappa": cal.kappa, "items": items, "zTolerance": ztol, "pass": ok}


def _check_grassmann(args) -> dict:
    ztol = args.tol if args.tol is not None else 3.0
    n, r = args.n, args.r
    d = 2 * n - 1
    rng = np.random.default_rng(args.seed)
    ok = True
    items = {}
    # umbilic case: exact, zero variance
    lam = 0.8
    h_id = np.diag([1.3] + [lam] * (d - 1))
    est = planes.grassmann_sigma_average(h_id, r, 2048, args.seed)
    exact = lam ** (2 * r)
    items["umbilic"] = {"mean": est.mean, "exact": exact, "err": abs(est.mean - exact)}
    ok &= abs(est.mean - exact) < 1e-12
    # two random forms: absolute and ratio tests
    hs = []
    for _ in range(2):
        A = rng.standard_normal((d, d))
        hs.append((A + A.T) / 2)
    ests = [planes.grassmann_sigma_average(h, r, args.samples, args.seed + 1 + i)
            for i, h in enumerate(hs)]
    combos = [planes.cor44_density_combination(n, r, h) for h in hs]
    for i in range(2):
        z = ests[i].z_score(combos[i])
        items[f"h{i}"] = {"mean": ests[i].mean, "stderr": ests[i].stderr,
                          "combo": combos[i], "z": z}
        ok &= abs(z) < ztol
    ratio = ests[0].mean / ests[1].mean
    ratio_pred = combos[0] / combos[1]
    ratio_err = sqrt(
        (ests[0].stderr / ests[1].mean) ** 2
        + (ests[0].mean * ests[1].stderr / ests[1].mean ** 2) ** 2
    )
    zr = (ratio - ratio_pred) / ratio_err
    items["ratio"] = {"value": ratio, "prediction": ratio_pred, "z": zr}
    ok &= abs(zr) < ztol
    return {"items": items, "zTolerance": ztol, "pass": ok}


CHECKS = {
    "gauss-bonnet": _check_gauss_bonnet,
    "gamma-b": _check_gamma_b,
    "crofton-mc": _check_crofton_mc,
    "crofton-cpn": _check_crofton_cpn,
    "variation": _check_variation,
    "crofton-variation": _check_crofton_variation,
    "total-gauss": _check_total_gauss,
    "grassmann-pointwise": _check_grassmann,
}


def cmd_check(args) -> int:
    config = {
        "subcommand": "check",
        "what": args.what,
        "n": args.n,
        "r": args.r,
        "eps": args.eps,
        "R": args.R,
        "shape": args.shape,
        "axes": args.axes,
        "level": args.level,
        "samples": args.samples,
        "seed": args.seed,
        "tol": args.tol,
    }
    results = CHECKS[args.what](args)
    _emit(_report(args, config, results, results.get("pass")), args)
    return 0 if results.get("pass") else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="croftonlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--n", type=int, default=2)
        sp.add_argument("--r", type=int, default=1)
        sp.add_argument("--eps", type=float, default=0.0)
        sp.add_argument("--R", type=float, default=1.0)
        sp.add_argument("--shape", choices=["ellipsoid", "ball"], default="ball")
        sp.add_argument("--axes", type=str, default="")
        sp.add_argument("--level", type=int, default=2)
        sp.add_argument("--samples", type=int, default=100000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        sp.add_argument("--out", type=str, default="")

    pc = sub.add_parser("coeffs", help="exact coefficient tables and identities")
    common(pc)
    pc.add_argument("--gb", action="store_true")
    pc.add_argument("--crofton", action="store_true")
    pc.add_argument("--total-gauss", dest="total_gauss", action="store_true")
    pc.add_argument("--variation", action="store_true")
    pc.add_argument("--identities", action="store_true")
    pc.add_argument("--max-n", dest="max_n", type=int, default=6)
    pc.set_defaults(func=cmd_coeffs)

    pv = sub.add_parser("volumes", help="valuation table of a shape")
    common(pv)
    pv.add_argument("--richardson", action="store_true")
    pv.add_argument("--closed-form", dest="closed_form", action="store_true")
    pv.set_defaults(func=cmd_volumes)

    pk = sub.add_parser("check", help="run one verification, exit 0 iff it passes")
    pk.add_argument("what", choices=sorted(CHECKS))
    common(pk)
    pk.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
