"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines;
the suite is deterministic (fixed seeds, counter-based RNG substreams).

Criteria:
   1 exact coefficient suite (solver, cancellation, eps-independence, norms)
   2 exterior-algebra densities vs the permutation oracle, umbilic closed form
   3 Gauss-Bonnet residuals: closed-form balls (eps = +-1) and flat ellipsoids
   4 Gamma/B curvature relation residuals on curved balls
   5 flat Crofton Monte Carlo across ellipsoid families, calibrated once
   6 projective (eps = 1) Crofton radius dependence
   7 variation formulas vs finite differences / closed-form derivatives
   8 variation of the plane measure: formula vs differentiated bracket
   9 pointwise Grassmann average vs the density combination
  10 plane-averaged total Gauss curvature of sections
"""

import time
from math import factorial, pi, sqrt

import numpy as np
import pytest

from croftonlab import coeffcore as cc
from croftonlab import extalg, geom, planes
from croftonlab import valuations as val
from croftonlab import varcheck as vc


def report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def variation_keys(n):
    keys = [("B", k, q) for (k, q) in cc.beta_indices(n)]
    keys += [("G", 2 * q, q) for q in range(n)]
    keys.append("vol")
    return keys


# ---------------------------------------------------------------------------
# 1. Exact coefficient suite
# ---------------------------------------------------------------------------


def test_criterion_01_exact_coefficients():
    t0 = time.time()
    ok = True
    for n in range(2, 9):
        for r in range(1, n):
            sol = cc.solve_crofton_system(n, r)
            ok &= sol.closed_form_matches()
            ok &= all(v == 0 for v in sol.d_equation_residuals().values())
    for n in range(2, 11):
        for r in range(1, n):
            ok &= cc.verify_cancellation_identity(n, r)
    for n in range(1, 7):
        for r in range(1, n + 1):
            ok &= cc.check_epsilon_independence(n, r)
    for r in range(1, 9):
        ok &= cc.sphere_volume_coeff(2 * r - 1) == cc.ball_volume_coeff(2 * r) * (2 * r)
    for m in range(0, 17):
        ok &= cc.sphere_volume_coeff(m) == cc.ball_volume_coeff(m + 1) * (m + 1)
    for n in range(2, 7):
        for r in range(1, n):
            lhs = cc.total_gauss_coeffs(n, r)
            rhs = cc.flat_crofton_coeffs(n, r).scaled(cc.sphere_volume_coeff(2 * r - 1))
            ok &= lhs.same_coefficients(rhs)
    elapsed = time.time() - t0
    ok &= elapsed < 10.0
    report(1, ok, f"solver n<=8, cancellation n<=10, eps-independence n<=6, "
                  f"normalizations, total-curvature identity; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Exterior-algebra oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_02_density_oracle():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n in (2, 3):
        d = 2 * n - 1
        hs = rng.standard_normal((100, d, d))
        hs = (hs + np.swapaxes(hs, 1, 2)) / 2
        for h in hs:
            for (k, q) in cc.beta_indices(n):
                a = extalg.density_beta(n, k, q, h)
                b = extalg.permutation_oracle("beta", n, k, q, h)
                worst = max(worst, abs(a - b) / max(1.0, abs(b)))
            for (k, q) in cc.gamma_indices(n):
                a = extalg.density_gamma(n, k, q, h)
                b = extalg.permutation_oracle("gamma", n, k, q, h)
                worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    ok = worst < 1e-10
    # umbilic closed form: the beta density of degree 2r in lambda is
    # 2^{2a-2} lambda^{2r} (n-1)! at (k, q) = (2n-2r-1, n-r-a)
    lam = 1.37
    for n in (2, 3):
        h = np.diag([2.2] + [lam] * (2 * n - 2))
        for r in range(0, n):
            for a in range(1, r + 2):
                k, q = 2 * n - 2 * r - 1, n - r - a
                if not cc.valid_index(n, k, q) or k == 2 * q:
                    continue
                got = extalg.density_beta(n, k, q, h)
                want = 2.0 ** (2 * a - 2) * lam ** (2 * r) * factorial(n - 1)
                ok &= abs(got - want) <= 1e-13 * abs(want)
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    report(2, ok, f"100 random h per (k,q), n in {{2,3}}, worst rel err {worst:.2e}; "
                  f"umbilic closed form exact; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. Gauss-Bonnet
# ---------------------------------------------------------------------------


def test_criterion_03_gauss_bonnet():
    t0 = time.time()
    worst_ball = 0.0
    for eps in (-1.0, 1.0):
        for n in (2, 3):
            o = cc.sphere_volume_coeff(2 * n - 1).to_float()
            for R in (0.3, 0.6, 0.9):
                ball = geom.GeodesicBall(n=n, eps=eps, R=R)
                r51, r52 = val.gauss_bonnet_residual(ball)
                worst_ball = max(worst_ball, abs(r51) / o, abs(r52) / o)
    ok = worst_ball < 1e-8
    worst_flat = 0.0
    o = cc.sphere_volume_coeff(3).to_float()
    for axes in ([1, 1, 2, 2], [1, 2, 2, 3], [1, 1, 1, 2]):
        r51, r52 = val.gauss_bonnet_residual(geom.Ellipsoid.from_axes(axes), level=2)
        worst_flat = max(worst_flat, abs(r51) / o, abs(r52) / o)
    o6 = cc.sphere_volume_coeff(5).to_float()
    r51, r52 = val.gauss_bonnet_residual(
        geom.Ellipsoid.from_axes([1, 1, 1, 1, 1, 2]), level=1
    )
    worst_flat = max(worst_flat, abs(r51) / o6, abs(r52) / o6)
    ok &= worst_flat < 1e-6
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    report(3, ok, f"balls eps=+-1 n=2,3 R=0.3/0.6/0.9: {worst_ball:.2e} (<1e-8); "
                  f"flat ellipsoids: {worst_flat:.2e} (<1e-6); {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. Gamma/B relation
# ---------------------------------------------------------------------------


def test_criterion_04_gamma_b_relation():
    worst = 0.0
    keys = None
    for eps in (-1.0, 1.0):
        for R in (0.5, 0.8):
            table = val.ball_closed_form(eps, 3, R)
            res = val.check_gamma_b_relation(table)
            keys = sorted(res)
            worst = max(worst, max(abs(v) for v in res.values()))
    ok = worst < 1e-9
    report(4, ok, f"residuals on eps=+-1 balls, n=3, strict keys {keys}: {worst:.2e}")


# ---------------------------------------------------------------------------
# 5. Flat Crofton Monte Carlo
# ---------------------------------------------------------------------------

FLAT_FAMILIES = {
    2: [[1, 1, 2, 2], [1, 2, 2, 3], [1, 1, 1, 2]],
    3: [[1, 1, 1, 1, 2, 2], [1, 1, 2, 2, 2, 2], [1, 2, 2, 2, 2, 2]],
}
TABLE_LEVEL = {2: 2, 3: 1}


@pytest.fixture(scope="module")
def flat_tables():
    tables = {}
    for n, fams in FLAT_FAMILIES.items():
        for axes in fams:
            tables[(n, tuple(axes))] = val.hermitian_volumes(
                geom.Ellipsoid.from_axes(axes), level=TABLE_LEVEL[n]
            )
    return tables


def test_criterion_05_crofton_monte_carlo(flat_tables):
    t0 = time.time()
    N = 1_000_000
    ok = True
    details = []
    for n, r in ((2, 1), (3, 1), (3, 2)):
        ref = geom.GeodesicBall(n=n, eps=0.0, R=1.0)
        cal = planes.calibrate(n, r, 0.0, ref, N, seed=500 + 10 * n + r)
        for i, axes in enumerate(FLAT_FAMILIES[n]):
            shape = geom.Ellipsoid.from_axes(axes)
            rhs = planes.crofton_rhs(flat_tables[(n, tuple(axes))], n, r, 0.0)
            est = planes.chi_measure_estimate(shape, r, N, seed=600 + 10 * n + r + i)
            z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
            rel_sd = est.stderr / est.mean
            ok &= abs(z) < 3.0 and rel_sd < 0.01
            details.append(f"({n},{r}) {axes}: z={z:+.2f} sd/mean={rel_sd:.4f}")
    elapsed = time.time() - t0
    ok &= elapsed < 600.0
    report(5, ok, "; ".join(details) + f"; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 6. Projective Crofton radius dependence
# ---------------------------------------------------------------------------


def test_criterion_06_crofton_projective():
    t0 = time.time()
    N = 1_000_000
    n, r = 2, 1
    cal = planes.calibrate(n, r, 1.0, geom.GeodesicBall(n=n, eps=1.0, R=0.75), N, seed=61)
    ok = True
    details = []
    for i, R in enumerate((0.3, 0.6, 0.9, 1.2)):
        ball = geom.GeodesicBall(n=n, eps=1.0, R=R)
        rhs = planes.crofton_rhs(val.ball_closed_form(1.0, n, R), n, r, 1.0)
        est = planes.chi_measure_estimate(ball, r, N, seed=62 + i)
        z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
        ok &= abs(z) < 3.0
        details.append(f"R={R}: z={z:+.2f}")
    elapsed = time.time() - t0
    ok &= elapsed < 300.0
    report(6, ok, "; ".join(details) + f"; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. Variation formulas
# ---------------------------------------------------------------------------


def _fd_tables(shape, flow, h, level):
    plus = val.hermitian_volumes(flow.transport(shape, h), level)
    minus = val.hermitian_volumes(flow.transport(shape, -h), level)
    return plus, minus


def test_criterion_07_variation_formulas():
    t0 = time.time()
    ok = True
    worst_ball = 0.0
    for eps in (-1.0, 0.0, 1.0):
        for n in (2, 3):
            R = 0.8 if eps != 1.0 else 0.5
            ball = geom.GeodesicBall(n=n, eps=eps, R=R)
            flow = vc.RadialFlow()
            tilde = vc.tilde_integrals(ball, flow)
            deriv = val.ball_closed_form_derivative(eps, n, R)
            scale = max(abs(vc.valuation_value(deriv, k)) for k in variation_keys(n))
            for key in variation_keys(n):
                formula = vc.variation_formula(ball, flow, key, tilde=tilde)
                oracle = vc.valuation_value(deriv, key)
                err = abs(formula - oracle) / max(abs(oracle), 1e-6 * scale)
                worst_ball = max(worst_ball, err)
    ok &= worst_ball < 1e-6

    worst_flat = 0.0
    level, h = 2, 1e-3
    for axes, diag in (
        ([1, 1, 2, 2], [0.3, -0.1, 0.2, 0.05]),
        ([1, 2, 2, 3], [0.1, 0.25, -0.15, 0.2]),
    ):
        shape = geom.Ellipsoid.from_axes(axes)
        flow = vc.LinearFlow(np.diag(diag))
        tilde = vc.tilde_integrals(shape, flow, level=level)
        plus, minus = _fd_tables(shape, flow, h, level)
        fds = {
            key: (vc.valuation_value(plus, key) - vc.valuation_value(minus, key)) / (2 * h)
            for key in variation_keys(2)
        }
        scale = max(abs(v) for v in fds.values())
        for key in variation_keys(2):
            formula = vc.variation_formula(shape, flow, key, level=level, tilde=tilde)
            err = abs(formula - fds[key]) / max(abs(fds[key]), 1e-6 * scale)
            worst_flat = max(worst_flat, err)
    ok &= worst_flat < 1e-4

    # central differences converge at second order
    ball = geom.GeodesicBall(n=2, eps=1.0, R=0.5)
    exact = vc.valuation_value(val.ball_closed_form_derivative(1.0, 2, 0.5), ("B", 2, 0))
    errs = [
        abs(vc.variation_fd(ball, vc.RadialFlow(), ("B", 2, 0), h_step=hh) - exact)
        for hh in (1e-2, 5e-3, 2.5e-3)
    ]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok &= all(abs(rr - 4.0) < 0.3 for rr in ratios)
    elapsed = time.time() - t0
    ok &= elapsed < 300.0
    report(7, ok, f"balls worst {worst_ball:.2e} (<1e-6); ellipsoids worst "
                  f"{worst_flat:.2e} (<1e-4); fd ratios {ratios[0]:.2f}/{ratios[1]:.2f}; "
                  f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 8. Variation of the plane measure
# ---------------------------------------------------------------------------


def test_criterion_08_crofton_variation():
    t0 = time.time()
    ok = True
    worst_ball = 0.0
    for eps in (-1.0, 0.0, 1.0):
        for n, rs in ((2, (1,)), (3, (1, 2))):
            R = 0.8 if eps != 1.0 else 0.5
            ball = geom.GeodesicBall(n=n, eps=eps, R=R)
            for r in rs:
                lhs, rhs = vc.crofton_variation_check(ball, vc.RadialFlow(), r, h_step=1e-4)
                worst_ball = max(worst_ball, abs(lhs - rhs) / abs(rhs))
    ok &= worst_ball < 1e-6
    worst_flat = 0.0
    for axes in ([1, 1, 2, 2], [1, 2, 2, 3]):
        shape = geom.Ellipsoid.from_axes(axes)
        flow = vc.LinearFlow(np.diag([0.3, -0.1, 0.2, 0.05]))
        lhs, rhs = vc.crofton_variation_check(shape, flow, 1, level=2, h_step=1e-3)
        worst_flat = max(worst_flat, abs(lhs - rhs) / abs(rhs))
    ok &= worst_flat < 1e-4
    elapsed = time.time() - t0
    ok &= elapsed < 120.0
    report(8, ok, f"balls (eps in -1,0,1; n=2,3; all r) worst {worst_ball:.2e} (<1e-6); "
                  f"ellipsoids worst {worst_flat:.2e} (<1e-4); {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 9. Pointwise Grassmann average
# ---------------------------------------------------------------------------


def test_criterion_09_grassmann_average():
    t0 = time.time()
    n, r, N = 3, 1, 100_000
    lam = 0.8
    h_umb = np.diag([1.3] + [lam] * 4)
    est_umb = planes.grassmann_sigma_average(h_umb, r, 4096, seed=901)
    ok = abs(est_umb.mean - lam ** (2 * r)) < 1e-12
    rng = np.random.default_rng(902)
    hs = []
    for _ in range(2):
        a = rng.standard_normal((5, 5))
        hs.append((a + a.T) / 2)
    ests = [planes.grassmann_sigma_average(h, r, N, seed=903 + i) for i, h in enumerate(hs)]
    combos = [planes.cor44_density_combination(n, r, h) for h in hs]
    zs = [ests[i].z_score(combos[i]) for i in range(2)]
    ok &= all(abs(z) < 3.0 for z in zs)
    ratio = ests[0].mean / ests[1].mean
    pred = combos[0] / combos[1]
    sd = sqrt(
        (ests[0].stderr / ests[1].mean) ** 2
        + (ests[0].mean * ests[1].stderr / ests[1].mean ** 2) ** 2
    )
    z_ratio = (ratio - pred) / sd
    ok &= abs(z_ratio) < 3.0
    elapsed = time.time() - t0
    ok &= elapsed < 60.0
    report(9, ok, f"umbilic exact; absolute z = {zs[0]:+.2f}/{zs[1]:+.2f}; "
                  f"ratio z = {z_ratio:+.2f}; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 10. Total Gauss curvature of sections
# ---------------------------------------------------------------------------


def test_criterion_10_total_gauss(flat_tables):
    t0 = time.time()
    n, r, N = 2, 1, 1_000_000
    o1 = cc.sphere_volume_coeff(1).to_float()
    cal = planes.calibrate(n, r, 0.0, geom.GeodesicBall(n=n, eps=0.0, R=1.0), N, seed=1001)
    ok = True
    details = []
    for i, axes in enumerate(FLAT_FAMILIES[2][:2]):
        shape = geom.Ellipsoid.from_axes(axes)
        res = planes.total_gauss_estimate(shape, r, N, seed=1002 + i)
        # same plane stream for both estimates: the ratio is quadrature-exact
        ratio_err = abs(res.total.mean / res.chi.mean - o1) / o1
        table = flat_tables[(n, tuple(axes))]
        pred = cal.kappa * cc.total_gauss_coeffs(n, r).eval(table.mu_dict(), table.vol, 0.0)
        z = res.total.z_score(pred, extra_stderr=cal.stderr * pred / cal.kappa)
        ok &= ratio_err < 1e-9 and abs(z) < 3.0
        details.append(f"{axes}: ratio err {ratio_err:.1e}, z={z:+.2f}")
    elapsed = time.time() - t0
    ok &= elapsed < 600.0
    report(10, ok, "; ".join(details) + f"; {elapsed:.0f}s")
