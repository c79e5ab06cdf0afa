"""Plane sampling, hit predicates, calibration and the Grassmann average.

Monte Carlo assertions use fixed seeds and 3 sigma gates (sharper where the
statistic is exact); the heavy 1e6-sample runs live in the acceptance suite.
"""

from math import pi, sqrt

import numpy as np
import pytest
from scipy.optimize import minimize

from croftonlab import coeffcore as cc
from croftonlab import extalg, geom, planes
from croftonlab import valuations as val


UNIT_BALL = geom.Ellipsoid.from_axes([1, 1, 1, 1])


# ---------------------------------------------------------------------------
# Sampling distributions
# ---------------------------------------------------------------------------


def test_haar_line_moment():
    rng = planes._chunk_rng(1, 0)
    V, _ = planes._haar_frames_flat(2, 1, rng, 100000)
    m = np.abs(V[:, 0, 0]) ** 2
    sd = m.std() / sqrt(len(m))
    assert abs(m.mean() - 0.5) < 3 * sd


def test_anchor_uniform_ball_moment():
    rho, d = 1.5, 2  # n=2, r=1: complement has real dimension 2
    rng = planes._chunk_rng(2, 0)
    _, anchors = planes._sample_flat_batch(2, 1, rho, rng, 100000)
    nn = (anchors**2).sum(axis=1)
    sd = nn.std() / sqrt(len(nn))
    assert abs(nn.mean() - rho**2 * d / (d + 2)) < 3 * sd


def test_anchor_orthogonal_to_plane():
    rng = planes._chunk_rng(3, 0)
    V, anchors = planes._sample_flat_batch(3, 1, 2.0, rng, 1000)
    Vr = geom.realify_complex_columns(V)
    dots = np.einsum("mir,mi->mr", Vr, anchors)
    assert np.max(np.abs(dots)) < 1e-12


def test_unitary_invariance_of_ball_hits():
    # rotating every sample by a fixed unitary leaves the unit-ball hit mask
    # unchanged: the predicate only involves invariant distances
    rng = planes._chunk_rng(4, 0)
    V, anchors = planes._sample_flat_batch(2, 1, 1.3, rng, 20000)
    ball = geom.GeodesicBall(n=2, eps=0.0, R=1.0)
    base = planes._hits_flat(ball, V, anchors)
    z = np.random.default_rng(0).standard_normal((2, 2)) + 1j * np.random.default_rng(
        1
    ).standard_normal((2, 2))
    U, _ = np.linalg.qr(z)
    Ur = geom.realify_complex_columns(U)
    rotated = planes._hits_flat(ball, np.einsum("ij,mjr->mir", U, V),
                                anchors @ Ur.T)
    assert np.array_equal(base, rotated)


# ---------------------------------------------------------------------------
# Hit predicate
# ---------------------------------------------------------------------------


def test_meets_trivial_cases():
    rng = planes._chunk_rng(5, 0)
    plane, _ = planes.sample_plane_flat(2, 1, 0.0, rng)  # through the origin
    assert planes.meets(UNIT_BALL, plane)
    far = planes.ComplexPlane(eps=0.0, V=plane.V, anchor=plane.anchor * 0.0)
    far.anchor = 2.0 * _unit_perp(plane.V)
    assert not planes.meets(UNIT_BALL, far)


def _unit_perp(V):
    Vr = geom.realify_complex_columns(V)
    v = np.zeros(Vr.shape[0])
    v[0] = 1.0
    v = v - Vr @ (Vr.T @ v)
    return v / np.linalg.norm(v)


def test_meets_against_minimizer_oracle():
    # independent oracle: numeric minimization of the quadratic on the plane
    rng = planes._chunk_rng(6, 0)
    e = geom.Ellipsoid.from_axes([1, 1, 2, 2])
    V, anchors = planes._sample_flat_batch(2, 1, 2.5, rng, 400)
    got = planes._hits_flat(e, V, anchors)
    Q = e.quadric
    for i in range(400):
        Vr = geom.realify_complex_columns(V[i])

        def f(s):
            x = anchors[i] + Vr @ s
            return x @ Q @ x

        res = minimize(f, np.zeros(2), method="BFGS")
        want = res.fun <= 1.0
        if abs(res.fun - 1.0) > 1e-6:
            assert got[i] == want, i


def test_hit_monotone_under_inclusion():
    small = geom.Ellipsoid.from_axes([0.8, 0.7, 1.5, 1.2])
    big = geom.Ellipsoid.from_axes([1.0, 1.0, 2.0, 2.0])
    rng = planes._chunk_rng(7, 0)
    V, anchors = planes._sample_flat_batch(2, 1, 2.5, rng, 50000)
    hs = planes._hits_flat(small, V, anchors)
    hb = planes._hits_flat(big, V, anchors)
    assert not np.any(hs & ~hb)


def test_translation_invariance_with_identical_seed():
    # translating the shape and the window together preserves every hit
    rng = planes._chunk_rng(8, 0)
    e = geom.Ellipsoid.from_axes([1, 1, 2, 2])
    V, anchors = planes._sample_flat_batch(2, 1, 2.5, rng, 20000)
    t = np.array([0.4, -0.2, 0.1, 0.3])
    Vr = geom.realify_complex_columns(V)
    t_perp = t - np.einsum("mir,mjr,mj->mi", Vr, Vr, np.broadcast_to(t, anchors.shape))
    base = planes._hits_flat(e, V, anchors)
    moved = planes._hits_flat(e, V, anchors + t_perp, center=t)
    assert np.array_equal(base, moved)


def test_projective_distance_and_limits():
    ball = geom.GeodesicBall(n=2, eps=1.0, R=0.5)
    rng = planes._chunk_rng(9, 0)
    W = planes._sample_projective_batch(2, 1, rng, 5000)
    center = planes._projective_center(2)
    proj = np.einsum("mkr,k->mr", W.conj(), center)
    d = np.arccos(np.minimum(np.linalg.norm(proj, axis=1), 1.0))
    assert np.all((0 <= d) & (d <= pi / 2 + 1e-12))
    fractions = []
    for R in (0.3, 0.6, 0.9, 1.2, 1.5):
        b = geom.GeodesicBall(n=2, eps=1.0, R=R)
        fractions.append(np.count_nonzero(planes._hits_projective(b, W, center)) / len(W))
    assert all(a <= b for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] > 0.999


def test_eps_negative_sampling_rejected():
    ball = geom.GeodesicBall(n=2, eps=-1.0, R=0.5)
    with pytest.raises(NotImplementedError):
        planes.chi_measure_estimate(ball, 1, 100, 0)


# ---------------------------------------------------------------------------
# chi-measure estimates and calibration
# ---------------------------------------------------------------------------


def test_window_exactly_characterizes_ball_hits():
    # a centered ball is hit exactly when the anchor falls in its projection,
    # so anchors beyond the circumradius never contribute (unbiased windowing)
    rng = planes._chunk_rng(10, 0)
    V, anchors = planes._sample_flat_batch(2, 1, 3.0, rng, 5000)
    ball = geom.GeodesicBall(n=2, eps=0.0, R=0.35)
    hits = planes._hits_flat(ball, V, anchors)
    inside = np.linalg.norm(anchors, axis=1) <= 0.35 * (1 + 1e-12)
    assert np.array_equal(hits, inside)
    assert abs(hits.mean() - (0.35 / 3.0) ** 2) < 3 * np.sqrt(hits.mean() / len(hits))


def test_chi_estimate_deterministic_and_thread_independent(monkeypatch):
    a = planes.chi_measure_estimate(UNIT_BALL, 1, 70000, 123)
    b = planes.chi_measure_estimate(UNIT_BALL, 1, 70000, 123)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    monkeypatch.setenv("CROFTONLAB_THREADS", "4")
    c = planes.chi_measure_estimate(UNIT_BALL, 1, 70000, 123)
    assert (a.mean, a.stderr) == (c.mean, c.stderr)


def test_scaling_of_plane_measure():
    # the flat plane measure of t*shape scales as t^{2n-2r}
    est1 = planes.chi_measure_estimate(UNIT_BALL, 1, 150000, 21)
    est2 = planes.chi_measure_estimate(
        geom.Ellipsoid.from_axes([1.7] * 4), 1, 150000, 22
    )
    pred = est1.mean * 1.7**2
    sd = sqrt(est2.stderr**2 + (1.7**2 * est1.stderr) ** 2)
    assert abs(est2.mean - pred) < 3 * sd


def test_unit_ball_measure_value():
    # lines meeting the unit ball fill a unit disc of anchors: measure pi
    est = planes.chi_measure_estimate(UNIT_BALL, 1, 200000, 31)
    assert abs(est.mean - pi) < 3 * est.stderr


def test_calibration_properties():
    ref = geom.GeodesicBall(n=2, eps=0.0, R=1.0)
    cal1 = planes.calibrate(2, 1, 0.0, ref, 150000, 41)
    assert cal1.kappa > 0
    # radius independence
    half = geom.GeodesicBall(n=2, eps=0.0, R=0.5)
    cal2 = planes.calibrate(2, 1, 0.0, half, 150000, 42)
    sd = sqrt(cal1.stderr**2 + cal2.stderr**2)
    assert abs(cal1.kappa - cal2.kappa) < 3 * sd
    # sample-size consistency
    cal3 = planes.calibrate(2, 1, 0.0, ref, 50000, 43)
    sd = sqrt(cal1.stderr**2 + cal3.stderr**2)
    assert abs(cal1.kappa - cal3.kappa) < 3 * sd


def test_calibrated_crofton_across_shapes():
    ref = geom.GeodesicBall(n=2, eps=0.0, R=1.0)
    cal = planes.calibrate(2, 1, 0.0, ref, 200000, 51)
    for i, axes in enumerate([[1, 1, 2, 2], [1, 2, 2, 3], [1, 1, 1, 2]]):
        shape = geom.Ellipsoid.from_axes(axes)
        table = val.hermitian_volumes(shape, level=2)
        rhs = planes.crofton_rhs(table, 2, 1, 0.0)
        est = planes.chi_measure_estimate(shape, 1, 200000, 52 + i)
        z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
        assert abs(z) < 3.0, (axes, z)


def test_crofton_rhs_unit_ball_value():
    table = val.ball_closed_form(0.0, 2, 1.0)
    assert planes.crofton_rhs(table, 2, 1, 0.0) == pytest.approx(pi**2, rel=1e-12)


def test_calibrate_rejects_degenerate():
    table = val.ball_closed_form(0.0, 2, 1.0)
    zeroed = val.ValuationTable(
        n=2, eps=0.0, B={k: 0.0 for k in table.B},
        Gamma={k: 0.0 for k in table.Gamma}, M=dict(table.M), vol=0.0,
    )
    with pytest.raises(ValueError):
        planes.calibrate(2, 1, 0.0, UNIT_BALL, 100, 0, table=zeroed)


def test_cpn_radius_dependence():
    cal = planes.calibrate(2, 1, 1.0, geom.GeodesicBall(n=2, eps=1.0, R=0.75), 200000, 61)
    for i, R in enumerate((0.3, 0.9)):
        ball = geom.GeodesicBall(n=2, eps=1.0, R=R)
        rhs = planes.crofton_rhs(val.ball_closed_form(1.0, 2, R), 2, 1, 1.0)
        est = planes.chi_measure_estimate(ball, 1, 200000, 62 + i)
        z = est.z_score(cal.kappa * rhs, extra_stderr=cal.stderr * rhs)
        assert abs(z) < 3.0, (R, z)


# ---------------------------------------------------------------------------
# Total Gauss curvature of sections
# ---------------------------------------------------------------------------


def test_section_total_curvature_is_gauss_map_degree():
    res = planes.total_gauss_estimate(
        geom.Ellipsoid.from_axes([1, 1, 2, 2]), 1, 50000, 71
    )
    assert res.per_hit_mean == pytest.approx(2 * pi, rel=1e-10)
    assert res.total.mean / res.chi.mean == pytest.approx(2 * pi, rel=1e-10)


def test_total_gauss_matches_coefficient_table():
    shape = geom.Ellipsoid.from_axes([1, 1, 2, 2])
    cal = planes.calibrate(2, 1, 0.0, geom.GeodesicBall(n=2, eps=0.0, R=1.0), 150000, 81)
    res = planes.total_gauss_estimate(shape, 1, 150000, 82)
    table = val.hermitian_volumes(shape, level=2)
    pred = cal.kappa * cc.total_gauss_coeffs(2, 1).eval(table.mu_dict(), table.vol, 0.0)
    z = res.total.z_score(pred, extra_stderr=cal.stderr * pred / cal.kappa)
    assert abs(z) < 3.0


def test_total_gauss_requires_ellipsoid():
    with pytest.raises(ValueError):
        planes.total_gauss_estimate(geom.GeodesicBall(n=2, eps=0.0, R=1.0), 1, 10, 0)


def test_ellipse_total_curvature_quadrature():
    a = np.array([1.0, 2.0, 0.5])
    b = np.array([1.0, 0.7, 0.5])
    vals = planes._ellipse_total_curvature(a, b, 256)
    assert vals == pytest.approx(2 * pi * np.ones(3), rel=1e-12)


# ---------------------------------------------------------------------------
# Pointwise Grassmann average
# ---------------------------------------------------------------------------


def test_grassmann_average_umbilic_exact():
    lam = 0.7
    h = np.diag([1.1] + [lam] * 4)
    est = planes.grassmann_sigma_average(h, 1, 4000, 91)
    assert est.mean == pytest.approx(lam**2, rel=1e-12)
    assert est.stderr < 1e-12


def test_grassmann_average_matches_density_combination():
    rng = np.random.default_rng(92)
    a = rng.standard_normal((5, 5))
    h = (a + a.T) / 2
    est = planes.grassmann_sigma_average(h, 1, 100000, 93)
    combo = planes.cor44_density_combination(3, 1, h)
    assert abs(est.z_score(combo)) < 3.0


def test_grassmann_ratio_test_two_forms():
    rng = np.random.default_rng(94)
    hs = []
    for _ in range(2):
        a = rng.standard_normal((5, 5))
        hs.append((a + a.T) / 2)
    ests = [planes.grassmann_sigma_average(h, 1, 100000, 95 + i) for i, h in enumerate(hs)]
    combos = [planes.cor44_density_combination(3, 1, h) for h in hs]
    ratio = ests[0].mean / ests[1].mean
    pred = combos[0] / combos[1]
    sd = sqrt(
        (ests[0].stderr / ests[1].mean) ** 2
        + (ests[0].mean * ests[1].stderr / ests[1].mean ** 2) ** 2
    )
    assert abs(ratio - pred) < 3 * sd


def test_grassmann_average_full_distribution_is_determinant():
    # r = n-1 takes the whole distribution: sigma_{2n-2} = det of the block
    rng = np.random.default_rng(96)
    a = rng.standard_normal((5, 5))
    h = (a + a.T) / 2
    est = planes.grassmann_sigma_average(h, 2, 500, 97)
    assert est.mean == pytest.approx(np.linalg.det(h[1:, 1:]), rel=1e-10)


def test_mc_estimate_json_and_z():
    est = planes.MCEstimate(mean=1.0, stderr=0.1, samples=100, seed=7)
    assert est.z_score(1.2) == pytest.approx(-2.0)
    assert est.to_json()["samples"] == 100
