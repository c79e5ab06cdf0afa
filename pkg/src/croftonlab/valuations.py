"""Hermitian intrinsic volumes and curvature integrals of concrete shapes.

For a shape with boundary cloud {(x, h, w)} the table holds

    B[k,q]     = c_{n,k,q}   * sum w * density_beta(n,k,q,h)      (k != 2q)
    Gamma[k,q] = c_{n,k,q}/2 * sum w * density_gamma(n,k,q,h)     (n != k-q)
    mu[k,q]    = B[k,q] if k != 2q else Gamma[2q,q]
    M[j]       = binom(2n-1,j)^{-1} * sum w * sigma_j(eigs of h)
    vol        = volume of the shape

Geodesic balls additionally admit a closed form: the boundary has constant
curvatures (mu_H on JN, lambda on the distribution), every density is a
monomial, and

    B[k,q]     = c_{n,k,q} 2^{k-2q-1} lambda^{2n-k-1} (n-1)! * area
    Gamma[k,q] = c_{n,k,q}/2 * mu_H 2^{k-2q} lambda^{2n-k-2} (n-1)! * area.

Quadrature sums use a fixed-chunk pairwise tree so results are reproducible
bit-for-bit at a given level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Dict, Optional, Tuple

import numpy as np

from . import extalg, geom
from .coeffcore import (
    beta_indices,
    form_norm_coeff,
    gamma_indices,
    gauss_bonnet_coeffs,
    crofton_coeffs,
    mu_indices,
    sphere_volume_coeff,
    implied_hyperplane_grassmannian_volume,
)

__all__ = [
    "ValuationTable",
    "pairwise_sum",
    "hermitian_volumes",
    "ball_closed_form",
    "ball_closed_form_derivative",
    "check_gamma_b_relation",
    "gauss_bonnet_residual",
    "crofton_rhs_from_table",
]

QUADRATURE_CHUNK = 1 << 16


def pairwise_sum(values: np.ndarray) -> float:
    """Deterministic pairwise tree reduction (fixed chunking)."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


@dataclass
class ValuationTable:
    """Valuation values of one domain (or their radial derivative, for balls)."""

    n: int
    eps: float
    B: Dict[Tuple[int, int], float]
    Gamma: Dict[Tuple[int, int], float]
    M: Dict[int, float]
    vol: float
    error: Dict[str, float] = field(default_factory=dict)

    def mu(self, k: int, q: int) -> float:
        return self.Gamma[(k, q)] if k == 2 * q else self.B[(k, q)]

    def mu_dict(self) -> Dict[Tuple[int, int], float]:
        return {(k, q): self.mu(k, q) for (k, q) in mu_indices(self.n)}

    def to_json(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for (k, q), v in sorted(self.B.items()):
            out[f"B:{k},{q}"] = v
        for (k, q), v in sorted(self.Gamma.items()):
            out[f"G:{k},{q}"] = v
        for (k, q) in mu_indices(self.n):
            out[f"mu:{k},{q}"] = self.mu(k, q)
        for j, v in sorted(self.M.items()):
            out[f"M:{j}"] = v
        out["vol"] = self.vol
        return out


def _elementary_symmetric(eigs: np.ndarray) -> np.ndarray:
    """e_j of each row of eigenvalues; returns (m, d+1) with e_0 = 1."""
    m, d = eigs.shape
    e = np.zeros((m, d + 1))
    e[:, 0] = 1.0
    for i in range(d):
        lam = eigs[:, i][:, None]
        e[:, 1 : i + 2] = e[:, 1 : i + 2] + lam * e[:, 0 : i + 1]
    return e


def hermitian_volumes(
    shape: geom.Shape,
    level: int = 1,
    richardson: bool = False,
    weight_fn=None,
) -> ValuationTable:
    """Valuation table by boundary quadrature of the exterior-algebra densities.

    `weight_fn(cloud_chunk) -> (m,) array` scales the boundary measure (used by
    the variation machinery for <X, N> factors).  `richardson=True` also
    computes the table one level lower and stores |difference| as the error
    estimate per entry.
    """
    n = shape.n
    eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0
    cloud = geom.sample_boundary(shape, level)

    bkeys = beta_indices(n)
    gkeys = gamma_indices(n)
    d = 2 * n - 1
    b_parts = {key: [] for key in bkeys}
    g_parts = {key: [] for key in gkeys}
    m_parts = [[] for _ in range(d + 1)]
    for chunk in cloud.chunks(QUADRATURE_CHUNK):
        w = chunk.weights
        if weight_fn is not None:
            w = w * weight_fn(chunk)
        forms = extalg.build_pullbacks(chunk.h, n)
        for (k, q) in bkeys:
            dens = _density_from_forms(forms, "beta", n, k, q)
            b_parts[(k, q)].append(pairwise_sum(w * dens))
        for (k, q) in gkeys:
            dens = _density_from_forms(forms, "gamma", n, k, q)
            g_parts[(k, q)].append(pairwise_sum(w * dens))
        eigs = np.linalg.eigvalsh(chunk.h)
        esp = _elementary_symmetric(eigs)
        for j in range(d + 1):
            m_parts[j].append(pairwise_sum(w * esp[:, j]))

    B = {
        key: form_norm_coeff(n, *key).to_float() * pairwise_sum(np.array(parts))
        for key, parts in b_parts.items()
    }
    Gamma = {
        key: 0.5 * form_norm_coeff(n, *key).to_float() * pairwise_sum(np.array(parts))
        for key, parts in g_parts.items()
    }
    M = {
        j: pairwise_sum(np.array(m_parts[j])) / comb(d, j)
        for j in range(d + 1)
    }
    vol = shape.volume
    table = ValuationTable(n=n, eps=eps, B=B, Gamma=Gamma, M=M, vol=vol)
    if richardson and level >= 1:
        coarse = hermitian_volumes(shape, level - 1, richardson=False, weight_fn=weight_fn)
        err: Dict[str, float] = {}
        for key in B:
            err[f"B:{key[0]},{key[1]}"] = abs(B[key] - coarse.B[key])
        for key in Gamma:
            err[f"G:{key[0]},{key[1]}"] = abs(Gamma[key] - coarse.Gamma[key])
        for j in M:
            err[f"M:{j}"] = abs(M[j] - coarse.M[j])
        table.error = err
    return table


def _density_from_forms(forms: extalg.PullbackForms, kind: str, n: int, k: int, q: int):
    if kind == "beta":
        w = forms.beta
        exps = (n - k + q, k - 2 * q - 1, q)
    else:
        w = forms.gamma
        exps = (n - k + q - 1, k - 2 * q, q)
    w = w.wedge(forms.theta0.wedge_pow(exps[0]))
    w = w.wedge(forms.theta1.wedge_pow(exps[1]))
    w = w.wedge(forms.theta2.wedge_pow(exps[2]))
    out = w.top_coefficient()
    if np.ndim(out) == 0:
        out = np.zeros(1) + out
    return out


def _comb0(m: int, k: int) -> int:
    return comb(m, k) if 0 <= k <= m else 0


def ball_closed_form(eps: float, n: int, R: float) -> ValuationTable:
    """Exact (up to the radial volume quadrature) valuations of a geodesic ball."""
    mu_h, lam = geom.geodesic_sphere_curvatures(eps, R)
    area, vol = geom.sphere_area_and_ball_volume(eps, n, R)
    fct = factorial(n - 1)
    B = {
        (k, q): form_norm_coeff(n, k, q).to_float()
        * 2.0 ** (k - 2 * q - 1)
        * lam ** (2 * n - k - 1)
        * fct
        * area
        for (k, q) in beta_indices(n)
    }
    Gamma = {
        (k, q): 0.5
        * form_norm_coeff(n, k, q).to_float()
        * mu_h
        * 2.0 ** (k - 2 * q)
        * lam ** (2 * n - k - 2)
        * fct
        * area
        for (k, q) in gamma_indices(n)
    }
    d = 2 * n - 1
    M = {
        j: (_comb0(d - 1, j) * lam**j + _comb0(d - 1, j - 1) * mu_h * lam ** (j - 1))
        * area
        / comb(d, j)
        for j in range(d + 1)
    }
    return ValuationTable(n=n, eps=eps, B=B, Gamma=Gamma, M=M, vol=vol)


def ball_closed_form_derivative(eps: float, n: int, R: float) -> ValuationTable:
    """d/dR of `ball_closed_form`, analytically (oracle for radial variations).

    Uses lambda' = -(eps + lambda^2), mu_H' = -(4 eps + mu_H^2) and
    area'/area = mu_H + (2n-2) lambda; the volume derivative is the area.
    """
    mu_h, lam = geom.geodesic_sphere_curvatures(eps, R)
    area, _ = geom.sphere_area_and_ball_volume(eps, n, R)
    dlam = -(eps + lam * lam)
    dmu = -(4 * eps + mu_h * mu_h)
    darea = area * (mu_h + (2 * n - 2) * lam)
    fct = factorial(n - 1)
    dB = {}
    for (k, q) in beta_indices(n):
        p = 2 * n - k - 1
        c = form_norm_coeff(n, k, q).to_float() * 2.0 ** (k - 2 * q - 1) * fct
        dB[(k, q)] = c * (p * lam ** (p - 1) * dlam * area + lam**p * darea)
    dG = {}
    for (k, q) in gamma_indices(n):
        p = 2 * n - k - 2
        c = 0.5 * form_norm_coeff(n, k, q).to_float() * 2.0 ** (k - 2 * q) * fct
        lam_pow = lam**p
        dlam_pow = p * lam ** (p - 1) * dlam if p != 0 else 0.0
        dG[(k, q)] = c * (
            dmu * lam_pow * area + mu_h * dlam_pow * area + mu_h * lam_pow * darea
        )
    d = 2 * n - 1
    dM = {}
    for j in range(d + 1):
        s = _comb0(d - 1, j) * lam**j + _comb0(d - 1, j - 1) * mu_h * lam ** (j - 1)
        ds = _comb0(d - 1, j) * (j * lam ** (j - 1) * dlam if j else 0.0)
        ds += _comb0(d - 1, j - 1) * (
            (dmu * lam ** (j - 1) if j >= 1 else 0.0)
            + (mu_h * (j - 1) * lam ** (j - 2) * dlam if j >= 2 else 0.0)
        )
        dM[j] = (ds * area + s * darea) / comb(d, j)
    return ValuationTable(n=n, eps=eps, B=dB, Gamma=dG, M=dM, vol=area)


def check_gamma_b_relation(table: ValuationTable) -> Dict[Tuple[int, int], float]:
    """Residuals of Gamma = B - eps (c_{n,k,q}/c_{n,k+2,q+1}) B_{k+2,q+1}.

    Defined on the strict index range max{0,k-n} < q < k/2 < n.
    """
    n, eps = table.n, table.eps
    out: Dict[Tuple[int, int], float] = {}
    for (k, q) in gamma_indices(n):
        if not (max(0, k - n) < q and 2 * q < k and k < 2 * n):
            continue
        ratio = (form_norm_coeff(n, k, q) / form_norm_coeff(n, k + 2, q + 1)).to_float()
        out[(k, q)] = (
            table.Gamma[(k, q)] - table.B[(k, q)] + eps * ratio * table.B[(k + 2, q + 1)]
        )
    return out


def crofton_rhs_from_table(table: ValuationTable, n: int, r: int, eps: float) -> float:
    """Numeric bracket of the r-plane measure formula (no formal vol(G^C) unit)."""
    return crofton_coeffs(n, r).eval(table.mu_dict(), table.vol, eps)


def gauss_bonnet_residual(
    shape: geom.Shape,
    level: int = 1,
    table: Optional[ValuationTable] = None,
    closed_form: Optional[bool] = None,
) -> Tuple[float, float]:
    """Residuals of the two Gauss-Bonnet expressions on a convex shape (chi = 1).

    mu-table form:      O_{2n-1} minus the full mu-table right-hand side.
    plane-measure form: O_{2n-1} - M_{2n-1} - sum_k eps^k O_{2n-2k-1}
                        binom(n-1,k)^{-1} mu_{2k,k} - 2n eps^n vol - 2n eps *
                        (hyperplane measure bracket), using the table-implied
                        hyperplane normalization.
    Returns (mu-form residual, plane-form residual).
    """
    n = shape.n
    eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0
    if table is None:
        use_closed = (
            closed_form if closed_form is not None else isinstance(shape, geom.GeodesicBall)
        )
        if use_closed:
            table = ball_closed_form(eps, n, shape.R)
        else:
            table = hermitian_volumes(shape, level)
    o = sphere_volume_coeff(2 * n - 1).to_float()
    res51 = o - gauss_bonnet_coeffs(n).eval(table.mu_dict(), table.vol, eps)

    res52 = o - table.M[2 * n - 1] - 2 * n * eps**n * table.vol
    for k in range(1, n):
        res52 -= (
            eps**k
            * sphere_volume_coeff(2 * n - 2 * k - 1).to_float()
            / comb(n - 1, k)
            * table.mu(2 * k, k)
        )
    if n >= 2:
        implied = implied_hyperplane_grassmannian_volume(n).to_float()
        res52 -= 2 * n * eps * implied * crofton_rhs_from_table(table, n, n - 1, eps)
    return res51, res52
