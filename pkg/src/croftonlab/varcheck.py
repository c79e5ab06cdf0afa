"""First-variation formulas checked against finite differences.

Flows act on shape parameters, never on point clouds:

  * LinearFlow(A): phi_t = exp(tA) on R^{2n}; ellipsoids transport exactly to
    ellipsoids through their quadratic form (flat case only).
  * RadialFlow(): moves the boundary of a geodesic ball of radius R to radius
    R + t at unit normal speed (any curvature).

For a valuation key ("B", k, q), ("G", 2q, q) or "vol" the analytic variation
contracts the exact variation operator with the tilde table

    tB[k,q] = integral of <X, N> beta_{k,q},   tG[k,q] = integral of <X, N> gamma_{k,q}

over the boundary (N the outward unit normal), while the oracle is a central
finite difference of quadrature (or closed-form) valuations under exact shape
transport.  Radial flows on balls admit an analytic derivative, giving the
sharpest cross-check at eps != 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.linalg import expm

from . import geom, valuations
from .coeffcore import (
    crofton_variation_coeffs,
    gauss_bonnet_coeffs,
    variation_operator,
)

__all__ = [
    "LinearFlow",
    "RadialFlow",
    "Flow",
    "TildeTable",
    "tilde_integrals",
    "valuation_value",
    "variation_fd",
    "variation_formula",
    "crofton_variation_check",
    "gauss_bonnet_rhs_variation_fd",
]


@dataclass
class LinearFlow:
    """phi_t = exp(tA) acting on C^n = R^{2n}; requires a flat-space shape."""

    A: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")

    def transport(self, shape: geom.Shape, t: float) -> geom.Shape:
        if isinstance(shape, geom.GeodesicBall):
            if shape.eps != 0:
                raise ValueError("linear flows require eps = 0")
            shape = geom.Ellipsoid.from_axes([shape.R] * self.A.shape[0])
        return shape.transformed(expm(t * self.A))

    def normal_speed(self, cloud: geom.BoundaryCloud) -> np.ndarray:
        return np.einsum(
            "mi,mi->m", cloud.positions @ self.A.T, cloud.normals
        )


@dataclass
class RadialFlow:
    """Unit-speed outward radial flow of geodesic balls, <X, N> = 1."""

    def transport(self, shape: geom.Shape, t: float) -> geom.Shape:
        if not isinstance(shape, geom.GeodesicBall):
            raise ValueError("radial flow is defined for geodesic balls")
        return geom.GeodesicBall(n=shape.n, eps=shape.eps, R=shape.R + t)

    def normal_speed(self, cloud: geom.BoundaryCloud) -> np.ndarray:
        return np.ones(len(cloud))


Flow = Union[LinearFlow, RadialFlow]


@dataclass
class TildeTable:
    """Boundary integrals of <X, N> against the invariant densities."""

    n: int
    eps: float
    tB: Dict[Tuple[int, int], float]
    tG: Dict[Tuple[int, int], float]

    def value(self, kind: str, k: int, q: int) -> float:
        return self.tB[(k, q)] if kind == "B" else self.tG[(k, q)]


def _check_pairing(shape: geom.Shape, flow: Flow) -> None:
    if isinstance(flow, LinearFlow):
        eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0
        if eps != 0:
            raise ValueError("linear flows pair with eps = 0 shapes only")
    elif isinstance(flow, RadialFlow):
        if not isinstance(shape, geom.GeodesicBall):
            raise ValueError("radial flows pair with geodesic balls only")


def tilde_integrals(shape: geom.Shape, flow: Flow, level: int = 1) -> TildeTable:
    """Quadrature of <X, N> times each density over the boundary."""
    _check_pairing(shape, flow)
    table = valuations.hermitian_volumes(
        shape, level, weight_fn=lambda chunk: flow.normal_speed(chunk)
    )
    return TildeTable(n=table.n, eps=table.eps, tB=table.B, tG=table.Gamma)


Key = Union[Tuple[str, int, int], str]


def valuation_value(table: valuations.ValuationTable, key: Key) -> float:
    if key == "vol":
        return table.vol
    kind, k, q = key  # type: ignore[misc]
    return table.B[(k, q)] if kind == "B" else table.Gamma[(k, q)]


def _table_for(shape: geom.Shape, level: int) -> valuations.ValuationTable:
    if isinstance(shape, geom.GeodesicBall):
        return valuations.ball_closed_form(shape.eps, shape.n, shape.R)
    return valuations.hermitian_volumes(shape, level)


def variation_fd(
    shape: geom.Shape,
    flow: Flow,
    key: Key,
    h_step: float = 1e-3,
    level: int = 1,
    check_cancellation: bool = False,
) -> float:
    """Central finite difference of a valuation under exact shape transport.

    With `check_cancellation` the step is halved once and the two estimates
    Richardson-compared; wild disagreement flags a too-small step.
    """
    _check_pairing(shape, flow)

    def val(t: float) -> float:
        return valuation_value(_table_for(flow.transport(shape, t), level), key)

    fd = (val(h_step) - val(-h_step)) / (2 * h_step)
    if check_cancellation:
        fd2 = (val(h_step / 2) - val(-h_step / 2)) / h_step
        scale = max(abs(fd), abs(fd2), 1e-12)
        if abs(fd - fd2) > 0.5 * scale:
            raise ArithmeticError(
                f"finite difference unstable at h={h_step}: {fd} vs {fd2}"
            )
    return fd


def variation_formula(
    shape: geom.Shape,
    flow: Flow,
    key: Key,
    level: int = 1,
    tilde: Optional[TildeTable] = None,
) -> float:
    """Analytic first variation: operator coefficients contracted with tildes."""
    _check_pairing(shape, flow)
    n = shape.n
    eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0
    if tilde is None:
        tilde = tilde_integrals(shape, flow, level)
    op = variation_operator(n)
    total = 0.0
    for kind, k, q, p, coeff in op.targets(key):
        total += coeff.to_float() * eps**p * tilde.value(kind, k, q)
    return total


def crofton_variation_check(
    shape: geom.Shape,
    flow: Flow,
    r: int,
    level: int = 1,
    h_step: float = 1e-3,
    tilde: Optional[TildeTable] = None,
) -> Tuple[float, float]:
    """(finite difference, analytic formula) for the varied plane-measure bracket.

    Both sides are kappa-relative (no Grassmannian mass), so they compare
    directly: the left side differentiates the Crofton bracket along the flow,
    the right side is the tilde-B combination of the variation formula.
    """
    _check_pairing(shape, flow)
    n = shape.n
    eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0

    def rhs_val(t: float) -> float:
        moved = flow.transport(shape, t)
        table = _table_for(moved, level)
        return valuations.crofton_rhs_from_table(table, n, r, eps)

    lhs_fd = (rhs_val(h_step) - rhs_val(-h_step)) / (2 * h_step)
    if tilde is None:
        tilde = tilde_integrals(shape, flow, level)
    rhs_formula = sum(
        c.to_float() * tilde.tB[(k, q)]
        for (k, q), c in crofton_variation_coeffs(n, r).items()
    )
    return lhs_fd, rhs_formula


def gauss_bonnet_rhs_variation_fd(
    shape: geom.Shape, flow: Flow, level: int = 1, h_step: float = 1e-3
) -> float:
    """Finite difference of the Gauss-Bonnet right-hand side (should vanish)."""
    _check_pairing(shape, flow)
    n = shape.n
    eps = shape.eps if isinstance(shape, geom.GeodesicBall) else 0.0
    gb = gauss_bonnet_coeffs(n)

    def val(t: float) -> float:
        table = _table_for(flow.transport(shape, t), level)
        return gb.eval(table.mu_dict(), table.vol, eps)

    return (val(h_step) - val(-h_step)) / (2 * h_step)
