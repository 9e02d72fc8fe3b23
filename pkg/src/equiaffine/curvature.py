"""Curvature and Ricci tensors of a torsion-free connection.

Index convention used throughout the package::

    R(d_i, d_j) d_k = R^h_{kij} d_h
    R^h_{kij} = d_i G^h_{jk} - d_j G^h_{ik} + G^h_{ia} G^a_{jk} - G^h_{ja} G^a_{ik}
    Ric_{ij}  = Ric(d_i, d_j) = trace(V -> R(d_i, V) d_j) = R^a_{jia}

Arrays are laid out ``R[..., h, k, i, j]`` and ``ric[..., i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ConnectionField, connection_jets


@dataclass(frozen=True)
class CurvatureSample:
    point: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class RicciSample:
    point: np.ndarray
    ric: np.ndarray
    asym: np.ndarray  # max_ij |ric_ij - ric_ji|, one value per point


def riemann_from_jets(gam: np.ndarray, dgam: np.ndarray) -> np.ndarray:
    """Curvature from connection values ``[..., h, i, j]`` and gradients ``[..., h, i, j, k]``.

    Built as ``A - swap(A)`` so antisymmetry in the last index pair is exact.
    """
    # derivative part: d_i G^h_{jk} laid out at [h, k, i, j]
    deriv = np.einsum("...hjki->...hkij", dgam)
    quad = np.einsum("...hia,...ajk->...hkij", gam, gam)
    half = deriv + quad
    return half - np.swapaxes(half, -1, -2)


def ricci_from_riemann(R: np.ndarray) -> np.ndarray:
    return np.einsum("...ajia->...ij", R)


def asymmetry(ric: np.ndarray) -> np.ndarray:
    return np.max(np.abs(ric - np.swapaxes(ric, -1, -2)), axis=(-2, -1))


def riemann(c: ConnectionField, p) -> CurvatureSample:
    p = c.chart.check(p)
    gam, dgam = connection_jets(c, p, check=False)
    return CurvatureSample(p, riemann_from_jets(gam, dgam))


def ricci(c: ConnectionField, p) -> RicciSample:
    sample = riemann(c, p)
    ric = ricci_from_riemann(sample.R)
    return RicciSample(sample.point, ric, asymmetry(ric))


@dataclass(frozen=True)
class EquiaffinityReport:
    is_equiaffine: bool
    max_asym: float
    worst_point: np.ndarray
    tol: float


def equiaffinity_report(c: ConnectionField, points, tol: float = 1e-9) -> EquiaffinityReport:
    """Largest Ricci asymmetry over ``points`` and whether it stays within ``tol``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    asym = ricci(c, points).asym
    worst = int(np.argmax(asym))
    max_asym = float(asym[worst])
    return EquiaffinityReport(max_asym <= tol, max_asym, points[worst], tol)
