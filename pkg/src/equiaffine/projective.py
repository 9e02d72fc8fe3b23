"""Projective change of connection and the canonical equiaffine representative.

A one-form ``psi`` deforms a connection by

    Gbar^h_{ij} = G^h_{ij} + delta^h_i psi_j + delta^h_j psi_i,

which keeps unparametrised geodesics.  Choosing

    psi_i = -(G^a_{ia} - Gt^a_{ia}) / (n + 1),

with ``Gt`` the Levi-Civita connection of an auxiliary metric, makes the Ricci
tensor of ``Gbar`` symmetric.  ``Gt^a_{ia} = d_i det(g) / (2 det(g))`` so the
construction stays in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .curvature import asymmetry, ricci_from_riemann, riemann_from_jets
from .geometry import (
    ConnectionField,
    MetricField,
    OneFormField,
    connection_jets,
    covariant_derivative_oneform,
    levi_civita,
    metric_inverse,
    oneform_jets,
    sample_points,
)


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PsiDeformationSample:
    point: np.ndarray
    psi_ij: np.ndarray  # [..., i, j] = nabla_j psi_i - psi_i psi_j


@dataclass(frozen=True, eq=False)
class EquiaffinizeResult:
    psi: OneFormField
    connection: ConnectionField
    metric: MetricField
    provenance: str = ""


def determinant(matrix) -> ex.Expression:
    """Symbolic determinant by cofactor expansion along the first row."""
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    total: ex.Expression = ex.Const(0.0)
    for col in range(n):
        entry = matrix[0][col]
        if isinstance(entry, ex.Const) and entry.value == 0:
            continue
        minor = [[row[c] for c in range(n) if c != col] for row in matrix[1:]]
        term = ex.mul(entry, determinant(minor))
        total = ex.add(total, term) if col % 2 == 0 else ex.sub(total, term)
    return total


def metric_trace(m: MetricField) -> list[ex.Expression]:
    """Closed-form contraction ``Gt^a_{ia}`` of the metric's Christoffel symbols."""
    det = determinant(m.g)
    if isinstance(det, ex.Const):
        return [ex.Const(0.0)] * m.n
    return [ex.div(ex.mul(ex.Const(0.5), ex.differentiate(det, i)), det)
            for i in range(m.n)]


def connection_trace(c: ConnectionField) -> list[ex.Expression]:
    """``G^a_{ia}`` for each ``i`` as expressions."""
    return [ex.sum_of(c.gamma[a][i][a] for a in range(c.n)) for i in range(c.n)]


def trace_one_form(c: ConnectionField, m: MetricField) -> OneFormField:
    if c.chart.n != m.chart.n:
        raise DimensionMismatch(f"connection has n={c.n}, metric has n={m.n}")
    factor = ex.Const(-1.0 / (c.n + 1))
    own = connection_trace(c)
    aux = metric_trace(m)
    return OneFormField(c.chart, tuple(ex.mul(factor, ex.sub(a, b))
                                       for a, b in zip(own, aux)))


def apply_projective(c: ConnectionField, psi: OneFormField) -> ConnectionField:
    """Deform ``c`` by ``psi``; ``psi = 0`` returns identical coefficient objects."""
    if c.n != len(psi.psi):
        raise DimensionMismatch(f"connection has n={c.n}, one-form has {len(psi.psi)} components")
    comps = {}
    for (h, i, j), e in c.components():
        if h == i:
            e = ex.add(e, psi.psi[j])
        if h == j:
            e = ex.add(e, psi.psi[i])
        comps[h, i, j] = e
    return ConnectionField.from_components(c.chart, comps)


def psi_deformation(psi: OneFormField, c: ConnectionField, p) -> PsiDeformationSample:
    p = c.chart.check(p)
    cov = covariant_derivative_oneform(psi, c, p)
    val, _ = oneform_jets(psi, p)
    return PsiDeformationSample(p, cov - val[..., :, None] * val[..., None, :])


def _validate_metric(m: MetricField, points):
    if not m.is_identity():
        metric_inverse(m, points)


def equiaffinize(c: ConnectionField, m: MetricField | None = None, *,
                 points=None, provenance: str = "") -> EquiaffinizeResult:
    """Projectively equivalent connection with symmetric Ricci tensor.

    The metric defaults to the identity.  It is checked for invertibility on
    ``points`` (100 Halton points of the chart when omitted).
    """
    if m is None:
        m = MetricField.identity(c.chart)
    if points is None:
        points = sample_points(c.chart)
    _validate_metric(m, points)
    psi = trace_one_form(c, m)
    return EquiaffinizeResult(psi, apply_projective(c, psi), m, provenance)


# ---------------------------------------------------------------------------
# verification

def _deformation_form(psi_ij):
    # phi(X, Y) = (nabla_X psi)(Y) - psi(X) psi(Y); with X = d_a, Y = d_b this is psi_ij[b, a]
    return np.swapaxes(psi_ij, -1, -2)


def curvature_relation_rhs(R, phi, n):
    """``R + (phi(X,Y) - phi(Y,X)) Z + phi(X,Z) Y - phi(Y,Z) X`` in ``[h, k, i, j]`` layout."""
    eye = np.eye(n)
    skew = phi - np.swapaxes(phi, -1, -2)                 # [i, j]
    return (R
            + np.einsum("hk,...ij->...hkij", eye, skew)
            + np.einsum("hj,...ik->...hkij", eye, phi)
            - np.einsum("hi,...jk->...hkij", eye, phi))


def ricci_relation_rhs(ric, phi, n):
    return ric + n * phi - np.swapaxes(phi, -1, -2)


def _both_curvatures(c, r, p):
    gam, dgam = connection_jets(c, p, check=False)
    bgam, bdgam = connection_jets(r.connection, p, check=False)
    R = riemann_from_jets(gam, dgam)
    Rbar = riemann_from_jets(bgam, bdgam)
    phi = _deformation_form(psi_deformation(r.psi, c, p).psi_ij)
    return R, Rbar, phi


def _maxnorm(a, axes):
    return np.max(np.abs(a), axis=axes)


def verify_curvature_relation(c: ConnectionField, r: EquiaffinizeResult, p):
    """Max-norm residual of the curvature transformation law at each point."""
    p = c.chart.check(p)
    R, Rbar, phi = _both_curvatures(c, r, p)
    return _maxnorm(Rbar - curvature_relation_rhs(R, phi, c.n), (-4, -3, -2, -1))


def verify_ricci_relation(c: ConnectionField, r: EquiaffinizeResult, p):
    """Max-norm residual of the Ricci transformation law at each point."""
    p = c.chart.check(p)
    R, Rbar, phi = _both_curvatures(c, r, p)
    rhs = ricci_relation_rhs(ricci_from_riemann(R), phi, c.n)
    return _maxnorm(ricci_from_riemann(Rbar) - rhs, (-2, -1))


def trace_normalization_residual(r: EquiaffinizeResult, p):
    """``max_i |Gbar^a_{ia} - Gt^a_{ia}|`` with ``Gt`` evaluated numerically from the metric."""
    p = r.connection.chart.check(p)
    bgam, _ = connection_jets(r.connection, p, check=False)
    tgam, _ = levi_civita(r.metric, p)
    diff = np.einsum("...aia->...i", bgam) - np.einsum("...aia->...i", tgam)
    return _maxnorm(diff, -1)


def idempotence_residual(r: EquiaffinizeResult, p):
    """Size of the one-form obtained by equiaffinizing the result a second time."""
    again = equiaffinize(r.connection, r.metric, points=np.atleast_2d(p))
    val, _ = oneform_jets(again.psi, np.asarray(p, dtype=float))
    return _maxnorm(val, -1)


def ricci_asymmetry(c: ConnectionField, p):
    p = c.chart.check(p)
    gam, dgam = connection_jets(c, p, check=False)
    return asymmetry(ricci_from_riemann(riemann_from_jets(gam, dgam)))

