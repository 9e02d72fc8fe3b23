"""Charts and coordinate fields: connections, metrics and one-forms.

Every pointwise routine accepts a single point of shape ``(n,)`` or a batch of
shape ``(..., n)``; the leading axes are carried through to the outputs.
Index layout of returned arrays:

* connection values   ``[..., h, i, j]``     = Gamma^h_{ij}
* connection gradient ``[..., h, i, j, k]``  = d_k Gamma^h_{ij}
* one-form derivative ``[..., i, j]``        = nabla_j psi_i
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from .expr import Expression

DET_TOL = 1e-12


class ChartError(ValueError):
    pass


class SingularMetricError(ValueError):
    def __init__(self, point, det):
        self.point = np.asarray(point, dtype=float)
        self.det = float(det)
        super().__init__(
            f"metric is singular at point {self.point.tolist()} (det = {self.det!r})")


@dataclass(frozen=True)
class Chart:
    n: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 2:
            raise ChartError(f"dimension must be at least 2, got {self.n}")
        if not self.names:
            object.__setattr__(self, "names", tuple(ex.default_names(self.n)))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if not (len(self.lo) == len(self.hi) == len(self.names) == self.n):
            raise ChartError("bounds and names must all have length n")
        for k, (a, b) in enumerate(zip(self.lo, self.hi)):
            if not a < b:
                raise ChartError(f"empty domain along {self.names[k]}: [{a}, {b}]")

    @classmethod
    def box(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "Chart":
        return cls(n, (lo,) * n, (hi,) * n)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.n:
            raise ChartError(f"expected points of dimension {self.n}, got shape {p.shape}")
        inside = self.contains(p)
        if not np.all(inside):
            bad = p[np.logical_not(inside)] if p.ndim > 1 else p
            raise ChartError(f"point {np.atleast_2d(bad)[0].tolist()} outside chart domain")
        return p

    def parse(self, text: str) -> Expression:
        return ex.parse(text, self.n, self.names)

    def render(self, e: Expression) -> str:
        return ex.render(e, self.names)


def _symmetric_table(n, lookup, depth):
    """Nested list for symmetric lower indices; [i][j] and [j][i] share the object."""
    if depth == 3:
        return [[[lookup(h, min(i, j), max(i, j)) for j in range(n)]
                 for i in range(n)] for h in range(n)]
    return [[lookup(min(i, j), max(i, j)) for j in range(n)] for i in range(n)]


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """Torsion-free connection; ``gamma[h][i][j] is gamma[h][j][i]``."""

    chart: Chart
    gamma: list = field(repr=False)

    @classmethod
    def from_components(cls, chart: Chart,
                        components: Mapping[tuple[int, int, int], Expression]):
        """Build from ``{(h, i, j): expr}`` with ``i <= j``; missing entries are 0."""
        n = chart.n
        zero = ex.Const(0.0)
        store = {}
        for (h, i, j), e in components.items():
            if not all(0 <= v < n for v in (h, i, j)):
                raise ChartError(f"connection index {(h, i, j)} out of range for n={n}")
            if i > j:
                raise ChartError(f"connection key {(h, i, j)} must have i <= j")
            bad = [k for k in ex.variables(e) if k >= n]
            if bad:
                raise ChartError(f"coefficient {(h, i, j)} uses coordinate index {bad[0]}")
            store[h, i, j] = e
        return cls(chart, _symmetric_table(n, lambda h, i, j: store.get((h, i, j), zero), 3))

    @classmethod
    def flat(cls, chart: Chart) -> "ConnectionField":
        return cls.from_components(chart, {})

    @property
    def n(self) -> int:
        return self.chart.n

    def components(self):
        """Yield ``((h, i, j), expr)`` over the stored representatives ``i <= j``."""
        n = self.n
        for h in range(n):
            for i in range(n):
                for j in range(i, n):
                    yield (h, i, j), self.gamma[h][i][j]

    def nonzero(self) -> dict:
        return {k: e for k, e in self.components()
                if not (isinstance(e, ex.Const) and e.value == 0)}


@dataclass(frozen=True, eq=False)
class MetricField:
    chart: Chart
    g: list = field(repr=False)

    @classmethod
    def from_components(cls, chart: Chart,
                        components: Mapping[tuple[int, int], Expression] | None = None):
        """Build from ``{(i, j): expr}`` with ``i <= j``; missing entries follow the identity."""
        n = chart.n
        store = {}
        for (i, j), e in (components or {}).items():
            if not (0 <= i <= j < n):
                raise ChartError(f"metric key {(i, j)} must satisfy 0 <= i <= j < {n}")
            store[i, j] = e

        def lookup(i, j):
            return store.get((i, j), ex.Const(1.0 if i == j else 0.0))

        return cls(chart, _symmetric_table(n, lookup, 2))

    @classmethod
    def identity(cls, chart: Chart) -> "MetricField":
        return cls.from_components(chart)

    @property
    def n(self) -> int:
        return self.chart.n

    def components(self):
        for i in range(self.n):
            for j in range(i, self.n):
                yield (i, j), self.g[i][j]

    def is_identity(self) -> bool:
        return all(isinstance(e, ex.Const) and e.value == (1.0 if i == j else 0.0)
                   for (i, j), e in self.components())


@dataclass(frozen=True, eq=False)
class OneFormField:
    chart: Chart
    psi: tuple

    def __post_init__(self):
        if len(self.psi) != self.chart.n:
            raise ChartError(f"one-form needs {self.chart.n} components, got {len(self.psi)}")

    @classmethod
    def zero(cls, chart: Chart) -> "OneFormField":
        return cls(chart, tuple(ex.Const(0.0) for _ in range(chart.n)))


def sample_points(chart: Chart, count: int = 100, seed: int = 0) -> np.ndarray:
    """Deterministic scrambled-Halton points inside the chart box, shape ``(count, n)``."""
    u = qmc.Halton(d=chart.n, scramble=True, seed=seed).random(count)
    lo, hi = np.array(chart.lo), np.array(chart.hi)
    return lo + u * (hi - lo)


def _batch_jets(exprs: Sequence[Expression], p, order):
    """Stack jets of several expressions; component axis goes right after the batch axes."""
    results = ex.jets_many(exprs, p, order)
    lead = np.ndim(results[0][0])
    v = np.stack([r[0] for r in results], axis=lead)
    g = np.stack([r[1] for r in results], axis=lead) if order >= 1 else None
    h = np.stack([r[2] for r in results], axis=lead) if order >= 2 else None
    return v, g, h


def connection_jets(c: ConnectionField, p, check: bool = True):
    """Values ``[..., h, i, j]`` and gradients ``[..., h, i, j, k]`` of the coefficients."""
    p = c.chart.check(p) if check else np.asarray(p, dtype=float)
    n = c.n
    flat = [c.gamma[h][i][j] for h in range(n) for i in range(n) for j in range(n)]
    v, g, _ = _batch_jets(flat, p, 1)
    shape = p.shape[:-1]
    return v.reshape(shape + (n, n, n)), g.reshape(shape + (n, n, n, n))


def metric_jets(m: MetricField, p, order: int = 2):
    n = m.n
    flat = [m.g[i][j] for i in range(n) for j in range(n)]
    v, g, h = _batch_jets(flat, np.asarray(p, dtype=float), order)
    shape = np.shape(p)[:-1]
    v = v.reshape(shape + (n, n))
    g = None if g is None else g.reshape(shape + (n, n, n))
    h = None if h is None else h.reshape(shape + (n, n, n, n))
    return v, g, h


def _inverse(g, p):
    det = np.linalg.det(g)
    bad = ~(np.abs(det) > DET_TOL)
    if np.any(bad):
        idx = tuple(np.argwhere(np.atleast_1d(bad))[0]) if np.ndim(det) else ()
        raise SingularMetricError(np.asarray(p)[idx], np.asarray(det)[idx])
    return np.linalg.inv(g)


def metric_inverse(m: MetricField, p) -> np.ndarray:
    """Inverse metric ``g^{ij}`` at ``p``; raises :class:`SingularMetricError`."""
    p = m.chart.check(p)
    g, _, _ = metric_jets(m, p, 0)
    return _inverse(g, p)


def levi_civita(m: MetricField, p):
    """Christoffel symbols of ``m`` and their first derivatives.

    Returns ``(values[..., h, i, j], gradients[..., h, i, j, k])`` in the same
    layout as :func:`connection_jets`.  Derivatives are assembled from the
    metric's second-order jets and ``d(g^-1) = -g^-1 (dg) g^-1``.
    """
    p = m.chart.check(p)
    g, dg, d2g = metric_jets(m, p, 2)
    ginv = _inverse(g, p)
    # dg[..., a, b, k] = d_k g_ab;  low[a, i, j] = (d_i g_aj + d_j g_ai - d_a g_ij) / 2
    low = 0.5 * (np.einsum("...aji->...aij", dg) + dg
                 - np.einsum("...ija->...aij", dg))
    gam = np.einsum("...ha,...aij->...hij", ginv, low)
    dlow = 0.5 * (np.einsum("...ajil->...aijl", d2g) + d2g
                  - np.einsum("...ijal->...aijl", d2g))
    dginv = -np.einsum("...hb,...bcl,...ca->...hal", ginv, dg, ginv)
    dgam = (np.einsum("...hal,...aij->...hijl", dginv, low)
            + np.einsum("...ha,...aijl->...hijl", ginv, dlow))
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    dgam = 0.5 * (dgam + np.swapaxes(dgam, -2, -3))
    return gam, dgam


def oneform_jets(psi: OneFormField, p):
    """Values ``[..., i]`` and gradients ``[..., i, k]`` of a one-form."""
    v, g, _ = _batch_jets(list(psi.psi), np.asarray(p, dtype=float), 1)
    return v, g


def covariant_derivative_oneform(psi: OneFormField, c: ConnectionField, p) -> np.ndarray:
    """``out[..., i, j] = d_j psi_i - Gamma^a_{ij} psi_a``."""
    p = c.chart.check(p)
    val, grad = oneform_jets(psi, p)
    gam, _ = connection_jets(c, p, check=False)
    return grad - np.einsum("...aij,...a->...ij", gam, val)
