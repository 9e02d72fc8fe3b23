"""Seeded generators for test connections and metrics."""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .geometry import Chart, ConnectionField, MetricField


def random_polynomial(n: int, rng: np.random.Generator, degree: int = 3,
                      terms: int = 3) -> ex.Expression:
    """Sum of ``terms`` monomials of total degree <= ``degree``, coefficients in [-1, 1]."""
    total: ex.Expression = ex.Const(0.0)
    for _ in range(terms):
        mono: ex.Expression = ex.Const(round(float(rng.uniform(-1, 1)), 6))
        powers = np.zeros(n, dtype=int)
        for _ in range(int(rng.integers(0, degree + 1))):
            powers[rng.integers(n)] += 1
        for k, e in enumerate(powers):
            if e:
                mono = ex.mul(mono, ex.power(ex.Var(k), int(e)))
        total = ex.add(total, mono)
    return total


def random_connection(chart: Chart, rng: np.random.Generator, degree: int = 3,
                      density: float = 0.7) -> ConnectionField:
    n = chart.n
    comps = {}
    for h in range(n):
        for i in range(n):
            for j in range(i, n):
                if rng.uniform() < density:
                    comps[h, i, j] = random_polynomial(n, rng, degree,
                                                       int(rng.integers(1, 4)))
    return ConnectionField.from_components(chart, comps)


def suite_metric(chart: Chart) -> MetricField:
    """Diagonally dominant (hence positive definite) metric on ``[-1, 1]^n``."""
    n = chart.n
    name = chart.names
    comps = {}
    for i in range(n):
        nxt = name[(i + 1) % n]
        comps[i, i] = chart.parse(f"2 + 0.5*sin({name[i]} + 0.3*{nxt})")
        if i + 1 < n:
            comps[i, i + 1] = chart.parse(f"0.2*cos({name[i]}*{nxt})")
    return MetricField.from_components(chart, comps)


def connection_suite(seed: int = 2024, per_dimension: int = 10, dims=(2, 3, 4)):
    """``[(chart, connection)]`` on ``[-1, 1]^n``, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    out = []
    for n in dims:
        chart = Chart.box(n)
        for _ in range(per_dimension):
            out.append((chart, random_connection(chart, rng)))
    return out


def riemannian_metrics():
    """Five expression metrics with their charts, all positive definite on the domain."""
    polar = Chart(2, (0.5, -3.0), (3.0, 3.0))
    sphere = Chart(2, (0.3, -3.0), (2.8, 3.0))
    halfplane = Chart(2, (-2.0, 0.5), (2.0, 2.0))
    box3 = Chart.box(3)
    box4 = Chart.box(4)
    return [
        MetricField.from_components(polar, {(1, 1): polar.parse("x0^2")}),
        MetricField.from_components(sphere, {(1, 1): sphere.parse("sin(x0)^2")}),
        MetricField.from_components(halfplane, {(0, 0): halfplane.parse("1/x1^2"),
                                                (1, 1): halfplane.parse("1/x1^2")}),
        suite_metric(box3),
        MetricField.from_components(box4, {
            (0, 0): box4.parse("1 + exp(x1)"),
            (1, 1): box4.parse("1 + x0^2"),
            (2, 2): box4.parse("cosh(x3)"),
            (3, 3): box4.parse("2 + x2*x0"),
            (0, 3): box4.parse("0.3*sin(x1)"),
            (1, 2): box4.parse("0.2*x3"),
        }),
    ]
