import numpy as np
import pytest

from equiaffine.expr import Const, DomainError, evaluate
from equiaffine.geometry import (
    Chart,
    ChartError,
    ConnectionField,
    MetricField,
    OneFormField,
    SingularMetricError,
    connection_jets,
    covariant_derivative_oneform,
    levi_civita,
    metric_inverse,
    metric_jets,
    sample_points,
)
from equiaffine.suite import random_connection, riemannian_metrics, suite_metric
from oracles import fd4, fd_gradient, gamma_at


def test_chart_validation():
    with pytest.raises(ChartError):
        Chart(2, (0.0, 1.0), (1.0, 1.0))
    with pytest.raises(ChartError):
        Chart(1, (0.0,), (1.0,))
    chart = Chart.box(3)
    assert chart.names == ("x0", "x1", "x2")
    with pytest.raises(ChartError):
        chart.check([2.0, 0.0, 0.0])


def test_sample_points_deterministic_and_inside():
    chart = Chart(3, (-1, 0, 2), (1, 5, 2.5))
    a = sample_points(chart, 100, seed=3)
    b = sample_points(chart, 100, seed=3)
    c = sample_points(chart, 100, seed=4)
    assert a.shape == (100, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(chart.contains(a))


def test_symmetric_storage(rng, chart3):
    c = random_connection(chart3, rng)
    for h in range(3):
        for i in range(3):
            for j in range(3):
                assert c.gamma[h][i][j] is c.gamma[h][j][i]
    vals, grads = connection_jets(c, sample_points(chart3))
    assert np.array_equal(vals, np.swapaxes(vals, -1, -2))
    assert np.array_equal(grads, np.swapaxes(grads, -2, -3))


def test_connection_rejects_lower_triangle_keys(chart2):
    with pytest.raises(ChartError):
        ConnectionField.from_components(chart2, {(0, 1, 0): Const(1.0)})


def test_flat_connection_jets(chart2):
    vals, grads = connection_jets(ConnectionField.flat(chart2), [0.3, -0.2])
    assert not vals.any() and not grads.any()


def test_single_coefficient_jets(gamma000_x1):
    vals, grads = connection_jets(gamma000_x1, [0.25, 0.75])
    assert vals[0, 0, 0] == 0.75
    assert grads[0, 0, 0, 1] == 1.0
    assert grads[0, 0, 0, 0] == 0.0
    vals[0, 0, 0] = 0.0
    assert not vals.any()


@pytest.mark.parametrize("n", [2, 3, 4])
def test_connection_gradients_match_fd(n, rng):
    chart = Chart.box(n)
    c = random_connection(chart, rng)
    for p in rng.uniform(-0.9, 0.9, (5, n)):
        _, grads = connection_jets(c, p)
        for k in range(n):
            fd = fd4(lambda q: gamma_at(c, q), p, k)
            assert np.max(np.abs(grads[..., k] - fd)) <= 1e-6


def test_domain_error_propagates(chart2):
    c = ConnectionField.from_components(chart2, {(0, 0, 1): chart2.parse("1/x0")})
    with pytest.raises(DomainError):
        connection_jets(c, [0.0, 0.5])


# --- metrics ---------------------------------------------------------------

def test_identity_inverse(chart3):
    assert np.array_equal(metric_inverse(MetricField.identity(chart3), [0.1, 0.2, 0.3]),
                          np.eye(3))


def test_polar_inverse():
    chart = Chart(2, (0.5, -1), (3, 1))
    m = MetricField.from_components(chart, {(1, 1): chart.parse("x0^2")})
    assert np.allclose(metric_inverse(m, [2.0, 0.0]), np.diag([1.0, 0.25]), atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_inverse_multiply_back(n, rng):
    chart = Chart.box(n)
    A = rng.uniform(-1, 1, (n, n))
    G = A.T @ A + np.eye(n)
    m = MetricField.from_components(
        chart, {(i, j): Const(float(G[i, j])) for i in range(n) for j in range(i, n)})
    pts = sample_points(chart)
    inv = metric_inverse(m, pts)
    assert np.max(np.abs(inv @ G - np.eye(n))) <= 1e-10
    # expression metric as well
    m2 = suite_metric(chart)
    g, _, _ = metric_jets(m2, pts, 0)
    assert np.max(np.abs(metric_inverse(m2, pts) @ g - np.eye(n))) <= 1e-10


def test_singular_metric_reports_point():
    chart = Chart(2, (-1, -1), (1, 1))
    m = MetricField.from_components(chart, {(1, 1): chart.parse("x0")})
    with pytest.raises(SingularMetricError) as info:
        metric_inverse(m, [[0.5, 0.0], [0.0, 0.3]])
    assert info.value.point.tolist() == [0.0, 0.3]
    assert info.value.det == 0.0


def test_constant_metric_is_flat(chart3):
    m = MetricField.from_components(chart3, {(0, 0): Const(2.0), (0, 2): Const(0.3)})
    vals, grads = levi_civita(m, sample_points(chart3, 10))
    assert not vals.any() and not grads.any()


def test_polar_christoffel_symbols():
    chart = Chart(2, (0.5, -1), (3, 1))
    m = MetricField.from_components(chart, {(1, 1): chart.parse("x0^2")})
    vals, grads = levi_civita(m, [2.0, 0.4])
    expected = np.zeros((2, 2, 2))
    expected[1, 0, 1] = expected[1, 1, 0] = 0.5    # 1/x0
    expected[0, 1, 1] = -2.0                        # -x0
    assert np.allclose(vals, expected, atol=1e-15)
    # d/dx0 (1/x0) = -1/x0^2, d/dx0 (-x0) = -1
    assert grads[1, 0, 1, 0] == pytest.approx(-0.25)
    assert grads[0, 1, 1, 0] == pytest.approx(-1.0)


@pytest.mark.parametrize("index", range(5))
def test_levi_civita_gradient_matches_fd(index):
    m = riemannian_metrics()[index]
    rng = np.random.default_rng(index)
    lo, hi = np.array(m.chart.lo), np.array(m.chart.hi)
    for p in lo + (hi - lo) * rng.uniform(0.1, 0.9, (5, m.n)):
        _, grads = levi_civita(m, p)
        for k in range(m.n):
            fd = fd4(lambda q: levi_civita(m, q)[0], p, k, h=1e-4)
            assert np.max(np.abs(grads[..., k] - fd)) <= 1e-6 * max(1, np.abs(fd).max())


def metric_compatibility(m, pts):
    """max |nabla_k g_ij| with nabla the Levi-Civita connection of g."""
    g, dg, _ = metric_jets(m, pts, 1)
    gam, _ = levi_civita(m, pts)
    cov = (dg
           - np.einsum("...aki,...aj->...ijk", gam, g)
           - np.einsum("...akj,...ia->...ijk", gam, g))
    return np.abs(cov).max()


@pytest.mark.parametrize("index", range(5))
def test_levi_civita_is_metric_compatible(index):
    m = riemannian_metrics()[index]
    assert metric_compatibility(m, sample_points(m.chart)) <= 1e-9


# --- covariant derivative of a one-form ------------------------------------

def test_covariant_derivative_zero_form(chart2, gamma000_x1):
    out = covariant_derivative_oneform(OneFormField.zero(chart2), gamma000_x1, [0.2, 0.1])
    assert not out.any()


def test_covariant_derivative_flat(chart2):
    psi = OneFormField(chart2, (chart2.parse("x1"), Const(0.0)))
    out = covariant_derivative_oneform(psi, ConnectionField.flat(chart2), [0.3, -0.6])
    assert out.tolist() == [[0.0, 1.0], [0.0, 0.0]]


def test_covariant_derivative_matches_fd(chart3, rng):
    c = random_connection(chart3, rng)
    psi = OneFormField(chart3, tuple(chart3.parse(t) for t in
                                     ("x0*x1 - x2", "sin(x2) + x0^2", "exp(0.5*x1)")))
    for p in rng.uniform(-0.9, 0.9, (10, 3)):
        G = gamma_at(c, p)
        vals = np.array([evaluate(e, p) for e in psi.psi])
        want = np.empty((3, 3))
        for i in range(3):
            d = fd_gradient(lambda q: evaluate(psi.psi[i], q), p)
            for j in range(3):
                want[i, j] = d[j] - sum(G[a, i, j] * vals[a] for a in range(3))
        got = covariant_derivative_oneform(psi, c, p)
        assert np.max(np.abs(got - want)) <= 1e-8
