import numpy as np
import pytest

from equiaffine.curvature import ricci, ricci_from_riemann, riemann
from equiaffine.expr import Const, evaluate
from equiaffine.geometry import (
    Chart,
    ConnectionField,
    MetricField,
    OneFormField,
    SingularMetricError,
    connection_jets,
    levi_civita,
    oneform_jets,
    sample_points,
)
from equiaffine.projective import (
    DimensionMismatch,
    EquiaffinizeResult,
    apply_projective,
    curvature_relation_rhs,
    equiaffinize,
    idempotence_residual,
    psi_deformation,
    ricci_asymmetry,
    ricci_relation_rhs,
    trace_normalization_residual,
    trace_one_form,
    verify_curvature_relation,
    verify_ricci_relation,
)
from equiaffine.suite import random_connection, suite_metric
from oracles import fd_gradient, gamma_at


def psi_values(psi, p):
    return oneform_jets(psi, p)[0]


# --- trace_one_form --------------------------------------------------------

def test_flat_identity_gives_zero_form(chart2, identity2):
    psi = trace_one_form(ConnectionField.flat(chart2), identity2)
    assert psi.psi == (Const(0.0), Const(0.0))


def test_trace_form_single_coefficient(gamma000_x1, identity2, rng):
    psi = trace_one_form(gamma000_x1, identity2)
    assert psi.psi[1] == Const(0.0)
    for p in rng.uniform(-1, 1, (10, 2)):
        assert evaluate(psi.psi[0], p) == pytest.approx(-p[1] / 3, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_trace_form_matches_numeric_trace(n, rng):
    chart = Chart.box(n)
    c = random_connection(chart, rng)
    psi = trace_one_form(c, MetricField.identity(chart))
    for p in sample_points(chart):
        G = gamma_at(c, p)
        want = [-sum(G[a, i, a] for a in range(n)) / (n + 1) for i in range(n)]
        assert np.allclose(psi_values(psi, p), want, rtol=1e-12, atol=1e-14)


def test_trace_form_with_metric_matches_christoffel_trace(chart3, metric3, rng):
    c = random_connection(chart3, rng)
    psi = trace_one_form(c, metric3)
    pts = sample_points(chart3)
    gam, _ = connection_jets(c, pts)
    tgam, _ = levi_civita(metric3, pts)
    want = -(np.einsum("...aia->...i", gam) - np.einsum("...aia->...i", tgam)) / 4
    assert np.max(np.abs(psi_values(psi, pts) - want)) <= 1e-12


# --- apply_projective ------------------------------------------------------

def test_zero_form_is_identity(chart3, rng):
    c = random_connection(chart3, rng)
    bar = apply_projective(c, OneFormField.zero(chart3))
    for (key, e), (_, e2) in zip(c.components(), bar.components()):
        assert e is e2


def test_constant_form_on_flat(chart2):
    bar = apply_projective(ConnectionField.flat(chart2),
                           OneFormField(chart2, (Const(1.0), Const(0.0))))
    vals, _ = connection_jets(bar, [0.0, 0.0])
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 2.0
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0
    assert np.array_equal(vals, expected)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_trace_identity(n, rng):
    chart = Chart.box(n)
    c = random_connection(chart, rng)
    psi = OneFormField(chart, tuple(chart.parse(f"sin(x{k}) + x0*x1") for k in range(n)))
    bar = apply_projective(c, psi)
    pts = sample_points(chart)
    g, _ = connection_jets(c, pts)
    gb, _ = connection_jets(bar, pts)
    lhs = np.einsum("...aia->...i", gb)
    rhs = np.einsum("...aia->...i", g) + (n + 1) * psi_values(psi, pts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_dimension_mismatch(chart2, chart3):
    with pytest.raises(DimensionMismatch):
        apply_projective(ConnectionField.flat(chart2), OneFormField.zero(chart3))
    with pytest.raises(DimensionMismatch):
        trace_one_form(ConnectionField.flat(chart2), MetricField.identity(chart3))


# --- psi_deformation -------------------------------------------------------

def test_deformation_of_zero_form(chart2, gamma000_x1):
    assert not psi_deformation(OneFormField.zero(chart2), gamma000_x1, [0.1, 0.2]).psi_ij.any()


def test_deformation_flat(chart2, rng):
    psi = OneFormField(chart2, (chart2.parse("x1"), Const(0.0)))
    for p in rng.uniform(-1, 1, (5, 2)):
        d = psi_deformation(psi, ConnectionField.flat(chart2), p).psi_ij
        assert d[0, 1] == 1.0
        assert d[0, 0] == pytest.approx(-p[1] ** 2)
        assert d[1, 0] == 0.0 and d[1, 1] == 0.0


def test_deformation_matches_fd(chart3, rng):
    c = random_connection(chart3, rng)
    psi = OneFormField(chart3, tuple(chart3.parse(t) for t in ("x1*x2", "cos(x0)", "x2^3 - x0")))
    for p in rng.uniform(-0.9, 0.9, (10, 3)):
        G = gamma_at(c, p)
        val = np.array([evaluate(e, p) for e in psi.psi])
        want = np.empty((3, 3))
        for i in range(3):
            d = fd_gradient(lambda q: evaluate(psi.psi[i], q), p)
            for j in range(3):
                cov = d[j] - sum(G[a, i, j] * val[a] for a in range(3))
                want[i, j] = cov - val[i] * val[j]
        assert np.max(np.abs(psi_deformation(psi, c, p).psi_ij - want)) <= 1e-8


# --- transformation laws ---------------------------------------------------

def deformed(c, psi):
    return EquiaffinizeResult(psi, apply_projective(c, psi), MetricField.identity(c.chart))


def test_relations_with_zero_form(chart3, rng):
    c = random_connection(chart3, rng)
    r = deformed(c, OneFormField.zero(chart3))
    pts = sample_points(chart3, 20)
    assert not verify_curvature_relation(c, r, pts).any()
    assert not verify_ricci_relation(c, r, pts).any()


def test_curvature_relation_constant_form_on_flat(chart3):
    c = ConnectionField.flat(chart3)
    r = deformed(c, OneFormField(chart3, (Const(0.5), Const(-1.25), Const(2.0))))
    assert verify_curvature_relation(c, r, sample_points(chart3, 20)).max() <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_relations_hold_for_arbitrary_forms(n, rng):
    chart = Chart.box(n)
    c = random_connection(chart, rng)
    psi = OneFormField(chart, tuple(chart.parse(t) for t in
                                    (["x0*x1 + 0.3", "sin(x1) - x0^2", "exp(0.2*x0)", "x1^3"][:n])))
    r = deformed(c, psi)
    pts = sample_points(chart)
    assert verify_curvature_relation(c, r, pts).max() <= 1e-9
    assert verify_ricci_relation(c, r, pts).max() <= 1e-9


def test_contracting_curvature_law_gives_ricci_law(chart3, rng):
    c = random_connection(chart3, rng)
    p = sample_points(chart3, 10)
    R = riemann(c, p).R
    phi = rng.normal(size=(10, 3, 3))
    contracted = ricci_from_riemann(curvature_relation_rhs(R, phi, 3))
    assert np.max(np.abs(contracted - ricci_relation_rhs(ricci_from_riemann(R), phi, 3))) <= 1e-12


def test_deformation_argument_order(chart3, rng):
    """The laws close with phi(X, Y) = (nabla_X psi)(Y) - psi(X) psi(Y), not its transpose."""
    c = random_connection(chart3, rng)
    r = equiaffinize(c)
    p = sample_points(chart3)
    psi_ij = psi_deformation(r.psi, c, p).psi_ij   # [i, j] = nabla_j psi_i - psi_i psi_j
    ric = ricci(c, p).ric
    ric_bar = ricci(r.connection, p).ric
    good = np.abs(ric_bar - ricci_relation_rhs(ric, np.swapaxes(psi_ij, -1, -2), 3)).max()
    transposed = np.abs(ric_bar - ricci_relation_rhs(ric, psi_ij, 3)).max()
    assert good <= 1e-9
    assert transposed > 1e-3


# --- equiaffinize ----------------------------------------------------------

def test_flat_is_already_equiaffine(chart2):
    c = ConnectionField.flat(chart2)
    r = equiaffinize(c)
    assert all(e == Const(0.0) for e in r.psi.psi)
    assert all(e == Const(0.0) for _, e in r.connection.components())


def test_equiaffinize_single_coefficient(gamma000_x1):
    chart = gamma000_x1.chart
    pts = sample_points(chart)
    r = equiaffinize(gamma000_x1)
    assert np.allclose(psi_values(r.psi, pts), np.stack([-pts[:, 1] / 3, 0 * pts[:, 1]], 1),
                       atol=1e-15)
    assert ricci_asymmetry(gamma000_x1, pts).min() > 0.5
    assert ricci_asymmetry(r.connection, pts).max() <= 1e-9


@pytest.mark.parametrize("use_metric", [False, True])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_theorem_and_identities(n, use_metric, rng):
    chart = Chart.box(n)
    m = suite_metric(chart) if use_metric else MetricField.identity(chart)
    pts = sample_points(chart)
    for _ in range(3):
        c = random_connection(chart, rng)
        r = equiaffinize(c, m)
        assert ricci_asymmetry(r.connection, pts).max() <= 1e-8
        assert verify_curvature_relation(c, r, pts).max() <= 1e-9
        assert verify_ricci_relation(c, r, pts).max() <= 1e-9
        assert trace_normalization_residual(r, pts).max() <= 1e-10
        assert idempotence_residual(r, pts).max() <= 1e-12


def test_idempotence(chart3, metric3, rng):
    c = random_connection(chart3, rng)
    r = equiaffinize(c, metric3)
    again = equiaffinize(r.connection, metric3)
    pts = sample_points(chart3)
    assert np.abs(psi_values(again.psi, pts)).max() <= 1e-12
    a, _ = connection_jets(again.connection, pts)
    b, _ = connection_jets(r.connection, pts)
    assert np.abs(a - b).max() <= 1e-12


def test_singular_metric_is_rejected(chart2, gamma000_x1):
    m = MetricField.from_components(chart2, {(0, 0): chart2.parse("x0^2")})
    with pytest.raises(SingularMetricError):
        equiaffinize(gamma000_x1, m, points=np.array([[0.0, 0.5]]))
