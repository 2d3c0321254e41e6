import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glmeasure.graph import (
    GraphParams,
    build_dense_graph,
    double_well,
    gaussian_weight,
    gl_energy,
    quadratic_form,
    symmetric_laplacian,
)

features = st.integers(2, 25).flatmap(
    lambda S: arrays(np.float64, (S, 3), elements=st.floats(-3, 3, allow_nan=False))
)


def test_gaussian_weight_values():
    assert gaussian_weight([0, 0], [0, 0], 2.0) == 1.0
    assert gaussian_weight([0, 0], [1, 1], 2.0) == pytest.approx(np.exp(-1.0))
    with pytest.raises(ValueError, match="dimension mismatch"):
        gaussian_weight([0], [0, 1], 1.0)


def test_graph_params_validation():
    with pytest.raises(ValueError):
        GraphParams(0.0)


@settings(max_examples=50, deadline=None)
@given(features, st.floats(0.05, 50))
def test_weights_symmetric_with_unit_diagonal(Z, sigma2):
    G = build_dense_graph(Z, GraphParams(sigma2))
    np.testing.assert_array_equal(G.W, G.W.T)
    np.testing.assert_array_equal(np.diag(G.W), 1.0)
    assert np.all((G.W >= 0) & (G.W <= 1))
    np.testing.assert_allclose(G.d, G.W.sum(1))


@settings(max_examples=50, deadline=None)
@given(features, st.floats(0.05, 50))
def test_laplacian_spectrum(Z, sigma2):
    G = build_dense_graph(Z, GraphParams(sigma2))
    Ls = symmetric_laplacian(G)
    vals = np.linalg.eigvalsh(Ls)
    assert vals.min() >= -1e-8 and vals.max() <= 2 + 1e-8
    v = np.sqrt(G.d)
    assert np.max(np.abs(Ls @ v)) / np.linalg.norm(v) < 1e-8


@settings(max_examples=50, deadline=None)
@given(features, st.data())
def test_quadratic_form_matches_unnormalised_laplacian(Z, data):
    G = build_dense_graph(Z, GraphParams(1.0))
    u = data.draw(arrays(np.float64, Z.shape[0], elements=st.floats(-2, 2)))
    L = np.diag(G.d) - G.W
    assert quadratic_form(u, G) == pytest.approx(u @ L @ u, rel=1e-9, abs=1e-9)


def test_double_well_minima():
    np.testing.assert_allclose(double_well([-1.0, 1.0]), 0.0)
    assert double_well(0.0) == pytest.approx(0.25)


def test_gl_energy_terms():
    Z = np.array([[0.0], [0.1], [5.0]])
    G = build_dense_graph(Z, GraphParams(1.0))
    labels = np.array([1.0, 0.0, -1.0])
    u = np.array([1.0, 1.0, -1.0])
    Ls = symmetric_laplacian(G)
    expected = 0.5 * 0.1 * u @ Ls @ u  # wells and fidelity vanish
    assert gl_energy(u, G, labels, 0.1) == pytest.approx(expected)
    u2 = np.array([0.0, 1.0, -1.0])
    e2 = 0.5 * 0.1 * u2 @ Ls @ u2 + 0.25 / 0.1 + 0.5
    assert gl_energy(u2, G, labels, 0.1) == pytest.approx(e2)


def test_gl_energy_shape_check():
    G = build_dense_graph(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        gl_energy(np.zeros(2), G, np.zeros(3), 0.1)


def test_dense_graph_size_cap():
    with pytest.raises(ValueError, match="too large"):
        build_dense_graph(np.zeros((10, 1)), max_vertices=5)
