import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumplab import Domain, GeometryError

ALL_DOMAINS = [
    Domain.interval(0.0, 1.0),
    Domain.interval(-2.0, 3.5),
    Domain.rectangle(0.0, 0.0, 1.0, 1.0),
    Domain.rectangle(-1.0, 0.5, 2.0, 1.25),
    Domain.disk(0.0, 0.0, 1.0),
    Domain.disk(0.3, -0.2, 0.7),
    Domain.annulus(0.0, 0.0, 0.5, 1.0),
    Domain.annulus(0.1, 0.2, 0.4, 1.3),
]


def test_signed_distance_examples():
    assert Domain.interval(0, 1).signed_distance(0.3) == pytest.approx(0.3, abs=1e-15)
    assert Domain.disk(0, 0, 1).signed_distance([0.6, 0.0]) == pytest.approx(0.4, abs=1e-15)
    assert Domain.annulus(0, 0, 0.5, 1.0).signed_distance([0.7, 0.0]) == pytest.approx(0.2, abs=1e-15)


def test_contains_examples():
    assert Domain.interval(0, 1).contains(0.5)
    assert not Domain.interval(0, 1).contains(1.5)
    assert Domain.disk(0, 0, 1).contains([0.0, 0.99])


def test_inward_normal_examples():
    assert Domain.interval(0, 1).inward_normal(0.0)[0] == 1.0
    assert Domain.interval(0, 1).inward_normal(1.0)[0] == -1.0
    n = Domain.disk(0, 0, 2.0).inward_normal([2.0, 0.0])
    assert np.allclose(n, [-1.0, 0.0])
    n = Domain.annulus(0, 0, 1.0, 2.0).inward_normal([1.0, 0.0])
    assert np.allclose(n, [1.0, 0.0])


def test_inward_normal_off_boundary_raises():
    with pytest.raises(GeometryError):
        Domain.interval(0, 1).inward_normal(0.5)
    with pytest.raises(GeometryError):
        Domain.disk(0, 0, 1).inward_normal([0.5, 0.0])


def test_interval_boundary_quadrature_counting_measure():
    q = Domain.interval(0, 1).boundary_quadrature()
    assert q.nodes.tolist() == [[0.0], [1.0]]
    assert q.weights.tolist() == [1.0, 1.0]
    assert q.normals.tolist() == [[1.0], [-1.0]]


def test_circle_quadrature_weight_sum():
    q = Domain.disk(0, 0, 1.0).boundary_quadrature(100)
    assert abs(q.weights.sum() - 2 * math.pi) <= 1e-8 * 2 * math.pi


def test_rectangle_quadrature_perimeter():
    q = Domain.rectangle(0, 0, 1, 1).boundary_quadrature(50)
    assert abs(q.weights.sum() - 4.0) <= 1e-10


@pytest.mark.parametrize("dom", ALL_DOMAINS, ids=lambda d: f"{d.kind}{d.params}")
def test_boundary_quadrature_invariants(dom):
    q = dom.boundary_quadrature(64)
    assert abs(q.weights.sum() - dom.surface_measure) <= 1e-8 * dom.surface_measure
    assert np.all(q.weights > 0)
    norms = np.linalg.norm(q.normals, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12
    # nodes sit on the boundary
    assert np.max(np.abs(dom.signed_distance(q.nodes))) <= 1e-12 * dom.diameter
    # stepping inward along the normal lands inside
    eps = 1e-6 * dom.diameter
    assert np.all(dom.contains(q.nodes + eps * q.normals))


@pytest.mark.parametrize("dom", ALL_DOMAINS, ids=lambda d: f"{d.kind}{d.params}")
def test_boundary_quadrature_refinement(dom):
    s1 = dom.boundary_quadrature(40).weights.sum()
    s2 = dom.boundary_quadrature(80).weights.sum()
    assert abs(s2 - s1) <= 10.0 * dom.surface_measure / 40**2


@pytest.mark.parametrize("dom", ALL_DOMAINS, ids=lambda d: f"{d.kind}{d.params}")
def test_interior_quadrature_volume(dom):
    iq = dom.interior_quadrature(200)
    assert abs(iq.weights.sum() - dom.volume) <= 1e-6 * dom.volume


@pytest.mark.parametrize("dom", ALL_DOMAINS, ids=lambda d: f"{d.kind}{d.params}")
def test_projection_lands_on_boundary(dom):
    rng = np.random.default_rng(0)
    lo, hi = dom.bounding_box
    pts = lo + rng.random((200, dom.dim)) * (hi - lo)
    proj = dom.project_to_boundary(pts)
    assert np.max(np.abs(dom.signed_distance(proj))) <= 1e-12 * dom.diameter


@pytest.mark.parametrize("dom", ALL_DOMAINS, ids=lambda d: f"{d.kind}{d.params}")
def test_signed_distance_matches_projection_distance(dom):
    rng = np.random.default_rng(1)
    lo, hi = dom.bounding_box
    pts = lo + rng.random((200, dom.dim)) * (hi - lo) * 1.2  # some points outside
    proj = dom.project_to_boundary(pts)
    dist = np.linalg.norm(pts - proj, axis=1)
    assert np.max(np.abs(np.abs(dom.signed_distance(pts)) - dist)) <= 1e-10 * dom.diameter


@given(x=st.floats(-3, 3), y=st.floats(-3, 3),
       dom=st.sampled_from(ALL_DOMAINS))
@settings(max_examples=200, deadline=None)
def test_contains_iff_positive_distance(dom, x, y):
    p = np.array([x, y])[: dom.dim]
    assert dom.contains(p) == (dom.signed_distance(p) > 0)


def test_boundary_coordinate_disk_angle():
    dom = Domain.disk(0, 0, 1.0)
    c, comp = dom.boundary_coordinate([0.0, 1.0])
    assert c == pytest.approx(math.pi / 2)
    assert comp == 0


def test_boundary_coordinate_annulus_components():
    dom = Domain.annulus(0, 0, 0.5, 1.0)
    _, inner = dom.boundary_coordinate([0.5, 0.0])
    _, outer = dom.boundary_coordinate([1.0, 0.0])
    assert inner == 0 and outer == 1


def test_constructor_validation():
    with pytest.raises(ValueError):
        Domain.interval(1.0, 1.0)
    with pytest.raises(ValueError):
        Domain.rectangle(0, 0, 0, 1)
    with pytest.raises(ValueError):
        Domain.disk(0, 0, 0.0)
    with pytest.raises(ValueError):
        Domain.annulus(0, 0, 1.0, 0.5)
    with pytest.raises(ValueError):
        Domain.annulus(0, 0, 0.0, 1.0)
