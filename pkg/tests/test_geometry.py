import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobvis.geometry import (
    Bidisc, DomainError, Ellipsoid, FinitePoints, Punctured, RasterObstacle, UnitBall, as_point,
    classify_boundary_point, contains, delta_batch, delta_boundary, domain_from_config, domain_to_config,
    parse_config, read_raster, sample_boundary_pair, write_raster,
)

coord = st.floats(-0.7, 0.7, allow_nan=False)


def test_point_length_must_be_even():
    with pytest.raises(DomainError):
        as_point([0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        as_point([np.nan, 0.0])


def test_contains_examples(ball2):
    b1 = UnitBall(1)
    assert contains(b1, [0, 0])
    assert not contains(b1, [1, 0])
    assert not contains(Punctured(ball2, FinitePoints(np.zeros((1, 4)))), np.zeros(4))
    with pytest.raises(DomainError):
        contains(b1, np.zeros(4))


def test_delta_examples(punctured_center):
    assert delta_boundary(UnitBall(1), [0, 0]) == pytest.approx(1.0)
    assert delta_boundary(punctured_center, [0.1, 0, 0, 0]) == pytest.approx(0.1)
    assert delta_boundary(Bidisc(), [0.5, 0, 0, 0]) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        delta_boundary(UnitBall(1), [2, 0])


def test_bidisc_delta_matches_boundary_sample():
    # brute force over a dense boundary sample
    B = Bidisc()
    pts = B.sample_boundary(np.random.default_rng(0), 200_000)
    z = np.array([0.5, 0, 0, 0])
    assert np.min(np.linalg.norm(pts - z, axis=1)) == pytest.approx(0.5, abs=5e-3)


def test_visibility_flags():
    assert UnitBall(2).visibility_expected
    assert Ellipsoid(2, (1.0, 0.5)).visibility_expected
    assert not Bidisc().visibility_expected


@settings(max_examples=60, deadline=None)
@given(st.lists(coord, min_size=8, max_size=8))
def test_delta_is_one_lipschitz(punctured_center, c):
    z, w = np.array(c[:4]), np.array(c[4:])
    dz, dw = delta_batch(punctured_center, np.vstack([z, w]))
    assert abs(dz - dw) <= np.linalg.norm(z - w) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(coord, min_size=4, max_size=4))
def test_punctured_delta_below_base(punctured_center, c):
    z = np.array(c)
    assert delta_batch(punctured_center, z)[0] <= delta_batch(punctured_center.base, z)[0] + 1e-15


def test_boundary_pair_antipodal_and_deterministic(ball2):
    xi, eta = sample_boundary_pair(ball2, 1.9, seed=3)
    assert np.linalg.norm(xi - eta) >= 1.9
    assert abs(np.linalg.norm(xi) - 1) < 1e-9 and abs(np.linalg.norm(eta) - 1) < 1e-9
    a, b = sample_boundary_pair(ball2, 1.9, seed=3)
    assert np.array_equal(a, xi) and np.array_equal(b, eta)


def test_boundary_pair_budget(ball2):
    with pytest.raises(DomainError):
        sample_boundary_pair(ball2, 2.5, seed=0)


def test_punctured_boundary_pairs_land_on_sphere_or_puncture(punctured_center):
    for s in range(30):
        for p in sample_boundary_pair(punctured_center, 0.5, s):
            assert abs(np.linalg.norm(p) - 1) < 1e-9 or np.linalg.norm(p) == 0


def test_classification(punctured_center):
    assert classify_boundary_point(punctured_center, [1, 0, 0, 0]) == "OuterBoundary"
    assert classify_boundary_point(punctured_center, np.zeros(4)) == "Obstacle"
    with pytest.raises(DomainError):
        classify_boundary_point(punctured_center, [0.5, 0, 0, 0])
    # exhaustive on sampled boundary points
    for s in range(20):
        for p in sample_boundary_pair(punctured_center, 0.5, s):
            assert classify_boundary_point(punctured_center, p) in ("OuterBoundary", "Obstacle")


def test_raster_clearance_enforced(ball2):
    idx = np.array([[0, 0, 0, 0], [1, 0, 0, 0]])
    ok = RasterObstacle.from_index(0.01, idx)
    Punctured(ball2, ok)
    far = RasterObstacle.from_index(0.01, np.array([[95, 0, 0, 0]]))
    with pytest.raises(DomainError):
        Punctured(ball2, far)


def test_raster_inflated_cells_excluded(ball2):
    R = RasterObstacle.from_index(0.01, np.array([[0, 0, 0, 0]]))
    dom = Punctured(ball2, R)
    assert not contains(dom, [0.004, 0, 0, 0])
    assert contains(dom, [0.02, 0, 0, 0])


def test_config_round_trip(tmp_path):
    text = "kind = ball\nn = 2\npunctures = 0 0 0 0; 0.4 0 0 0\n"
    dom = domain_from_config(parse_config(text))
    again = domain_from_config(parse_config(domain_to_config(dom)))
    assert np.array_equal(again.obstacle.points, dom.obstacle.points)
    assert isinstance(domain_from_config({"kind": "bidisc"}), Bidisc)
    with pytest.raises(DomainError):
        domain_from_config({"kind": "torus"})


def test_raster_file_round_trip(tmp_path):
    R = RasterObstacle.from_index(0.01, np.array([[0, 0, 0, 0], [1, 2, 0, 0]]), origin=np.full(4, 0.1))
    write_raster(tmp_path / "r.txt", R)
    S = read_raster(tmp_path / "r.txt")
    assert S.h == R.h and np.array_equal(S.index, R.index) and np.allclose(S.origin, R.origin)
