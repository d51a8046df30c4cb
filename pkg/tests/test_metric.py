import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobvis.geometry import Bidisc, DomainError, FinitePoints, Punctured, UnitBall, to_complex
from kobvis.metric import (
    Region, calibrate_c, integrability_check, kob_distance_ball_exact, kob_metric_ball_exact,
    kob_metric_estimate, kob_metric_lower_pscvx, kob_metric_upper_disc, m_function, m_table,
)


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_ball_oracle_examples():
    assert kob_metric_ball_exact(2, np.zeros(4), _unit(np.random.default_rng(0), 4)) == pytest.approx(1.0)
    assert kob_metric_ball_exact(2, [0.5, 0, 0, 0], [1, 0, 0, 0]) == pytest.approx(4 / 3)
    assert kob_metric_ball_exact(2, [0.6, 0, 0, 0], [0, 0, 1, 0]) == pytest.approx(1.25)
    with pytest.raises(DomainError):
        kob_metric_ball_exact(1, [1.0, 0], [1, 0])


def test_ball_distance_closed_form():
    # disc slice: 1/2 log((1+r)/(1-r))
    assert kob_distance_ball_exact([0, 0, 0, 0], [0.9, 0, 0, 0]) == pytest.approx(0.5 * math.log(19))
    z, w = np.array([0.3, 0.1, -0.2, 0.4]), np.array([-0.5, 0.2, 0.1, 0.0])
    assert kob_distance_ball_exact(z, w) == pytest.approx(kob_distance_ball_exact(w, z))


def test_radial_oracle_matches_disc():
    for r in (0.0, 0.3, 0.7, 0.95):
        assert kob_metric_ball_exact(1, [r, 0], [1, 0]) == pytest.approx(1 / (1 - r * r))


def test_upper_disc_examples():
    assert kob_metric_upper_disc(UnitBall(1), [0, 0], [1, 0]) == pytest.approx(1.0, rel=1e-6)
    dom = Punctured(UnitBall(1), FinitePoints(np.array([[0.5, 0]])))
    assert kob_metric_upper_disc(dom, [0, 0], [1, 0]) == pytest.approx(2.0, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_homogeneity(t, seed):
    rng = np.random.default_rng(seed)
    dom = Punctured(UnitBall(2), FinitePoints(np.array([[0.4, 0, 0, 0]])))
    z = 0.5 * _unit(rng, 4) * rng.uniform(0.2, 1)
    v = _unit(rng, 4)
    a, b = kob_metric_upper_disc(dom, z, v), kob_metric_upper_disc(dom, z, t * v)
    assert b == pytest.approx(t * a, rel=1e-12)
    ea, eb = kob_metric_estimate(dom, z, v), kob_metric_estimate(dom, z, t * v)
    assert eb.lower == pytest.approx(t * ea.lower, rel=1e-12)
    assert eb.upper == pytest.approx(t * ea.upper, rel=1e-12)
    assert kob_metric_lower_pscvx(UnitBall(2), 0.5, z, t * v) == pytest.approx(
        t * kob_metric_lower_pscvx(UnitBall(2), 0.5, z, v), rel=1e-12)


def test_disc_bounds_vs_oracle():
    # centered discs are one-sided upper bounds; the punctured estimate is tight
    rng = np.random.default_rng(1)
    b = UnitBall(2)
    dom = Punctured(b, FinitePoints(np.array([[0.5, 0, 0, 0]])))
    X, V = [], []
    while len(X) < 1000:
        z = rng.uniform(-1, 1, 4)
        if np.linalg.norm(z) > 0.95 or np.linalg.norm(z - dom.obstacle.points[0]) < 0.05:
            continue
        X.append(z)
        V.append(_unit(rng, 4))
    for z, v in zip(X[:200], V[:200]):
        assert kob_metric_upper_disc(b, z, v) >= kob_metric_ball_exact(2, z, v) * (1 - 1e-9)
    ratios = [kob_metric_estimate(dom, z, v).upper / kob_metric_ball_exact(2, z, v) for z, v in zip(X, V)]
    assert min(ratios) >= 1 - 1e-9 and max(ratios) <= 1.05


def test_lower_pscvx_examples():
    b = UnitBall(2)
    assert kob_metric_lower_pscvx(b, 0.5, [0.99, 0, 0, 0], [0, 0, 1, 0]) == pytest.approx(5.0)
    with pytest.raises(DomainError):
        kob_metric_lower_pscvx(Bidisc(), 0.5, np.zeros(4), [1, 0, 0, 0])
    rng = np.random.default_rng(2)
    for _ in range(1000):
        xi = _unit(rng, 4)
        delta = rng.uniform(1e-4, 0.05)
        z = (1 - delta) * xi
        zc = to_complex(z)
        # complex-tangential unit direction
        t = to_complex(rng.normal(size=4))
        t -= np.vdot(zc, t) * zc / np.vdot(zc, zc)
        v = np.ravel(np.column_stack([t.real, t.imag]))
        v /= np.linalg.norm(v)
        assert kob_metric_ball_exact(2, z, v) >= kob_metric_lower_pscvx(b, 0.5, z, v)


def test_calibrated_c_is_valid_on_ball():
    c = calibrate_c(UnitBall(2), samples=200, seed=0)
    assert 0 < c <= 1 / math.sqrt(2)


def test_estimate_examples(ball2):
    dom = Punctured(ball2, FinitePoints(np.array([[0.5, 0, 0, 0]])))
    far = kob_metric_estimate(dom, [-0.3, 0, 0, 0.1], [0, 0, 1, 0])
    assert far.upper <= 1.05 * far.lower
    near = kob_metric_estimate(dom, [0.49, 0, 0, 0], [1, 0, 0, 0])
    assert near.lower < 3
    # the centered disc aimed at the puncture is capped at radius 0.01
    assert kob_metric_upper_disc(dom, [0.49, 0, 0, 0], [1, 0, 0, 0]) == pytest.approx(100.0)
    e = kob_metric_estimate(ball2, [0.2, 0.1, 0, 0], [0, 1, 0, 0])
    assert e.lower == e.upper == pytest.approx(kob_metric_ball_exact(2, [0.2, 0.1, 0, 0], [0, 1, 0, 0]))


def test_monotone_under_inclusion():
    rng = np.random.default_rng(3)
    dom = Punctured(UnitBall(2), FinitePoints(np.array([[0, 0, 0, 0], [0.4, 0, 0, 0]])))
    for _ in range(200):
        z = rng.uniform(-0.6, 0.6, 4)
        v = _unit(rng, 4)
        e = kob_metric_estimate(dom, z, v)
        assert e.lower <= e.upper
        assert e.upper >= kob_metric_ball_exact(2, z, v) * (1 - 1e-9)


def test_m_function_ball_value_and_monotone(ball2):
    assert m_function(ball2, Region(), 0.02, 400, 0) == pytest.approx(math.sqrt(2 * 0.02), rel=0.1)
    t = m_table(ball2, Region(), [0.005, 0.01, 0.02, 0.05], 200, 0)
    assert np.all(np.diff(t.M) >= 0)
    with pytest.raises(DomainError):
        m_function(ball2, Region(), 0.0)


def test_m_function_outer_region_ignores_punctures(ball2, punctured_center):
    a = m_function(ball2, Region(), 0.02, 400, 0)
    b = m_function(punctured_center, Region("outer"), 0.02, 400, 0)
    assert b == pytest.approx(a, rel=0.1)


def test_integrability_stub_constant_diverges():
    rep = integrability_check(None, Region(), 0.1, m_of_r=lambda r: 1.0)
    assert not rep.finite
    assert rep.exponent == pytest.approx(0.0, abs=1e-12)


def test_integrability_stub_sqrt():
    rep = integrability_check(None, Region(), 0.1, grid=64, m_of_r=lambda r: math.sqrt(2 * r))
    assert rep.finite and rep.exponent == pytest.approx(0.5)
    # lower limit eps/1024 cuts off a sliver of the closed form
    assert rep.integral == pytest.approx(2 * math.sqrt(0.2) * (1 - 1 / 32), rel=1e-3)
    with pytest.raises(DomainError):
        integrability_check(None, Region(), 0.1, grid=4, m_of_r=lambda r: 1.0)
