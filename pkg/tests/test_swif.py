import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warplab.errors import PreconditionError
from warplab.families import collapsing_family, round_sphere
from warplab.geometry import RotSymManifold
from warplab.sequence import IkWindow
from warplab.swif import (bound_terms, epsilon_of_window, rate_certificate,
                          swif_upper_bound, window_volumes)

# ((4 D0 + 2 D/sqrt(pi)) (8 pi D^3 + 16 pi D^2) + 8 pi D) / sqrt(k + i), mpmath
RATE = [((2.0, 2.0, 4, 0), 2087.376365698504587),
        ((math.pi, math.pi, 8, 3), 6219.228884405100271),
        ((1.5, 1.0, 16, 10), 228.35257548336509013)]

I2 = IkWindow(2, math.pi / 6, 5 * math.pi / 6)


@pytest.fixture(scope="module")
def sphere():
    return RotSymManifold(round_sphere())


def sphere_window(k):
    a = math.asin(1.0 / k)
    return IkWindow(k, a, math.pi - a)


def test_window_volumes_round_sphere(sphere):
    vols = window_volumes(sphere, I2, math.pi)
    vol_w, area, excess = vols
    assert vol_w == pytest.approx(4 * math.pi * (math.pi / 3 + math.sqrt(3) / 4), rel=1e-12)
    assert area == pytest.approx(2 * math.pi, rel=1e-14)
    assert excess == pytest.approx(2 * math.pi ** 2 - vol_w, rel=1e-10)
    assert all(v >= 0 for v in vols.margins.values())


def test_window_volume_excess_vanishes_on_full_window():
    m = RotSymManifold(collapsing_family(3))
    vols = window_volumes(m, IkWindow(100, 0.0, 2.0), 2.0)
    assert vols.vol_excess == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(PreconditionError):
        window_volumes(m, IkWindow(2, 0.0, 3.0), 2.0)


@pytest.mark.parametrize("k", [4, 8, 16])
def test_collapsing_excess_within_cap(k):
    m = RotSymManifold(collapsing_family(2))
    a = 0.5 / k
    vols = window_volumes(m, IkWindow(k, a, 2.0 - a), 2.0)
    assert vols.vol_excess <= 16 * math.pi * 2.0 / k ** 2


def test_bound_terms():
    assert bound_terms(0.0, 0.0, math.pi) == (0.0, 0.0, 0.0)
    h, h_bar, a = bound_terms(0.5, 0.1, 2.0)
    assert h == pytest.approx(math.sqrt(0.5 * 2.125))
    assert h_bar == pytest.approx(max(h, 2.0 * math.sqrt(0.21)))
    assert a == pytest.approx(math.acos(1 / 1.1) * 2.0 / math.pi)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 1.0), st.floats(0.1, 10.0))
def test_bound_terms_ordering(lam, eps, D0):
    h, h_bar, a = bound_terms(lam, eps, D0)
    assert 0.0 <= h <= h_bar
    if lam <= 4 * D0:
        assert h <= math.sqrt(2 * lam * D0) * (1 + 1e-12)
    assert 0.0 <= a <= D0 / 2


def test_epsilon_of_window(sphere):
    assert epsilon_of_window(sphere, sphere, I2) == 0.0
    other = RotSymManifold(round_sphere(1.1))
    eps = epsilon_of_window(sphere, other, I2)
    # the ratio is monotone in s, so the extremes sit at the window ends
    ratios = [1.1 * math.sin(s / 1.1) / math.sin(s) for s in (I2.a_k, I2.b_k)]
    expected = max(max(ratios), 1.0 / min(ratios)) - 1.0
    assert eps == pytest.approx(expected, rel=1e-6)


def test_self_bound_decreases(sphere):
    bounds = []
    for k in (4, 8, 16, 32):
        rep = swif_upper_bound(sphere, sphere, sphere_window(k), math.pi)
        assert rep.lambda_upper == 0.0 and rep.epsilon == 0.0
        assert rep.h == rep.h_bar == rep.a == 0.0
        assert rep.lambda_analytic == pytest.approx(10 * math.pi / (k - 1))
        assert all(v >= 0 for v in rep.margins.values())
        bounds.append(rep.bound)
    assert all(b > 0 for b in bounds)
    assert all(y < x for x, y in zip(bounds, bounds[1:]))
    assert bounds[-1] < 0.05


def test_bound_reassembles_from_fields(sphere):
    other = RotSymManifold(round_sphere(1.05))
    rep = swif_upper_bound(sphere, other, I2, 4.0, n_pairs=32, resolution=64)
    mass = rep.vol_W1 + rep.vol_W2 + rep.area_bdry_W1 + rep.area_bdry_W2
    assert rep.bound == pytest.approx((2 * rep.h_bar + rep.a) * mass + rep.vol_excess_1
                                      + rep.vol_excess_2, rel=1e-14)
    assert rep.lambda_used == rep.lambda_upper == rep.lambda_analytic
    assert rep.lambda_lower <= rep.lambda_upper
    assert rep.flags["certified"] and rep.flags["lambda_lower_within_upper"]
    sampled = swif_upper_bound(sphere, other, I2, 4.0, lambda_mode="sampled", n_pairs=32,
                               resolution=64)
    assert sampled.lambda_used == sampled.lambda_lower
    assert not sampled.flags["certified"]
    assert sampled.bound < rep.bound
    assert set(rep.to_dict()) >= {"k", "epsilon", "lambda_lower", "lambda_upper", "h", "h_bar",
                                  "a", "D0", "bound", "term_breakdown"}


def test_bound_preconditions(sphere):
    with pytest.raises(PreconditionError):
        swif_upper_bound(sphere, sphere, I2, 3.0)
    with pytest.raises(PreconditionError):
        swif_upper_bound(sphere, sphere, I2, 4.0, lambda_mode="guess")


@pytest.mark.parametrize("args,expected", RATE)
def test_rate_certificate_oracle(args, expected):
    assert rate_certificate(*args) == pytest.approx(expected, rel=1e-12)


def test_rate_certificate_decreasing():
    vals = [rate_certificate(2.0, 2.0, 4, i) for i in range(20)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(PreconditionError):
        rate_certificate(0.0, 1.0, 4, 0)
    with pytest.raises(PreconditionError):
        rate_certificate(1.0, 1.0, 1, 0)
