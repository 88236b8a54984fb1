import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warplab.errors import (ConstructionError, DomainError, EmptyWindowError,
                            PreconditionError, ShapeError, WindowDisconnectedError)
from warplab.families import custom_profile, round_sphere
from warplab.grid import GridFunction, uniform_grid
from warplab.sequence import (IkWindow, LimitProfile, SequenceSpec, TestFunction, bv_bound,
                              default_battery, distributional_scalar_test, extend_by_zero,
                              extract_limit, h1_convergence, ik_window, pole_cap_check,
                              pole_volume_ratio, richardson_r2, tangent_cone_portrait,
                              uniform_distance)

# int |h''| over [pi/6, 5pi/6] for h = (c sin s)^{3/2}; mpmath quad, 30 digits
BV_ORACLE = {2 / 3: 1.0262284950709134595, 0.8: 1.3490123901718043442,
             1.0: 1.8853021293210148221}

# (4 pi r^3/3 - 2 pi (r - sin r cos r)) / (4 pi r^5/3) on the unit sphere
POLE_RATIO = {0.2: 0.19923978589958984283, 0.1: 0.19980962959115945593,
              0.05: 0.19995238756553635407, 0.025: 0.19998809565144563206}

# bump tests on f = sin: (center, radius) -> (lhs, rhs), mpmath quad
SPHERE_BUMPS = {
    (math.pi / 2, math.pi / 10): (0.3850109112552713482, -0.73490986693050530184),
    (math.pi / 5, math.pi / 40): (0.15680186400437507178, 0.058469078029602613464),
}


def limit_of(expr, L, n=4097):
    s = uniform_grid(0.0, L, n)
    return LimitProfile.from_grid(GridFunction(0.0, L, expr(s)))


SINE_SEQUENCE = {"family": "scaled_sine", "indices": [1, 2, 4, 8, 16, 32, 64], "D": math.pi,
                 "schedule": {"c": "1 / (1 + 1/j)"}}


def test_spec_round_trip():
    seq = SequenceSpec.from_dict(SINE_SEQUENCE)
    assert SequenceSpec.from_dict(seq.to_dict()) == seq
    assert seq.member_params(2) == {"c": pytest.approx(0.8)}
    with pytest.raises(ConstructionError):
        SequenceSpec.from_dict({"family": "collapsing", "indices": [2, 1], "D": 2.0})
    with pytest.raises(ConstructionError):
        SequenceSpec("collapsing", (1, 2), 2.0, schedule={"j": [1]})
    with pytest.raises(ConstructionError):
        SequenceSpec.from_dict({"family": "collapsing", "D": 2.0})


def test_constant_sequence_limit():
    seq = SequenceSpec("round_sphere", (1, 2, 3), math.pi)
    v = extract_limit(seq)
    assert v.converged
    assert v.successive_distances == (0.0, 0.0)
    assert v.profile.a_inf == pytest.approx(0.0, abs=1e-12)
    assert v.profile.b_inf == pytest.approx(math.pi, abs=1e-12)
    assert v.profile.lipschitz_constant <= 1.0 + 1e-4


def test_collapsing_sequence_is_zero_current():
    seq = SequenceSpec("collapsing", (1, 2, 4, 10), 2.0, schedule={"j": "j"})
    v = extract_limit(seq)
    assert v.status == "zero_current"
    assert v.profile is None
    assert v.sup_last == pytest.approx(1 / 22, rel=1e-12)


def test_scaled_sine_sequence_converges():
    v = extract_limit(SequenceSpec.from_dict(SINE_SEQUENCE))
    assert v.converged
    prof = v.profile
    assert prof.lipschitz_constant <= 1.0 + 1e-4
    s = prof.f_inf.nodes
    assert np.max(np.abs(prof.f_inf.samples - np.sin(s))) < 0.02
    d = v.successive_distances
    assert all(b < a for a, b in zip(d, d[1:]))


@pytest.mark.parametrize("schedule", [[0.5, 1.0, 0.5, 1.0], [0.9, 0.8, 0.9, 0.8],
                                      [0.5, 0.51, 0.6, 1.0]])
def test_non_decaying_sequences_are_rejected(schedule):
    seq = SequenceSpec("scaled_sine", (1, 2, 3, 4), math.pi, schedule={"c": schedule})
    assert extract_limit(seq).status == "non_convergent"


def test_too_short_sequence():
    with pytest.raises(PreconditionError):
        extract_limit(SequenceSpec("round_sphere", (1, 2), math.pi))


def test_extend_by_zero():
    g = extend_by_zero(round_sphere(), 4.0, n=401)
    assert np.all(g.samples[g.nodes > math.pi] == 0.0)
    with pytest.raises(DomainError):
        extend_by_zero(round_sphere(), 3.0)
    with pytest.raises(ShapeError):
        uniform_distance(g, extend_by_zero(round_sphere(), 4.0, n=402))


def test_ik_window_on_sine():
    w = ik_window(limit_of(np.sin, math.pi), 2)
    assert w.a_k == pytest.approx(math.pi / 6, abs=1e-10)
    assert w.b_k == pytest.approx(5 * math.pi / 6, abs=1e-10)
    with pytest.raises(EmptyWindowError):
        ik_window(limit_of(lambda s: 0.5 * np.sin(s), math.pi), 2)
    with pytest.raises(DomainError):
        IkWindow(2, 1.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 200), st.integers(1, 200))
def test_ik_windows_nest(k, step):
    lim = limit_of(lambda s: np.sin(s) * (1 + 0.3 * np.sin(2 * s)), math.pi, 1025)
    small, big = ik_window(lim, k), ik_window(lim, k + step)
    assert big.a_k <= small.a_k and small.b_k <= big.b_k


def test_double_bump_window_is_disconnected():
    lim = limit_of(lambda s: np.abs(np.sin(2 * s)) * (1 - 0.9 * np.exp(-(s - 1.5) ** 2 * 40)),
                   math.pi)
    with pytest.raises(WindowDisconnectedError) as exc:
        ik_window(lim, 2)
    assert len(exc.value.components) == 2


def test_bv_against_quadrature_oracle():
    seq = SequenceSpec("scaled_sine", (1, 2, 3), math.pi, schedule={"c": list(BV_ORACLE)})
    window = IkWindow(2, math.pi / 6, 5 * math.pi / 6)
    rep = h1_convergence(seq, window)
    for bv, c in zip(rep.bv, BV_ORACLE):
        assert bv == pytest.approx(BV_ORACLE[c], rel=1e-6)
    assert rep.h_prime_l2[-1] == 0.0 and rep.f_prime_l2[-1] == 0.0
    assert rep.h_prime_l2[0] > rep.h_prime_l2[1] > 0.0
    assert all(rep.scalar_ok[1:])
    assert all(m > 0 for m in rep.margins)
    assert len(list(rep.rows())) == 3


def test_bv_bound_formula():
    assert bv_bound(2, math.pi / 6, 5 * math.pi / 6, math.pi) == \
        pytest.approx(8.8457737892535765627, rel=1e-14)


def test_h1_precondition():
    seq = SequenceSpec("scaled_sine", (1, 2, 3), math.pi, schedule={"c": [0.2, 0.5, 1.0]})
    with pytest.raises(PreconditionError):
        h1_convergence(seq, IkWindow(2, math.pi / 6, 5 * math.pi / 6))


def test_bump_function():
    u = TestFunction(1.0, 0.5)
    assert u.values(np.array([1.0]))[0] == 1.0
    assert u.values(np.array([0.5, 1.5, 2.0])).tolist() == [0.0, 0.0, 0.0]
    s = np.linspace(0.6, 1.4, 9)
    h = 1e-6
    fd = (u.values(s + h) - u.values(s - h)) / (2 * h)
    assert np.allclose(u.derivative(s), fd, atol=1e-6)
    with pytest.raises(DomainError):
        TestFunction(1.0, 0.0)


def test_default_battery_layout():
    tests = default_battery(1.0, 3.0)
    assert len(tests) == 27
    assert all(1.0 < t.support[0] and t.support[1] < 3.0 for t in tests)


def test_round_sphere_battery():
    lim = limit_of(np.sin, math.pi)
    out = distributional_scalar_test(lim.f_inf, default_battery(0.0, math.pi))
    assert all(o.passed and o.lhs > o.rhs for o in out)
    bumps = [TestFunction(c, r) for c, r in SPHERE_BUMPS]
    for o, (lhs, rhs) in zip(distributional_scalar_test(lim.f_inf, bumps),
                             SPHERE_BUMPS.values()):
        assert o.lhs == pytest.approx(lhs, rel=1e-8)
        assert o.rhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


def test_flat_cone_is_borderline():
    lim = limit_of(lambda s: s, 2.0)
    for o in distributional_scalar_test(lim.f_inf, default_battery(0.2, 1.8)):
        assert abs(o.lhs - o.rhs) <= 1e-6


def test_negative_scalar_detected():
    f = lambda s: np.sin(s) + 0.4 * np.sin(3 * s)  # noqa: E731
    lim = limit_of(f, math.pi)
    out = distributional_scalar_test(lim.f_inf, default_battery(0.0, math.pi))
    failed = [o for o in out if not o.passed]
    assert failed
    # scalar curvature of f at the failing centers, from the closed form
    for o in failed:
        c = o.test.center
        f0 = f(c)
        f1 = math.cos(c) + 1.2 * math.cos(3 * c)
        f2 = -math.sin(c) - 3.6 * math.sin(3 * c)
        assert -4 * f2 / f0 + 2 * (1 - f1 * f1) / f0 ** 2 < 0


def test_bump_leaving_the_support():
    lim = limit_of(np.sin, math.pi)
    with pytest.raises(PreconditionError):
        distributional_scalar_test(lim.f_inf, [TestFunction(0.05, 0.1)])


def test_cone_portrait_smooth_and_tent():
    smooth = tangent_cone_portrait(limit_of(np.sin, math.pi))
    assert smooth.fraction_euclidean == 1.0
    s = uniform_grid(0.0, 2.0, 4097)
    tent = custom_profile(expression="min(s, 2 - s)", domain_end=2.0, smooth=0.002)
    port = tangent_cone_portrait(LimitProfile.from_grid(GridFunction(0.0, 2.0, tent(s))))
    assert port.corners == (pytest.approx(1.0),)
    assert port.fraction_euclidean >= 0.95


def test_pole_ratios_round_sphere():
    lim = limit_of(np.sin, math.pi)
    for side in ("left", "right"):
        pairs = pole_volume_ratio(lim, side, sorted(POLE_RATIO, reverse=True))
        # the ratio divides a volume defect by r^5: round-off grows like r^-5
        for r, v in pairs:
            assert v == pytest.approx(POLE_RATIO[r], abs=1e-6)
        assert richardson_r2(pairs) == pytest.approx(0.2, abs=1e-6)
    assert pole_cap_check(lim)


def test_pole_ratio_flat_cap():
    lim = limit_of(lambda s: np.minimum(np.minimum(s, 1.0), 3.0 - s), 3.0)
    for _, v in pole_volume_ratio(lim, "left", [0.2, 0.1, 0.05, 0.025]):
        assert abs(v) <= 1e-10


def test_pole_ratio_errors():
    lim = limit_of(np.sin, math.pi)
    with pytest.raises(DomainError):
        pole_volume_ratio(lim, "left", [0.1, 0.2])
    with pytest.raises(DomainError):
        pole_volume_ratio(lim, "north", [0.1])
    with pytest.raises(DomainError):
        richardson_r2([(0.2, 1.0), (0.15, 1.0)])


def test_limit_endpoints_inside_domain():
    lim = limit_of(lambda s: np.clip(np.sin(s - 0.5), 0.0, None) * (s < 0.5 + math.pi), 4.0)
    assert lim.a_inf == pytest.approx(0.5, abs=1e-6)
    assert lim.b_inf == pytest.approx(0.5 + math.pi, abs=1e-6)

