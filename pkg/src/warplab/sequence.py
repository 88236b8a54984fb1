"""Diagnostics for sequences of warping functions.

Members are extended by zero to a common interval ``[0, D]`` and sampled on a
shared grid.  The last member stands in for the limit once the tail has been
checked to be Cauchy in the sup norm.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import (ConstructionError, DomainError, EmptyWindowError, PreconditionError,
                     ShapeError, WindowDisconnectedError)
from .families import build_family, safe_eval
from .geometry import residual_from_derivatives
from .grid import GridFunction, integrate, uniform_grid
from .tolerances import DEFAULT_TOLERANCES

__all__ = [
    "SequenceSpec",
    "LimitProfile",
    "LimitVerdict",
    "IkWindow",
    "TestFunction",
    "ConvergenceReport",
    "TestOutcome",
    "ConePortrait",
    "extend_by_zero",
    "uniform_distance",
    "extract_limit",
    "ik_window",
    "h1_convergence",
    "bv_bound",
    "default_battery",
    "distributional_scalar_test",
    "tangent_cone_portrait",
    "pole_volume_ratio",
    "richardson_r2",
    "pole_cap_check",
]

DEFAULT_SEQUENCE_GRID = 4097


@dataclass(frozen=True)
class SequenceSpec:
    """A named family, a per-index parameter schedule and a common interval end.

    ``schedule`` maps parameter names to a list (one value per index) or to an
    expression in ``j``; ``params`` holds fixed parameters.
    """

    family: str
    indices: tuple
    D: float
    schedule: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    grid: int = DEFAULT_SEQUENCE_GRID

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "D", float(self.D))
        if len(idx) == 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConstructionError({"indices": "must be nonempty and strictly increasing"})
        if not self.D > 0:
            raise ConstructionError({"D": "must be positive"})
        for name, rule in self.schedule.items():
            if isinstance(rule, (list, tuple)) and len(rule) != len(idx):
                raise ConstructionError({f"schedule.{name}": "needs one value per index"})

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(family=d["family"], indices=tuple(d["indices"]), D=d["D"],
                       schedule=dict(d.get("schedule", {})), params=dict(d.get("params", {})),
                       grid=int(d.get("grid", DEFAULT_SEQUENCE_GRID)))
        except KeyError as exc:
            raise ConstructionError({"sequence": f"missing field {exc.args[0]!r}"}) from None

    def to_dict(self):
        return {"family": self.family, "indices": list(self.indices), "D": self.D,
                "schedule": self.schedule, "params": self.params, "grid": self.grid}

    def member_params(self, pos):
        j = self.indices[pos]
        out = dict(self.params)
        for name, rule in self.schedule.items():
            if isinstance(rule, (list, tuple)):
                out[name] = rule[pos]
            elif isinstance(rule, str):
                out[name] = float(safe_eval(rule, j=float(j)))
            else:
                out[name] = rule
        return out

    def members(self):
        return [build_family(self.family, self.member_params(p))
                for p in range(len(self.indices))]


@dataclass(frozen=True)
class LimitProfile:
    f_inf: GridFunction
    a_inf: float
    b_inf: float
    lipschitz_constant: float

    @classmethod
    def from_grid(cls, g, tol=DEFAULT_TOLERANCES):
        """Support endpoints and Lipschitz constant of a sampled profile."""
        f = g.samples
        thresh = tol.pos_rel * (g.hi - g.lo)
        pos = np.flatnonzero(f > thresh)
        if pos.size == 0:
            raise DomainError("profile is zero everywhere")
        s = g.nodes
        a = _edge_root(s, f, int(pos[0]), +1)
        b = _edge_root(s, f, int(pos[-1]), -1)
        lip = float(np.max(np.abs(np.diff(f))) / g.spacing)
        return cls(g, a, b, lip)

    @property
    def spacing(self):
        return self.f_inf.spacing

    def interpolant(self):
        return PchipInterpolator(self.f_inf.nodes, self.f_inf.samples, extrapolate=False)

    def to_dict(self):
        return {"a_inf": self.a_inf, "b_inf": self.b_inf,
                "lipschitz_constant": self.lipschitz_constant,
                "interval": [self.f_inf.lo, self.f_inf.hi], "n": self.f_inf.n}


def _edge_root(s, f, i, direction):
    """Zero of ``f`` next to its first (last) positive node ``i``.

    Linear extrapolation from the two nodes inward, clamped to the cell.
    """
    if direction > 0:
        if i == 0:
            return float(s[0])
        i2 = min(i + 1, s.size - 1)
        slope = (f[i2] - f[i]) / (s[i2] - s[i]) if i2 != i else 0.0
        root = s[i] - f[i] / slope if slope > 0 else s[i - 1]
        return float(min(max(root, s[i - 1]), s[i]))
    if i == s.size - 1:
        return float(s[-1])
    i2 = max(i - 1, 0)
    slope = (f[i] - f[i2]) / (s[i] - s[i2]) if i2 != i else 0.0
    root = s[i] - f[i] / slope if slope < 0 else s[i + 1]
    return float(min(max(root, s[i]), s[i + 1]))


@dataclass(frozen=True)
class LimitVerdict:
    """Outcome of limit extraction.

    ``status`` is ``"converged"``, ``"zero_current"`` or ``"non_convergent"``;
    ``profile`` is set only for ``"converged"``.
    """

    status: str
    profile: LimitProfile
    successive_distances: tuple
    sup_last: float
    tail_estimate: float
    messages: tuple = ()

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self):
        return {"status": self.status,
                "profile": None if self.profile is None else self.profile.to_dict(),
                "successive_distances": list(self.successive_distances),
                "sup_last": self.sup_last, "tail_estimate": self.tail_estimate,
                "messages": list(self.messages)}


@dataclass(frozen=True)
class IkWindow:
    k: int
    a_k: float
    b_k: float

    def __post_init__(self):
        if not self.b_k > self.a_k:
            raise DomainError(f"empty window [{self.a_k}, {self.b_k}]")

    @property
    def width(self):
        return self.b_k - self.a_k

    def to_dict(self):
        return {"k": self.k, "a_k": self.a_k, "b_k": self.b_k}


def extend_by_zero(wf, D, n=DEFAULT_SEQUENCE_GRID, tol=DEFAULT_TOLERANCES):
    """Samples of ``f`` on ``[0, D]``, zero beyond the domain end."""
    L = wf.domain_end
    if L > D * (1.0 + 1e-14):
        raise DomainError(f"domain end {L:.17g} exceeds D = {D:.17g}")
    end = float(wf(L))
    if abs(end) > tol.endpoint or abs(float(wf(0.0))) > tol.endpoint:
        raise ConstructionError({"endpoints": f"f does not vanish at the ends (f(L) = {end:.6g})"})
    s = uniform_grid(0.0, D, n)
    out = np.zeros(n)
    inside = s <= L
    out[inside] = wf(np.minimum(s[inside], L))
    return GridFunction(0.0, D, out)


def uniform_distance(g1, g2):
    if not g1.same_grid(g2):
        raise ShapeError("grid functions live on different grids")
    return float(np.max(np.abs(g1.samples - g2.samples)))


def extract_limit(seq, tol=DEFAULT_TOLERANCES):
    """Empirical limit of a sequence: its last member, if the tail is Cauchy.

    The tail counts as Cauchy when successive sup distances never more than
    double, the last is not larger than the first, and the last two are either
    both zero or strictly decreasing.  Assuming geometric
    decay at the last observed ratio ``r``, the remaining movement of the
    sequence is at most ``d_last r/(1 - r)``; when the last member's maximum
    does not exceed that, the limit may be identically zero and the verdict
    is ``"zero_current"``.
    """
    if len(seq.indices) < 3:
        raise PreconditionError("need at least 3 sequence members")
    grids = [extend_by_zero(wf, seq.D, seq.grid, tol) for wf in seq.members()]
    dists = tuple(uniform_distance(a, b) for a, b in zip(grids, grids[1:]))
    sup_last = float(np.max(np.abs(grids[-1].samples)))
    thresh = tol.pos_rel * seq.D
    messages = []
    cauchy = all(b <= 2.0 * a for a, b in zip(dists, dists[1:])) and dists[-1] <= dists[0]
    d_last, d_prev = dists[-1], dists[-2]
    if d_last == 0.0:
        tail = 0.0
    elif d_prev > 0.0 and d_last < d_prev:
        r = d_last / d_prev
        tail = d_last * r / (1.0 - r)
    else:
        tail = math.inf
    if not cauchy or math.isinf(tail):
        messages.append("successive sup distances do not decay; no limit extracted")
        return LimitVerdict("non_convergent", None, dists, sup_last, tail, tuple(messages))
    if sup_last - tail <= thresh:
        messages.append("maxima collapse to zero: the sequence degenerates to the zero current")
        return LimitVerdict("zero_current", None, dists, sup_last, tail, tuple(messages))
    prof = LimitProfile.from_grid(grids[-1], tol)
    if prof.lipschitz_constant > 1.0 + tol.lip:
        messages.append(f"limit Lipschitz constant {prof.lipschitz_constant:.6g} exceeds 1")
    return LimitVerdict("converged", prof, dists, sup_last, tail, tuple(messages))


def ik_window(lim, k):
    """Connected superlevel set ``{f_inf >= 1/k}`` with refined endpoints."""
    k = int(k)
    if k < 1:
        raise DomainError("k must be a positive integer")
    level = 1.0 / k
    f = lim.f_inf.samples
    s = lim.f_inf.nodes
    above = f >= level
    if level >= f.max():
        raise EmptyWindowError(f"1/k = {level:.6g} is not below max f_inf = {f.max():.6g}")
    edges = np.diff(above.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1))
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        ends.append(f.size - 1)
    if len(starts) > 1:
        comps = [(float(s[i]), float(s[j])) for i, j in zip(starts, ends)]
        raise WindowDisconnectedError(k, comps)
    i, j = starts[0], ends[0]
    interp = lim.interpolant()
    g = lambda x: float(interp(x)) - level  # noqa: E731
    a = s[i] if i == 0 or g(s[i - 1]) == 0.0 else brentq(g, s[i - 1], s[i], xtol=1e-14)
    b = s[j] if j == f.size - 1 or g(s[j + 1]) == 0.0 else brentq(g, s[j], s[j + 1], xtol=1e-14)
    return IkWindow(k, float(a), float(b))


def bv_bound(k, a_k, b_k, D):
    """``(3/2)((2/3) k^{-3/2})^{-1/3} (b_k - a_k) + 3 (D/2)^{1/2}``."""
    return (1.5 * ((2.0 / 3.0) * (1.0 / k) ** 1.5) ** (-1.0 / 3.0) * (b_k - a_k)
            + 3.0 * math.sqrt(D / 2.0))


@dataclass(frozen=True)
class ConvergenceReport:
    window: IkWindow
    indices: tuple
    h_prime_l2: tuple
    f_prime_l2: tuple
    bv: tuple
    bv_bound: float
    scalar_ok: tuple
    D: float

    @property
    def margins(self):
        return tuple(self.bv_bound - b for b in self.bv)

    def to_dict(self):
        return {"window": self.window.to_dict(), "indices": list(self.indices),
                "h_prime_l2": list(self.h_prime_l2), "f_prime_l2": list(self.f_prime_l2),
                "bv": list(self.bv), "bv_bound": self.bv_bound,
                "bv_margins": list(self.margins), "scalar_ok": list(self.scalar_ok),
                "D": self.D}

    def rows(self):
        for j, hl, fl, b, ok in zip(self.indices, self.h_prime_l2, self.f_prime_l2,
                                    self.bv, self.scalar_ok):
            yield {"index": j, "h_prime_l2": hl, "f_prime_l2": fl, "bv": b,
                   "bv_margin": self.bv_bound - b, "scalar_ok": ok}


def _window_derivatives(wf, s):
    f = np.asarray(wf(s), dtype=float)
    d1 = np.asarray(wf.derivative(s, 1), dtype=float)
    d2 = np.asarray(wf.derivative(s, 2), dtype=float)
    return f, d1, d2


def h1_convergence(seq, window, n=2049, tol=DEFAULT_TOLERANCES):
    """``L^2`` distances of ``h_j'`` and ``f_j'`` to the last member, and BV of ``h_j'``.

    ``h = f^{3/2}``; the BV seminorm of ``h'`` on the window is ``int |h''|``.
    """
    a, b, k = window.a_k, window.b_k, window.k
    s = uniform_grid(a, b, n)
    spacing = (b - a) / (n - 1)
    floor = 1.0 / (2 * k)
    data = []
    for j, wf in zip(seq.indices, seq.members()):
        if b > wf.domain_end:
            raise PreconditionError(f"member {j}: window extends past its domain")
        f, d1, d2 = _window_derivatives(wf, s)
        if np.min(f) < floor:
            raise PreconditionError(
                f"member {j}: min f = {np.min(f):.6g} on the window is below 1/(2k) = {floor:.6g}")
        hp = 1.5 * np.sqrt(f) * d1
        hpp = 0.75 * d1 * d1 / np.sqrt(f) + 1.5 * np.sqrt(f) * d2
        ok = bool(np.all(residual_from_derivatives(f, d1, d2) >= -tol.sign))
        data.append((hp, d1, integrate(np.abs(hpp), spacing), ok))
    hp_last, fp_last = data[-1][0], data[-1][1]
    h_l2 = tuple(math.sqrt(max(integrate((d[0] - hp_last) ** 2, spacing), 0.0)) for d in data)
    f_l2 = tuple(math.sqrt(max(integrate((d[1] - fp_last) ** 2, spacing), 0.0)) for d in data)
    return ConvergenceReport(window, seq.indices, h_l2, f_l2, tuple(d[2] for d in data),
                             bv_bound(k, a, b, seq.D), tuple(d[3] for d in data), seq.D)


# ---------------------------------------------------------------------------
# distributional scalar curvature


@dataclass(frozen=True)
class TestFunction:
    """Bump ``exp(1 - 1/(1 - t^2))``, ``t = (s - center)/radius``; peak value 1."""

    __test__ = False  # not a pytest class

    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("bump radius must be positive")

    @property
    def support(self):
        return self.center - self.radius, self.center + self.radius

    def _t(self, s):
        return (np.asarray(s, dtype=float) - self.center) / self.radius

    def values(self, s):
        t = self._t(s)
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        ti = t[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
        return out

    def derivative(self, s):
        t = self._t(s)
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        ti = t[inside]
        q = 1.0 - ti * ti
        out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * ti / (q * q)) / self.radius
        return out

    def to_dict(self):
        return {"center": self.center, "radius": self.radius}


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    test: TestFunction
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self):
        return {**self.test.to_dict(), "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.lhs - self.rhs, "passed": self.passed}


RADIUS_FRACTIONS = (0.025, 0.05, 0.09)
_BUMP_NODES = 2049


def default_battery(a, b):
    """9 centers by 3 radii inside ``(a, b)``."""
    w = b - a
    return [TestFunction(a + (i + 1) * w / 10.0, frac * w)
            for i in range(9) for frac in RADIUS_FRACTIONS]


def distributional_scalar_test(profile, tests, tol=DEFAULT_TOLERANCES, H=0.0):
    """Weak form of nonnegative scalar curvature against each bump.

    ``lhs = int (1 + f'^2) u`` and ``rhs = -2 int f f' u'``; a test passes when
    ``lhs >= rhs - 1e-6 (1 + |lhs|)``.  ``H`` is carried into the outcome
    only for reporting; the inequality tested is always the ``H = 0`` one.
    """
    del H
    s = profile.nodes
    f = profile.samples
    fp = profile.derivative(1).samples
    f_of = CubicSpline(s, f)
    fp_of = CubicSpline(s, fp)
    thresh = tol.pos_rel * (profile.hi - profile.lo)
    out = []
    for u in tests:
        lo, hi = u.support
        if lo < profile.lo or hi > profile.hi:
            raise PreconditionError(f"bump at {u.center:.6g} leaves the profile interval")
        inside = (s >= lo) & (s <= hi)
        if np.any(f[inside] <= thresh):
            raise PreconditionError(f"bump at {u.center:.6g} meets a zero of the profile")
        # quadrature on a fine grid across the support, so narrow bumps are
        # resolved independently of the profile spacing
        x = uniform_grid(lo, hi, _BUMP_NODES)
        h = (hi - lo) / (_BUMP_NODES - 1)
        fx, fpx = f_of(x), fp_of(x)
        lhs = integrate((1.0 + fpx * fpx) * u.values(x), h)
        rhs = -2.0 * integrate(fx * fpx * u.derivative(x), h)
        out.append(TestOutcome(u, lhs, rhs, bool(lhs >= rhs - tol.dist_rel * (1.0 + abs(lhs)))))
    return out


# ---------------------------------------------------------------------------
# tangent cones and pole volumes


@dataclass(frozen=True)
class ConePortrait:
    s: tuple
    kinds: tuple
    gaps: tuple

    @property
    def fraction_euclidean(self):
        return sum(k == "euclidean" for k in self.kinds) / len(self.kinds)

    @property
    def corners(self):
        return tuple(x for x, k in zip(self.s, self.kinds) if k == "corner")

    def to_dict(self):
        return {"fraction_euclidean": self.fraction_euclidean, "corners": list(self.corners),
                "points": [{"s": x, "kind": k, "gaps": list(g)}
                           for x, k, g in zip(self.s, self.kinds, self.gaps)]}


def tangent_cone_portrait(lim, n_points=199, tol=DEFAULT_TOLERANCES):
    """Classify interior points by one-sided difference quotients.

    At scales ``h, h/2, h/4`` with ``h = 64`` grid spacings (capped at half the
    distance to the support ends), the gap between right and left quotients
    is computed.  A point is ``euclidean`` when the finest gap is within
    ``tol.cone``, a ``corner`` when every gap exceeds it and the finest is at
    least half the coarsest, and ``unresolved`` otherwise.
    """
    a, b = lim.a_inf, lim.b_inf
    interp = lim.interpolant()
    pts = a + (np.arange(n_points) + 1) * (b - a) / (n_points + 1)
    kinds, gaps = [], []
    for x in pts:
        h = min(64.0 * lim.spacing, 0.5 * (x - a), 0.5 * (b - x))
        fx = float(interp(x))
        g = []
        for hh in (h, h / 2, h / 4):
            right = (float(interp(x + hh)) - fx) / hh
            left = (fx - float(interp(x - hh))) / hh
            g.append(abs(right - left))
        if g[2] <= tol.cone:
            kind = "euclidean"
        elif min(g) >= tol.cone and g[2] >= 0.5 * g[0]:
            kind = "corner"
        else:
            kind = "unresolved"
        kinds.append(kind)
        gaps.append(tuple(g))
    return ConePortrait(tuple(float(x) for x in pts), tuple(kinds), tuple(gaps))


def pole_volume_ratio(lim, pole, radii):
    """``(4 pi r^3/3 - Vol(B(pole, r))) / (4 pi r^5/3)`` for each radius.

    The ball volume is ``4 pi int f^2`` over ``[a, a + r]`` (left pole) or
    ``[b - r, b]`` (right pole), integrating a cubic spline of ``f^2``.
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise DomainError("radii must be positive")
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise DomainError("radii must be strictly decreasing")
    a, b = lim.a_inf, lim.b_inf
    if max(radii) >= 0.5 * (b - a):
        raise DomainError("radius must be below half the support length")
    spline = CubicSpline(lim.f_inf.nodes, lim.f_inf.samples ** 2)
    out = []
    for r in radii:
        if pole == "left":
            vol = 4.0 * math.pi * float(spline.integrate(a, a + r))
        elif pole == "right":
            vol = 4.0 * math.pi * float(spline.integrate(b - r, b))
        else:
            raise DomainError("pole must be 'left' or 'right'")
        ball = 4.0 * math.pi * r ** 3 / 3.0
        out.append((r, (ball - vol) / (4.0 * math.pi * r ** 5 / 3.0)))
    return out


def richardson_r2(pairs):
    """Extrapolate ratios at halving radii, assuming an error in powers of ``r^2``.

    Repeated ``(4 R(r/2) - R(r))/3`` then ``(16 R(r/2) - R(r))/15`` tableau.
    """
    vals = [v for _, v in pairs]
    for i in range(len(pairs) - 1):
        if not math.isclose(pairs[i + 1][0], 0.5 * pairs[i][0], rel_tol=1e-12):
            raise DomainError("Richardson extrapolation needs radii halving at each step")
    factor = 4.0
    while len(vals) > 1:
        vals = [(factor * fine - coarse) / (factor - 1.0) for coarse, fine in zip(vals, vals[1:])]
        factor *= 4.0
    return vals[0]


def pole_cap_check(lim, fraction=0.05):
    """``f_inf(s) <= s - a`` near the left pole and ``<= b - s`` near the right.

    Checked on the first and last ``fraction`` of the support, up to one grid
    spacing of slack for the endpoint estimate.
    """
    a, b = lim.a_inf, lim.b_inf
    s = lim.f_inf.nodes
    f = lim.f_inf.samples
    w = fraction * (b - a)
    slack = lim.spacing * 1e-6 + 1e-12
    left = (s >= a) & (s <= a + w)
    right = (s >= b - w) & (s <= b)
    return bool(np.all(f[left] <= s[left] - a + slack) and np.all(f[right] <= b - s[right] + slack))
