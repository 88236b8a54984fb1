"""Generators for warping functions.

Closed forms: the round sphere, the collapsing polynomial family, and a
warping-scaled sine.  Sampled: the long-spline spheres built from a Hawking
mass profile, and user-supplied samples or expressions.
"""

from dataclasses import dataclass
from functools import reduce
import ast
import math
import operator

import numpy as np
from scipy.integrate import fixed_quad, solve_ivp
from scipy.optimize import brentq
from scipy.ndimage import gaussian_filter1d

from .errors import ConstructionError
from .geometry import WarpingFunction
from .grid import GridFunction, uniform_grid

__all__ = [
    "round_sphere",
    "collapsing_family",
    "scaled_sine",
    "LakzianParams",
    "LakzianProfile",
    "lakzian_family",
    "lakzian_profile",
    "custom_profile",
    "from_spec",
    "build_family",
    "FAMILIES",
    "safe_eval",
]


def round_sphere(radius=1.0):
    """``f(s) = R sin(s/R)`` on ``[0, pi R]``; scalar curvature ``6/R^2``."""
    r = float(radius)
    if not r > 0:
        raise ConstructionError({"radius": f"must be positive, got {radius}"})
    return WarpingFunction.closed_form(
        "round_sphere", {"radius": r}, math.pi * r,
        lambda s: r * np.sin(s / r),
        lambda s: np.cos(s / r),
        lambda s: -np.sin(s / r) / r,
    )


def collapsing_family(j):
    """``f_j(s) = (1 - (1 - s)^{2j+2}) / (2j + 2)`` on ``[0, 2]``.

    ``f_j' = (1 - s)^{2j+1}`` is nonincreasing with values in ``[-1, 1]``, so
    the scalar curvature is nonnegative, while ``max f_j = 1/(2j+2) -> 0``.
    """
    j = int(j)
    if j < 1:
        raise ConstructionError({"j": f"must be >= 1, got {j}"})
    p = 2 * j + 2
    return WarpingFunction.closed_form(
        "collapsing", {"j": j}, 2.0,
        lambda s: (1.0 - (1.0 - s) ** p) / p,
        lambda s: (1.0 - s) ** (p - 1),
        lambda s: -(p - 1) * (1.0 - s) ** (p - 2),
    )


def scaled_sine(c):
    """``f(s) = c sin(s)`` on ``[0, pi]``.

    The poles are conical unless ``c = 1``; for ``c < 1`` the scalar curvature
    is positive and blows up at the tips.
    """
    c = float(c)
    if not c > 0:
        raise ConstructionError({"c": f"must be positive, got {c}"})
    return WarpingFunction.closed_form(
        "scaled_sine", {"c": c}, math.pi,
        lambda s: c * np.sin(s),
        lambda s: c * np.cos(s),
        lambda s: -c * np.sin(s),
        claims_smooth=(c == 1.0),
    )


# ---------------------------------------------------------------------------
# long thin spline glued to a round hemisphere


@dataclass(frozen=True)
class LakzianParams:
    delta: float
    L_spline: float = 1.0
    grid: int = 4096

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConstructionError({"delta": f"must lie in (0, 1), got {self.delta}"})
        if not self.L_spline > 0:
            raise ConstructionError({"L_spline": f"must be positive, got {self.L_spline}"})
        if self.grid < 64:
            raise ConstructionError({"grid": "need at least 64 samples"})

    @property
    def epsilon(self):
        """Root in (0, 1) of ``delta^3 sqrt((1 - eps^2)/eps^2) = L_spline``."""
        d3 = self.delta ** 3
        return d3 / math.hypot(self.L_spline, d3)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _smoothstep_integral(u):
    """``int_0^u smoothstep``."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 4 * (2.5 - 3.0 * u + u * u)


class LakzianProfile:
    """Hawking mass ``m(r)`` and its arclength chart.

    ``m(r) = r (1 - eps^2)/2`` below ``delta^3`` (a cone of length about
    ``L_spline``) and ``m(r) = r^3/2`` above ``delta`` (the round sphere).  In
    between, ``m'`` is the sum of two quintic-smoothstep ramps: one switching
    off the cone slope over ``[delta^3, delta^3 + w]`` and one switching on
    ``3 r^2 / 2`` over ``[delta - v, delta]``.  Both ramps have vanishing slope
    at their ends, so ``m`` is C^2 across both joins, and ``m' >= 0``.  ``w`` is
    fixed by requiring ``m(delta) = delta^3/2``.  When the cone is steep
    (``eps`` near 1) that ``w`` would not fit, so both ramps take at most half
    the blend, narrowed until they carry no more than the required mass, and a
    nonnegative bump ``A u^3 (1 - u)^3`` supplies the rest.

    With ``r = sin(rho)`` the metric is ``dr^2/(1 - 2m/r) + r^2 g``, so
    ``ds/dr = (1 - 2m/r)^{-1/2}`` and ``f = r``.  The scalar curvature is
    ``4 m'(r) / r^2``, which gives an oracle independent of ``f''``.
    """

    def __init__(self, params):
        self.params = params
        d = params.delta
        self.delta = d
        self.d3 = d ** 3
        self.eps = params.epsilon
        eps2 = self.eps ** 2
        self.c0 = 0.5 * (1.0 - eps2)
        budget = 0.5 * self.d3 * eps2
        v = d * eps2 / 3.0
        # an upper ramp that is too wide leaves no mass for the lower one
        while v > 1e-300 and self._upper_mass(v) >= budget:
            v *= 0.5
        w = 2.0 * (budget - self._upper_mass(v)) / self.c0
        self.bump = 0.0
        if self.d3 + w >= d - v:
            # the lower ramp alone is too slow: use half-width ramps and put
            # the missing mass in a C^2 bump u^3 (1 - u)^3 across the blend
            w = v = 0.5 * (d - self.d3)
            # narrower ramps carry less mass, leaving a nonnegative remainder
            while w > 1e-300 and 0.5 * self.c0 * w + self._upper_mass(v) > budget:
                w = v = 0.5 * w
            rest = budget - 0.5 * self.c0 * w - self._upper_mass(v)
            if not (rest >= 0 and w > 0):
                raise ConstructionError(
                    {"delta": f"mass blend does not fit in [delta^3, delta] for delta = {d}"})
            self.bump = 140.0 * rest / (d - self.d3)
        self.v = v
        self.r_v = d - v
        self.w = w
        self.i_beta = self._upper_mass(v)
        self._chart()

    def _upper_mass(self, v):
        """Mass added by the upper ramp of width ``v``."""
        lo = self.delta - v
        val, _ = fixed_quad(lambda t: 1.5 * t * t * _smoothstep((t - lo) / v), lo, self.delta, n=8)
        return float(val)

    # mass function

    def mass(self, r):
        r = np.asarray(r, dtype=float)
        d3, c0, w = self.d3, self.c0, self.w
        out = np.where(r <= d3, c0 * r, 0.0)
        mid = (r > d3) & (r < self.delta)
        u = (r - d3) / w
        ramp_a = c0 * d3 + c0 * w * (np.clip(u, 0, 1) - _smoothstep_integral(u))
        ramp_b = np.zeros_like(r)
        tail = mid & (r > self.r_v)
        if np.any(tail):
            ramp_b[tail] = [fixed_quad(
                lambda t: 1.5 * t * t * _smoothstep((t - self.r_v) / self.v),
                self.r_v, x, n=8)[0] for x in r[tail]]
        if self.bump:
            x = np.clip((r - d3) / (self.delta - d3), 0.0, 1.0)
            ramp_a = ramp_a + self.bump * (self.delta - d3) * x ** 4 * (
                0.25 - 0.6 * x + 0.5 * x * x - x ** 3 / 7.0)
        out = np.where(mid, ramp_a + ramp_b, out)
        out = np.where(r >= self.delta, 0.5 * r ** 3, out)
        return out if out.ndim else float(out)

    def mass_prime(self, r):
        r = np.asarray(r, dtype=float)
        alpha = np.where(r <= self.d3, self.c0,
                         self.c0 * (1.0 - _smoothstep((r - self.d3) / self.w)))
        beta = np.where(r >= self.delta, 1.5 * r * r,
                        1.5 * r * r * _smoothstep((r - self.r_v) / self.v))
        out = alpha + beta
        if self.bump:
            x = np.clip((r - self.d3) / (self.delta - self.d3), 0.0, 1.0)
            out = out + self.bump * (x * (1.0 - x)) ** 3
        return out if out.ndim else float(out)

    def z_prime(self, r):
        """``sqrt(2m / (r - 2m))``."""
        r = np.asarray(r, dtype=float)
        m2 = 2.0 * self.mass(r)
        gap = r - m2
        if np.any(gap <= 0):
            bad = float(np.atleast_1d(r)[np.argmin(np.atleast_1d(gap))])
            raise ConstructionError({"mass": f"2 m(r) >= r at r = {bad:.17g}"})
        return np.sqrt(m2 / gap)

    def scalar(self, r):
        return 4.0 * self.mass_prime(r) / np.asarray(r, dtype=float) ** 2

    # arclength chart

    def _slope(self, r):
        """``dr/ds = sqrt(1 - 2 m(r)/r)``."""
        return math.sqrt(max(1.0 - 2.0 * float(self.mass(r)) / r, 0.0))

    def _chart(self):
        d3, d = self.d3, self.delta
        self.s_d3 = d3 / self.eps
        # r(s) across the blend region; the slope stays >= eps > 0 there
        hit = lambda s, y: y[0] - d  # noqa: E731
        hit.terminal = True
        hit.direction = 1
        span = (self.s_d3, self.s_d3 + 10.0 * (d - d3) / self.eps)
        sol = solve_ivp(lambda s, y: [self._slope(y[0])], span, [d3], method="DOP853",
                        rtol=1e-12, atol=1e-15, dense_output=True, events=hit,
                        first_step=1e-3 * self.w)
        if sol.status != 1:
            raise ConstructionError({"chart": "arclength integration did not reach r = delta"})
        self._ode = sol.sol
        self.s_delta = float(sol.t_events[0][0])
        self.asin_delta = math.asin(d)
        self.s_half = self.s_delta + 0.5 * math.pi - self.asin_delta
        self.domain_end = self.s_half + 0.5 * math.pi
        # sanity check of the chart at the top of the blend
        if not abs(float(self._ode(self.s_delta)[0]) - d) < 1e-9:
            raise ConstructionError({"chart": "inconsistent arclength inversion"})

    @property
    def spline_length(self):
        """Arclength from the pole to the start of the round region."""
        return self.s_delta

    def radius_at(self, s):
        """``f(s) = r(s)`` in the arclength chart."""
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        cone = s <= self.s_d3
        mid = (s > self.s_d3) & (s < self.s_delta)
        top = (s >= self.s_delta) & (s <= self.s_half)
        south = s > self.s_half
        out[cone] = self.eps * s[cone]
        if np.any(mid):
            out[mid] = self._ode(s[mid])[0]
        out[top] = np.sin(self.asin_delta + s[top] - self.s_delta)
        out[south] = np.cos(s[south] - self.s_half)
        return out

    def slope_at(self, s):
        """``f'(s)``; ``sqrt(1 - 2m/r)`` on the spline side."""
        s = np.asarray(s, dtype=float)
        r = self.radius_at(s)
        out = np.sqrt(np.clip(1.0 - 2.0 * self.mass(r) / np.maximum(r, 1e-300), 0.0, None))
        out[s <= self.s_d3] = self.eps
        south = s > self.s_half
        out[south] = -np.sin(s[south] - self.s_half)
        return out

    def curvature_at(self, s):
        """``f''(s) = (m - r m') / r^2`` on the spline side."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        mid = (s > self.s_d3) & (s < self.s_delta)
        r = self.radius_at(s[mid])
        out[mid] = (self.mass(r) - r * self.mass_prime(r)) / (r * r)
        top = (s >= self.s_delta) & (s <= self.s_half)
        out[top] = -np.sin(self.asin_delta + s[top] - self.s_delta)
        south = s > self.s_half
        out[south] = -np.cos(s[south] - self.s_half)
        return out

    def scalar_at(self, s):
        """Scalar curvature from the mass function, ``4 m'(r) / r^2``."""
        s = np.asarray(s, dtype=float)
        r = self.radius_at(s)
        out = np.full_like(s, 6.0)
        north = s <= self.s_half
        out[north] = 4.0 * self.mass_prime(r[north]) / r[north] ** 2
        return out

    def check_mass(self, n=20001):
        """Sample-wise monotonicity of ``m`` and finiteness of ``z'`` on (0, 1)."""
        r = np.unique(np.concatenate([
            np.linspace(0.0, 1.0, n)[1:-1],
            np.linspace(self.d3, self.d3 + self.w, 257),
            np.linspace(self.r_v, self.delta, 257)]))
        m = self.mass(r)
        z = self.z_prime(r)
        # allow quadrature round-off between nearly coincident radii
        return bool(np.all(np.diff(m) >= -1e-12 * np.max(m)) and np.all(np.isfinite(z)))

    def warping(self):
        n = self.params.grid
        s = uniform_grid(0.0, self.domain_end, n)
        f = self.radius_at(s)
        f[0] = 0.0
        f[-1] = 0.0
        return WarpingFunction.sampled(
            GridFunction(0.0, self.domain_end, f), family="lakzian",
            params={"delta": self.params.delta, "L_spline": self.params.L_spline,
                    "grid": n},
            derivatives=(self.slope_at(s), self.curvature_at(s)))


def lakzian_profile(params):
    if not isinstance(params, LakzianParams):
        params = LakzianParams(**params)
    return LakzianProfile(params)


def lakzian_family(params):
    """Sampled warping function of a long-spline sphere."""
    return lakzian_profile(params).warping()


# ---------------------------------------------------------------------------
# user profiles

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "arcsin": np.arcsin, "arccos": np.arccos,
    "arctan": np.arctan, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "min": lambda *a: reduce(np.minimum, a), "max": lambda *a: reduce(np.maximum, a),
    "where": np.where,
}
# extra positional arguments to a ufunc would silently become its ``out``
_ARITY = {"min": (1, None), "max": (1, None), "where": (3, 3)}
_CONSTS = {"pi": math.pi, "e": math.e}


def safe_eval(expression, **variables):
    """Evaluate an arithmetic expression over numpy arrays.

    Only numbers, the named variables, ``pi``/``e``, arithmetic operators,
    comparisons and the functions in ``_FUNCS`` are accepted.
    """
    try:
        tree = ast.parse(expression, mode="eval")
    except SyntaxError as exc:
        raise ConstructionError({"expression": f"cannot parse {expression!r}: {exc.msg}"})

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConstructionError({"expression": f"unknown name {node.id!r}"})
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Compare) and len(node.ops) == 1:
            ops = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
                   ast.GtE: np.greater_equal}
            if type(node.ops[0]) in ops:
                return ops[type(node.ops[0])](ev(node.left), ev(node.comparators[0]))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            name = node.func.id
            lo, hi = _ARITY.get(name, (1, 1))
            n = len(node.args)
            if n < lo or (hi is not None and n > hi):
                raise ConstructionError({"expression": f"{name}() got {n} arguments"})
            return _FUNCS[name](*[ev(a) for a in node.args])
        raise ConstructionError({"expression": f"unsupported syntax {ast.dump(node)[:60]}"})

    return ev(tree)


def _odd_smooth(values, spacing, width):
    """Gaussian smoothing that keeps the endpoint zeros.

    The samples are extended by odd reflection about both ends before
    filtering, so a profile vanishing at the ends still does afterwards.
    """
    sigma = width / spacing
    pad = min(int(math.ceil(5 * sigma)) + 1, values.size - 1)
    left = -values[1:pad + 1][::-1]
    right = -values[-pad - 1:-1][::-1]
    ext = np.concatenate([left, values, right])
    out = gaussian_filter1d(ext, sigma, mode="nearest", truncate=5.0)
    return out[pad:pad + values.size]


def custom_profile(samples=None, domain_end=None, *, expression=None, grid=4097,
                   smooth=None, claims_smooth=False):
    """Warping function from samples or from an expression in ``s``.

    ``smooth`` is a Gaussian mollifier width (in units of ``s``) applied with
    odd reflection at the ends, e.g. to round off the corners of
    ``min(s, 2 - s)``.  Endpoint violations raise :class:`ConstructionError`.
    """
    if (samples is None) == (expression is None):
        raise ConstructionError({"profile": "give exactly one of samples or expression"})
    if domain_end is None or not float(domain_end) > 0:
        raise ConstructionError({"domain_end": "a positive domain_end is required"})
    L = float(domain_end)
    params = {}
    if expression is not None:
        s = uniform_grid(0.0, L, grid)
        values = np.broadcast_to(np.asarray(safe_eval(expression, s=s), dtype=float),
                                 s.shape).copy()
        params["expression"] = expression
    else:
        values = np.asarray(samples, dtype=float).copy()
        if values.ndim != 1 or values.size < 7:
            raise ConstructionError({"samples": "need a flat list of at least 7 samples"})
    if not np.all(np.isfinite(values)):
        raise ConstructionError({"samples": "non-finite values"})
    spacing = L / (values.size - 1)
    problems = {}
    if abs(values[0]) > 1e-6:
        problems["f(0)"] = f"{values[0]:.6g} != 0"
    if abs(values[-1]) > 1e-6:
        problems["f(L)"] = f"{values[-1]:.6g} != 0"
    if problems:
        raise ConstructionError(problems)
    if smooth:
        values = _odd_smooth(values, spacing, float(smooth))
        params["smooth"] = float(smooth)
    return WarpingFunction.sampled(GridFunction(0.0, L, values), family="custom",
                                   params=params, claims_smooth=claims_smooth)


# ---------------------------------------------------------------------------
# registry and spec files


def _lakzian_from_params(delta, L_spline=1.0, grid=4096):
    return lakzian_family(LakzianParams(float(delta), float(L_spline), int(grid)))


FAMILIES = {
    "round_sphere": round_sphere,
    "collapsing": collapsing_family,
    "scaled_sine": scaled_sine,
    "lakzian": _lakzian_from_params,
}


def build_family(name, params):
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise ConstructionError({"family": f"unknown family {name!r}; "
                                           f"known: {sorted(FAMILIES)}"}) from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConstructionError({"params": str(exc)}) from None


def from_spec(spec):
    """Warping function from a manifold specification mapping.

    Accepted forms::

        {"family": "round_sphere", "params": {"radius": 1.0}}
        {"samples": [...], "domain_end": 3.14159}
        {"expression": "min(s, 2 - s)", "domain_end": 2, "grid": 4097, "smooth": 0.01}
    """
    if not isinstance(spec, dict):
        raise ConstructionError({"spec": "must be a JSON object"})
    if "family" in spec:
        return build_family(spec["family"], dict(spec.get("params", {})))
    if "samples" in spec:
        return custom_profile(spec["samples"], spec.get("domain_end"),
                              smooth=spec.get("smooth"),
                              claims_smooth=bool(spec.get("claims_smooth", False)))
    if "expression" in spec:
        return custom_profile(expression=spec["expression"], domain_end=spec.get("domain_end"),
                              grid=int(spec.get("grid", 4097)), smooth=spec.get("smooth"),
                              claims_smooth=bool(spec.get("claims_smooth", False)))
    raise ConstructionError({"spec": "needs one of 'family', 'samples' or 'expression'"})
