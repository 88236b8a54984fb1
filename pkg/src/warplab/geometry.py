"""Warping functions and the pointwise/integral geometry of ``ds^2 + f(s)^2 g_{S^2}``.

Conventions
-----------
``s`` is arclength from the north pole, ``L`` the domain end (the south pole).
The diameter of the 3-sphere is exactly ``L``: every point is joined to both
poles by meridians, and no path between the poles is shorter than ``L``.
"""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import ConstructionError, DomainError, PoleProximityError, UnsupportedPointError
from .grid import GridFunction, differentiate, integrate, uniform_grid
from .tolerances import DEFAULT_TOLERANCES

__all__ = [
    "WarpingFunction",
    "RotSymManifold",
    "CriticalSphere",
    "Validation",
    "HypothesisVerdict",
    "evaluate",
    "derivative",
    "scalar_curvature",
    "h_criterion_residual",
    "mean_curvature",
    "volume",
    "critical_spheres",
    "sym_min_area",
    "monotonicity_marks",
    "validate_hypotheses",
    "scalar_from_derivatives",
    "residual_from_derivatives",
    "grid_table",
    "write_grid_csv",
]

FOUR_PI = 4.0 * math.pi
DEFAULT_GRID = 4096


class WarpingFunction:
    """Profile ``f`` on ``[0, L]``, either in closed form or sampled.

    Closed-form profiles carry vectorised callables for ``f``, ``f'`` and
    ``f''``.  Sampled profiles are interpolated with a monotone cubic (PCHIP)
    and differentiated with finite differences at the nodes.

    Do not call the constructor directly; use :meth:`closed_form` or
    :meth:`sampled`.
    """

    def __init__(self, domain_end, *, family=None, params=None, funcs=None,
                 grid=None, claims_smooth=False, node_derivatives=None):
        self.domain_end = float(domain_end)
        if not self.domain_end > 0:
            raise ConstructionError({"domain_end": f"must be positive, got {domain_end}"})
        self.family = family
        self.params = dict(params or {})
        self.claims_smooth = bool(claims_smooth)
        self._funcs = funcs
        self.grid = grid
        if grid is not None:
            self._interp = PchipInterpolator(grid.nodes, grid.samples, extrapolate=False)
            if node_derivatives is None:
                d1 = differentiate(grid.samples, grid.spacing, 1)
                d2 = differentiate(grid.samples, grid.spacing, 2)
            else:
                d1, d2 = (np.array(d, dtype=float) for d in node_derivatives)
                if d1.shape != grid.samples.shape or d2.shape != grid.samples.shape:
                    raise ConstructionError({"derivatives": "shape does not match the samples"})
            self._supplied = node_derivatives is not None
            self._node_d1 = d1
            self._node_d2 = d2
            self._d1 = CubicSpline(grid.nodes, d1)
            self._d2 = CubicSpline(grid.nodes, d2)

    @classmethod
    def closed_form(cls, family, params, domain_end, f, df, ddf, claims_smooth=True):
        return cls(domain_end, family=family, params=params, funcs=(f, df, ddf),
                   claims_smooth=claims_smooth)

    @classmethod
    def sampled(cls, samples, domain_end=None, *, family="samples", params=None,
                claims_smooth=False, derivatives=None):
        """Profile from equispaced samples on ``[0, domain_end]``.

        ``derivatives`` optionally supplies exact ``(f', f'')`` at the nodes,
        used instead of finite differences.
        """
        if isinstance(samples, GridFunction):
            grid = samples
            if domain_end is not None and not math.isclose(grid.hi, domain_end):
                raise ConstructionError({"domain_end": "does not match the grid"})
        else:
            if domain_end is None:
                raise ConstructionError({"domain_end": "required for raw samples"})
            grid = GridFunction(0.0, domain_end, samples)
        if grid.lo != 0.0:
            raise ConstructionError({"interval": "sampled profiles must start at s = 0"})
        return cls(grid.hi, family=family, params=params, grid=grid,
                   claims_smooth=claims_smooth, node_derivatives=derivatives)

    @property
    def representation(self):
        return "sampled" if self.grid is not None else "closed_form"

    @property
    def derivative_source(self):
        if self.grid is None:
            return "analytic"
        return "supplied" if self._supplied else "finite_difference"

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        L = self.domain_end
        # tolerate round-off at the ends of the interval
        slack = 1e-12 * L
        if np.any(s < -slack) or np.any(s > L + slack):
            raise DomainError(f"s outside [0, {L:.17g}]")
        return np.clip(s, 0.0, L)

    def __call__(self, s):
        s = self._check(s)
        if self.grid is None:
            out = self._funcs[0](s)
        else:
            out = self._interp(s)
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def derivative(self, s, order=1):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        s = self._check(s)
        if self.grid is None:
            out = self._funcs[order](s)
        else:
            if order == 2 and np.any((s <= 0.0) | (s >= self.domain_end)):
                raise UnsupportedPointError(
                    "second derivative of sampled data is not available at the poles")
            out = (self._d1 if order == 1 else self._d2)(s)
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def on_grid(self, n):
        """Values and first two derivatives at ``n`` equispaced nodes.

        For sampled profiles on their own grid the node values are returned
        as-is (no interpolation).
        """
        if self.grid is not None and (n is None or n == self.grid.n):
            s = self.grid.nodes
            return s, np.array(self.grid.samples), self._node_d1.copy(), self._node_d2.copy()
        s = uniform_grid(0.0, self.domain_end, n)
        if self.grid is None:
            f0, f1, f2 = (np.broadcast_to(np.asarray(fn(s), dtype=float), s.shape).copy()
                          for fn in self._funcs)
        else:
            f0 = self._interp(s)
            f1 = self._d1(s)
            f2 = self._d2(s)
        return s, f0, f1, f2

    def to_spec(self):
        """JSON-ready description (see :func:`warplab.families.from_spec`)."""
        if self.grid is None:
            return {"family": self.family, "params": self.params}
        if self._supplied:
            # regenerated from its family, which restores the exact derivatives
            return {"family": self.family, "params": self.params}
        spec = {"samples": self.grid.samples.tolist(), "domain_end": self.domain_end}
        if self.family not in (None, "samples"):
            spec["source"] = {"family": self.family, "params": self.params}
        return spec

    def same_metric(self, other):
        """True when both describe the identical profile (not merely close)."""
        if self is other:
            return True
        if self.domain_end != other.domain_end:
            return False
        if self.grid is None and other.grid is None:
            return (self.family is not None and self.family == other.family
                    and self.params == other.params)
        if self.grid is not None and other.grid is not None:
            return np.array_equal(self.grid.samples, other.grid.samples)
        return False

    def __repr__(self):
        if self.grid is None:
            return f"WarpingFunction({self.family}, {self.params}, L={self.domain_end:.6g})"
        return f"WarpingFunction(sampled n={self.grid.n}, L={self.domain_end:.6g})"


def evaluate(wf, s):
    return wf(s)


def derivative(wf, s, order=1):
    return wf.derivative(s, order)


def scalar_from_derivatives(f, df, ddf):
    """``-4 f''/f + 2 (1 - f'^2)/f^2``."""
    return -4.0 * ddf / f + 2.0 * (1.0 - df * df) / (f * f)


def residual_from_derivatives(f, df, ddf):
    """``(3/4) h^{-1/3} - h''`` with ``h = f^{3/2}``.

    ``h''`` is expanded by the chain rule,
    ``h'' = (3/4) f^{-1/2} f'^2 + (3/2) f^{1/2} f''``.
    """
    h = f ** 1.5
    hpp = 0.75 * df * df / np.sqrt(f) + 1.5 * np.sqrt(f) * ddf
    return 0.75 * h ** (-1.0 / 3.0) - hpp


@dataclass(frozen=True)
class Validation:
    endpoint_ok: bool
    positive_ok: bool
    smooth: bool
    f0: float
    fL: float
    df0: float
    dfL: float
    messages: tuple = ()

    def to_dict(self):
        return {
            "endpoint_ok": self.endpoint_ok,
            "positive_ok": self.positive_ok,
            "smooth": self.smooth,
            "f(0)": self.f0,
            "f(L)": self.fL,
            "f'(0)": self.df0,
            "f'(L)": self.dfL,
            "messages": list(self.messages),
        }


@dataclass(frozen=True)
class CriticalSphere:
    s: float
    area: float
    kind: str  # interior_min | interior_max | plateau
    lo: float = None  # extent of the feature on the grid
    hi: float = None

    def to_dict(self):
        return {"s": self.s, "area": self.area, "kind": self.kind}


class RotSymManifold:
    """A validated warped-product 3-sphere.

    Parameters
    ----------
    warping : WarpingFunction
    grid_resolution : int, optional
        Number of sample points.  Defaults to the profile's own grid for
        sampled data and :data:`DEFAULT_GRID` otherwise.
    tol : Tolerances, optional

    Raises
    ------
    ConstructionError
        If ``f`` does not vanish at the ends, is negative somewhere, or claims
        smoothness without ``f'(0) = 1, f'(L) = -1``.
    """

    def __init__(self, warping, grid_resolution=None, tol=DEFAULT_TOLERANCES):
        self.warping = warping
        self.tol = tol
        if grid_resolution is None:
            grid_resolution = warping.grid.n if warping.grid is not None else DEFAULT_GRID
        if grid_resolution < 7:
            raise ConstructionError({"grid_resolution": "need at least 7 points"})
        self.grid_resolution = int(grid_resolution)
        self.s, self.f, self.df, self.ddf = warping.on_grid(self.grid_resolution)
        self.validation = self._validate()
        self.diameter = warping.domain_end
        self._volume = None

    @property
    def domain_end(self):
        return self.warping.domain_end

    @property
    def spacing(self):
        return self.domain_end / (self.grid_resolution - 1)

    @property
    def pole_guard(self):
        return self.tol.pole_guard(self.domain_end)

    def _validate(self):
        tol = self.tol
        f, df = self.f, self.df
        problems = {}
        f0, fL = float(f[0]), float(f[-1])
        endpoint_ok = abs(f0) <= tol.endpoint and abs(fL) <= tol.endpoint
        if not endpoint_ok:
            problems["endpoints"] = f"f(0) = {f0:.6g}, f(L) = {fL:.6g}; both must vanish"
        if np.min(f) < -tol.endpoint:
            i = int(np.argmin(f))
            problems["sign"] = f"f({self.s[i]:.6g}) = {f[i]:.6g} < 0"
        interior = f[1:-1]
        # the same threshold that separates connected regions for distances
        positive_ok = bool(np.all(interior > tol.pole_guard(self.domain_end)))
        slope_tol = (tol.endpoint_slope if self.warping.derivative_source == "finite_difference"
                     else tol.endpoint)
        df0, dfL = float(df[0]), float(df[-1])
        smooth = abs(df0 - 1.0) <= slope_tol and abs(dfL + 1.0) <= slope_tol
        if self.warping.claims_smooth and not smooth:
            problems["smoothness"] = (f"claimed smooth but f'(0) = {df0:.6g}, "
                                      f"f'(L) = {dfL:.6g}")
        if problems:
            raise ConstructionError(problems)
        messages = []
        if not positive_ok:
            messages.append("f vanishes at an interior grid point")
        if not smooth:
            messages.append("endpoint slopes differ from +1/-1: conical poles")
        return Validation(endpoint_ok, positive_ok, smooth, f0, fL, df0, dfL, tuple(messages))

    # pointwise quantities

    def _point(self, s):
        L = self.domain_end
        if not 0.0 < s < L:
            raise DomainError(f"s = {s} is not in the open interval (0, {L:.17g})")
        fs = self.warping(s)
        if fs <= self.pole_guard:
            raise PoleProximityError(s, fs, self.pole_guard)
        return fs, self.warping.derivative(s, 1), self.warping.derivative(s, 2)

    def scalar_curvature(self, s):
        return float(scalar_from_derivatives(*self._point(s)))

    def h_criterion_residual(self, s):
        return float(residual_from_derivatives(*self._point(s)))

    def mean_curvature(self, s):
        fs, dfs, _ = self._point(s)
        return 2.0 * dfs / fs

    def guarded_mask(self):
        """Grid nodes strictly inside ``(0, L)`` and outside the pole guard."""
        mask = self.f > self.pole_guard
        mask[0] = mask[-1] = False
        return mask

    def scalar_profile(self):
        """Scalar curvature at every node; NaN at the poles and inside the guard."""
        out = np.full(self.s.shape, np.nan)
        m = self.guarded_mask()
        out[m] = scalar_from_derivatives(self.f[m], self.df[m], self.ddf[m])
        return out

    def residual_profile(self):
        out = np.full(self.s.shape, np.nan)
        m = self.guarded_mask()
        out[m] = residual_from_derivatives(self.f[m], self.df[m], self.ddf[m])
        return out

    def mean_curvature_profile(self):
        out = np.full(self.s.shape, np.nan)
        m = self.guarded_mask()
        out[m] = 2.0 * self.df[m] / self.f[m]
        return out

    # integral quantities

    def volume(self):
        if self._volume is None:
            self._volume = FOUR_PI * integrate(self.f ** 2, self.spacing)
        return self._volume

    def volume_between(self, a, b, n=2049):
        """``4 pi int_a^b f^2`` by Simpson on a dedicated grid."""
        s = uniform_grid(a, b, n)
        return FOUR_PI * integrate(self.warping(s) ** 2, (b - a) / (n - 1))

    def critical_spheres(self):
        return critical_spheres(self)

    def __repr__(self):
        return f"RotSymManifold({self.warping!r}, n={self.grid_resolution})"


def scalar_curvature(m, s):
    return m.scalar_curvature(s)


def h_criterion_residual(m, s):
    return m.h_criterion_residual(s)


def mean_curvature(m, s):
    return m.mean_curvature(s)


def volume(m):
    return m.volume()


# ---------------------------------------------------------------------------
# critical spheres and monotonicity marks


def _refine_root(m, lo, hi):
    g = lambda x: m.warping.derivative(x, 1)  # noqa: E731
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        return 0.5 * (lo + hi)
    return brentq(g, lo, hi, xtol=1e-10 * m.domain_end, rtol=4 * np.finfo(float).eps)


def _clean_crossing(d):
    """True if ``d`` is strictly one-signed on each side of a single change.

    Runs of an exactly flat (or noisy) derivative fail this test and are
    classified as plateaus.
    """
    nz = np.flatnonzero(d != 0.0)
    zeros = d.size - nz.size
    if zeros > 1 or nz.size < 2:
        return False
    sg = np.sign(d[nz])
    changes = np.count_nonzero(sg[1:] != sg[:-1])
    return changes == 1


def _features(m):
    """Critical features of ``f'`` on the interior grid.

    Returns a list of ``(lo, hi, s, kind)`` where ``[lo, hi]`` is the extent of
    the feature (a single point for transversal sign changes).
    """
    d = m.df
    idx = np.arange(1, d.size - 1)
    idx = idx[m.f[idx] > m.pole_guard]
    if idx.size == 0:
        return []
    first, last = int(idx[0]), int(idx[-1])
    small = np.abs(d) <= m.tol.crit

    def crossing(i0, i1, rising_left):
        s0 = _refine_root(m, m.s[i0], m.s[i1])
        return (s0, s0, s0, "interior_max" if rising_left else "interior_min")

    feats = []
    i = first
    while i <= last:
        if not small[i]:
            if i < last and not small[i + 1] and np.sign(d[i]) != np.sign(d[i + 1]):
                feats.append(crossing(i, i + 1, d[i] > 0))
            i += 1
            continue
        j = i
        while j < last and small[j + 1]:
            j += 1
        run = d[i:j + 1]
        left = d[i - 1] if i > first else 1.0
        right = d[j + 1] if j < last else -1.0
        if _clean_crossing(run):
            nz = np.flatnonzero(run != 0.0)
            sg = np.sign(run[nz])
            k = int(np.flatnonzero(sg[1:] != sg[:-1])[0])
            feats.append(crossing(i + nz[k], i + nz[k + 1], sg[k] > 0))
        elif j - i + 1 >= 3:
            k = i + int(np.argmin(m.f[i:j + 1]))
            feats.append((float(m.s[i]), float(m.s[j]), float(m.s[k]), "plateau"))
        elif np.sign(left) != np.sign(right):
            feats.append(crossing(max(i - 1, first), min(j + 1, last), left > 0))
        i = j + 1
    return feats


def critical_spheres(m):
    """Rotationally symmetric minimal spheres ``{s = const}``.

    A level sphere has mean curvature ``2 f'/f``, so it is minimal exactly
    where ``f' = 0``.  Sign changes of the grid derivative are refined by
    root finding on ``f'``; flat runs of ``|f'| <= tol.crit`` spanning at least
    three nodes are reported once, at their smallest-area node.
    """
    out = []
    for lo, hi, s0, kind in _features(m):
        fs = float(m.warping(s0))
        out.append(CriticalSphere(float(s0), FOUR_PI * fs * fs, kind, float(lo), float(hi)))
    if not out:
        # f has an interior maximum; fall back to the largest sample
        k = int(np.argmax(m.f))
        s0 = float(m.s[k])
        out.append(CriticalSphere(s0, FOUR_PI * float(m.f[k]) ** 2, "interior_max", s0, s0))
    out.sort(key=lambda c: c.s)
    return out


def sym_min_area(m):
    """Smallest area among symmetric minimal spheres.

    This is an upper bound for the true minimal-surface area ``MinA``; general
    (non-symmetric) minimal surfaces are not searched for.
    """
    return min(c.area for c in critical_spheres(m))


def monotonicity_marks(m):
    """``(A, B)``: end of the initial increase and start of the final decrease."""
    spheres = critical_spheres(m)
    a = min(c.lo for c in spheres)
    b = max(c.hi for c in spheres)
    return a, b


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisVerdict:
    diameter_ok: bool
    diameter: float
    D_cap: float
    scalar_ok: bool
    scalar_min: float
    scalar_argmin: float
    scalar_tol: float
    mina_ok: bool
    sym_min_area: float
    A_floor: float
    area_diameter_ok: bool
    lipschitz_ok: bool
    max_abs_slope: float
    inconsistent: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.diameter_ok and self.scalar_ok and self.mina_ok

    def to_dict(self):
        return {
            "passed": self.passed,
            "diameter": {"ok": self.diameter_ok, "value": self.diameter, "cap": self.D_cap},
            "scalar": {"ok": self.scalar_ok, "min": self.scalar_min,
                       "argmin_s": self.scalar_argmin, "tol": self.scalar_tol},
            "min_area": {"ok": self.mina_ok, "sym_min_area": self.sym_min_area,
                         "floor": self.A_floor,
                         "note": "symmetric-sphere candidate; upper bound for MinA"},
            "area_diameter_consistency": {"ok": self.area_diameter_ok,
                                          "A_floor/4pi": self.A_floor / FOUR_PI,
                                          "L^2": self.diameter ** 2},
            "lipschitz": {"ok": self.lipschitz_ok, "max_abs_slope": self.max_abs_slope},
            "inconsistent": self.inconsistent,
            "notes": list(self.notes),
        }


def validate_hypotheses(m, D_cap, A_floor, claimed_scalar_nonnegative=None):
    """Check diameter, scalar curvature and minimal-area hypotheses.

    Besides the three hypotheses this checks two of their consequences:
    ``A_floor / 4 pi <= L^2`` and ``max |f'| <= 1``.  A profile whose scalar
    curvature is nonnegative (measured, or asserted through
    ``claimed_scalar_nonnegative``) but whose slope exceeds one is flagged
    ``inconsistent``.
    """
    if not (D_cap > 0 and A_floor > 0):
        raise ValueError("D_cap and A_floor must be positive")
    tol = m.tol
    L = m.domain_end
    scal = m.scalar_profile()
    finite = np.isfinite(scal)
    k = int(np.nanargmin(scal))
    smin = float(scal[k])
    scale = float(np.nanmax(np.abs(scal[finite])))
    scalar_tol = tol.scalar_rel * (1.0 + scale)
    scalar_ok = smin >= -scalar_tol
    area = sym_min_area(m)
    interior = m.df[1:-1]
    max_slope = float(np.max(np.abs(interior)))
    lip_ok = max_slope <= 1.0 + tol.lip
    notes = []
    claimed = scalar_ok if claimed_scalar_nonnegative is None else claimed_scalar_nonnegative
    inconsistent = bool(claimed and not lip_ok)
    if inconsistent:
        notes.append(f"nonnegative scalar curvature forces |f'| <= 1, but max |f'| = "
                     f"{max_slope:.6g}")
    area_diam_ok = A_floor / FOUR_PI <= L * L
    if not area_diam_ok:
        notes.append("A_floor / 4pi exceeds L^2: no manifold with this diameter can "
                     "satisfy the area floor")
    return HypothesisVerdict(
        diameter_ok=L <= D_cap, diameter=L, D_cap=float(D_cap),
        scalar_ok=bool(scalar_ok), scalar_min=smin, scalar_argmin=float(m.s[k]),
        scalar_tol=scalar_tol,
        mina_ok=area >= A_floor, sym_min_area=area, A_floor=float(A_floor),
        area_diameter_ok=area_diam_ok, lipschitz_ok=lip_ok, max_abs_slope=max_slope,
        inconsistent=inconsistent, notes=notes,
    )


# ---------------------------------------------------------------------------
# export

CSV_COLUMNS = ("s", "f", "f'", "f''", "scalar", "mean_curvature")


def grid_table(m):
    return np.column_stack([m.s, m.f, m.df, m.ddf, m.scalar_profile(),
                            m.mean_curvature_profile()])


def write_grid_csv(m, stream=None):
    """Write the grid table as CSV (``%.17g``); returns the text if no stream."""
    own = stream is None
    if own:
        stream = io.StringIO()
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in grid_table(m):
        writer.writerow(["%.17g" % v for v in row])
    if own:
        return stream.getvalue()
    return None
