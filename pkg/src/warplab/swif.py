"""Upper bound on the intrinsic flat distance between two warped 3-spheres.

Both manifolds share the window ``W = [a_k, b_k] x S^2`` through the common
s-coordinate.  The bound is

    (2 h_bar + a) (Vol W1 + Vol W2 + Area dW1 + Area dW2) + Vol(M1 - W1) + Vol(M2 - W2)

with ``h = sqrt(lambda (D0 + lambda/4))``, ``h_bar = max(h, D0 sqrt(eps^2 + 2 eps))``
and ``a = arccos(1/(1 + eps)) D0/pi``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .distance import DEFAULT_LAMBDA_RESOLUTION, lambda_estimate
from .errors import PreconditionError
from .grid import uniform_grid

__all__ = [
    "SwifBoundReport",
    "WindowVolumes",
    "epsilon_of_window",
    "window_volumes",
    "swif_upper_bound",
    "rate_certificate",
    "bound_terms",
]


def epsilon_of_window(m1, m2, window, n=2049):
    """Smallest ``eps`` with both metrics within a factor ``(1 + eps)^2`` on the window."""
    s = uniform_grid(window.a_k, window.b_k, n)
    f1 = np.asarray(m1.warping(s), dtype=float)
    f2 = np.asarray(m2.warping(s), dtype=float)
    if np.min(f1) <= 0.0 or np.min(f2) <= 0.0:
        raise PreconditionError("a warping function vanishes inside the window")
    return float(max(np.max(f1 / f2), np.max(f2 / f1)) - 1.0)


@dataclass(frozen=True)
class WindowVolumes:
    """Window volume, boundary area and outside volume, with their a priori bounds."""

    vol_W: float
    area_bdry: float
    vol_excess: float
    k: int
    D: float

    def __iter__(self):
        return iter((self.vol_W, self.area_bdry, self.vol_excess))

    @property
    def excess_cap(self):
        return 16.0 * math.pi * self.D / self.k ** 2

    @property
    def volume_cap(self):
        return 4.0 * math.pi * self.D ** 3

    @property
    def area_cap(self):
        return 8.0 * math.pi * self.D ** 2

    @property
    def margins(self):
        return {"excess": self.excess_cap - self.vol_excess,
                "volume": self.volume_cap - self.vol_W,
                "area": self.area_cap - self.area_bdry}

    def to_dict(self):
        return {"vol_W": self.vol_W, "area_bdry": self.area_bdry,
                "vol_excess": self.vol_excess, "caps": {
                    "excess": self.excess_cap, "volume": self.volume_cap,
                    "area": self.area_cap}, "margins": self.margins}


def window_volumes(m, window, D):
    a, b = window.a_k, window.b_k
    if not (0.0 <= a < b <= m.domain_end):
        raise PreconditionError("window is not inside the domain")
    vol_w = m.volume_between(a, b)
    fa, fb = float(m.warping(a)), float(m.warping(b))
    area = 4.0 * math.pi * (fa * fa + fb * fb)
    excess = max(m.volume() - vol_w, 0.0)
    return WindowVolumes(vol_w, area, excess, int(window.k), float(D))


def bound_terms(lam, eps, D0):
    """``(h, h_bar, a)`` for a distortion ``lam`` and metric ratio ``eps``."""
    h = math.sqrt(lam * (D0 + 0.25 * lam))
    h_bar = max(h, D0 * math.sqrt(eps * eps + 2.0 * eps))
    a = math.acos(1.0 / (1.0 + eps)) * D0 / math.pi
    return h, h_bar, a


@dataclass(frozen=True)
class SwifBoundReport:
    k: int
    epsilon: float
    lambda_lower: float
    lambda_upper: float
    h: float
    h_bar: float
    a: float
    D0: float
    vol_W1: float
    vol_W2: float
    area_bdry_W1: float
    area_bdry_W2: float
    vol_excess_1: float
    vol_excess_2: float
    bound: float
    term_breakdown: dict
    lambda_mode: str = "certified"
    lambda_used: float = 0.0
    lambda_analytic: float = 0.0
    margins: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    lambda_argmax: dict = None

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def swif_upper_bound(m1, m2, window, D_cap, lambda_mode="certified", n_pairs=512,
                     resolution=DEFAULT_LAMBDA_RESOLUTION, workers=None):
    """Assemble the flat-distance upper bound over ``window``.

    ``lambda_mode="certified"`` uses the certified distortion bound (zero for
    identical metrics, otherwise ``(L1 + L2 + 8 pi)/(k - 1)``).
    ``"sampled"`` uses the sampled lower estimate and is not a valid bound.
    """
    if lambda_mode not in ("certified", "sampled"):
        raise PreconditionError("lambda_mode must be 'certified' or 'sampled'")
    k = int(window.k)
    D0 = max(m1.domain_end, m2.domain_end)
    if D0 > D_cap * (1.0 + 1e-12):
        raise PreconditionError(f"D0 = {D0:.17g} exceeds D_cap = {D_cap:.17g}")
    eps = epsilon_of_window(m1, m2, window)
    est = lambda_estimate(m1, m2, window, n_pairs=n_pairs, resolution=resolution,
                          workers=workers)
    upper = 0.0 if est.exact_zero else est.analytic_upper
    lam = upper if lambda_mode == "certified" else est.lower
    h, h_bar, a = bound_terms(lam, eps, D0)
    w1 = window_volumes(m1, window, D_cap)
    w2 = window_volumes(m2, window, D_cap)
    mass = w1.vol_W + w2.vol_W + w1.area_bdry + w2.area_bdry
    filling = 2.0 * h_bar * mass
    angle = a * mass
    bound = filling + angle + w1.vol_excess + w2.vol_excess
    margins = {f"first_{key}": val for key, val in w1.margins.items()}
    margins.update({f"second_{key}": val for key, val in w2.margins.items()})
    rate_h_bar = 2.0 * D0 / math.sqrt(k + 1)
    flags = {
        "epsilon_at_most_1_over_k": eps <= 1.0 / k,
        "h_within_sqrt_2_lambda_D0": h <= math.sqrt(2.0 * lam * D0) * (1 + 1e-12) + 1e-300,
        "lambda_lower_within_upper": est.lower <= est.analytic_upper,
        "h_bar_within_rate": h_bar <= rate_h_bar,
        "certified": lambda_mode == "certified",
    }
    return SwifBoundReport(
        k=k, epsilon=eps, lambda_lower=est.lower, lambda_upper=upper, h=h, h_bar=h_bar,
        a=a, D0=D0, vol_W1=w1.vol_W, vol_W2=w2.vol_W, area_bdry_W1=w1.area_bdry,
        area_bdry_W2=w2.area_bdry, vol_excess_1=w1.vol_excess, vol_excess_2=w2.vol_excess,
        bound=bound,
        term_breakdown={"filling": filling, "angle": angle, "excess_1": w1.vol_excess,
                        "excess_2": w2.vol_excess, "window_mass": mass,
                        "rate_h_bar": rate_h_bar},
        lambda_mode=lambda_mode, lambda_used=lam, lambda_analytic=est.analytic_upper,
        margins=margins, flags=flags,
        lambda_argmax=None if est.argmax is None else est.argmax.to_dict())


def rate_certificate(D, D0, k, i):
    """``(1/sqrt(k + i)) [(4 D0 + 2 D/sqrt(pi)) (8 pi D^3 + 16 pi D^2) + 8 pi D]``."""
    if not (D > 0 and D0 > 0):
        raise PreconditionError("D and D0 must be positive")
    if int(k) < 2 or int(i) < 0:
        raise PreconditionError("need k >= 2 and i >= 0")
    pi = math.pi
    core = (4.0 * D0 + 2.0 * D / math.sqrt(pi)) * (8.0 * pi * D ** 3 + 16.0 * pi * D ** 2)
    return (core + 8.0 * pi * D) / math.sqrt(int(k) + int(i))
