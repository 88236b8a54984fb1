"""Uniform-grid sampled functions, finite differences and quadrature."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .errors import ShapeError

__all__ = [
    "GridFunction",
    "fd_weights",
    "differentiate",
    "integrate",
    "uniform_grid",
]


def uniform_grid(lo, hi, n):
    return np.linspace(float(lo), float(hi), int(n))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a scalar function at ``n`` equispaced nodes of ``[lo, hi]``."""

    lo: float
    hi: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if samples.ndim != 1 or samples.size < 2:
            raise ShapeError("a grid function needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ShapeError("grid samples must be finite")
        if not self.hi > self.lo:
            raise ShapeError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def n(self):
        return self.samples.size

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self):
        return uniform_grid(self.lo, self.hi, self.n)

    def same_grid(self, other):
        return (self.n == other.n and np.isclose(self.lo, other.lo, rtol=0, atol=1e-14)
                and np.isclose(self.hi, other.hi, rtol=1e-14, atol=1e-14))

    def derivative(self, order=1):
        """Finite-difference derivative samples on the same grid."""
        return GridFunction(self.lo, self.hi, differentiate(self.samples, self.spacing, order))

    def integral(self):
        return integrate(self.samples, self.spacing)

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "samples": self.samples.tolist()}

    @classmethod
    def from_callable(cls, func, lo, hi, n):
        s = uniform_grid(lo, hi, n)
        return cls(lo, hi, np.asarray(func(s), dtype=float))


@lru_cache(maxsize=None)
def fd_weights(offsets, order):
    """Finite-difference weights for the ``order``-th derivative at 0.

    ``offsets`` are stencil positions in units of the grid spacing.  Weights
    come from the Taylor (Vandermonde) system, which is exact for polynomials
    of degree ``len(offsets) - 1``.
    """
    x = np.asarray(offsets, dtype=float)
    n = x.size
    if order >= n:
        raise ValueError("stencil too small for the requested derivative")
    vander = np.vander(x, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    w = np.linalg.solve(vander, rhs)
    w.setflags(write=False)
    return w


_CENTRAL = (-2, -1, 0, 1, 2)


def differentiate(samples, spacing, order=1):
    """Derivative of equispaced samples.

    Fourth-order central differences on the interior; the two nodes nearest
    each end use one-sided six-point stencils, which are fourth order for both
    the first and second derivative.
    """
    y = np.asarray(samples, dtype=float)
    n = y.size
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if n < 7:
        # too short for the wide stencils
        out = np.gradient(y, spacing, edge_order=2)
        return out if order == 1 else np.gradient(out, spacing, edge_order=2)
    out = np.empty(n)
    w = fd_weights(_CENTRAL, order)
    out[2:-2] = (w[0] * y[:-4] + w[1] * y[1:-3] + w[2] * y[2:-2]
                 + w[3] * y[3:-1] + w[4] * y[4:])
    for i in (0, 1):
        offs = tuple(range(-i, 6 - i))
        wl = fd_weights(offs, order)
        out[i] = wl @ y[:6]
        # mirrored stencil at the right end
        wr = fd_weights(tuple(-o for o in offs), order)
        out[n - 1 - i] = wr @ y[n - 1 - np.arange(6)]
    return out / spacing**order


def integrate(samples, spacing):
    """Composite Simpson rule on equispaced samples."""
    return float(simpson(np.asarray(samples, dtype=float), dx=spacing))
