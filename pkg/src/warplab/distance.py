"""Geodesic distances on warped-product 3-spheres by graph search.

Any two points ``(s_p, theta_p)``, ``(s_q, theta_q)`` lie on a totally geodesic
surface of revolution ``ds^2 + f(s)^2 d alpha^2`` through both, and a
minimising geodesic between them stays in the sector ``alpha in [0, dtheta]``
with ``dtheta`` the angle between ``theta_p`` and ``theta_q``.  That sector is
meshed on a uniform ``(s, alpha)`` lattice with a 16-neighbour stencil; each
pole is a single vertex.  Edge lengths use the metric at the edge midpoint.

Graph paths are genuine curves, so mesh distances overestimate the true
distance by at most the stencil anisotropy, which :func:`mesh_error_bound`
evaluates along the computed path.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.stats import qmc

from .errors import DisconnectedRegionError, DomainError, PreconditionError

__all__ = [
    "SurfacePoint",
    "DistanceQuery",
    "DistortionSample",
    "LambdaEstimate",
    "PathResult",
    "SectorMesh",
    "geodesic_distance",
    "geodesic_path",
    "mesh_error_bound",
    "richardson",
    "distances_from",
    "diameter_check",
    "lambda_estimate",
    "lambda_analytic_upper",
    "DEFAULT_RESOLUTION",
    "DEFAULT_LAMBDA_RESOLUTION",
]

DEFAULT_RESOLUTION = 512
DEFAULT_LAMBDA_RESOLUTION = 256
MIN_RESOLUTION = 64

# one direction of each undirected stencil edge, in (row, column) steps
_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (1, -2), (2, 1), (2, -1))
# stencil directions in the first quadrant, (rows, columns)
_FAN = ((1, 0), (2, 1), (1, 1), (1, 2), (0, 1))


@dataclass(frozen=True)
class SurfacePoint:
    """A point ``(s, theta)``; ``theta`` on the unit sphere as (polar, azimuth) radians."""

    s: float
    polar: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        if not (math.isfinite(self.polar) and math.isfinite(self.azimuth)):
            raise DomainError("angles must be finite")
        if not 0.0 <= self.polar <= math.pi:
            raise DomainError(f"polar angle {self.polar} outside [0, pi]")

    @classmethod
    def from_degrees(cls, s, azimuth, elevation):
        """``elevation`` is latitude in degrees (90 = north)."""
        return cls(s, math.radians(90.0 - float(elevation)), math.radians(float(azimuth)))

    @classmethod
    def from_vector(cls, s, v):
        v = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(v))
        if not n > 0:
            raise DomainError("direction vector must be nonzero")
        x, y, z = v / n
        return cls(s, math.acos(max(-1.0, min(1.0, z))), math.atan2(y, x))

    @property
    def direction(self):
        sp = math.sin(self.polar)
        return np.array([sp * math.cos(self.azimuth), sp * math.sin(self.azimuth),
                         math.cos(self.polar)])

    def angle_to(self, other):
        """Angle in ``[0, pi]`` between the two sphere directions."""
        u, v = self.direction, other.direction
        return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(u @ v))


@dataclass(frozen=True)
class DistanceQuery:
    p: SurfacePoint
    q: SurfacePoint
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if int(self.resolution) < MIN_RESOLUTION:
            raise DomainError(f"resolution must be >= {MIN_RESOLUTION}")
        object.__setattr__(self, "resolution", int(self.resolution))


@dataclass(frozen=True)
class DistortionSample:
    """One pair ``x = (s_x, 0)``, ``y = (s_y, dtheta)`` and its distances."""

    s_x: float
    s_y: float
    dtheta: float
    d_in_first: float
    d_in_second: float

    @property
    def gap(self):
        return abs(self.d_in_first - self.d_in_second)

    def to_dict(self):
        return {"s_x": self.s_x, "s_y": self.s_y, "dtheta": self.dtheta,
                "d_in_first": self.d_in_first, "d_in_second": self.d_in_second,
                "gap": self.gap}


@dataclass(frozen=True)
class LambdaEstimate:
    """Sampled lower estimate and certified upper bound for the distortion.

    Unpacks as ``lower, analytic_upper``.
    """

    lower: float
    analytic_upper: float
    argmax: DistortionSample
    n_pairs: int
    resolution: int
    exact_zero: bool = False

    def __iter__(self):
        return iter((self.lower, self.analytic_upper))

    @property
    def consistent(self):
        return self.lower <= self.analytic_upper

    def to_dict(self):
        return {"lower": self.lower, "analytic_upper": self.analytic_upper,
                "argmax": None if self.argmax is None else self.argmax.to_dict(),
                "n_pairs": self.n_pairs, "resolution": self.resolution,
                "exact_zero": self.exact_zero, "consistent": self.consistent,
                "note": "lower is a sampled estimate of a supremum; "
                        "analytic_upper is the certified bound (L1 + L2 + 8 pi)/(k - 1)"}


@dataclass(frozen=True)
class PathResult:
    length: float
    error_bound: float
    n_edges: int


class SectorMesh:
    """Lattice on ``[0, L] x [0, span]`` with single pole vertices.

    ``resolution`` is the number of s-intervals.  The angular step is chosen
    so the widest row has cells of aspect ratio about one, with at most
    ``resolution`` angular intervals.
    """

    def __init__(self, m, span, resolution):
        if resolution < MIN_RESOLUTION:
            raise DomainError(f"resolution must be >= {MIN_RESOLUTION}")
        self.m = m
        self.L = m.domain_end
        self.span = float(span)
        nr = int(resolution)
        self.ds = self.L / nr
        self.s = np.linspace(0.0, self.L, nr + 1)
        f_rows = np.asarray(m.warping(self.s), dtype=float)
        f_max = float(np.max(f_rows))
        na = int(min(resolution, max(4, math.ceil(f_max * self.span / self.ds))))
        self.na = na + 1
        self.dalpha = self.span / na
        self.alpha = np.linspace(0.0, self.span, self.na)
        self.f_rows = f_rows
        self.n_inner = (nr - 1) * self.na
        self.north = self.n_inner
        self.south = self.n_inner + 1
        self.n_base = self.n_inner + 2
        self._build()

    def node(self, i, j):
        """Vertex index of lattice node ``(i, j)``; poles for rows 0 and last."""
        i = np.asarray(i)
        j = np.asarray(j)
        last = self.s.size - 1
        out = (i - 1) * self.na + j
        out = np.where(i == 0, self.north, out)
        return np.where(i == last, self.south, out)

    def _edge_len(self, s0, s1, da):
        fm = np.asarray(self.m.warping(0.5 * (s0 + s1)), dtype=float)
        return np.hypot(s1 - s0, fm * da)

    def _build(self):
        last = self.s.size - 1
        rows, cols, lens = [], [], []
        ii, jj = np.meshgrid(np.arange(1, last), np.arange(self.na), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        for di, dj in _OFFSETS:
            i2, j2 = ii + di, jj + dj
            ok = (j2 >= 0) & (j2 < self.na) & (i2 < last)
            a, b = ii[ok], jj[ok]
            rows.append(self.node(a, b))
            cols.append(self.node(a + di, b + dj))
            lens.append(self._edge_len(self.s[a], self.s[a + di], dj * self.dalpha))
        # pole fans: radial edges to the first two rows at each end
        for pole, near in ((self.north, (1, 2)), (self.south, (last - 1, last - 2))):
            s_pole = 0.0 if pole == self.north else self.L
            for i in near:
                if 0 < i < last:
                    j = np.arange(self.na)
                    rows.append(np.full(self.na, pole))
                    cols.append(self.node(np.full(self.na, i), j))
                    lens.append(np.full(self.na, abs(self.s[i] - s_pole)))
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._lens = np.concatenate(lens)
        # vertex coordinates, used for the path error bound
        s_of = np.repeat(self.s[1:-1], self.na)
        a_of = np.tile(self.alpha, last - 1)
        self._coords = np.column_stack([np.concatenate([s_of, [0.0, self.L]]),
                                        np.concatenate([a_of, [0.0, 0.0]])])

    def _attach(self, s, alpha, vid):
        """Edges from a new vertex at ``(s, alpha)`` to nearby lattice nodes."""
        last = self.s.size - 1
        if s <= 0.0:
            return [], [], [], self.north
        if s >= self.L:
            return [], [], [], self.south
        i0 = min(int(s // self.ds), last - 1)
        j0 = min(int(round(alpha / self.dalpha)), self.na - 1)
        rs, cs, ls = [], [], []
        seen = set()
        for i in range(i0 - 1, i0 + 3):
            if i < 0 or i > last:
                continue
            for j in range(j0 - 2, j0 + 3):
                if j < 0 or j >= self.na:
                    continue
                v = int(self.node(i, j))
                if v in seen:
                    continue
                seen.add(v)
                da = 0.0 if i in (0, last) else self.alpha[j] - alpha
                rs.append(vid)
                cs.append(v)
                ls.append(float(self._edge_len(s, self.s[i], da)))
        return rs, cs, ls, vid

    def graph(self, points):
        """Sparse graph with extra vertices for ``points``; returns (graph, ids, coords)."""
        rows, cols, lens = [self._rows], [self._cols], [self._lens]
        ids = []
        coords = [self._coords]
        nxt = self.n_base
        for s, alpha in points:
            if not (0.0 <= s <= self.L and -1e-12 <= alpha <= self.span + 1e-12):
                raise DomainError(f"point ({s}, {alpha}) outside the mesh")
            rs, cs, ls, vid = self._attach(float(s), float(alpha), nxt)
            if vid == nxt:
                rows.append(np.asarray(rs))
                cols.append(np.asarray(cs))
                lens.append(np.asarray(ls))
                coords.append(np.array([[s, alpha]]))
                nxt += 1
            ids.append(vid)
        n = nxt
        g = coo_matrix((np.concatenate(lens), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n)).tocsr()
        return g, ids, np.concatenate(coords)

    def stencil_gaps(self, f_mid):
        """Angles of the stencil fan in the local metric, for row widths ``f_mid``."""
        rho = np.asarray(f_mid, dtype=float) * self.dalpha / self.ds
        return np.stack([np.arctan2(b * rho, a) for a, b in _FAN], axis=-1)


def _check_connected(m, s_lo, s_hi):
    """Raise if ``f`` vanishes strictly between two s-values."""
    lo, hi = min(s_lo, s_hi), max(s_lo, s_hi)
    inner = (m.s > lo) & (m.s < hi) & (m.s > 0.0) & (m.s < m.domain_end)
    if np.any(m.f[inner] <= m.pole_guard):
        bad = m.s[inner][np.argmax(m.f[inner] <= m.pole_guard)]
        raise DisconnectedRegionError(
            f"f vanishes at s = {bad:.6g}, between the query points; the region is disconnected")


def _path_bound(mesh, coords, pred, src, dst):
    """Sum over path edges of length times the local stencil anisotropy."""
    total = 0.0
    count = 0
    v = dst
    while v != src and v >= 0:
        u = pred[v]
        if u < 0:
            break
        (s0, a0), (s1, a1) = coords[u], coords[v]
        fm = float(mesh.m.warping(0.5 * (s0 + s1)))
        dv = abs(s1 - s0)
        # pole vertices carry no angle; their edges are radial
        pole = u >= mesh.n_inner and u < mesh.n_base or v >= mesh.n_inner and v < mesh.n_base
        dh = 0.0 if pole else abs(a1 - a0) * fm
        length = math.hypot(dv, dh)
        theta = math.atan2(dh, dv)
        fan = mesh.stencil_gaps(fm)
        k = int(np.searchsorted(fan, theta))
        gaps = np.diff(fan)
        # gaps touching the edge direction
        near = gaps[max(k - 2, 0):min(k + 1, gaps.size)]
        gap = float(np.max(near)) if near.size else float(np.max(gaps))
        total += length * (1.0 / math.cos(0.5 * gap) - 1.0)
        count += 1
        v = u
    return total, count


def geodesic_path(m, query):
    """Mesh distance and its anisotropy bound for ``query``."""
    p, q = query.p, query.q
    L = m.domain_end
    for pt in (p, q):
        if not 0.0 <= pt.s <= L:
            raise DomainError(f"s = {pt.s} outside [0, {L:.17g}]")
    _check_connected(m, p.s, q.s)
    dtheta = p.angle_to(q)
    if dtheta <= 1e-15 or p.s in (0.0, L) or q.s in (0.0, L):
        # a shared meridian, or a pole (which sees every direction): the
        # radial segment attains the lower bound |s_p - s_q|
        return PathResult(abs(p.s - q.s), 0.0, 0)
    mesh = SectorMesh(m, max(dtheta, 1e-12), query.resolution)
    g, (ip, iq), coords = mesh.graph([(p.s, 0.0), (q.s, mesh.span)])
    dist, pred = dijkstra(g, directed=False, indices=ip, return_predecessors=True)
    d = float(dist[iq])
    if not math.isfinite(d):
        raise DisconnectedRegionError("no mesh path between the points")
    bound, n = _path_bound(mesh, coords, pred, ip, iq)
    return PathResult(d, bound, n)


def geodesic_distance(m, query):
    """Length of the shortest mesh path between ``query.p`` and ``query.q``.

    Always at least ``|s_p - s_q|`` and at most the domain length.
    """
    d = geodesic_path(m, query).length
    lo = abs(query.p.s - query.q.s)
    return min(max(d, lo), m.domain_end)


def mesh_error_bound(m, query):
    """Bound on ``mesh distance - true distance`` from the stencil anisotropy.

    Each path edge of length ``l`` whose direction falls in a stencil gap of
    metric angle ``g`` contributes ``l (sec(g/2) - 1)``.  With aspect-one cells
    the 16-neighbour fan has gaps of at most ``atan(1/2)``, about 2.7 percent.
    """
    return geodesic_path(m, query).error_bound


def richardson(d_coarse, d_fine):
    """First-order extrapolation from resolutions ``n`` and ``2n``."""
    return 2.0 * d_fine - d_coarse


def distances_from(m, source, targets, resolution=DEFAULT_LAMBDA_RESOLUTION, mesh=None):
    """Distances from ``(s_src, 0)`` to targets ``(s, dtheta)``, ``dtheta`` in [0, pi].

    One Dijkstra run on a half-sector mesh.
    """
    if mesh is None:
        mesh = SectorMesh(m, math.pi, resolution)
    pts = [(float(source), 0.0)] + [(float(s), float(a)) for s, a in targets]
    g, ids, _ = mesh.graph(pts)
    dist = dijkstra(g, directed=False, indices=ids[0])
    out = dist[np.asarray(ids[1:], dtype=int)]
    # the coordinate difference is a lower bound for any path
    lo = np.abs(np.array([t[0] for t in targets]) - source)
    return np.minimum(np.maximum(out, lo), m.domain_end)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _fibonacci_directions(n):
    """Polar/azimuth pairs of a Fibonacci lattice on the sphere."""
    k = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / n)
    azimuth = math.pi * (1.0 + math.sqrt(5.0)) * k
    return polar, np.mod(azimuth, 2.0 * math.pi)


def diameter_check(m, resolution=DEFAULT_LAMBDA_RESOLUTION, n_directions=8, workers=None):
    """``(analytic, sampled)`` diameter.

    ``analytic`` is the domain length.  ``sampled`` is the largest mesh
    distance among the poles and Fibonacci directions at the quartile
    s-values.
    """
    L = m.domain_end
    polar, azimuth = _fibonacci_directions(n_directions)
    pts = [SurfacePoint(0.0), SurfacePoint(L)]
    for s in (0.25 * L, 0.5 * L, 0.75 * L):
        pts += [SurfacePoint(s, p, a) for p, a in zip(polar, azimuth)]
    mesh = SectorMesh(m, math.pi, resolution)

    def run(i):
        x = pts[i]
        targets = [(y.s, x.angle_to(y)) for y in pts[i + 1:]]
        if not targets:
            return 0.0
        return float(np.max(distances_from(m, x.s, targets, mesh=mesh)))

    found = _map(run, range(len(pts)), workers)
    return L, float(max(found))


def lambda_analytic_upper(L1, L2, k):
    """Certified distortion bound ``(L1 + L2 + 8 pi)/(k - 1)``."""
    if k < 2:
        raise PreconditionError("the certified distortion bound needs k >= 2")
    return (L1 + L2 + 8.0 * math.pi) / (k - 1)


def _check_window(m, a, b, floor, name):
    if not (0.0 <= a < b <= m.domain_end):
        raise DomainError(f"window [{a:.6g}, {b:.6g}] is not inside the domain of {name}")
    inside = (m.s >= a) & (m.s <= b)
    fmin = float(np.min(m.f[inside])) if np.any(inside) else float(m.warping(0.5 * (a + b)))
    fmin = min(fmin, float(m.warping(a)), float(m.warping(b)))
    if fmin < floor:
        raise PreconditionError(
            f"{name}: min f = {fmin:.6g} on the window is below {floor:.6g}")


def lambda_estimate(m1, m2, window, n_pairs=512, resolution=DEFAULT_LAMBDA_RESOLUTION,
                    n_sources=8, workers=None):
    """Distance distortion between two manifolds over ``W = [a_k, b_k] x S^2``.

    ``lower`` is the largest gap over ``n_pairs`` deterministic Halton pairs;
    ``analytic_upper`` is the certified bound.  Identical metrics give an exact
    zero without meshing.
    """
    a, b, k = float(window.a_k), float(window.b_k), int(window.k)
    if n_pairs < 16:
        raise PreconditionError("n_pairs must be at least 16")
    floor = 1.0 / (k + 1)
    _check_window(m1, a, b, floor, "first manifold")
    _check_window(m2, a, b, floor, "second manifold")
    upper = lambda_analytic_upper(m1.domain_end, m2.domain_end, k)
    if m1.warping.same_metric(m2.warping):
        zero = DistortionSample(a, a, 0.0, 0.0, 0.0)
        return LambdaEstimate(0.0, upper, zero, n_pairs, resolution, exact_zero=True)
    n_sources = max(1, min(n_sources, n_pairs))
    per = int(math.ceil(n_pairs / n_sources))
    src = qmc.Halton(d=1, scramble=False)
    src.fast_forward(1)
    s_src = a + (b - a) * src.random(n_sources)[:, 0]
    tgt = qmc.Halton(d=2, scramble=False)
    tgt.fast_forward(1)
    u = tgt.random(per * n_sources)
    mesh1 = SectorMesh(m1, math.pi, resolution)
    mesh2 = SectorMesh(m2, math.pi, resolution)

    def run(i):
        block = u[i * per:(i + 1) * per]
        targets = [(a + (b - a) * x, math.pi * y) for x, y in block]
        d1 = distances_from(m1, s_src[i], targets, mesh=mesh1)
        d2 = distances_from(m2, s_src[i], targets, mesh=mesh2)
        return [DistortionSample(float(s_src[i]), t[0], t[1], float(x), float(y))
                for t, x, y in zip(targets, d1, d2)]

    samples = [smp for block in _map(run, range(n_sources), workers) for smp in block]
    samples = samples[:n_pairs]
    best = max(samples, key=lambda smp: smp.gap)
    return LambdaEstimate(best.gap, upper, best, len(samples), resolution)
