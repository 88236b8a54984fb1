"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line (with elapsed time against its
runtime budget) and then asserts.  Reference numbers were computed with
mpmath before the package existed and are frozen here.
"""

import filecmp
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from warplab.distance import DistanceQuery, SurfacePoint, geodesic_distance
from warplab.families import (LakzianParams, collapsing_family, custom_profile,
                              lakzian_family, round_sphere, scaled_sine)
from warplab.geometry import (RotSymManifold, WarpingFunction, sym_min_area,
                              validate_hypotheses)
from warplab.grid import GridFunction, uniform_grid
from warplab.sequence import (LimitProfile, SequenceSpec, TestFunction, bv_bound,
                              default_battery, distributional_scalar_test, extract_limit,
                              h1_convergence, ik_window, pole_volume_ratio, richardson_r2,
                              tangent_cone_portrait)
from warplab.swif import rate_certificate, swif_upper_bound, window_volumes

# (3/2)((2/3)(1/2)^{3/2})^{-1/3} (2 pi/3) + 3 (pi/2)^{1/2}
BV_RHS_SINE_I2 = 8.8457737892535765627
RATE = [((2.0, 2.0, 4, 0), 2087.376365698504587),
        ((math.pi, math.pi, 8, 3), 6219.228884405100271),
        ((1.5, 1.0, 16, 10), 228.35257548336509013)]
SEED = 20240611


class Criterion:
    def __init__(self, request, number, title, budget):
        self.request = request
        self.number, self.title, self.budget = number, title, budget
        self.notes = []
        self.ok = True

    def check(self, cond, note):
        self.notes.append(("ok " if cond else "BAD ") + note)
        self.ok = self.ok and bool(cond)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is not None:
            self.ok = False
            self.notes.append(f"raised {exc[0].__name__}: {exc[1]}")
        elapsed = time.perf_counter() - self.t0
        self.check(elapsed < self.budget, f"runtime {elapsed:.2f}s < {self.budget:g}s")
        line = f"[{'PASS' if self.ok else 'FAIL'}] {self.number:2d}. {self.title}"
        detail = "; ".join(n for n in self.notes if n.startswith("BAD")) or self.notes[0]
        print(f"{line} ({detail})")
        self.request.config.stash.setdefault(ACCEPTANCE_LINES, []).append(f"{line} ({detail})")
        return False


def random_members(n=20):
    rng = np.random.default_rng(SEED)
    out = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            out.append(round_sphere(float(rng.uniform(0.3, 3.0))))
        elif kind == 1:
            out.append(collapsing_family(int(rng.integers(1, 12))))
        else:
            out.append(lakzian_family(LakzianParams(float(rng.uniform(0.05, 0.95)),
                                                    float(rng.uniform(0.05, 3.0)))))
    return out


def profile_limit(expr, L, n=4097):
    s = uniform_grid(0.0, L, n)
    return LimitProfile.from_grid(GridFunction(0.0, L, expr(s)))


def sine_sequence():
    return SequenceSpec("scaled_sine", (1, 2, 4, 8, 16, 32, 64), math.pi,
                        schedule={"c": "1 / (1 + 1/j)"})


def test_round_sphere_calibration(request):
    with Criterion(request, 1, "round-sphere calibration", 5.0) as c:
        m = RotSymManifold(round_sphere())
        err = np.nanmax(np.abs(m.scalar_profile() - 6.0))
        c.check(err < 1e-8, f"analytic scalar error {err:.1e}")
        s = uniform_grid(0.0, math.pi, 4096)
        fd = RotSymManifold(WarpingFunction.sampled(np.sin(s), math.pi, claims_smooth=True))
        err_fd = np.nanmax(np.abs(fd.scalar_profile() - 6.0))
        c.check(err_fd < 1e-4, f"finite-difference scalar error {err_fd:.1e}")
        vol_err = abs(m.volume() - 2 * math.pi ** 2)
        c.check(vol_err < 1e-8, f"volume error {vol_err:.1e}")
        c.check(m.diameter == math.pi, "diameter is pi")
        q = DistanceQuery(SurfacePoint(math.pi / 2, math.pi / 2, 0.0),
                          SurfacePoint(math.pi / 2, math.pi / 2, 1.0), 512)
        d = geodesic_distance(m, q)
        c.check(abs(d - 1.0) < 1e-2, f"equatorial distance {d:.6f}")
    assert c.ok


def test_scalar_sign_matches_h_criterion(request):
    with Criterion(request, 2, "scalar sign equals h-criterion sign on 20 members", 30.0) as c:
        bad = 0
        points = 0
        for wf in random_members():
            m = RotSymManifold(wf)
            scal = m.scalar_profile()
            res = m.residual_profile()
            ok = np.isfinite(scal)
            differ = np.sign(scal[ok]) != np.sign(res[ok])
            bad += int(np.count_nonzero(differ & (np.abs(res[ok]) > 1e-6)))
            points += int(ok.sum())
        c.check(bad == 0, f"{bad} sign disagreements over {points} points")
    assert c.ok


def test_nonnegative_scalar_forces_unit_slope(request):
    with Criterion(request, 3, "nonnegative scalar curvature forces |f'| <= 1", 10.0) as c:
        profiles = random_members() + [scaled_sine(x) for x in (0.3, 0.7, 1.0)]
        checked = 0
        for wf in profiles:
            m = RotSymManifold(wf)
            if np.nanmin(m.scalar_profile()) >= -1e-6:
                checked += 1
                slope = np.max(np.abs(m.df))
                c.check(slope <= 1 + 1e-4, f"max |f'| = {slope:.6f}")
        c.check(checked >= 20, f"{checked} nonnegative profiles checked")
        v = validate_hypotheses(RotSymManifold(scaled_sine(1.2)), D_cap=4.0, A_floor=1.0,
                                claimed_scalar_nonnegative=True)
        c.check(v.inconsistent, f"slope-1.2 profile flagged (max |f'| = {v.max_abs_slope:.3f})")
    assert c.ok


def test_collapsing_family_closed_forms(request):
    with Criterion(request, 4, "collapsing family closed forms", 10.0) as c:
        vols = []
        for j in (1, 2, 4, 10):
            wf = collapsing_family(j)
            m = RotSymManifold(wf)
            top = wf(1.0)
            c.check(top == 1.0 / (2 * j + 2), f"f_{j}(1) exact")
            area = sym_min_area(m)
            c.check(abs(area - 4 * math.pi / (2 * j + 2) ** 2) < 1e-10, f"area j={j}")
            vols.append(m.volume())
            c.check(vols[-1] <= 8 * math.pi * top, f"volume j={j} within 8 pi f(1)")
            c.check(np.nanmin(m.scalar_profile()) >= -1e-6, f"scalar j={j} nonnegative")
        c.check(all(b < a for a, b in zip(vols, vols[1:])), "volumes strictly decreasing")
    assert c.ok


def test_bv_bound_on_sine_schedule(request):
    with Criterion(request, 5, "BV bound for the scaled sine schedule on I_2", 10.0) as c:
        rhs = bv_bound(2, math.pi / 6, 5 * math.pi / 6, math.pi)
        c.check(abs(rhs - BV_RHS_SINE_I2) < 1e-12 * BV_RHS_SINE_I2,
                f"bound formula {rhs:.12f} matches oracle")
        seq = sine_sequence()
        lim = extract_limit(seq)
        c.check(lim.converged, f"limit {lim.status}")
        window = ik_window(lim.profile, 2)
        rep = h1_convergence(seq, window)
        c.check(min(rep.margins) > 0,
                f"max BV {max(rep.bv):.4f} < bound {rep.bv_bound:.4f}")
    assert c.ok


def test_distributional_battery(request):
    with Criterion(request, 6, "distributional scalar test battery", 10.0) as c:
        sphere = profile_limit(np.sin, math.pi)
        out = distributional_scalar_test(sphere.f_inf, default_battery(0.0, math.pi))
        margin = min(o.lhs - o.rhs for o in out)
        c.check(len(out) == 27 and margin > 0, f"round sphere min margin {margin:.4f}")
        cone = profile_limit(lambda s: s, 2.0)
        worst = max(abs(o.lhs - o.rhs)
                    for o in distributional_scalar_test(cone.f_inf, default_battery(0.0, 2.0)))
        c.check(worst <= 1e-6, f"flat cone |lhs - rhs| {worst:.1e}")
        f = lambda s: np.sin(s) + 0.4 * np.sin(3 * s)  # noqa: E731
        wf = custom_profile(expression="sin(s) + 0.4 * sin(3 * s)", domain_end=math.pi)
        m = RotSymManifold(wf)
        neg = m.scalar_profile() < 0
        bad = profile_limit(f, math.pi)
        failed = [o for o in distributional_scalar_test(bad.f_inf, default_battery(0.0, math.pi))
                  if not o.passed]
        inside = [o for o in failed if neg[int(round(o.test.center / m.spacing))]]
        c.check(len(inside) >= 1, f"{len(inside)} failing tests centered where scalar < 0")
    assert c.ok


def test_pole_volume_ratios(request):
    with Criterion(request, 7, "pole volume ratios", 5.0) as c:
        radii = [0.2, 0.1, 0.05, 0.025]
        sphere = profile_limit(np.sin, math.pi)
        for side in ("left", "right"):
            r0 = richardson_r2(pole_volume_ratio(sphere, side, radii))
            c.check(abs(r0 - 0.2) < 1e-3, f"round sphere {side} extrapolates to {r0:.6f}")
        cap = profile_limit(lambda s: np.minimum(np.minimum(s, 1.0), 3.0 - s), 3.0)
        worst = max(abs(v) for side in ("left", "right")
                    for _, v in pole_volume_ratio(cap, side, radii))
        c.check(worst <= 1e-10, f"flat cap ratio {worst:.1e}")
        seqs = [sine_sequence(), SequenceSpec("round_sphere", (1, 2, 3), math.pi),
                SequenceSpec("round_sphere", (1, 2, 4, 8), 2 * math.pi,
                             schedule={"radius": "2 - 1/j"})]
        lowest = math.inf
        for seq in seqs:
            v = extract_limit(seq)
            c.check(v.converged, f"{seq.family} limit {v.status}")
            window = ik_window(v.profile, 4)
            if not all(o.passed for o in distributional_scalar_test(
                    v.profile.f_inf, default_battery(window.a_k, window.b_k))):
                continue
            for side in ("left", "right"):
                lowest = min(lowest, min(x for _, x in pole_volume_ratio(v.profile, side,
                                                                         radii)))
        c.check(lowest >= -1e-6, f"convergent-limit ratios >= {lowest:.4f}")
    assert c.ok


def test_swif_pipeline(request):
    with Criterion(request, 8, "flat-distance bound pipeline", 60.0) as c:
        sphere = RotSymManifold(round_sphere())
        lim = profile_limit(np.sin, math.pi)
        bounds = []
        for k in (4, 8, 16, 32):
            rep = swif_upper_bound(sphere, sphere, ik_window(lim, k), math.pi)
            bounds.append(rep.bound)
            c.check(all(v >= 0 for v in rep.margins.values()), f"margins k={k}")
        c.check(all(b > 0 for b in bounds), "self-bounds positive")
        c.check(all(b < a for a, b in zip(bounds, bounds[1:])), "self-bounds decreasing")
        c.check(bounds[-1] < 0.05, f"k=32 self-bound {bounds[-1]:.2e}")
        tested = [(sphere, math.pi)]
        tested += [(RotSymManifold(collapsing_family(j)), 2.0) for j in (1, 4)]
        lak = RotSymManifold(lakzian_family(LakzianParams(0.3, 0.5)))
        tested.append((lak, lak.domain_end))
        for m, D in tested:
            g = LimitProfile.from_grid(GridFunction(0.0, m.domain_end, m.f))
            for k in (8, 16):
                try:
                    window = ik_window(g, k)
                except Exception:
                    continue
                vols = window_volumes(m, window, D)
                c.check(all(v >= 0 for v in vols.margins.values()),
                        f"volume margins {m.warping.family} k={k}")
        for args, expected in RATE:
            got = rate_certificate(*args)
            c.check(abs(got - expected) <= 1e-12 * expected, f"rate {args} = {got!r}")
        vals = [rate_certificate(2.0, 2.0, 4, i) for i in range(32)]
        c.check(all(b < a for a, b in zip(vals, vals[1:])), "rate decreasing in i")
    assert c.ok


def test_tangent_cone_portrait(request):
    with Criterion(request, 9, "tangent-cone portrait", 5.0) as c:
        limits = [profile_limit(np.sin, math.pi),
                  profile_limit(lambda s: 2 * np.sin(s / 2), 2 * math.pi),
                  extract_limit(sine_sequence()).profile]
        for lim in limits:
            frac = tangent_cone_portrait(lim).fraction_euclidean
            c.check(frac >= 0.99, f"smooth limit euclidean fraction {frac:.3f}")
        tent = custom_profile(expression="min(s, 2 - s)", domain_end=2.0, smooth=0.002)
        port = tangent_cone_portrait(LimitProfile.from_grid(tent.grid))
        c.check(len(port.corners) == 1 and abs(port.corners[0] - 1.0) < 1e-9,
                f"tent corners {port.corners}")
    assert c.ok


def _run_pipeline(workdir):
    os.makedirs(workdir)
    specs = {
        "sphere.json": {"family": "round_sphere", "params": {"radius": 1.0}},
        "lakzian.json": {"family": "lakzian", "params": {"delta": 0.3, "L_spline": 0.5}},
        "tent.json": {"expression": "min(s, 2 - s)", "domain_end": 2, "smooth": 0.002},
        "seq.json": {"family": "scaled_sine", "indices": [1, 2, 4, 8, 16], "D": math.pi,
                     "schedule": {"c": "1/(1 + 1/j)"}},
    }
    for name, spec in specs.items():
        with open(os.path.join(workdir, name), "w") as fh:
            json.dump(spec, fh)
    commands = [
        ["analyze", "sphere.json", "-o", "sphere"],
        ["analyze", "lakzian.json", "-o", "lakzian"],
        ["analyze", "tent.json", "-o", "tent"],
        ["sequence", "seq.json", "--k", "2", "-o", "seq"],
        ["swif-bound", "sphere.json", "sphere.json", "--k", "4,8", "--D-cap", "3.2",
         "-o", "swif"],
        ["generate", "collapsing", "j=3", "-o", "collapsing.json"],
    ]
    for cmd in commands:
        proc = subprocess.run([sys.executable, "-m", "warplab", *cmd], cwd=workdir,
                              capture_output=True, text=True)
        assert proc.returncode in (0, 2), proc.stderr
    return workdir


def test_reports_are_deterministic(request, tmp_path):
    with Criterion(request, 10, "byte-identical reports across runs", 120.0) as c:
        first = _run_pipeline(str(tmp_path / "run1"))
        second = _run_pipeline(str(tmp_path / "run2"))
        reports = []
        for root, _, files in os.walk(first):
            for name in files:
                rel = os.path.relpath(os.path.join(root, name), first)
                if name.endswith((".json", ".csv")) and os.path.dirname(rel):
                    reports.append(rel)
                elif name == "collapsing.json":
                    reports.append(rel)
        match, mismatch, errors = filecmp.cmpfiles(first, second, sorted(reports), shallow=False)
        c.check(len(reports) >= 8, f"{len(reports)} report files compared")
        c.check(not mismatch and not errors, f"mismatched {mismatch + errors}")
    assert c.ok


def test_bump_peak_is_one():
    center = math.pi / 2
    # guards the battery normalisation the acceptance margins rely on
    assert TestFunction(center, 0.1).values(np.array([center]))[0] == 1.0
