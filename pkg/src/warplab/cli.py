"""Command-line interface.

Exit codes: 0 success, 1 operational error (bad input, I/O), 2 a hypothesis or
verdict failed.  Reports carry the tool version and a hash of the inputs and
options; they contain no timestamps or paths, so identical runs produce
identical bytes.
"""

import argparse
from dataclasses import dataclass, field
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .distance import DEFAULT_RESOLUTION, DistanceQuery, SurfacePoint, geodesic_distance
from .errors import WarpLabError, WindowDisconnectedError
from .families import FAMILIES, from_spec
from .geometry import (RotSymManifold, critical_spheres, monotonicity_marks,
                       validate_hypotheses, write_grid_csv)
from .sequence import (LimitProfile, SequenceSpec, default_battery, distributional_scalar_test,
                       extract_limit, h1_convergence, ik_window, pole_cap_check,
                       pole_volume_ratio, richardson_r2, tangent_cone_portrait)
from .swif import rate_certificate, swif_upper_bound
from .tolerances import DEFAULT_TOLERANCES

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2

TOOL = "warplab"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are operational errors, keeping 2 for failed verdicts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: str = None
    threads: int = 1
    tol: object = DEFAULT_TOLERANCES

    def config_hash(self):
        payload = {"command": self.command, "version": __version__,
                   "inputs": {k: hashlib.sha256(v).hexdigest()
                              for k, v in sorted(self.inputs.items())},
                   "options": self.options,
                   "tolerances": _plain(self.tol.__dict__)}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# I/O helpers


def _plain(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_input(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def parse_json(path, raw):
    try:
        return json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CliError(f"{path}: not UTF-8 text ({exc.reason})") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def envelope(cfg, result):
    return {"tool": TOOL, "version": __version__, "command": cfg.command,
            "config_hash": cfg.config_hash(), "options": cfg.options, "result": result}


def _load_manifold(cfg, key, path, grid=None):
    raw = read_input(path)
    cfg.inputs[key] = raw
    spec = parse_json(path, raw)
    try:
        wf = from_spec(spec)
        return RotSymManifold(wf, grid_resolution=grid, tol=cfg.tol)
    except WarpLabError as exc:
        raise CliError(f"{path}: {exc}") from None


def _threads(args):
    env = os.environ.get("WSL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise CliError(f"WSL_THREADS must be an integer, got {env!r}") from None
    else:
        n = args.threads
    if n < 1:
        raise CliError("thread count must be at least 1")
    return n


def _tolerances(items):
    over = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            over[name.strip()] = float(value)
        except ValueError:
            raise CliError(f"--tol {name}: not a number: {value!r}") from None
    try:
        return DEFAULT_TOLERANCES.with_overrides(**over)
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc.args[0])) from None


def _point(text, L):
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"point {text!r} must be s,azimuth,elevation")
    try:
        s, az, el = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"point {text!r} has a non-numeric field") from None
    if not 0.0 <= s <= L:
        raise CliError(f"s = {s} outside [0, {L:.17g}]")
    if not -90.0 <= el <= 90.0:
        raise CliError(f"elevation {el} outside [-90, 90] degrees")
    return SurfacePoint.from_degrees(s, az, el)


def _k_list(text):
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"--k expects integers, got {text!r}") from None
    if not ks or any(k < 2 for k in ks):
        raise CliError("--k values must be integers >= 2")
    return ks


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args, cfg):
    m = _load_manifold(cfg, "spec", args.spec, args.grid)
    D_cap = args.D_cap if args.D_cap is not None else m.domain_end
    A_floor = args.A_floor if args.A_floor is not None else cfg.tol.area
    cfg.options.update({"grid": m.grid_resolution, "D_cap": D_cap, "A_floor": A_floor,
                        "claim_nonnegative": args.claim_nonnegative})
    verdict = validate_hypotheses(m, D_cap, A_floor,
                                  claimed_scalar_nonnegative=args.claim_nonnegative or None)
    lo, hi = monotonicity_marks(m)
    result = {
        "verdict": verdict.to_dict(),
        "validation": m.validation.to_dict(),
        "domain_end": m.domain_end,
        "diameter": m.diameter,
        "volume": m.volume(),
        "critical_spheres": [c.to_dict() for c in critical_spheres(m)],
        "monotonicity_marks": {"A": lo, "B": hi},
        "representation": m.warping.representation,
        "derivative_source": m.warping.derivative_source,
    }
    report = dumps(envelope(cfg, result))
    if args.output:
        write_atomic(os.path.join(args.output, "grid.csv"), write_grid_csv(m))
        write_atomic(os.path.join(args.output, "verdict.json"), report)
    else:
        sys.stdout.write(report)
    ok = verdict.passed and not verdict.inconsistent
    print(f"analyze: {'pass' if ok else 'FAIL'} volume={m.volume()!r} "
          f"sym_min_area={verdict.sym_min_area!r} scalar_min={verdict.scalar_min!r}",
          file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_dist(args, cfg):
    m = _load_manifold(cfg, "spec", args.spec)
    p = _point(args.p, m.domain_end)
    q = _point(args.q, m.domain_end)
    d = geodesic_distance(m, DistanceQuery(p, q, args.mesh))
    print(repr(d))
    return EXIT_OK


def _default_k(lim):
    """Smallest k whose window is nonempty and connected, starting from 2."""
    top = float(np.max(lim.f_inf.samples))
    k = max(2, int(math.floor(1.0 / top)) + 1)
    return k


def cmd_sequence(args, cfg):
    raw = read_input(args.seqspec)
    cfg.inputs["sequence"] = raw
    try:
        seq = SequenceSpec.from_dict(parse_json(args.seqspec, raw))
    except WarpLabError as exc:
        raise CliError(f"{args.seqspec}: {exc}") from None
    cfg.options.update({"k": args.k, "cone_points": args.cone_points})
    verdict = extract_limit(seq, cfg.tol)
    result = {"sequence": seq.to_dict(), "limit": verdict.to_dict()}
    status = EXIT_OK
    rows = []
    if verdict.status == "non_convergent":
        status = EXIT_VERDICT
    elif verdict.converged:
        lim = verdict.profile
        k = args.k if args.k is not None else _default_k(lim)
        try:
            window = ik_window(lim, k)
        except WindowDisconnectedError as exc:
            result["window"] = {"k": k, "error": str(exc), "components": exc.components}
            status = EXIT_VERDICT
            window = None
        if window is not None:
            conv = h1_convergence(seq, window, tol=cfg.tol)
            battery = distributional_scalar_test(lim.f_inf, default_battery(window.a_k,
                                                                             window.b_k), cfg.tol)
            portrait = tangent_cone_portrait(lim, args.cone_points, cfg.tol)
            r0 = min(0.2, 0.2 * (lim.b_inf - lim.a_inf))
            radii = [r0 / 2 ** i for i in range(4)]
            poles = {}
            for side in ("left", "right"):
                pairs = pole_volume_ratio(lim, side, radii)
                poles[side] = {"ratios": [{"r": r, "ratio": v} for r, v in pairs],
                               "extrapolated": richardson_r2(pairs)}
            result.update({
                "window": window.to_dict(),
                "convergence": conv.to_dict(),
                "distributional": {"passed": all(o.passed for o in battery),
                                   "tests": [o.to_dict() for o in battery],
                                   "H": 0.0},
                "tangent_cone": portrait.to_dict(),
                "pole_ratio": poles,
                "pole_cap_check": pole_cap_check(lim),
            })
            rows = list(conv.rows())
            if any(mg < 0 for mg in conv.margins) or not all(o.passed for o in battery):
                status = EXIT_VERDICT
    report = dumps(envelope(cfg, result))
    if args.output:
        write_atomic(os.path.join(args.output, "sequence.json"), report)
        header = ["index", "h_prime_l2", "f_prime_l2", "bv", "bv_margin", "scalar_ok"]
        write_atomic(os.path.join(args.output, "norms.csv"),
                     _csv_text(header, ([r[h] for h in header] for r in rows)))
    else:
        sys.stdout.write(report)
    print(f"sequence: {verdict.status}", file=sys.stderr)
    return status


def cmd_swif(args, cfg):
    m1 = _load_manifold(cfg, "spec1", args.spec1)
    m2 = _load_manifold(cfg, "spec2", args.spec2)
    ks = _k_list(args.k)
    cfg.options.update({"k": ks, "D_cap": args.D_cap, "lambda": args.lam,
                        "n_pairs": args.n_pairs, "mesh": args.mesh})
    # the second manifold plays the limit: windows are its superlevel sets
    lim = LimitProfile.from_grid(m2.warping.grid if m2.warping.grid is not None
                                 else _grid_of(m2), cfg.tol)
    reports = []
    for k in ks:
        window = ik_window(lim, k)
        rep = swif_upper_bound(m1, m2, window, args.D_cap, lambda_mode=args.lam,
                               n_pairs=args.n_pairs, resolution=args.mesh,
                               workers=cfg.threads)
        reports.append({"window": window.to_dict(), **rep.to_dict()})
        print(f"k={k} bound={rep.bound!r}")
    report = dumps(envelope(cfg, {"reports": reports}))
    if args.output:
        write_atomic(os.path.join(args.output, "swif.json"), report)
    margins_ok = all(v >= 0 for r in reports for v in r["margins"].values())
    return EXIT_OK if margins_ok else EXIT_VERDICT


def _grid_of(m):
    from .grid import GridFunction
    return GridFunction(0.0, m.domain_end, m.f)


def _coerce(value):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def cmd_generate(args, cfg):
    if args.family not in FAMILIES:
        raise CliError(f"unknown family {args.family!r}; known: {', '.join(sorted(FAMILIES))}")
    params = {}
    for item in args.params:
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"parameter {item!r} must be NAME=VALUE")
        params[name] = _coerce(value)
    spec = {"family": args.family, "params": params}
    try:
        RotSymManifold(from_spec(spec), tol=cfg.tol)
    except WarpLabError as exc:
        raise CliError(str(exc)) from None
    write_atomic(args.output, dumps(spec))
    return EXIT_OK


def cmd_certify_rate(args, cfg):
    print(repr(rate_certificate(args.D, args.D0, args.k, args.i)))
    return EXIT_OK


def build_parser():
    p = _Parser(prog=TOOL, description="Warped-product 3-sphere diagnostics.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (WSL_THREADS overrides)")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="override a tolerance, e.g. --tol crit=1e-8")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="curvature, volume, minimal spheres, hypotheses")
    a.add_argument("spec")
    a.add_argument("--grid", type=int, default=None)
    a.add_argument("--D-cap", dest="D_cap", type=float, default=None)
    a.add_argument("--A-floor", dest="A_floor", type=float, default=None)
    a.add_argument("--claim-nonnegative", action="store_true",
                   help="assert nonnegative scalar curvature and check consistency")
    a.add_argument("-o", "--output", default=None, help="output directory")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("dist", help="geodesic distance between two points")
    d.add_argument("spec")
    d.add_argument("--p", required=True, help="s,azimuth,elevation (degrees)")
    d.add_argument("--q", required=True, help="s,azimuth,elevation (degrees)")
    d.add_argument("--mesh", type=int, default=DEFAULT_RESOLUTION)
    d.set_defaults(func=cmd_dist)

    s = sub.add_parser("sequence", help="convergence diagnostics for a sequence")
    s.add_argument("seqspec")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--cone-points", type=int, default=199)
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_sequence)

    w = sub.add_parser("swif-bound", help="flat-distance upper bound over I_k windows")
    w.add_argument("spec1")
    w.add_argument("spec2")
    w.add_argument("--k", required=True, help="K or K1,K2,...")
    w.add_argument("--D-cap", dest="D_cap", type=float, required=True)
    w.add_argument("--lambda", dest="lam", choices=("certified", "sampled"),
                   default="certified")
    w.add_argument("--n-pairs", type=int, default=512)
    w.add_argument("--mesh", type=int, default=256)
    w.add_argument("-o", "--output", default=None)
    w.set_defaults(func=cmd_swif)

    g = sub.add_parser("generate", help="write a manifold spec for a named family")
    g.add_argument("family")
    g.add_argument("params", nargs="*", help="NAME=VALUE")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("certify-rate", help="closed-form convergence rate value")
    c.add_argument("--D", type=float, required=True)
    c.add_argument("--D0", type=float, required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--i", type=int, required=True)
    c.set_defaults(func=cmd_certify_rate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(command=args.command, output=getattr(args, "output", None),
                        tol=_tolerances(args.tol))
        cfg.threads = _threads(args)
        return args.func(args, cfg)
    except CliError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (WarpLabError, OSError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
