"""Command-line front end: ``conekit {gen|compute|verify}``.

Exit codes: 0 on success, 1 on I/O or parse failures, 2 when an input
violates a precondition, 3 when a verification campaign has a failing trial.
Plane indices in JSON output are 1-based.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .campaigns import LEMMAS, run_campaign, summary_line, write_csv
from .clusters import PointSet, cluster_comparable, cluster_refine, cluster_split
from .cones import (GapMatrix, PlaneCone, haar_orthogonal, is_balanced, isoclinic_cone,
                    layer_separations, layer_subdivide, mu, prune, random_balanced_cone,
                    random_cone, rotate_cone, sigma)
from .errors import ConekitError, InvalidInput
from .excess import (Ball, Cylinder, SampledCurrent, one_sided_excess, planar_excess,
                     reverse_excess, synth_cone_sample, tilt_comparison_constant,
                     tilt_excess_nonoriented, tilt_excess_oriented)
from .planes import AffinePlane, load_subspace, morgan_angles, unit_ball_hausdorff
from .whitney import (CubeKind, classify_cubes, cubes_at_generation,
                      excess_oracle_from_current, generation_measure_sum)

EXIT_OK, EXIT_IO, EXIT_PRECONDITION, EXIT_FAILED = 0, 1, 2, 3


def _vector(text, dim):
    if text is None:
        return np.zeros(dim)
    v = np.array([float(x) for x in text.split(",")])
    if v.shape[0] != dim:
        raise InvalidInput(f"expected {dim} comma-separated coordinates")
    return v


def _emit(obj, out=None):
    text = json.dumps(obj, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _linear(sub):
    return sub.base if isinstance(sub, AffinePlane) else sub


def _pair(args):
    """Two subspaces: either two plane files or one cone file with ``--pair i j``."""
    if args.pair:
        cone = PlaneCone.load(args.inputs[0])
        i, j = args.pair
        if not (1 <= i <= cone.N and 1 <= j <= cone.N):
            raise InvalidInput(f"plane indices must lie in 1..{cone.N}")
        return cone.planes[i - 1], cone.planes[j - 1]
    if len(args.inputs) != 2:
        raise InvalidInput("give two plane files, or a cone file with --pair")
    return tuple(_linear(load_subspace(p)) for p in args.inputs)


def _gaps(args):
    if args.gaps:
        return GapMatrix.load(args.gaps)
    if args.cone:
        return GapMatrix.from_cone(PlaneCone.load(args.cone))
    raise InvalidInput("give --gaps or --cone")


# --------------------------------------------------------------------------
# gen


def cmd_gen(args):
    rng = np.random.default_rng(args.seed)
    if args.cone_in:
        cone = PlaneCone.load(args.cone_in)
    elif args.angle is not None:
        cone = isoclinic_cone(args.m, args.n, [s * args.angle for s in range(args.N)], args.Q)
        cone = rotate_cone(cone, haar_orthogonal(cone.ambient_dim, rng))
    elif args.balanced is not None:
        cone = random_balanced_cone(args.m, args.n, args.N, args.balanced, rng, capacity=args.Q)
    else:
        cone = random_cone(args.m, args.n, args.N, rng, capacity=args.Q)

    if not args.current:
        if args.out:
            cone.save(args.out)
        else:
            _emit(cone.to_dict())
        return EXIT_OK
    if not args.out:
        raise InvalidInput("--current needs --out")
    if args.cone_out:
        cone.save(args.cone_out)
    T = synth_cone_sample(cone, args.h, args.noise, args.density, args.rho,
                          seed=int(rng.integers(2 ** 63)), frames=args.frames)
    T.save(args.out, args.format)
    return EXIT_OK


# --------------------------------------------------------------------------
# compute


def compute_angles(args):
    a, b = _pair(args)
    th = morgan_angles(a, b)
    return {"angles": list(th)}


def compute_hausdorff(args):
    a, b = _pair(args)
    th = morgan_angles(a, b)
    return {"hausdorff": unit_ball_hausdorff(a, b), "sin_max_angle": math.sin(th.max)}


def compute_sigma_mu(args):
    cone = PlaneCone.load(args.inputs[0])
    out = {"N": cone.N, "sigma": sigma(cone), "mu": mu(cone)}
    if args.M is not None:
        ok, ratio = is_balanced(cone, args.M)
        out.update(balanced=ok, worst_ratio=ratio)
    return out


def compute_excess(args):
    cone = PlaneCone.load(args.cone)
    T = SampledCurrent.load(args.current)
    ball = Ball(_vector(args.center, cone.ambient_dim), args.radius)
    one = one_sided_excess(T, cone, ball)
    out = {"one_sided": one}
    if args.reverse:
        rev = reverse_excess(cone, T, ball, args.a, args.resolution, with_bound=True)
        out.update(reverse=rev.value, two_sided=one + rev.value, mesh=rev.mesh,
                   discretization_bound=rev.bound, nodes=rev.nodes)
    return out


def compute_planar(args):
    T = SampledCurrent.load(args.current)
    ball = Ball(_vector(args.center, T.ambient_dim), args.radius)
    value, plane = planar_excess(T, ball, T.m)
    return {"value": value, "plane": plane.to_dict()}


def compute_tilt(args):
    T = SampledCurrent.load(args.current)
    pi = _linear(load_subspace(args.plane))
    cyl = Cylinder(_vector(args.center, T.ambient_dim), args.radius, pi)
    sign = -1.0 if args.reverse_orientation else 1.0
    oriented = tilt_excess_oriented(T, cyl, pi, sign)
    return {"oriented": oriented, "nonoriented": tilt_excess_nonoriented(T, cyl, pi),
            "comparison_constant": tilt_comparison_constant(pi.dim)}


def compute_prune(args):
    cert = prune(_gaps(args), args.D, args.delta)
    return cert.as_dict(one_based=True)


def compute_layers(args):
    cert = layer_subdivide(_gaps(args), args.delta, args.eta)
    return cert.as_dict(one_based=True)


def compute_cluster(args):
    with open(args.points) as fh:
        data = json.load(fh)
    P = PointSet.from_dict(data) if isinstance(data, dict) else PointSet(data)
    if args.method == "comparable":
        sel, cert = cluster_comparable(P, args.delta_bar)
    elif args.method == "refine":
        sel, cert = cluster_refine(P, args.delta, args.eps)
    else:
        A, B, cert = cluster_split(P)
        sel = ([i + 1 for i in A], [i + 1 for i in B])
        out = cert.as_dict()
        out["selected"] = list(sel)
        return out
    out = cert.as_dict()
    out["selected"] = [i + 1 for i in sel]
    out["removal_order"] = [i + 1 for i in cert.removal_order]
    return out


def compute_whitney(args):
    if args.current is None:
        cubes = cubes_at_generation(args.ell, args.m)
        out = {"m": args.m, "ell": args.ell, "count": len(cubes),
               "measure_sum": str(generation_measure_sum(args.ell, args.m))}
        if args.list:
            out["cubes"] = [c.to_dict() for c in cubes]
        return out
    if args.cone is None:
        raise InvalidInput("classification needs --cone and --current")
    cone = PlaneCone.load(args.cone)
    T = SampledCurrent.load(args.current)
    cert = layer_subdivide(GapMatrix.from_cone(cone), args.delta)
    layers, seps = layer_separations(cert, args.delta_bar)
    oracle = excess_oracle_from_current(T, [cone.subcone(I) for I in layers])
    labels = classify_cubes(oracle, seps, args.tau, args.depth, cone.m)
    counts = {k.value: 0 for k in CubeKind}
    for lab in labels.values():
        counts[lab.kind.value] += 1
    out = {"layers": [[i + 1 for i in I] for I in layers], "separations": seps,
           "counts": counts}
    if args.list:
        out["labels"] = [{"ell": L.ell, "index": list(L.index), "label": labels[L].kind.value}
                         for L in sorted(labels)]
    return out


COMPUTE = {
    "angles": compute_angles, "hausdorff": compute_hausdorff, "sigma-mu": compute_sigma_mu,
    "excess": compute_excess, "planar": compute_planar, "tilt": compute_tilt,
    "prune": compute_prune, "layers": compute_layers, "cluster": compute_cluster,
    "whitney": compute_whitney,
}


def cmd_compute(args):
    _emit(COMPUTE[args.what](args), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# verify

VERIFY_PARAMS = ("m", "n", "N", "Q", "delta", "delta_bar", "M", "h", "noise", "a",
                 "resolution", "eps", "depth", "points", "planes", "samples", "eta", "ambient",
                 "size", "density")


def cmd_verify(args):
    overrides = {k: getattr(args, k) for k in VERIFY_PARAMS if getattr(args, k) is not None}
    trials = args.trials
    if trials is None:
        # one trial per generation for the Whitney suite
        trials = int(overrides.get("depth", 6)) + 1 if args.lemma == "whitney" else 100
    report = run_campaign(args.lemma, trials, args.seed, overrides, args.threads)
    if args.out:
        with open(args.out, "w") as fh:
            if args.format == "csv":
                write_csv(report, fh)
            else:
                json.dump(report, fh, sort_keys=True)
    print(summary_line(report))
    return EXIT_OK if report["aggregate"]["failed"] == 0 else EXIT_FAILED


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="conekit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"conekit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a cone (JSON) or a sampled current")
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--N", type=int, default=2)
    g.add_argument("--Q", type=int, default=None, help="cone capacity")
    g.add_argument("--angle", type=float, help="isoclinic cone with phases 0, angle, 2 angle, ...")
    g.add_argument("--balanced", type=float, metavar="M", help="random M-balanced cone")
    g.add_argument("--cone", dest="cone_in", help="sample from this cone file instead")
    g.add_argument("--current", action="store_true", help="write a sampled current to --out")
    g.add_argument("--cone-out", help="also write the cone when sampling a current")
    g.add_argument("--h", type=float, default=0.0, help="amplitude of the smooth displacement")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--density", type=int, default=2000, help="samples per plane")
    g.add_argument("--rho", type=float, default=0.0, help="inner cutoff around the spine")
    g.add_argument("--frames", action="store_true", help="attach tangent frames")
    g.add_argument("--format", choices=("csv", "binary"), default="csv")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("compute", help="run one computation and print a JSON object")
    c.add_argument("what", choices=tuple(COMPUTE))
    c.add_argument("inputs", nargs="*", help="plane or cone files")
    c.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"),
                   help="planes I and J (1-based) of a cone file")
    c.add_argument("--cone", help="cone file (JSON)")
    c.add_argument("--current", help="sampled current (CSV or binary)")
    c.add_argument("--plane", help="plane file for tilt excess")
    c.add_argument("--gaps", help="gap matrix (JSON)")
    c.add_argument("--points", help="point set (JSON)")
    c.add_argument("--center", help="comma-separated coordinates (default: origin)")
    c.add_argument("--radius", type=float, default=1.0)
    c.add_argument("--reverse", action="store_true", help="also compute the reverse excess")
    c.add_argument("--reverse-orientation", action="store_true",
                   help="compare against the oppositely oriented plane")
    c.add_argument("--a", type=float, default=1.0 / 16.0, help="spine cutoff of the reverse excess")
    c.add_argument("--resolution", type=int, default=4096, help="cone sample nodes per plane")
    c.add_argument("--M", type=float, help="balance constant to test")
    c.add_argument("--D", type=float, default=0.0, help="pruning scale")
    c.add_argument("--delta", type=float, default=0.5)
    c.add_argument("--delta-bar", type=float, default=0.5)
    c.add_argument("--eps", type=float, default=0.1)
    c.add_argument("--eta", type=float, help="layer threshold (default: safe value)")
    c.add_argument("--method", choices=("comparable", "refine", "split"), default="split")
    c.add_argument("--m", type=int, default=3, help="cone dimension for cube counts")
    c.add_argument("--ell", type=int, default=0, help="cube generation")
    c.add_argument("--tau", type=float, default=0.1, help="excess threshold")
    c.add_argument("--depth", type=int, default=3, help="deepest generation classified")
    c.add_argument("--list", action="store_true", help="include per-cube records")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compute)

    v = sub.add_parser("verify", help="run a seeded verification campaign")
    v.add_argument("lemma", choices=LEMMAS)
    v.add_argument("--trials", type=int)
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--threads", type=int, help="worker processes (default: $CONEKIT_THREADS or 1)")
    v.add_argument("--out")
    v.add_argument("--format", choices=("json", "csv"), default="json")
    for name in VERIFY_PARAMS:
        v.add_argument("--" + name.replace("_", "-"), dest=name,
                       help="value, lo:hi range or comma list")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConekitError as exc:
        print(f"conekit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (OSError, ValueError, KeyError) as exc:
        print(f"conekit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
