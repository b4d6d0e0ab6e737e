"""Command-line entry point: `plots <kind> --in ... --out ...`."""

from __future__ import annotations

import argparse
import sys

from . import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render figures from pedflow CSV outputs.")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("steady_profiles",
                       help="stationary profiles, optionally multi-panel")
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   metavar="CSV", help="steady.csv files (x,rho)")
    p.add_argument("--out", required=True, metavar="IMG")
    p.add_argument("--labels", help="comma-separated, one per input")
    p.add_argument("--panels", type=int, default=1,
                   help="split the inputs into this many panels")
    p.add_argument("--titles", help="comma-separated, one per panel")

    p = sub.add_parser("posterior", help="prior/posterior overlay")
    p.add_argument("--in", dest="inputs", nargs=1, required=True,
                   metavar="CSV", help="chain.csv (k,v,accepted)")
    p.add_argument("--out", required=True, metavar="IMG")
    p.add_argument("--prior-mean", type=float, default=1.0)
    p.add_argument("--prior-variance", type=float, default=0.25)
    p.add_argument("--true-value", type=float)
    p.add_argument("--burn-in", type=int,
                   help="default: first fifth of the chain")
    p.add_argument("--bins", type=int, default=50)

    p = sub.add_parser("trajectories", help="walker paths over the corridor")
    p.add_argument("--in", dest="inputs", nargs=1, required=True,
                   metavar="CSV", help="trajectories.csv (traj_id,t,x,y)")
    p.add_argument("--out", required=True, metavar="IMG")

    p = sub.add_parser("eikonal", help="walking-direction quiver")
    p.add_argument("--in", dest="inputs", nargs=1, required=True,
                   metavar="CSV", help="potential.csv (x,y,phi,gx,gy)")
    p.add_argument("--out", required=True, metavar="IMG")
    p.add_argument("--stride", type=int, default=1,
                   help="plot every stride-th arrow")

    args = parser.parse_args(argv)
    try:
        if args.kind == "steady_profiles":
            out = render.steady_profiles(
                args.inputs, args.out,
                labels=args.labels.split(",") if args.labels else None,
                panels=args.panels,
                titles=args.titles.split(",") if args.titles else None)
        elif args.kind == "posterior":
            out = render.posterior(
                args.inputs[0], args.out, prior_mean=args.prior_mean,
                prior_variance=args.prior_variance,
                true_value=args.true_value, burn_in=args.burn_in,
                bins=args.bins)
        elif args.kind == "trajectories":
            out = render.trajectories(args.inputs[0], args.out)
        else:
            out = render.eikonal(args.inputs[0], args.out,
                                 stride=args.stride)
    except render.PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
