"""Command-line entry point.

Verbs: run (coverage experiment), diag (trace / martingale-gap diagnostics),
theta0 (population functionals), serve-mock (mock predictive service).
Exit codes: 0 success, 1 validation error, 2 runtime failure (partial
artifacts are retained).
"""

import argparse
import sys

from .experiment import (ConfigError, load_config, run_diagnostics,
                         run_experiment, run_theta0)


def build_parser():
    ap = argparse.ArgumentParser(prog="mgp",
                                 description="Martingale-posterior experiments")
    sub = ap.add_subparsers(dest="verb", required=True)

    for verb, text in (("run", "run a coverage experiment"),
                       ("diag", "emit convergence / martingale-gap diagnostics"),
                       ("theta0", "compute population functionals")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--out", default=None, help="output base directory")

    p = sub.add_parser("serve-mock", help="serve the mock predictive service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--max-context", type=int, default=10000)
    p.add_argument("--behavior", default="empirical",
                   choices=["empirical", "fixed-categorical", "fixed-grid",
                            "malformed-probs"])
    p.add_argument("--probs", default=None,
                   help="comma-separated probabilities for fixed behaviors")
    p.add_argument("--edges", default=None,
                   help="comma-separated bin edges for fixed-grid")
    p.add_argument("--n-classes", type=int, default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            outdir = run_experiment(load_config(args.config),
                                    workers=args.workers,
                                    seed_override=args.seed_override,
                                    out_override=args.out)
            print(outdir)
        elif args.verb == "diag":
            path = run_diagnostics(load_config(args.config),
                                   workers=args.workers,
                                   seed_override=args.seed_override,
                                   out_override=args.out)
            print(path)
        elif args.verb == "theta0":
            path = run_theta0(load_config(args.config),
                              seed_override=args.seed_override,
                              out_override=args.out)
            print(path)
        else:
            from .mockserver import MockBehavior, MockPredictiveServer
            probs = ([float(v) for v in args.probs.split(",")]
                     if args.probs else None)
            edges = ([float(v) for v in args.edges.split(",")]
                     if args.edges else None)
            behavior = MockBehavior(mode=args.behavior, probs=probs,
                                    edges=edges, n_classes=args.n_classes)
            server = MockPredictiveServer(args.host, args.port, behavior,
                                          max_context=args.max_context)
            print(f"mock predictive service on {args.host}:{server.port}")
            server.serve_forever()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0
    except Exception as exc:  # runtime failure; partial artifacts retained
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
