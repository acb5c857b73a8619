"""Command line entry point: ``dimy sim|backend|bf ...``.

Exit status is 0 on success and 2 when a scenario is invalid or an attack
verdict fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .bloom import BloomError, BloomFilter, fpr_estimate

EXIT_FAIL = 2


def _load_json(source):
    """Parse inline JSON when the argument looks like an object, else read a file."""
    if source.lstrip().startswith("{"):
        return json.loads(source)
    with open(source) as f:
        return json.load(f)


def cmd_sim_run(args) -> int:
    from .simnet import Scenario, ScenarioInvalid, report_bytes, run

    try:
        data = _load_json(args.scenario)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.http:
            data["backend"] = "http"
        scenario = Scenario.from_dict(data)
    except (OSError, ValueError, ScenarioInvalid) as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_FAIL
    out = report_bytes(run(scenario, parallel=args.parallel))
    if args.out:
        with open(args.out, "wb") as f:
            f.write(out)
    else:
        sys.stdout.write(out.decode())
    return 0


def cmd_sim_attack(args) -> int:
    from .simnet import UnknownAttack, run_attack

    params = _load_json(args.params) if args.params else {}
    try:
        verdict = run_attack(args.name, params)
    except (UnknownAttack, TypeError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(verdict.to_dict(), indent=2, sort_keys=True))
    return 0 if verdict.passed else EXIT_FAIL


def cmd_sim_fpr(args) -> int:
    from .simnet import fpr_experiment

    curve = fpr_experiment(args.m, args.k, args.n_max, args.trials, seed=args.seed)
    if args.csv:
        print("n,probes,positives,empirical,predicted")
        for p in curve:
            print(f"{p['n']},{p['probes']},{p['positives']},{p['empirical']:.6e},"
                  f"{p['predicted']:.6e}")
    else:
        print(json.dumps(curve, indent=2))
    return 0


def cmd_backend_serve(args) -> int:
    from .backend.http import serve
    from .backend.ledger import Ledger, MatchPolicy

    with open(args.ha_creds) as f:
        creds = [line.strip() for line in f if line.strip() and not line.startswith("#")]
    policy = MatchPolicy(mode=args.mode, theta=args.theta, c=args.c)
    serve(Ledger(creds, policy), host=args.host, port=args.port)
    return 0


def cmd_bf_inspect(args) -> int:
    try:
        with open(args.file, "rb") as f:
            bf = BloomFilter.deserialize(f.read())
    except (OSError, BloomError) as e:
        print(f"cannot read filter: {e}", file=sys.stderr)
        return EXIT_FAIL
    pop = bf.popcount()
    fill = pop / bf.params.m
    info = {
        "m": bf.params.m,
        "k": bf.params.k,
        "role": bf.role.name,
        "popcount": pop,
        "fill_ratio": fill,
        "fpr_at_fill": fill ** bf.params.k,
    }
    if fill < 1.0:
        # invert the expected fill 1 - exp(-k n / m) to estimate the item count
        n_est = -bf.params.m / bf.params.k * math.log(1.0 - fill)
        info["estimated_items"] = round(n_est)
        info["analytic_fpr"] = fpr_estimate(bf.params, round(n_est))
    print(json.dumps(info, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dimy")
    parser.add_argument("-v", "--verbose", action="store_true")
    top = parser.add_subparsers(dest="group", required=True)

    sim = top.add_parser("sim").add_subparsers(dest="cmd", required=True)
    p = sim.add_parser("run", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--http", action="store_true", help="talk to the ledger over its HTTP API")
    p.set_defaults(func=cmd_sim_run)

    p = sim.add_parser("attack", help="run an attack scenario")
    p.add_argument("--name", required=True)
    p.add_argument("--params", help="inline JSON object or path to a JSON file")
    p.set_defaults(func=cmd_sim_attack)

    p = sim.add_parser("fpr", help="Monte Carlo false-positive curve")
    p.add_argument("--m", type=int, default=800_000)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n-max", type=int, default=21_000)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_sim_fpr)

    backend = top.add_parser("backend").add_subparsers(dest="cmd", required=True)
    p = backend.add_parser("serve")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ha-creds", required=True)
    p.add_argument("--mode", default="fixed", choices=["fixed", "statistical"])
    p.add_argument("--theta", type=int, default=3)
    p.add_argument("--c", type=float, default=4.0)
    p.set_defaults(func=cmd_backend_serve)

    bf = top.add_parser("bf").add_subparsers(dest="cmd", required=True)
    p = bf.add_parser("inspect")
    p.add_argument("file")
    p.set_defaults(func=cmd_bf_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
