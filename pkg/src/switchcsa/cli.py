"""Command line: ``price``, ``validate`` and ``oracle``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, InvalidArgument, NumericalFailure, ReportWriteError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _price(args) -> int:
    from .engine import emit_reports, load_config, run_pricing

    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.paths is not None:
        over["paths"] = args.paths
    if args.workers is not None:
        over["workers"] = args.workers
    if over:
        cfg = cfg.with_overrides(**over)
    out = args.out or cfg.output_dir or "switchcsa_out"
    cfg = cfg.with_overrides(output_dir=out)
    result = run_pricing(cfg)
    emit_reports(result, out, emit_plots=args.emit_plots)
    print(f"total {result.total:.6f} +/- {result.total_stderr:.6f}")
    print(f"  regime z part    {result.value_z:.6f}")
    print(f"  regime zeta part {result.value_zeta:.6f}")
    print(f"  clean {result.clean_0:.6f}  bcva {result.bcva_0:.6f}  funding adj {result.funding_adjustment_0:.6f}")
    print(f"  mean switches per path {result.switch_stats['mean_count']:.4f}")
    print(f"reports written to {out}")
    return EXIT_OK


def _validate(args) -> int:
    from .engine import contract_problems, load_config
    from .claim import clean_price
    from .market import simulate_panel
    from .rbsde import check_lipschitz

    cfg = load_config(args.config)
    cfg.csa.check_round_trip()
    cfg.claim.coupon_vector(cfg.grid)
    panel = simulate_panel(cfg.market, cfg.grid, min(cfg.paths, 256), cfg.seed)
    B = panel.bank_account
    checks = {
        "bank_account_starts_at_one": bool(np.all(B[:, 0] == 1.0)),
        "bank_account_positive": bool(np.all(B > 0)),
        "survival_nonincreasing": bool(np.all(np.diff(panel.survival.astype(int), axis=1) <= 0)),
        "tau_is_min": bool(np.array_equal(panel.tau, np.minimum(panel.tau_A, panel.tau_B))),
    }
    clean = clean_price(cfg.claim, panel, cfg.regression)
    for p in contract_problems(panel, clean, cfg.market)[:2]:
        check_lipschitz(p, panel)
    checks["generator_lipschitz"] = True
    for name, ok in checks.items():
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    if not all(checks.values()):
        return EXIT_NUMERICAL
    print("config valid")
    return EXIT_OK


def _oracle(args) -> int:
    from . import oracles
    from .csa import CsaSpec
    from .rbsde import extract_policy, solve_switching_system
    from .regression import RegressionSpec

    if args.case == "american-put":
        v = oracles.binomial_american_put(100.0, 100.0, 1.0, 0.05, 0.2, 2000)
        print(f"american put S0=K=100 r=0.05 sigma=0.2 T=1, 2000-step binomial: {v:.6f}")
    elif args.case == "black-scholes":
        c = float(oracles.black_scholes(100.0, 100.0, 1.0, 0.05, 0.2, "call"))
        d = float(oracles.black_scholes_delta(100.0, 100.0, 1.0, 0.05, 0.2, "call"))
        print(f"european call S0=K=100 r=0.05 sigma=0.2 T=1: price {c:.6f} delta {d:.6f}")
    else:
        toy = oracles.LatticeToy()
        panel = toy.panel()
        pz, pq = toy.problems(panel)
        csa = CsaSpec(cost_z=toy.cost_z, cost_zeta=toy.cost_zeta)
        sz, sq = solve_switching_system(pz, pq, csa, panel, RegressionSpec())
        out = {}
        for name, code, sol in (("z", 1, sz), ("zeta", 0, sq)):
            dp = oracles.lattice_dp(toy, code)
            pol = extract_policy(sz, sq, csa, initial=code)
            out[name] = {
                "dp_value": dp.value,
                "rbsde_value": float(sol.Y[0, 0]),
                "dp_switches": {str(p): s for p, s in dp.switches.items()},
                "rbsde_switches": {str(p): pol.switches(p) for p in range(panel.path_count)},
            }
        print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchcsa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("price", help="run the pricing pipeline and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--emit-plots", action="store_true")
    p.set_defaults(func=_price)
    v = sub.add_parser("validate", help="check a config without pricing")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_validate)
    o = sub.add_parser("oracle", help="print reference values from the independent oracles")
    o.add_argument("--case", required=True, choices=["american-put", "lattice-dp", "black-scholes"])
    o.set_defaults(func=_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidArgument) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ReportWriteError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
