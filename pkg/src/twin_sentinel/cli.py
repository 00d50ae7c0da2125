"""Command-line entry point: ``twin-sentinel <subcommand> --config FILE ...``.

Exit status 0 on success, 1 on configuration or usage errors, 2 when a run
diverges or a numerical routine fails to converge.
"""
import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .estimation import save_residual_model
from .mathkit import ConvergenceError
from .plant import DivergenceError
from .runner import build_scenario, compare, default_out_dir, emit_outputs, run_scenario
from .sge import benign_strategy_profile, stealthy_strategy_profile, verify_pooling_pbne

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("twin_sentinel")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="twin-sentinel", description="Digital-twin defense against stealthy estimation attacks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (default: $TWIN_SENTINEL_OUT or ./twin_sentinel_out)")

    p = sub.add_parser("simulate", help="run one case and write trajectory.csv, summary.txt, plotdata/")
    common(p)
    p.add_argument("--case", choices=("none", "naive", "stealthy"))
    p.add_argument("--steps", type=int)

    p = sub.add_parser("calibrate", help="compute the residual covariance and save it")
    common(p)
    p = sub.add_parser("bound", help="write the loss-bound report")
    common(p)
    p = sub.add_parser("pbne", help="write the pooling-equilibrium report")
    common(p)
    p = sub.add_parser("compare", help="matched-seed benign/naive/stealthy runs with an MSE table")
    common(p)
    p.add_argument("--steps", type=int)
    return parser


def _out_dir(args, cfg):
    if args.out:
        return Path(args.out)
    if cfg.out_dir:
        return Path(cfg.out_dir)
    return default_out_dir()


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def _simulate(args, cfg):
    result = run_scenario(cfg)
    out = emit_outputs(result, _out_dir(args, cfg))
    print(f"wrote {out / 'trajectory.csv'}")
    if result.log.error:
        print(f"run diverged: {result.log.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _calibrate(args, cfg):
    sc = build_scenario(cfg)
    path = _out_dir(args, cfg) / "sigma_phi.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_residual_model(path, sc.detector.residual, scenario=sc.name, seed=cfg.seed)
    print(f"wrote {path}")
    return EXIT_OK


def _bound(args, cfg):
    result_bound = run_bound(cfg)
    _write(_out_dir(args, cfg) / "bound.txt", result_bound.to_text())
    return EXIT_OK


def run_bound(cfg):
    from .runner import bound_report

    return bound_report(build_scenario(cfg))


def _pbne(args, cfg):
    sc = build_scenario(cfg)
    det = sc.detector
    beta = float(sc.receiver.Q1[0, 0] / (sc.receiver.Q0[0, 0] + sc.receiver.Q1[0, 0]))
    report = verify_pooling_pbne(benign_strategy_profile(det), stealthy_strategy_profile(det),
                                 (0.1, 0.5, cfg.prior, 0.9), beta)
    _write(_out_dir(args, cfg) / "pbne.txt", report.to_text())
    return EXIT_OK


def _compare(args, cfg):
    comp = compare(cfg)
    _write(_out_dir(args, cfg) / "compare.txt", comp.to_text())
    if any(r.log.error for r in comp.results.values()):
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"simulate": _simulate, "calibrate": _calibrate, "bound": _bound, "pbne": _pbne, "compare": _compare}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, case=getattr(args, "case", None), steps=getattr(args, "steps", None))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
