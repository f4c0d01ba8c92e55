"""Command-line interface: ``symnlf {train,predict,evaluate,cv,synth}``.

Exit codes: 0 success, 1 usage error, 2 I/O or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .cg import NumericalError
from .evaluation import DataCaseSpec, generate_synthetic, rmse, run_data_case
from .model import Model, ModelConfig
from .network import NetworkFormatError, load_edge_list, scale_weights, split_edges, write_split
from .trainer import StepControl, train_first_order, train_second_order

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "SYMNLF_SEED"

CV_CSV_HELP = """\
cv CSV columns: optimizer, repeat (index or 'mean'), rmse (test RMSE in the
original weight scale; mean over repeats on the aggregate row), rmse_std
(sample standard deviation, aggregate row only), [time_ms with --timings],
stop_reason, iterations."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--d", type=int, default=8, help="total columns per node (1 bias + d-1 factors)")
    g.add_argument("--lambda", dest="lam", type=float, default=0.05, help="regularization weight")
    g.add_argument("--mu", type=float, default=1.0, help="initial damping")
    g.add_argument("--cg-tol", type=float, default=0.1, help="CG relative residual tolerance")
    g.add_argument("--cg-max-iters", type=int, default=50, help="CG iteration cap")
    g.add_argument("--outer-max-iters", type=int, default=500, help="outer iteration cap")
    g.add_argument("--plateau-delta", type=float, default=1e-5, help="objective change threshold")
    g.add_argument("--plateau-window", type=int, default=10,
                   help="consecutive sub-threshold iterations before stopping")
    g.add_argument("--init-range", type=float, default=1.0,
                   help="initial parameters uniform on (-r, r)")
    g.add_argument("--exact-reg-curvature", action="store_true", default=False,
                   help="use the exact second derivative of the penalty term")
    s = p.add_argument_group("step control")
    s.add_argument("--backtrack-factor", type=float, default=0.5, help="step shrink factor")
    s.add_argument("--max-backtracks", type=int, default=20, help="step halvings per iteration")
    s.add_argument("--fixed-mu", action="store_true", default=False,
                   help="keep mu constant instead of adapting it")
    s.add_argument("--mu-raise", type=float, default=1.5, help="mu multiplier on poor steps")
    s.add_argument("--mu-drop", type=float, default=1.5, help="mu divisor on good steps")
    s.add_argument("--rho-low", type=float, default=0.25, help="reduction ratio below which mu rises")
    s.add_argument("--rho-high", type=float, default=0.75, help="reduction ratio above which mu drops")
    s.add_argument("--grad-tol", type=float, default=1e-8, help="stop when max |gradient| <= this")
    s.add_argument("--learning-rate", type=float, default=0.1,
                   help="initial rate of the first-order optimizer")


def _add_data_flags(p, train_fraction):
    g = p.add_argument_group("data")
    g.add_argument("--input", required=True, help="edge-list file ('u i w' per line)")
    g.add_argument("--scale", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                   help="map weights linearly onto [LO, HI] before training")
    g.add_argument("--drop-self-loops", action="store_true", default=False,
                   help="drop self-loops instead of rejecting the file")
    g.add_argument("--train-fraction", type=float, default=train_fraction,
                   help="fraction of edges used for training (rest is test)")
    g.add_argument("--validation-fraction", type=float, default=0.1,
                   help="fraction of the training edges held out for validation")


def _add_common(p):
    p.add_argument("--config", default=None, help="file of key=value lines; flags override it")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for repeats")
    p.add_argument("-v", "--verbose", action="store_true", default=False, help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="symnlf", formatter_class=fmt,
                     description="Symmetric non-negative latent factor models for "
                                 "undirected weighted networks.",
                     epilog=f"Exit codes: 0 success, 1 usage error, 2 I/O or input error, "
                            f"3 numeric failure. --seed defaults to ${SEED_ENV}, else 0.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", formatter_class=fmt, help="train a model on an edge list")
    _add_common(p)
    _add_data_flags(p, train_fraction=0.8)
    _add_model_flags(p)
    p.add_argument("--optimizer", choices=["second-order", "first-order"], default="second-order")
    p.add_argument("--model-out", required=True, help="model file to write")
    p.add_argument("--report-out", default=None, help="per-iteration report file")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl", help="report format")
    p.add_argument("--split-prefix", default=None,
                   help="also write PREFIX.{train,validation,test}.txt")
    p.add_argument("--timings", action="store_true", default=False,
                   help="include wall-clock times in outputs")

    p = sub.add_parser("predict", formatter_class=fmt, help="predict weights for node pairs")
    _add_common(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--queries", required=True, help="file of 'u i' pairs")
    p.add_argument("--output", default=None, help="output file (default stdout)")

    p = sub.add_parser("evaluate", formatter_class=fmt, help="RMSE of a model on an edge list")
    _add_common(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help="test edge list")

    p = sub.add_parser("cv", formatter_class=fmt, epilog=CV_CSV_HELP,
                       help="repeated split/train/test evaluation")
    _add_common(p)
    _add_data_flags(p, train_fraction=0.2)
    _add_model_flags(p)
    p.add_argument("--repeats", type=int, default=10, help="number of repeats")
    p.add_argument("--name", default="case", help="data case label")
    p.add_argument("--compare", action="store_true", default=False,
                   help="also run the first-order optimizer")
    p.add_argument("--csv-out", default=None, help="CSV file (default stdout)")
    p.add_argument("--summary-out", default=None, help="JSON summary file")
    p.add_argument("--timings", action="store_true", default=False,
                   help="include wall-clock times in outputs")

    p = sub.add_parser("synth", formatter_class=fmt, help="generate a planted synthetic network")
    _add_common(p)
    p.add_argument("--nodes", type=int, default=100, help="node count")
    p.add_argument("--d-true", type=int, default=4, help="planted columns (1 bias + factors)")
    p.add_argument("--density", type=float, default=0.2, help="fraction of node pairs observed")
    p.add_argument("--noise-std", type=float, default=0.0, help="Gaussian weight noise")
    p.add_argument("--output", required=True,
                   help="edge-list file; planted parameters go to OUTPUT.planted.json")
    return parser


def _read_config(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def parse_args(argv) -> argparse.Namespace:
    # first pass only locates the command and --config; required flags may live in the file
    relaxed = build_parser()
    for sub in relaxed._subparsers._group_actions[0].choices.values():
        for action in sub._actions:
            action.required = False
    args = relaxed.parse_args(argv)
    parser = build_parser()
    if args.config is None:
        return parser.parse_args(argv)
    try:
        values = _read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = "lam" if key == "lambda" else key
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for command {args.command}")
        if action.nargs == 0:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            defaults[dest] = low in ("true", "1", "yes")
        elif action.nargs == 2:
            defaults[dest] = [action.type(v) for v in value.split()]
        else:
            defaults[dest] = value
    # required flags may come from the config file
    for dest in defaults:
        actions[dest].required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _model_config(args, seed) -> ModelConfig:
    return ModelConfig(d=args.d, lam=args.lam, mu=args.mu, cg_tolerance=args.cg_tol,
                       cg_max_iters=args.cg_max_iters, outer_max_iters=args.outer_max_iters,
                       plateau_delta=args.plateau_delta, plateau_window=args.plateau_window,
                       init_range=args.init_range, seed=seed,
                       exact_regularization_curvature=args.exact_reg_curvature)


def _step_control(args) -> StepControl:
    return StepControl(backtrack_factor=args.backtrack_factor, max_backtracks=args.max_backtracks,
                       mu_adapt=not args.fixed_mu, mu_raise=args.mu_raise, mu_drop=args.mu_drop,
                       rho_low=args.rho_low, rho_high=args.rho_high, grad_tol=args.grad_tol)


def _load_network(args):
    with open(args.input, encoding="utf-8") as fh:
        net = load_edge_list(fh, self_loops="drop" if args.drop_self_loops else "reject")
    if args.scale is not None:
        net = scale_weights(net, *args.scale)
    return net


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _sub_seed(seed: int, purpose: int) -> int:
    return int(np.random.SeedSequence([seed, purpose]).generate_state(1)[0])


def _load_model(path) -> Model:
    try:
        return Model.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise NetworkFormatError(f"{path}: not a valid model file ({exc})") from None


def cmd_train(args, seed) -> int:
    net = _load_network(args)
    config = _model_config(args, _sub_seed(seed, 1))
    split = split_edges(net, args.train_fraction, args.validation_fraction, seed=_sub_seed(seed, 2))
    if args.split_prefix:
        write_split(split, args.split_prefix)
    if args.optimizer == "second-order":
        model, report = train_second_order(split, config, _step_control(args))
    else:
        model, report = train_first_order(split, config, args.learning_rate, args.grad_tol)
    model.save(args.model_out)
    if args.report_out:
        _write(args.report_out, report.to_text(args.format, args.timings))
    print(f"iterations={report.iterations_run} stop_reason={report.stop_reason} "
          f"test_rmse={rmse(model, split.test)!r}")
    return EXIT_OK


def cmd_predict(args, seed) -> int:
    model = _load_model(args.model)
    out, failures, total = [], 0, 0
    with open(args.queries, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            total += 1
            parts = line.split()
            try:
                if len(parts) < 2:
                    raise KeyError("expected 'u i'")
                a, b = model.node_index(parts[0]), model.node_index(parts[1])
            except KeyError as exc:
                failures += 1
                print(f"line {lineno}: unknown node or bad query: {exc.args[0]!r}", file=sys.stderr)
                continue
            value = float(model.predict([a], [b])[0])
            out.append(f"{parts[0]} {parts[1]} {value!r}\n")
    _write(args.output, "".join(out))
    return EXIT_IO if total and failures == total else EXIT_OK


def cmd_evaluate(args, seed) -> int:
    model = _load_model(args.model)
    with open(args.input, encoding="utf-8") as fh:
        test = load_edge_list(fh, node_count=model.node_count, node_index=model.node_index)
    print(f"rmse={rmse(model, test)!r} edges={test.edge_count}")
    return EXIT_OK


def cmd_cv(args, seed) -> int:
    net = _load_network(args)
    spec = DataCaseSpec(args.name, args.train_fraction, args.repeats, args.validation_fraction)
    config = _model_config(args, seed)
    report = run_data_case(net, spec, config, base_seed=seed, control=_step_control(args),
                           compare=args.compare, learning_rate=args.learning_rate,
                           parallel=args.parallel)
    _write(args.csv_out, report.to_csv(args.timings))
    if args.summary_out:
        _write(args.summary_out, report.summary(args.timings))
    return EXIT_OK


def cmd_synth(args, seed) -> int:
    synth = generate_synthetic(args.nodes, args.d_true, args.density, args.noise_std, seed)
    _write(args.output, synth.network.to_edge_list())
    sidecar = dict(synth.metadata, planted=[float(v) for v in synth.planted])
    _write(args.output + ".planted.json", json.dumps(sidecar, indent=1) + "\n")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "cv": cmd_cv, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        seed = args.seed if args.seed is not None else _default_seed()
    except UsageError as exc:
        print(f"symnlf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, seed)
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"symnlf: error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except NetworkFormatError as exc:
        print(f"symnlf: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, FloatingPointError) as exc:
        print(f"symnlf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"symnlf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
