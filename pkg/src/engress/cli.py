"""Command-line front end: simulate, fit, predict, eval, benchmark, oracle.

Exit codes are a stable scripting contract: 0 success, 2 usage or
validation problems, 3 numeric failure (divergence, non-convergence).
All CSV output is UTF-8 with a header row, '.' decimals and full-precision
floats, so repeated runs with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import baselines, engression, evaluate, losses, mlp, optim, oracle, simulate
from .core import Rng
from .errors import EngressError, FormatError, TrainingDiverged

EXIT_USAGE = 2
EXIT_NUMERIC = 3

_GRID_KEYS = {"num_layers", "hidden_dim", "lr", "steps"}


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip representation
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path):
    """Read a numeric CSV with header; returns (columns, (n, d) array)."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CliError(f"{path}: empty file")
            rows = []
            for r, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise CliError(f"{path}:{r}: expected {len(header)} fields, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    bad = next(i for i, v in enumerate(row) if not _is_float(v))
                    raise CliError(
                        f"{path}:{r}: non-numeric value {row[bad]!r} in column {header[bad]!r}"
                    )
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    if not rows:
        raise CliError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def _split_xy(header, data, target_cols=None):
    if target_cols is None:
        target_idx = [i for i, c in enumerate(header) if c.startswith("y")]
        if not target_idx:
            raise CliError("no y* columns found; pass --target-cols")
    else:
        wanted = [c.strip() for c in target_cols.split(",") if c.strip()]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise CliError(f"target columns not in file: {', '.join(missing)}")
        target_idx = [header.index(c) for c in wanted]
    x_idx = [i for i in range(len(header)) if i not in target_idx]
    if not x_idx:
        raise CliError("no covariate columns left after removing targets")
    return data[:, x_idx], data[:, target_idx]


def _parse_loss(args):
    kind = args.loss
    if kind in ("energy", "gaussian", "laplace", "imq"):
        return losses.LossSpec(kind=kind, sigma=args.loss_sigma, c=args.loss_c)
    if kind in ("l1", "l2"):
        return losses.LossSpec(kind=kind)
    raise CliError(f"unsupported loss {kind!r}")


def _noise_from_args(args):
    if args.noise == "uniform":
        return oracle.NoiseDist.uniform(args.eta_max)
    if args.noise == "trunc_gauss":
        return oracle.NoiseDist.truncated_gaussian(args.sd, args.eta_max)
    return oracle.NoiseDist.gaussian(args.sd)


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    setting = simulate.SimSetting(kind=args.setting, noise_sd=args.noise_sd)
    rng = Rng(args.seed)
    x, y, _ = simulate.generate(setting, args.n, rng)
    header = [f"x{i}" for i in range(x.shape[1])] + [f"y{i}" for i in range(y.shape[1])]
    if args.split_q is not None:
        (xtr, ytr), (xte, yte) = simulate.split_at_quantile(x, y, args.split_q, keep=args.keep)
        base = args.out
        stem, dot, ext = base.rpartition(".")
        if not dot:
            stem, ext = base, "csv"
        _write_csv(f"{stem}_train.{ext}", header, np.column_stack([xtr, ytr]))
        _write_csv(f"{stem}_test.{ext}", header, np.column_stack([xte, yte]))
        print(f"wrote {stem}_train.{ext} ({xtr.shape[0]} rows), "
              f"{stem}_test.{ext} ({xte.shape[0]} rows)")
    else:
        _write_csv(args.out, header, np.column_stack([x, y]))
        print(f"wrote {args.out} ({x.shape[0]} rows)")
    return 0


def cmd_fit(args):
    header, data = _read_csv(args.data)
    x, y = _split_xy(header, data, args.target_cols)
    spec = _parse_loss(args)
    net_config = mlp.NetConfig(
        in_dim=x.shape[1], out_dim=y.shape[1],
        hidden_dim=args.hidden, num_layers=args.layers,
        noise_dim=args.noise_dim,
    )
    train_config = optim.TrainConfig(
        steps=args.steps, lr=args.lr, batch_size=args.batch_size,
        m_per_obs=args.m_per_obs, loss=spec, seed=args.seed,
    )
    if spec.distributional:
        model = engression.fit(x, y, train_config=train_config, net_config=net_config)
    else:
        if args.noise_dim != 0:
            raise CliError("pointwise losses train the deterministic baseline; "
                           "pass --noise-dim 0")
        model = baselines.fit_nn_regression(
            x, y, loss=spec.kind, net_config=net_config, train_config=train_config
        )
    with open(args.out_model, "wb") as fh:
        fh.write(model.to_json())
    print(repr(float(model.loss_trace[-1]) if model.loss_trace.size else math.nan))
    return 0


def cmd_predict(args):
    with open(args.model, "rb") as fh:
        model = baselines.load_any_model(fh.read())
    header, data = _read_csv(args.data)
    # files written by `simulate` carry response columns; drop them
    keep = [i for i, c in enumerate(header) if not c.startswith("y")]
    if not keep:
        raise CliError("prediction input has no covariate columns")
    x = data[:, keep]
    rng = Rng(args.seed) if args.seed is not None else None

    is_engression = isinstance(model, engression.EngressionModel)
    if not is_engression and args.type not in ("mean", "median"):
        raise CliError(f"model kind {model.kind!r} supports --type mean|median only")

    if args.type in ("mean", "median") and not is_engression:
        pred = model.predict(x)
        if model.kind == "linear_qr":
            pred = pred[:, [list(model.alphas).index(0.5)]] if 0.5 in model.alphas else pred
        cols = [f"{args.type}{i}" for i in range(pred.shape[1])]
        _write_csv(args.out, cols, pred)
    elif args.type == "mean":
        pred = model.predict_mean(x, nsample=args.nsample, rng=rng)
        _write_csv(args.out, [f"mean{i}" for i in range(pred.shape[1])], pred)
    elif args.type == "median":
        if model.net_config.out_dim == 1:
            pred = model.predict_quantile(x, [0.5], nsample=args.nsample, rng=rng)
            _write_csv(args.out, ["median0"], pred)
        else:
            draws = model.sample_matrix(x, args.nsample, rng=rng)
            pred = np.quantile(draws, 0.5, axis=1)
            _write_csv(args.out, [f"median{i}" for i in range(pred.shape[1])], pred)
    elif args.type == "quantile":
        alphas = [float(a) for a in args.quantiles.split(",") if a.strip()]
        pred = model.predict_quantile(x, alphas, nsample=args.nsample, rng=rng)
        cols = [f"q_{a:g}" for a in alphas]
        _write_csv(args.out, cols, pred)
    elif args.type == "interval":
        pred = model.prediction_interval(x, level=args.level, nsample=args.nsample, rng=rng)
        _write_csv(args.out, ["lower", "upper"], pred)
    elif args.type == "sample":
        draws = model.sample_matrix(x, args.nsample, rng=rng)
        if draws.shape[2] != 1:
            raise CliError("--type sample writes one column per draw; needs k = 1")
        cols = [f"sample_{j}" for j in range(args.nsample)]
        _write_csv(args.out, cols, draws[:, :, 0])
    else:
        raise CliError(f"unknown prediction type {args.type!r}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args):
    pred_header, pred = _read_csv(args.pred)
    truth_header, truth = _read_csv(args.truth)
    if pred.shape[0] != truth.shape[0]:
        raise CliError("pred and truth row counts differ")
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    y_idx = [i for i, c in enumerate(truth_header) if c.startswith("y")]
    if not y_idx:
        raise CliError("truth file needs y* columns")
    y = truth[:, y_idx]

    region_spec = None
    if args.regions is not None:
        try:
            x_max, eta_max = (float(v) for v in args.regions.split(","))
        except ValueError:
            raise CliError("--regions expects 'x_max,eta_max'")
        x_idx = [i for i, c in enumerate(truth_header) if c.startswith("x")]
        if not x_idx:
            raise CliError("--regions needs x* columns in the truth file")
        region_spec = (truth[:, x_idx[0]], x_max, eta_max)

    rows = []
    for metric in metrics:
        if metric in ("l1", "l2"):
            if pred.shape[1] < y.shape[1]:
                raise CliError("pred file has fewer columns than truth targets")
            p = pred[:, : y.shape[1]]
            if region_spec is None:
                diff = p - y
                val = float(np.mean(np.abs(diff))) if metric == "l1" else float(np.mean(diff**2))
                rows.append((metric, "all", val))
            else:
                x, x_max, eta_max = region_spec
                per = evaluate.region_losses(p[:, 0], y[:, 0], x, x_max, eta_max)
                for region, cell in per.items():
                    rows.append((metric, region, None if cell is None else cell[metric]))
        elif metric == "coverage":
            try:
                lo = pred_header.index("lower")
                hi = pred_header.index("upper")
            except ValueError:
                raise CliError("coverage needs 'lower' and 'upper' columns in the pred file")
            rows.append(("coverage", "all", evaluate.coverage(pred[:, [lo, hi]], y[:, 0])))
        elif metric == "crps":
            s_idx = [i for i, c in enumerate(pred_header) if c.startswith("sample_")]
            if not s_idx:
                raise CliError("crps needs sample_* columns in the pred file")
            rows.append(("crps", "all", evaluate.mean_crps(pred[:, s_idx], y[:, 0])))
        else:
            raise CliError(f"unknown metric {metric!r}")
    print("metric,region,value")
    for metric, region, val in rows:
        print(f"{metric},{region},{'' if val is None else _fmt(val)}")
    return 0


def cmd_benchmark(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.grid == "default":
        grid = evaluate.default_hyper_grid()
    elif args.grid == "single":
        grid = None
    else:
        try:
            with open(args.grid, encoding="utf-8") as fh:
                grid = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read grid file: {exc}")
        if not isinstance(grid, list) or not grid:
            raise CliError("grid file must hold a non-empty JSON list of configs")
        for entry in grid:
            unknown = set(entry) - _GRID_KEYS
            if unknown:
                raise CliError(f"unknown grid keys: {sorted(unknown)}")
    setting = simulate.SimSetting(kind=args.setting, noise_sd=args.noise_sd)
    report = evaluate.run_benchmark(
        setting, methods, n_reps=args.reps, master_seed=args.seed,
        n_train=args.n, n_test=args.n_test, hyper_grid=grid,
        cv_select=args.cv, nsample=args.nsample,
    )
    with open(args.out_report, "wb") as fh:
        fh.write(report.to_json())
    csv_path = args.out_report.rsplit(".", 1)[0] + ".csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_csv())
    print(f"wrote {args.out_report} and {csv_path} ({len(report.cells)} cells)")
    return 0


def cmd_oracle(args):
    if args.oracle_cmd == "gains":
        noise = _noise_from_args(args)
        deltas = [float(d) for d in args.delta.split(",")]
        print("delta,u_eng,u_base,gain")
        for delta in deltas:
            if args.family == "median":
                u_eng, u_base, gain = oracle.median_uncertainty_gain(
                    args.lip, args.eta_max, delta
                )
            elif args.family == "mean":
                u_eng, u_base, gain = oracle.mean_uncertainty_gain(args.lip, noise, delta)
            else:
                ell = math.inf if args.ell == "inf" else float(args.ell)
                u_eng, u_base, gain = oracle.dist_uncertainty_gain(
                    args.lip, noise, delta, ell
                )
            print(f"{_fmt(delta)},{_fmt(u_eng)},{_fmt(u_base)},{_fmt(gain)}")
        return 0
    if args.oracle_cmd == "quadratic":
        beta = tuple(float(b) for b in args.beta.split(","))
        if len(beta) != 3:
            raise CliError("--beta expects three comma-separated values")
        noise = _noise_from_args(args)
        out = oracle.quadratic_truth(beta, noise, args.x, alpha=args.alpha)
        for key in ("mean", "median", "quantile"):
            if key in out:
                print(f"{key},{_fmt(out[key])}")
        return 0
    # bounds
    cd_bound = oracle.dkw_cramer_bound(args.support_length, args.confidence, args.n)
    print(f"cramer_bound,{_fmt(cd_bound)}")
    if args.cramer is not None:
        gap = oracle.quantile_gap_bound(args.cramer, args.density_lb)
        print(f"quantile_gap_bound,{_fmt(gap)}")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="engress",
        description="distributional regression via noisy generator networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic data as CSV")
    p.add_argument("--setting", required=True, choices=simulate.ALL_KINDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--split-q", type=float, default=None)
    p.add_argument("--keep", choices=("smaller", "larger"), default="smaller")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="train a model on a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--target-cols", default=None)
    p.add_argument("--loss", default="energy",
                   choices=("energy", "gaussian", "laplace", "imq", "l1", "l2"))
    p.add_argument("--loss-sigma", type=float, default=1.0)
    p.add_argument("--loss-c", type=float, default=1.0)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--noise-dim", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--m-per-obs", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--type", required=True,
                   choices=("mean", "median", "quantile", "sample", "interval"))
    p.add_argument("--quantiles", default="0.1,0.5,0.9")
    p.add_argument("--nsample", type=int, default=512)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metrics", default="l1,l2")
    p.add_argument("--regions", default=None, help="x_max,eta_max")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="seed-replicated method comparison")
    p.add_argument("--setting", required=True, choices=simulate.CURVE_KINDS)
    p.add_argument("--methods", default="engression,nn_l1,nn_l2")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--grid", default="single", help="'single', 'default' or a JSON file")
    p.add_argument("--cv", action="store_true")
    p.add_argument("--nsample", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("oracle", help="closed-form uncertainty/gain formulas")
    osub = p.add_subparsers(dest="oracle_cmd", required=True)

    g = osub.add_parser("gains", help="extrapolation uncertainties and gains")
    g.add_argument("--family", required=True, choices=("median", "mean", "dist"))
    g.add_argument("--lip", type=float, default=1.0, help="Lipschitz bound L")
    g.add_argument("--eta-max", type=float, default=2.0)
    g.add_argument("--delta", required=True, help="comma-separated distances")
    g.add_argument("--ell", default="1", help="Wasserstein order (or 'inf')")
    g.add_argument("--noise", default="uniform", choices=("uniform", "trunc_gauss"))
    g.add_argument("--sd", type=float, default=1.0)
    g.set_defaults(func=cmd_oracle)

    q = osub.add_parser("quadratic", help="true quadratic pre-ANM functionals")
    q.add_argument("--beta", required=True, help="b0,b1,b2")
    q.add_argument("--x", type=float, required=True)
    q.add_argument("--alpha", type=float, default=None)
    q.add_argument("--noise", default="uniform", choices=("uniform", "trunc_gauss", "gauss"))
    q.add_argument("--eta-max", type=float, default=1.0)
    q.add_argument("--sd", type=float, default=1.0)
    q.set_defaults(func=cmd_oracle)

    b = osub.add_parser("bounds", help="DKW/Cramer and quantile-gap bounds")
    b.add_argument("--support-length", type=float, required=True)
    b.add_argument("--confidence", type=float, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--cramer", type=float, default=None)
    b.add_argument("--density-lb", type=float, default=1.0)
    b.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EngressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
