"""Metrics and experiment orchestration.

Point-prediction losses split by covariate region (in-support, the
recoverable band just beyond the boundary, and the full out-of-support
range), interval coverage, CRPS, log-log rate slopes, the
non-uniqueness spread of degenerate regressions, and the seed-replicated
benchmark that compares engression against the baselines on a synthetic
setting.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines, engression, losses, mlp, optim, simulate
from .core import Rng
from .errors import DomainError, ShapeError, TrainingDiverged

REGIONS = ("in", "band", "out")
METHODS = ("engression", "nn_l1", "nn_l2", "lin_ols", "lin_qr")


def region_masks(x, x_max, eta_max):
    """Boolean masks for the in-support / band / out-of-support regions.

    ``band`` is [x_max, x_max + eta_max], the range on which the true
    curve stays recoverable; ``out`` is everything beyond x_max.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    return {
        "in": x <= x_max,
        "band": (x >= x_max) & (x <= x_max + eta_max),
        "out": x > x_max,
    }


def region_losses(pred, truth, x, x_max, eta_max):
    """Per-region L1/L2 losses of predictions against the truth.

    Returns {region: {"l1", "l2", "n"}}; a region with no points is
    reported as None rather than zero.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    if not pred.shape == truth.shape == x.shape:
        raise ShapeError("pred, truth and x must have matching lengths")
    out = {}
    for name, mask in region_masks(x, x_max, eta_max).items():
        if not mask.any():
            out[name] = None
            continue
        diff = pred[mask] - truth[mask]
        out[name] = {
            "l1": float(np.mean(np.abs(diff))),
            "l2": float(np.mean(diff**2)),
            "n": int(mask.sum()),
        }
    return out


def coverage(intervals, y):
    """Fraction of observations inside their [lower, upper] interval."""
    intervals = np.asarray(intervals, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if intervals.ndim != 2 or intervals.shape[1] != 2 or intervals.shape[0] != y.size:
        raise ShapeError("intervals must be (n, 2) matching y")
    return float(np.mean((intervals[:, 0] <= y) & (y <= intervals[:, 1])))


def rate_slope(ns, errors):
    """Least-squares slope of log(error) against log(n)."""
    ns = np.asarray(ns, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if ns.shape != errors.shape or ns.size < 2:
        raise DomainError("need matching lists of at least two sample sizes")
    if np.any(errors <= 0) or np.any(ns <= 0):
        raise DomainError("rate slopes need positive sample sizes and errors")
    slope, _ = np.polyfit(np.log(ns), np.log(errors), 1)
    return float(slope)


def mean_crps(sample_matrix, y):
    """Average CRPS of per-row predictive samples against observations."""
    y = np.asarray(y, dtype=np.float64).ravel()
    return float(np.mean([losses.crps(sample_matrix[i], y[i]) for i in range(y.size)]))


def regression_nonuniqueness_spread(x, y, x_eval, spec, n_inits, rng,
                                    steps=3000, lr=0.05, init_scale=3.0):
    """Spread of over-parameterized quadratic fits across random restarts.

    Fits ``n_inits`` quadratic models on features (1, x, x^2) from
    random initializations and reports the ranges (max - min over
    restarts) of their predictions at the training points and at
    ``x_eval``.  On a two-point design the minimizer set is a line, so
    the out-of-support range dwarfs the in-support one.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    feats = np.column_stack([np.ones(x.size), x, x * x])
    train_points = np.unique(x)
    eval_feats = np.column_stack(
        [np.ones(train_points.size + 1),
         np.append(train_points, x_eval),
         np.append(train_points, x_eval) ** 2]
    )
    preds = np.empty((n_inits, eval_feats.shape[0]))
    for i, sub in enumerate(rng.split(n_inits)):
        w0 = init_scale * sub.normal(size=3)
        w, _ = baselines.fit_linear_model(feats, y, spec, w_init=w0, steps=steps, lr=lr)
        preds[i] = eval_feats @ w[:, 0]
    in_range = float(np.max(preds[:, :-1].max(axis=0) - preds[:, :-1].min(axis=0)))
    out_range = float(preds[:, -1].max() - preds[:, -1].min())
    return {"in_range": in_range, "out_range": out_range, "predictions": preds}


# --- benchmark ---------------------------------------------------------------


def default_hyper_grid():
    """The standard sweep: layers/width x learning rate x steps (18 combos)."""
    grid = []
    for num_layers, hidden in ((2, 100), (3, 10), (3, 100)):
        for lr in (1e-3, 1e-2):
            for steps in (500, 1000, 3000):
                grid.append({"num_layers": num_layers, "hidden_dim": hidden,
                             "lr": lr, "steps": steps})
    return grid


@dataclass
class BenchmarkCell:
    method: str
    seed: int
    hyper: dict
    region: str
    n_points: int = 0
    l1: float = None
    l2: float = None
    crps: float = None
    coverage: float = None
    diverged: bool = False

    def to_row(self):
        return {
            "method": self.method,
            "seed": self.seed,
            "hyper": json.dumps(self.hyper, sort_keys=True),
            "region": self.region,
            "n_points": self.n_points,
            "l1": self.l1,
            "l2": self.l2,
            "crps": self.crps,
            "coverage": self.coverage,
            "diverged": self.diverged,
        }


@dataclass
class BenchmarkReport:
    setting_kind: str
    n_train: int
    master_seed: int
    cells: list = field(default_factory=list)
    selected_hyper: dict = field(default_factory=dict)

    def values(self, method, region, metric):
        out = [
            getattr(c, metric)
            for c in self.cells
            if c.method == method and c.region == region
            and not c.diverged and getattr(c, metric) is not None
        ]
        return np.asarray(out, dtype=np.float64)

    def aggregate(self, method, region, metric):
        vals = self.values(method, region, metric)
        if vals.size == 0:
            return None
        q25, q50, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
        return {"median": float(q50), "iqr": float(q75 - q25), "n": int(vals.size)}

    def to_json(self):
        payload = {
            "setting": self.setting_kind,
            "n_train": self.n_train,
            "master_seed": self.master_seed,
            "selected_hyper": self.selected_hyper,
            "cells": [c.to_row() for c in self.cells],
        }
        return json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")

    def to_csv(self):
        cols = ["method", "seed", "hyper", "region", "n_points",
                "l1", "l2", "crps", "coverage", "diverged"]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for cell in self.cells:
            writer.writerow(cell.to_row())
        return buf.getvalue()


def _net_config(hyper, noise_dim):
    return mlp.NetConfig(
        in_dim=1, out_dim=1,
        hidden_dim=hyper.get("hidden_dim", 100),
        num_layers=hyper.get("num_layers", 3),
        noise_dim=noise_dim,
    )


def _train_config(hyper, loss):
    return optim.TrainConfig(
        steps=hyper.get("steps", 1000), lr=hyper.get("lr", 1e-2), loss=loss
    )


def _fit_method(method, hyper, x, y, rng):
    if method == "engression":
        return engression.fit(
            x, y,
            train_config=_train_config(hyper, losses.LossSpec("energy")),
            net_config=_net_config(hyper, noise_dim=100),
            rng=rng,
        )
    if method in ("nn_l1", "nn_l2"):
        return baselines.fit_nn_regression(
            x, y, loss=method[-2:],
            net_config=_net_config(hyper, noise_dim=0),
            train_config=_train_config(hyper, losses.LossSpec(method[-2:])),
            rng=rng,
        )
    if method == "lin_ols":
        return baselines.fit_linear_ols(x, y)
    if method == "lin_qr":
        return baselines.fit_linear_quantile(x, y, alphas=[0.025, 0.5, 0.975])
    raise DomainError(f"unknown method {method!r}")


def _method_predictions(method, model, x_test, nsample, rng):
    """(median, mean, per-row samples or None, interval or None)."""
    if method == "engression":
        draws = model.sample_matrix(x_test, nsample, rng=rng)[:, :, 0]
        med = np.quantile(draws, 0.5, axis=1)
        mean = draws.mean(axis=1)
        interval = np.quantile(draws, [0.025, 0.975], axis=1).T
        return med, mean, draws, interval
    if method == "lin_qr":
        preds = model.predict(x_test)  # columns follow model.alphas
        med = preds[:, 1]
        return med, med, preds, preds[:, [0, 2]]
    pred = model.predict(x_test)[:, 0]
    return pred, pred, None, None


def _validation_metric(method, model, x_val, y_val, rng):
    """Each method is validated by its own training criterion."""
    if method == "engression":
        draws = model.sample_matrix(x_val, 64, rng=rng)
        return losses.kernel_loss_batch(y_val, draws, losses.LossSpec("energy"))
    pred = model.predict(x_val)
    if method == "nn_l2" or method == "lin_ols":
        return losses.l2_loss(y_val, pred)[0]
    if method == "nn_l1":
        return losses.l1_loss(y_val, pred)[0]
    # lin_qr: mean pinball over its levels
    total = 0.0
    for j, alpha in enumerate(model.alphas):
        total += losses.pinball_loss(y_val[:, 0], pred[:, j], float(alpha))
    return total / model.alphas.size


def _cv_select(method, grid, x, y, folds, rng):
    """10-fold CV over the hyper grid with the method's own metric."""
    n = x.shape[0]
    perm = rng.permutation(n)
    fold_ids = np.arange(n) % folds
    scores = np.zeros(len(grid))
    for f in range(folds):
        val_idx = perm[fold_ids == f]
        tr_idx = perm[fold_ids != f]
        for h, hyper in enumerate(grid):
            fit_rng, val_rng = rng.split(2)
            model = _fit_method(method, hyper, x[tr_idx], y[tr_idx], fit_rng)
            scores[h] += _validation_metric(method, model, x[val_idx], y[val_idx], val_rng)
    return grid[int(np.argmin(scores))]


def _run_cell(args):
    (setting, method, hyper, rep, seed, n_train, n_test, nsample, x_hi) = args
    rng = Rng(seed)
    data_rng, fit_rng, test_rng, pred_rng = rng.split(4)
    x, y, truth = simulate.generate(setting, n_train, data_rng)
    lo = setting.x_range[0]
    x_test, y_test = simulate.generate_on_range(setting, n_test, test_rng, (lo, x_hi))

    cells = []
    try:
        model = _fit_method(method, hyper, x, y, fit_rng)
    except TrainingDiverged:
        return [
            BenchmarkCell(method=method, seed=rep, hyper=hyper, region=r, diverged=True)
            for r in REGIONS
        ]

    med, mean, draws, interval = _method_predictions(method, model, x_test, nsample, pred_rng)
    xt = x_test[:, 0]
    true_med = truth.median(xt)
    true_mean = truth.mean(xt)
    masks = region_masks(xt, setting.x_max, setting.effective_eta_max)
    for region in REGIONS:
        mask = masks[region]
        cell = BenchmarkCell(method=method, seed=rep, hyper=hyper, region=region,
                             n_points=int(mask.sum()))
        if mask.any():
            cell.l1 = float(np.mean(np.abs(med[mask] - true_med[mask])))
            cell.l2 = float(np.mean((mean[mask] - true_mean[mask]) ** 2))
            if draws is not None:
                cell.crps = mean_crps(draws[mask], y_test[mask, 0])
            if interval is not None:
                cell.coverage = coverage(interval[mask], y_test[mask, 0])
        cells.append(cell)
    return cells


def run_benchmark(setting, methods, n_reps, master_seed=0, n_train=2000,
                  n_test=2000, hyper_grid=None, cv_select=False, cv_folds=10,
                  nsample=128, x_extend=2.0):
    """Train every (method, hyper, seed) on a synthetic setting and score it.

    Test covariates are uniform from the lower support edge out to
    ``x_max + x_extend * eta_max``; cells carry per-region L1 (median
    estimation), L2 (mean estimation), CRPS and interval coverage.  With
    ``cv_select`` each method first picks its hyper-parameters by k-fold
    cross-validation under its own training metric.  Failed runs are
    recorded as diverged cells, never aborting the benchmark.
    Parallelism across cells is bounded by the ENGRESS_THREADS
    environment variable.
    """
    if setting.kind not in simulate.CURVE_KINDS:
        raise DomainError("benchmarks run on the curve settings")
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}")
    if hyper_grid is None:
        hyper_grid = [{"num_layers": 3, "hidden_dim": 100, "lr": 1e-2, "steps": 1000}]
    x_hi = setting.x_max + x_extend * setting.effective_eta_max

    report = BenchmarkReport(setting_kind=setting.kind, n_train=n_train,
                             master_seed=master_seed)
    master = Rng(master_seed)

    chosen = {}
    for method in methods:
        if cv_select and method in ("engression", "nn_l1", "nn_l2") and len(hyper_grid) > 1:
            cv_rng, data_rng = master.split(2)
            x, y, _ = simulate.generate(setting, n_train, data_rng)
            chosen[method] = _cv_select(method, hyper_grid, x, y, cv_folds, cv_rng)
        else:
            chosen[method] = None
    report.selected_hyper = {
        m: (h if h is not None else "all") for m, h in chosen.items()
    }

    tasks = []
    for method in methods:
        grid = [chosen[method]] if chosen[method] is not None else hyper_grid
        if method in ("lin_ols", "lin_qr"):
            grid = [{}]
        for hyper in grid:
            for rep in range(n_reps):
                seed = int(master.integers(0, 2**63 - 1))
                tasks.append((setting, method, hyper, rep, seed,
                              n_train, n_test, nsample, x_hi))

    workers = int(os.environ.get("ENGRESS_THREADS", "1"))
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    for cells in results:
        report.cells.extend(cells)
    return report
