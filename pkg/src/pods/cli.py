"""Command-line pipeline: ``pods <subcommand> --config run.cfg [flags]``.

Each subcommand writes its results as a JSON fragment under
``<out>/fragments``; ``report`` merges whatever fragments exist into the
optimizer and portfolio tables, the confusion matrices and ``report.json``.
Exit codes: 0 success, 1 other library error, 2 usage, 3 data, 4 solver.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier, frontier, lp_reduction, market_data, sparsifier
from .errors import DataError, IncompleteBundle, PodsError, SolverError
from .qp import bench_factorization

COMMANDS = ("ingest", "frontier", "sparsify", "reduce-lp", "reduce-lstm", "bench", "report")
EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3, 4

OPTIMIZER_COLUMNS = ("method", "level", "n_lambda", "total_iterations", "avg_iterations",
                     "avg_time", "avg_tpi", "matrix_size")
PORTFOLIO_COLUMNS = ("method", "level", "assets", "objective", "risk", "expected_return", "actual_return")
METHOD_ORDER = ("baseline", "sparsify", "reduce-lp", "reduce-lstm")


class UsageError(PodsError):
    pass


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _segments(text):
    """``"0:1:121,1:2:61,...,200:max:81"`` -> segment tuples."""
    out = []
    for part in str(text).split(","):
        a, b, k = part.strip().split(":")
        out.append((float(a), None if b == "max" else float(b), int(k)))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    data: str = ""
    out: str = "pods-out"
    seed: int = 0
    split: float = 0.75
    eps: float = 1e-8
    tol: float = 1e-8
    targets: tuple = (0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
    repeats: int = 20
    schedule: tuple = frontier.DEFAULT_SEGMENTS
    synth_assets: int = 100
    synth_days: int = 500
    hidden: int = 150
    epochs: int = 60
    batch_size: int = 187
    learning_rate: float = 2.5e-4
    l2: float = 1e-5
    bench_dense: int = 2000
    bench_sparse: int = 10000
    bench_sparsity: float = 0.99
    bench_reps: int = 100
    force_mask: str = ""

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise UsageError("split must lie in (0, 1)")
        if min(self.eps, self.tol) <= 0 or self.repeats < 1:
            raise UsageError("tolerances and repeats must be positive")
        if list(self.targets) != sorted(self.targets):
            raise UsageError("targets must be sorted")
        if self.force_mask not in ("", "all"):
            raise UsageError("--force-mask accepts only 'all'")

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f for f in dataclasses.fields(cls)}
        parsed = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise UsageError(f"unknown config key {key!r}")
            default = kinds[key].default
            try:
                if key == "targets":
                    parsed[key] = _floats(raw)
                elif key == "schedule":
                    parsed[key] = _segments(raw)
                elif isinstance(default, bool):
                    parsed[key] = str(raw).lower() in ("1", "true", "yes")
                else:
                    parsed[key] = type(default)(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
        return cls(**parsed)


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    prices: market_data.PriceMatrix = None
    train: market_data.ReturnMatrix = None
    history: market_data.ReturnMatrix = None
    realized: np.ndarray = None
    moments: market_data.MomentSet = None
    schedule: frontier.LambdaSchedule = None
    max_lambda: float = 0.0
    extras: dict = field(default_factory=dict)


def load_data(cfg: RunConfig):
    if cfg.data:
        return market_data.load_prices(cfg.data)
    return market_data.synth_prices(cfg.synth_assets, cfg.synth_days, seed=market_data.subseed(cfg.seed, "market_data"))


def prepare(cfg: RunConfig, out: Path) -> Context:
    """Prices -> train/test split -> test moments -> lambda schedule."""
    ctx = Context(cfg, out)
    ctx.prices = load_data(cfg)
    x = market_data.compute_returns(ctx.prices)
    ctx.train, test = market_data.split(x, cfg.split)
    ctx.history, ctx.realized = market_data.evaluation_window(test)
    ctx.moments = market_data.moments(ctx.history)
    ctx.max_lambda = frontier.find_max_lambda(ctx.moments, eps=cfg.eps)
    ctx.schedule = frontier.lambda_schedule(ctx.max_lambda, cfg.schedule, fallback=True)
    return ctx


def _run_frontier(ctx, m, label, method, level, risk_sigma=None):
    f = frontier.trace_frontier(m, ctx.schedule, repeats=ctx.cfg.repeats, tol=ctx.cfg.tol)
    realized = ctx.realized
    if m.tickers != ctx.moments.tickers:
        idx = [ctx.moments.tickers.index(t) for t in m.tickers]
        realized = realized[idx]
    rep = frontier.evaluate(f, realized, risk_sigma=risk_sigma, label=label)
    return f, {"method": method, "level": level, **rep.as_dict()}


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fragment(ctx, name, obj):
    _write_json(ctx.out / "fragments" / f"{name}.json", obj)


def _heatmap(f: frontier.FrontierResult, tol=1e-6):
    return [[repr(lam), *(int(b) for b in row > tol)] for lam, row in zip(f.lambdas, f.weights)]


def cmd_ingest(cfg, out):
    p = load_data(cfg)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.data:
        market_data.write_prices(p, out / "prices.csv")
    x = market_data.compute_returns(p)
    market_data.moments(x)  # surfaces degenerate assets early
    _write_json(out / "fragments" / "ingest.json", {
        "fingerprint": p.fingerprint(),
        "n_assets": len(p.tickers),
        "n_days": len(p.dates),
        "first_date": p.dates[0],
        "last_date": p.dates[-1],
        "source": cfg.data or "synthetic",
    })


def cmd_frontier(cfg, out):
    ctx = prepare(cfg, out)
    f, row = _run_frontier(ctx, ctx.moments, "full", "baseline", "0%")
    _fragment(ctx, "frontier", {
        "max_lambda": ctx.max_lambda,
        "rows": [row],
        "tickers": list(f.tickers),
        "frontier": _frontier_rows(f, ctx.realized),
        "heatmap": _heatmap(f),
    })


def _frontier_rows(f, realized):
    actual = f.weights @ realized
    return [
        [repr(r.lam), repr(r.portfolio.objective), repr(r.portfolio.risk),
         repr(r.portfolio.expected_return), repr(float(a)), r.stats.iterations]
        for r, a in zip(f.records, actual)
    ]


def _level_label(x):
    return f"{round(100 * x, 6):g}%"


def cmd_sparsify(cfg, out):
    ctx = prepare(cfg, out)
    m = ctx.moments
    sw = sparsifier.sweep(m.sigma, m.theta)
    levels = sparsifier.select_levels(sw, m.sigma, m.theta, cfg.targets)
    rows = []
    for target, lv in zip(cfg.targets, levels):
        _, row = _run_frontier(ctx, m.with_sigma(lv.matrix), f"tau={lv.tau!r}", "sparsify",
                               _level_label(target), risk_sigma=m.sigma)
        row["extra"] = {"tau": lv.tau, "sparsity": lv.sparsity, "psd": lv.psd}
        rows.append(row)
    _fragment(ctx, "sparsify", {
        "rows": rows,
        "sweep": [[r.tau, r.sparsity_raw, r.psd_raw, r.sparsity_completed] for r in sw.rows],
    })


def _reduced_run(ctx, method, mask, actual):
    m = market_data.reduce_universe(ctx.moments, mask)
    _, row = _run_frontier(ctx, m, method, method, "reduced")
    conf = classifier.confusion(mask, actual)
    _fragment(ctx, method, {"rows": [row], "confusion": conf.as_dict(), "kept": mask.count})


def _test_inclusion(ctx):
    f = frontier.trace_frontier(ctx.moments, ctx.schedule, tol=ctx.cfg.tol)
    return frontier.asset_inclusion(f)


def cmd_reduce_lp(cfg, out):
    ctx = prepare(cfg, out)
    if cfg.force_mask == "all":
        mask = market_data.AssetMask.ones(ctx.moments.tickers)
    else:
        g = lp_reduction.parametric_frontier(lp_reduction.build_lp(ctx.train))
        mask = lp_reduction.predict_mask(g)
    _reduced_run(ctx, "reduce-lp", mask, _test_inclusion(ctx))


def cmd_reduce_lstm(cfg, out):
    ctx = prepare(cfg, out)
    actual = _test_inclusion(ctx)
    if cfg.force_mask == "all":
        mask = market_data.AssetMask.ones(ctx.moments.tickers)
    else:
        train_m = market_data.moments(ctx.train)
        ml = frontier.find_max_lambda(train_m, eps=cfg.eps)
        labels = frontier.asset_inclusion(frontier.trace_frontier(
            train_m, frontier.lambda_schedule(ml, cfg.schedule, fallback=True), tol=cfg.tol))
        tc = classifier.TrainConfig(
            learning_rate=cfg.learning_rate, l2=cfg.l2, max_epochs=cfg.epochs,
            batch_size=cfg.batch_size, hidden=cfg.hidden,
            seed=market_data.subseed(cfg.seed, "classifier") % 2**32,
        )
        res = classifier.train(ctx.train, labels, tc)
        out.mkdir(parents=True, exist_ok=True)
        res.loss_curve_csv(out / "loss_curve.csv")
        classifier.save_params(res.params, out / "lstm.params")
        mask = classifier.predict_mask(res.params, ctx.history)
    _reduced_run(ctx, "reduce-lstm", mask, actual)


def cmd_bench(cfg, out):
    rep = bench_factorization(cfg.bench_dense, cfg.bench_sparse, cfg.bench_sparsity, cfg.bench_reps,
                              seed=market_data.subseed(cfg.seed, "bench") % 2**32)
    _write_json(out / "fragments" / "bench.json", rep.as_dict())


def load_bundle(out: Path):
    frag = {}
    d = Path(out) / "fragments"
    if d.is_dir():
        for p in sorted(d.glob("*.json")):
            frag[p.stem] = json.loads(p.read_text(encoding="utf-8"))
    return frag


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_plots(bundle, outdir, plots=("frontier", "heatmap", "sweep")):
    """Write plot-ready CSVs; a plot whose fragment is absent raises ``IncompleteBundle``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for plot in plots:
        if plot in ("frontier", "heatmap"):
            src = bundle.get("frontier")
            if src is None:
                raise IncompleteBundle(f"{plot} plot needs the frontier fragment")
            if plot == "frontier":
                _write_csv(outdir / "frontier.csv",
                           ["lambda", "objective", "risk", "expected_return", "actual_return", "iterations"],
                           src["frontier"])
            else:
                _write_csv(outdir / "heatmap.csv", ["lambda", *src["tickers"]], src["heatmap"])
        elif plot == "sweep":
            src = bundle.get("sparsify")
            if src is None:
                raise IncompleteBundle("sweep plot needs the sparsify fragment")
            _write_csv(outdir / "sweep.csv", ["tau", "sparsity_raw", "psd_raw", "sparsity_completed"],
                       [[repr(t), repr(a), "" if p is None else int(p), repr(c)] for t, a, p, c in src["sweep"]])
        else:
            raise ValueError(f"unknown plot {plot!r}")
        written.append(outdir / f"{plot}.csv")
    return written


def performance_rows(bundle):
    rows = []
    for name in ("frontier", "sparsify", "reduce-lp", "reduce-lstm"):
        rows.extend(bundle.get(name, {}).get("rows", []))
    return rows


def cmd_report(cfg, out):
    bundle = load_bundle(out)
    rows = performance_rows(bundle)
    if not rows and "bench" not in bundle:
        raise IncompleteBundle(f"no fragments under {out / 'fragments'}")
    _write_csv(out / "optimizer.csv", OPTIMIZER_COLUMNS,
               [[r["method"], r["level"], r["n_lambda"], r["total_iterations"], repr(r["avg_iterations"]),
                 repr(r["avg_time"]), repr(r["avg_tpi"]), r["matrix_size"]] for r in rows])
    _write_csv(out / "portfolio.csv", PORTFOLIO_COLUMNS,
               [[r["method"], r["level"], r["asset_count"], repr(r["objective"]), repr(r["risk"]),
                 repr(r["expected_return"]), repr(r["actual_return"])] for r in rows])
    conf = {k: bundle[k]["confusion"] for k in ("reduce-lp", "reduce-lstm") if k in bundle}
    _write_json(out / "confusion.json", conf)
    plots = [p for p, need in (("frontier", "frontier"), ("heatmap", "frontier"), ("sweep", "sparsify"))
             if need in bundle]
    emit_plots(bundle, out, plots)
    _write_json(out / "report.json", {
        "performance": rows,
        "confusion": conf,
        "bench": bundle.get("bench"),
        "ingest": bundle.get("ingest"),
        "max_lambda": bundle.get("frontier", {}).get("max_lambda"),
    })


HANDLERS = {
    "ingest": cmd_ingest,
    "frontier": cmd_frontier,
    "sparsify": cmd_sparsify,
    "reduce-lp": cmd_reduce_lp,
    "reduce-lstm": cmd_reduce_lstm,
    "bench": cmd_bench,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    ap = _Parser(prog="pods", description="Sparse and reduced portfolio optimization experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value file; flags override its entries")
    ap.add_argument("--data", help="price CSV (date column then one column per ticker)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--targets", help="comma separated sparsity targets")
    ap.add_argument("--repeats", type=int)
    ap.add_argument("--force-mask", dest="force_mask", choices=("all",))
    return ap


def config_from_args(ns) -> RunConfig:
    values = read_config(ns.config) if ns.config else {}
    for key in ("data", "out", "seed", "targets", "repeats", "force_mask"):
        v = getattr(ns, key)
        if v is not None:
            values[key] = v
    return RunConfig.from_mapping(values)


def run(command, cfg: RunConfig):
    if command not in HANDLERS:
        raise UsageError(f"unknown subcommand {command!r}")
    out = Path(cfg.out)
    HANDLERS[command](cfg, out)
    return load_bundle(out)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    cmd = argv[0] if argv else "pods"
    try:
        ns = build_parser().parse_args(argv)
        cmd = ns.command
        run(cmd, config_from_args(ns))
    except UsageError as exc:
        print(f"pods: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"pods {cmd}: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"pods {cmd}: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PodsError, OSError) as exc:
        print(f"pods {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
