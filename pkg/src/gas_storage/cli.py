"""Command-line entry point: ``gas-storage <subcommand> [options]``.

Subcommands write into ``--out``: JSON reports and checkpoints, CSV vectors,
and PNG figures (skipped with ``--no-plots``). Set GAS_STORAGE_NUM_THREADS to
cap BLAS threads; results do not depend on it.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from gas_storage import config as cfgmod
from gas_storage import lsmc, plotting, sfmod, smod
from gas_storage import policy as pol
from gas_storage.market import (
    ScenarioError,
    ScenarioSet,
    export_csv,
    gen_forward_curves,
    gen_spot_paths,
    ingest_csv,
)
from gas_storage.report import (
    PnLReport,
    write_fan_csv,
    write_histogram_csv,
    write_pnl_csv,
    write_stats_table,
)
from gas_storage.storage import InfeasibleDayError, check_feasibility
from gas_storage.training import TrainingDiverged, config_dict

logger = logging.getLogger("gas_storage")

THREADS_ENV = "GAS_STORAGE_NUM_THREADS"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--preset", choices=cfgmod.PRESETS, help="start from a full-scale preset")
    p.add_argument("--seed", type=int, help="scenario and training seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", choices=cfgmod.MODELS)
    p.add_argument("--alpha", type=float, help="forward liquidity cap (sfmod)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gas-storage", description="Gas storage trading strategies.")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("simulate", help="write the scenario set as CSV")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the spot-only or spot-and-forward network")
    _common(p)
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", help="least-squares Monte-Carlo benchmark")
    _common(p)
    p.add_argument("--all-scenarios", action="store_true", help="fit on every scenario, not only training rows")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("evaluate", help="report of a saved checkpoint or LSMC table")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side statistics of saved reports")
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def resolve_config(args) -> cfgmod.RunConfig:
    doc = {}
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise cfgmod.ConfigError([f"{args.config}: {e}"]) from None
        if not isinstance(doc, dict):
            raise cfgmod.ConfigError([f"{args.config}: top level must be a mapping"])
    base = cfgmod.preset(args.preset) if args.preset else None
    if base is not None and "model" not in doc:
        doc["model"] = base.model
    if args.model:
        doc["model"] = args.model
    if args.out:
        doc["out"] = args.out
    train = dict(doc.get("train") or {})
    if args.seed is not None:
        doc["seed"] = args.seed
        train["seed"] = args.seed
    if args.alpha is not None:
        if doc.get("model", base.model if base else "smod") != "sfmod":
            raise cfgmod.ConfigError(["--alpha: only applies to --model sfmod"])
        train["alpha"] = args.alpha
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    if train:
        doc["train"] = train
    if getattr(args, "all_scenarios", False):
        doc["lsmc"] = {**(doc.get("lsmc") or {}), "fit_all_scenarios": True}
    return cfgmod.parse(doc, base)


def build_scenarios(cfg: cfgmod.RunConfig, forwards: bool) -> ScenarioSet:
    sc = cfg.scenarios
    if sc.csv is not None:
        s = ingest_csv(sc.csv, sc.month_starts, sc.csv_header)
    else:
        s = gen_spot_paths(sc.market, sc.n_scenarios, sc.n_days, cfg.seed, cfg.month_starts)
    if forwards:
        s = gen_forward_curves(s, sc.market)
    return s


def _emit(report: PnLReport, out: Path, plots: bool) -> dict:
    name = report.method
    paths = {
        "report": out / f"report_{name}.json",
        "pnl": out / f"pnl_{name}.csv",
        "histogram": out / f"histogram_{name}.csv",
    }
    report.write(paths["report"])
    write_pnl_csv(report, paths["pnl"])
    write_histogram_csv(report, paths["histogram"])
    if report.storage is not None:
        paths["fill"] = out / f"fill_{name}.csv"
        write_fan_csv(report, paths["fill"])
    if plots:
        plotting.pnl_histogram([report], out / f"pnl_{name}.png")
        if report.storage is not None:
            plotting.fill_fan(report, out / f"fill_{name}.png")
    s = report.stats
    logger.info("%s: mean %.2f median %.2f std %.2f (n=%d)", name, s["mean"], s["median"], s["std"], s["n"])
    return paths


def _feasibility(spec, ledger, what: str) -> None:
    feas = check_feasibility(spec, ledger)
    if not feas["ok"]:
        logger.warning("%s: constraint breaches %s", what, {k: v for k, v in feas.items() if k != "ok"})


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(cfg)
    s = build_scenarios(cfg, forwards=cfg.model == "sfmod")
    export_csv(s, out / "scenarios.csv")
    if s.monthly_forwards is not None:
        front, _ = s.front_month_series()
        with open(out / "front_month.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in front:
                w.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])
    if not args.no_plots:
        plotting.spot_scenarios(s.spot, out / "spot_scenarios.png")
    logger.info("wrote %d x %d scenarios to %s", s.n_scenarios, s.n_days, out)
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if cfg.model == "lsmc":
        raise cfgmod.ConfigError(["model: lsmc is not trained; use the benchmark subcommand"])
    out = _outdir(cfg)
    s = build_scenarios(cfg, forwards=cfg.model == "sfmod")
    spec = cfg.storage_spec(s.n_days, s.month_starts)
    every = max(1, cfg.train.epochs // 20)

    def progress(rec):
        if rec["epoch"] % every == 0 or rec["epoch"] == cfg.train.epochs:
            logger.info(
                "epoch %d train loss %.6f val loss %s mean P&L %.0f",
                rec["epoch"], rec["train_loss"],
                "n/a" if rec["val_loss"] is None else f"{rec['val_loss']:.6f}", rec["mean_pnl"],
            )

    trainer = sfmod.train_sfmod if cfg.model == "sfmod" else smod.train_smod
    try:
        result = trainer(cfg.train, s, spec, progress=progress)
    except TrainingDiverged as e:
        pol.save_checkpoint(e.last_good, out / "checkpoint_last_good.json", {"model": cfg.model})
        (out / "train_log.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in e.log))
        raise
    meta = {
        "model": cfg.model,
        "alpha": getattr(cfg.train, "alpha", 0.0),
        "best_epoch": result.best_epoch,
        "numeraire": result.numeraire,
        "train": config_dict(cfg.train),
        "incidents": result.incidents,
    }
    pol.save_checkpoint(result.params, out / "checkpoint.json", meta)
    (out / "train_log.jsonl").write_text(result.log_lines())
    for msg in result.incidents:
        logger.warning("training incident: %s", msg)
    evaluator = sfmod.evaluate if cfg.model == "sfmod" else smod.evaluate
    report, ledger = evaluator(result.params, s, spec, cfg.model)
    _feasibility(spec, ledger, cfg.model)
    _emit(report, out, not args.no_plots)
    if not args.no_plots:
        plotting.training_curve(result.log, out / "training_curve.png")
    return 0


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(cfg)
    s = build_scenarios(cfg, forwards=False)
    spec = cfg.storage_spec(s.n_days, s.month_starts)
    if cfg.lsmc.fit_all_scenarios:
        rows = np.arange(s.n_scenarios)
    else:
        rows = np.arange(min(cfg.train.n_train, s.n_scenarios))
    table, _, _ = lsmc.lsmc_solve(s.spot[rows], spec, cfg.lsmc.core())
    for msg in table.incidents:
        logger.warning("regression incident: %s", msg)
    table.save(out / "lsmc_table.json")
    report, ledger = lsmc.lsmc_evaluate(table, s.spot, spec)
    _feasibility(spec, ledger, "lsmc")
    _emit(report, out, not args.no_plots)
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(cfg)
    doc = json.loads(Path(args.checkpoint).read_text())
    if doc.get("format") == lsmc.TABLE_FORMAT:
        table = lsmc.LsmcPolicy.load(args.checkpoint)
        s = build_scenarios(cfg, forwards=False)
        spec = cfg.storage_spec(s.n_days, s.month_starts)
        report, ledger = lsmc.lsmc_evaluate(table, s.spot, spec)
    else:
        params, meta = pol.load_checkpoint(args.checkpoint)
        model = meta.get("model", "smod")
        s = build_scenarios(cfg, forwards=model == "sfmod")
        spec = cfg.storage_spec(s.n_days, s.month_starts)
        if model == "sfmod":
            spec = spec.with_(alpha=float(meta.get("alpha", 0.0)))
            report, ledger = sfmod.evaluate(params, s, spec, model)
        else:
            report, ledger = smod.evaluate(params, s, spec, model)
    _feasibility(spec, ledger, report.method)
    _emit(report, out, not args.no_plots)
    return 0


def cmd_compare(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    reports = [PnLReport.read(p) for p in args.reports]
    names = [r.method for r in reports]
    if len(set(names)) != len(names):
        # disambiguate repeated methods by file stem
        for r, p in zip(reports, args.reports):
            r.method = f"{r.method}:{Path(p).stem}"
    write_stats_table(reports, out / "compare.csv")
    if not args.no_plots:
        plotting.pnl_histogram(reports, out / "compare_histogram.png")
        plotting.compare_boxplot(reports, out / "compare_boxplot.png")
    for r in reports:
        s = r.stats
        logger.info("%-16s mean %14.2f median %14.2f std %14.2f", r.method, s["mean"], s["median"], s["std"])
    return 0


@contextlib.contextmanager
def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(n)):
        yield


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        with _thread_limit():
            return args.func(args)
    except cfgmod.ConfigError as e:
        print(f"gas-storage: {e}", file=sys.stderr)
        return 2
    except (ScenarioError, InfeasibleDayError, TrainingDiverged, ValueError, OSError) as e:
        print(f"gas-storage: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
