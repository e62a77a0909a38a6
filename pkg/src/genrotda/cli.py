"""Command-line driver for the experiment suite.

Every subcommand writes CSV files with a header row and a fixed column order.
With ``record_runtime = false`` (the default) all outputs are byte-identical
across runs with the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import diagnostics, mmd, netgen
from .config import ConfigError, ExperimentConfig
from .panel import FeaturePanel, aggregate_station_hours, inject_contamination, ingest_trips, make_split
from .pipeline import (ABLATION_FLAGS, ABLATION_METHODS, ROBUSTNESS_METHODS, MethodId, MethodReport,
                       compute_residuals, derive_seed, fit_anchor, run_method)
from .synth import generate_year

log = logging.getLogger("genrotda")

DATA_DIR_ENV = "GENROTDA_DATA_DIR"
SUBCOMMANDS = ("ingest", "synth", "run", "multiyear", "robustness", "ablation", "diagnose",
               "shift-summary")


class DataError(RuntimeError):
    pass


# -- data access ---------------------------------------------------------

def panel_name(year: int, month: int) -> str:
    return f"panel_{year}{month:02d}.csv"


def resolve_data_dir(flag: str | None) -> Path | None:
    if flag:
        return Path(flag)
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def ingest_month(data_dir: Path, year: int, month: int) -> FeaturePanel:
    """Aggregate every ``YYYYMM*.csv`` trip file in ``data_dir`` for one month."""
    files = sorted(p for p in data_dir.glob(f"{year}{month:02d}*.csv") if not p.name.startswith("panel_"))
    if not files:
        raise DataError(f"no trip CSVs matching {data_dir / f'{year}{month:02d}*.csv'}")
    trips, bad = [], 0
    for path in files:
        with open(path, newline="", encoding="utf-8") as fh:
            recs, n_bad = ingest_trips(fh, year, month)
        trips.extend(recs)
        bad += n_bad
    if bad:
        log.warning("%d malformed trip rows skipped for %d-%02d", bad, year, month)
    return aggregate_station_hours(trips)


def load_panel(data_dir: Path | None, year: int, month: int) -> FeaturePanel:
    if data_dir is None:
        raise DataError(f"data = panels needs --data-dir or ${DATA_DIR_ENV}")
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    cached = data_dir / panel_name(year, month)
    if cached.exists():
        return FeaturePanel.from_csv(cached)
    try:
        return ingest_month(data_dir, year, month)
    except DataError:
        raise DataError(f"missing {cached} and no trip CSVs {data_dir / f'{year}{month:02d}*.csv'}") from None


def load_pair(cfg: ExperimentConfig, data_dir: Path | None, src: int, tgt: int):
    if cfg.data == "synthetic":
        sc = cfg.scenario(src, tgt)
        return generate_year(sc, "source"), generate_year(sc, "target")
    return load_panel(data_dir, src, cfg.month), load_panel(data_dir, tgt, cfg.month)


def task_label(src: int, tgt: int) -> str:
    return f"{src}-{tgt}"


# -- output helpers --------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def write_rows(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def report_row(rep: MethodReport, record_runtime: bool) -> list:
    runtime = rep.runtime_s if record_runtime else ""
    return [rep.method, rep.mae, rep.rmse, rep.r2, runtime, rep.seed, rep.task]


def print_table(reports: list[MethodReport]):
    df = pd.DataFrame([{"method": r.method, "MAE": r.mae, "RMSE": r.rmse, "R2": r.r2,
                        "runtime_s": r.runtime_s} for r in reports])
    print(df.to_string(index=False, float_format=lambda x: f"{x:.4f}"))


# -- commands ------------------------------------------------------------------

def run_task(cfg: ExperimentConfig, data_dir, src: int, tgt: int, methods=None,
             contamination: float = 0.0) -> list[MethodReport]:
    source, target = load_pair(cfg, data_dir, src, tgt)
    split = make_split(source, target, cfg.split_config(), cfg.seed)
    if contamination:
        split = inject_contamination(split, contamination, cfg.seed)
    pcfg = cfg.pipeline_config()
    task = task_label(src, tgt)
    return [run_method(m, split, pcfg, cfg.seed, task).report for m in (methods or cfg.method_ids())]


def cmd_ingest(cfg, data_dir, out: Path) -> list[Path]:
    if data_dir is None:
        raise DataError(f"ingest needs --data-dir or ${DATA_DIR_ENV}")
    written = []
    for year in (cfg.source_year, cfg.target_year):
        panel = ingest_month(data_dir, year, cfg.month)
        out.mkdir(parents=True, exist_ok=True)
        path = out / panel_name(year, cfg.month)
        panel.to_csv(path)
        written.append(path)
    return written


def cmd_synth(cfg, out: Path) -> list[Path]:
    sc = cfg.scenario()
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for which, year in (("source", cfg.source_year), ("target", cfg.target_year)):
        path = out / panel_name(year, cfg.month)
        generate_year(sc, which).to_csv(path)
        written.append(path)
    return written


def cmd_run(cfg, data_dir, out: Path) -> Path:
    reports = run_task(cfg, data_dir, cfg.source_year, cfg.target_year)
    print_table(reports)
    path = out / f"run_{task_label(cfg.source_year, cfg.target_year)}.csv"
    return write_rows(path, MethodReport.FIELDS, [report_row(r, cfg.record_runtime) for r in reports])


def cmd_multiyear(cfg, data_dir, out: Path) -> tuple[Path, Path]:
    groups = [("adjacent", t) for t in cfg.adjacent_tasks] + [("two_year", t) for t in cfg.two_year_tasks]
    rows, failed = [], []
    for group, (src, tgt) in groups:
        try:
            reports = run_task(cfg, data_dir, src, tgt)
        except Exception as exc:  # noqa: BLE001 - a failed task is excluded, not fatal
            log.warning("task %s failed and is excluded from averages: %s", task_label(src, tgt), exc)
            failed.append(task_label(src, tgt))
            continue
        rows += [(group, r) for r in reports]
    if not rows:
        raise DataError("every multiyear task failed")
    tasks_path = write_rows(out / "multiyear_tasks.csv", ("group",) + MethodReport.FIELDS,
                            [[g, *report_row(r, cfg.record_runtime)] for g, r in rows])
    df = pd.DataFrame([{"group": g, "method": r.method, "mae": r.mae, "rmse": r.rmse} for g, r in rows])
    summary = []
    for method in dict.fromkeys(df["method"]):
        d = df[df["method"] == method]

        def mean(col, grp=None):
            sel = d if grp is None else d[d["group"] == grp]
            return float(sel[col].mean()) if len(sel) else float("nan")

        summary.append([method, mean("mae", "adjacent"), mean("mae", "two_year"), mean("mae"),
                        mean("rmse"), len(d)])
    summary_path = write_rows(out / "multiyear_summary.csv",
                              ("method", "adjacent_mae", "two_year_mae", "overall_mae", "overall_rmse",
                               "n_tasks"), summary)
    print(pd.DataFrame(summary, columns=["method", "adjacent", "two_year", "overall", "rmse", "n"])
          .to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    if failed:
        print(f"failed tasks: {', '.join(failed)}", file=sys.stderr)
    return tasks_path, summary_path


def cmd_robustness(cfg, data_dir, out: Path) -> tuple[Path, Path]:
    source, target = load_pair(cfg, data_dir, cfg.source_year, cfg.target_year)
    split = make_split(source, target, cfg.split_config(), cfg.seed)
    pcfg = cfg.pipeline_config()
    task = task_label(cfg.source_year, cfg.target_year)
    grid = []
    for ratio in cfg.contamination_ratios:
        cont = inject_contamination(split, ratio, cfg.seed)
        grid.append([ratio] + [run_method(m, cont, pcfg, cfg.seed, task).report.mae for m in ROBUSTNESS_METHODS])
    names = [m.value for m in ROBUSTNESS_METHODS]
    print(pd.DataFrame(grid, columns=["ratio", *names]).to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    grid_path = write_rows(out / "robustness_grid.csv", ("ratio", *names), grid)
    plot_path = write_rows(out / "robustness_plot.csv", ("ratio", "method", "mae"),
                           [[row[0], n, v] for row in grid for n, v in zip(names, row[1:])])
    return grid_path, plot_path


def cmd_ablation(cfg, data_dir, out: Path, contamination: float = 0.0) -> Path:
    reports = run_task(cfg, data_dir, cfg.source_year, cfg.target_year, ABLATION_METHODS, contamination)
    print_table(reports)
    yes = {True: "Yes", False: "No"}
    rows = []
    for r in reports:
        gen, robust = ABLATION_FLAGS[MethodId.parse(r.method)]
        rows.append([r.method, yes[gen], yes[robust], *report_row(r, cfg.record_runtime)[1:]])
    return write_rows(out / "ablation.csv", ("method", "generator", "robust", *MethodReport.FIELDS[1:]), rows)


def diagnose(cfg, data_dir):
    """Train the generator exactly as the generator methods do and compare
    feature clouds before and after."""
    source, target = load_pair(cfg, data_dir, cfg.source_year, cfg.target_year)
    split = make_split(source, target, cfg.split_config(), cfg.seed)
    pcfg = cfg.pipeline_config()
    anchor = fit_anchor(split, pcfg.forest, derive_seed(cfg.seed, "anchor"))
    res = compute_residuals(split, anchor)
    T_s, T_t = split.source_labeled.T, split.target_unlabeled.T
    params, trace, kernel = netgen.fit_generator(
        T_s, res.r_source, T_t, split.target_labeled.T, res.r_target_lab, weights=pcfg.gen_weights,
        epochs=pcfg.gen_epochs, lr=pcfg.gen_lr, seed=derive_seed(cfg.seed, "generator"))
    G_s = netgen.forward(params, T_s)
    diag = diagnostics.alignment_diagnostics(T_s, G_s, T_t)
    extra = {"mmd2_before": mmd.mmd2(T_s, T_t, kernel), "mmd2_after": mmd.mmd2(G_s, T_t, kernel),
             "bandwidth": kernel.bandwidth}
    return diag, extra, trace


def cmd_diagnose(cfg, data_dir, out: Path) -> tuple[Path, Path, Path]:
    diag, extra, trace = diagnose(cfg, data_dir)
    rows = diag.summary_rows() + sorted(extra.items())
    for k, v in rows:
        print(f"{k:26s} {v:.6f}")
    m = write_rows(out / "diagnose_metrics.csv", ("metric", "value"), rows)
    pts = diag.points_frame()
    p = write_rows(out / "diagnose_pca_points.csv", ("group", "pc1", "pc2"), pts.itertuples(index=False))
    t = out / "generator_trace.csv"
    trace.to_csv(t)
    return m, p, t


def cmd_shift_summary(cfg, data_dir, out: Path) -> Path:
    source, target = load_pair(cfg, data_dir, cfg.source_year, cfg.target_year)
    table = diagnostics.shift_summary(source, target, cfg.shift_top_k)
    print(f"{len(table)} station-hour cells, mean |diff| = {table['diff'].abs().mean():.4f}")
    return write_rows(out / "shift_summary.csv", tuple(table.columns), table.itertuples(index=False))


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--data-dir", help=f"panel/trip CSV directory (else ${DATA_DIR_ENV})")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--methods", help="comma-separated method ids")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="genrotda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "ablation":
            sp.add_argument("--contamination", type=float, default=0.0,
                            help="contaminate the unlabeled pool before the grid")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.methods:
        changes["methods"] = tuple(MethodId.parse(m).value for m in args.methods.split(",") if m.strip())
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        data_dir = resolve_data_dir(args.data_dir)
        out = Path(args.out)
        start = time.perf_counter()
        if args.command == "ingest":
            paths = cmd_ingest(cfg, data_dir, out)
        elif args.command == "synth":
            paths = cmd_synth(cfg, out)
        elif args.command == "run":
            paths = cmd_run(cfg, data_dir, out)
        elif args.command == "multiyear":
            paths = cmd_multiyear(cfg, data_dir, out)
        elif args.command == "robustness":
            paths = cmd_robustness(cfg, data_dir, out)
        elif args.command == "ablation":
            paths = cmd_ablation(cfg, data_dir, out, args.contamination)
        elif args.command == "diagnose":
            paths = cmd_diagnose(cfg, data_dir, out)
        else:
            paths = cmd_shift_summary(cfg, data_dir, out)
    except (ConfigError, DataError, ValueError, RuntimeError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"genrotda {args.command}: error: {msg}", file=sys.stderr)
        return 1
    for p in paths if isinstance(paths, (list, tuple)) else [paths]:
        print(f"wrote {p}")
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
