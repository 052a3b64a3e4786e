"""Command-line front end: ``mmfs synth | run | eval | bayes``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .data import SyntheticSpec, bayes_error_mc, generate_train_test
from .evaluation import ConstraintError
from .experiment import evaluate_mask
from .formats import (
    ConfigError,
    DataFormatError,
    ExperimentConfig,
    load_experiment_config,
    load_multiview_csv,
    read_mask_file,
    table_rows,
    write_experiment_config,
    write_json,
    write_mask_file,
    write_multiview_csv,
)
from .search import NicheConfig, NicheError, run_mmfs_ga

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("mmfsga")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfs", description="Multi-view multi-objective feature selection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic train/test replicates as CSV")
    p.add_argument("--task", choices=["binary", "four_class"], required=True)
    p.add_argument("--replicates", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first replicate seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--view-dim", type=_positive_int, default=500, help="columns per view")

    p = sub.add_parser("run", help="run the feature selection search")
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--task", choices=["binary", "four_class"], help="synthetic task when no config is given")
    p.add_argument("--data-seed", type=int, help="synthetic replicate seed (overrides the config)")
    p.add_argument("--seed", type=int, help="search seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--preset", choices=["paper", "desk"], help="parameter preset (overrides the config)")
    p.add_argument("--threads", type=_positive_int, help="max concurrent niche workers (env MMFS_THREADS)")

    p = sub.add_parser("eval", help="evaluate a mask file on held-out data")
    p.add_argument("--mask", required=True, help="mask file written by 'run'")
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--test", required=True, help="test manifest")
    p.add_argument("--out", help="directory for evaluation.txt / evaluation.csv")

    p = sub.add_parser("bayes", help="Monte Carlo Bayes error of the synthetic benchmark")
    p.add_argument("--task", choices=["binary", "four_class"], required=True)
    p.add_argument("--views", default="A,B", help="comma-separated informative views (A, B)")
    p.add_argument("--samples", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    return parser


# --------------------------------------------------------------------------
# Subcommands


def cmd_synth(task: str, replicates: int, seed: int, out_dir, view_dim: int = 500) -> list[Path]:
    """Write ``replicates`` train/test pairs; returns the train manifests."""
    out = Path(out_dir)
    spec = SyntheticSpec.for_task(task, view_dim=view_dim)
    manifests = []
    for r in range(replicates):
        s = seed + r
        train, test = generate_train_test(spec, s)
        root = out / f"{task}_seed{s}"
        manifests.append(write_multiview_csv(train, root / "train"))
        write_multiview_csv(test, root / "test")
    return manifests


def _load_data(cfg: ExperimentConfig):
    if cfg.task is not None:
        spec = SyntheticSpec.for_task(cfg.task, view_dim=cfg.view_dim)
        return generate_train_test(spec, cfg.data_seed)
    train = load_multiview_csv(cfg.manifest)
    test = load_multiview_csv(cfg.test_manifest) if cfg.test_manifest else None
    if test is not None:
        if test.view_names != train.view_names or test.feature_names != train.feature_names:
            raise DataFormatError("test manifest views/features do not match the training manifest")
        if test.class_names != train.class_names:
            raise DataFormatError(f"test classes {test.class_names} differ from training classes {train.class_names}")
    return train, test


def _trajectory_rows(result) -> list[list]:
    rows = []
    for nr in result.niches:
        for ss in nr.solution_sets:
            for t in ss.trajectory:
                rows.append(
                    ["ivfs", nr.niche_id, result.view_names[ss.view_index], t["generation"],
                     t["best_f1"], t["best_f2"], t["mean_f1"], t["similarity"]]
                )
        for t in nr.bvfs.trajectory:
            rows.append(["bvfs", nr.niche_id, "", t["generation"], t["best_f1"], t["best_f2"], t["mean_f1"], ""])
    return rows


def cmd_run(cfg: ExperimentConfig) -> dict:
    """Run the search, write every artefact, return a summary dict."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = _load_data(cfg)
    result = run_mmfs_ga(train, cfg.search, progress=log.info)

    write_mask_file(out / "mask.txt", train, result.best_mask)
    write_experiment_config(cfg, out / "config.ini")
    report = result.to_dict()
    write_json(out / "report.json", report)
    with open(out / "trajectories.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "niche", "view", "generation", "best_f1", "best_f2", "mean_f1", "similarity"])
        w.writerows(_trajectory_rows(result))
    summary = {
        "cv_error": result.best_f1,
        "n_selected": result.best_f2,
        "best_niche": result.best_niche,
        "selected_per_view": result.selected_per_view(),
    }
    if test is not None:
        evaluation, _ = evaluate_mask(train, test, result.best_mask)
        (out / "evaluation.txt").write_text(evaluation.to_text(), encoding="utf-8")
        (out / "evaluation.csv").write_text(evaluation.to_csv(), encoding="utf-8")
        label = f"Experiment {cfg.data_seed + 1}" if cfg.task else "Experiment 1"
        (out / "table_row.csv").write_text(
            table_rows([evaluation.balanced_accuracy], [label]).split("\nMean")[0] + "\n", encoding="utf-8"
        )
        summary["test_balanced_accuracy"] = evaluation.balanced_accuracy
        summary["test_auc"] = evaluation.auc
    metadata = {
        "version": __version__,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "data_seed": cfg.data_seed if cfg.task else None,
        "preset": cfg.preset,
        "config": cfg.as_dict(),
        "n_evaluations": result.n_evaluations,
        "summary": summary,
    }
    write_json(out / "metadata.json", metadata)
    return summary


def cmd_eval(mask_file, train_manifest, test_manifest, out_dir=None):
    """Score a saved mask: train on ``train_manifest``, test on ``test_manifest``."""
    train = load_multiview_csv(train_manifest)
    test = load_multiview_csv(test_manifest)
    if test.view_names != train.view_names or test.feature_names != train.feature_names:
        raise DataFormatError("test manifest views/features do not match the training manifest")
    mask = read_mask_file(mask_file, train)
    report, _ = evaluate_mask(train, test, mask)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.txt").write_text(report.to_text(), encoding="utf-8")
        (out / "evaluation.csv").write_text(report.to_csv(), encoding="utf-8")
    return report


def cmd_bayes(task: str, views: Sequence[str], n_samples: int, seed: int) -> tuple[float, float]:
    """Bayes error and its Monte Carlo standard error."""
    spec = SyntheticSpec.for_task(task)
    p = bayes_error_mc(spec, views, n_samples, seed)
    return p, math.sqrt(p * (1 - p) / n_samples)


# --------------------------------------------------------------------------
# Entry point


def _dispatch(args) -> int:
    if args.command == "synth":
        manifests = cmd_synth(args.task, args.replicates, args.seed, args.out, args.view_dim)
        for m in manifests:
            print(m)
        return EXIT_OK
    if args.command == "run":
        if args.config is None and args.task is None:
            raise ConfigError("run needs --config or --task")
        if args.config is not None and args.task is not None:
            raise ConfigError("give either --config or --task, not both")
        if args.config is not None:
            cfg = load_experiment_config(args.config, args.preset, args.seed, args.threads, args.out)
        else:
            cfg = _config_from_task(args)
        if args.data_seed is not None:
            if cfg.task is None:
                raise ConfigError("--data-seed only applies to synthetic tasks")
            cfg.data_seed = args.data_seed
        summary = cmd_run(cfg)
        for key, value in summary.items():
            print(f"{key} = {value}")
        return EXIT_OK
    if args.command == "eval":
        report = cmd_eval(args.mask, args.train, args.test, args.out)
        sys.stdout.write(report.to_text())
        return EXIT_OK
    if args.command == "bayes":
        views = [v.strip() for v in args.views.split(",") if v.strip()]
        if not views:
            raise ConfigError("--views needs at least one view")
        p, se = cmd_bayes(args.task, views, args.samples, args.seed)
        print(f"bayes_error = {p:.6f}")
        print(f"std_error = {se:.6f}")
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def _config_from_task(args) -> ExperimentConfig:
    preset = args.preset or "desk"
    overrides = {"threads": args.threads} if args.threads else {}
    search = NicheConfig.preset(preset, args.seed or 0, **overrides)
    return ExperimentConfig(search=search, preset=preset, task=args.task, out_dir=args.out or "mmfs_out")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstraintError as exc:
        print(f"data error: {exc} (a feature mask must select at least one feature)", file=sys.stderr)
        return EXIT_DATA
    except (DataFormatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NicheError as exc:
        print(f"runtime error: {exc} [niche {exc.niche_id}, phase {exc.phase}]", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
