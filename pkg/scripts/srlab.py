#!/usr/bin/env python3
"""Command-line entry point: simulate, pair, train, eval, table1, xspectral, report, ingest, calibrate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

import tracing  # noqa: E402
from acquisition import (  # noqa: E402
    NOISE_LEVEL,
    SIGMA_ALIAS,
    SIGMA_NOALIAS,
    AcquisitionConfig,
    build_synthetic_dataset,
    calibrate,
    parse_config_id,
)
from analysis.report import render_report  # noqa: E402
from eval.run_eval import DEFAULT_TILE, MIN_OVERLAP, evaluate_checkpoint  # noqa: E402
from eval.scoring import format_db, read_report  # noqa: E402
from experiments.alias_shift_table import GRID_NAME, read_grid, run_table1_experiment  # noqa: E402
from experiments.cross_spectral import run_cross_spectral_experiment  # noqa: E402
from ingestion import ingest_directory  # noqa: E402
from pairing import DEFAULT_THRESHOLD, PairingConfig, run_pairing  # noqa: E402
from srnet import PROFILES, param_count, spec_profile  # noqa: E402
from training import TrainConfig, train  # noqa: E402
from validation import DataError, DatasetError, TrainingDivergedError  # noqa: E402

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

logger = logging.getLogger("srlab")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def setup_run(out_dir: Path) -> None:
    """run.log + console logging and trace.jsonl in out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[logging.FileHandler(out_dir / "run.log"), logging.StreamHandler()],
        force=True,
    )
    tracing.init(out_dir)


def _train_cfg(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        batch_size=args.batch,
        iterations=args.iters,
        seed=args.seed,
        crop_size=args.train_crop,
        checkpoint_every=getattr(args, "checkpoint_every", 0),
    )


def cmd_simulate(args: argparse.Namespace) -> None:
    cfg = parse_config_id(
        args.config, noise_level=args.noise, sigma_alias=args.sigma_alias, sigma_noalias=args.sigma_noalias, seed=args.seed
    )
    m = build_synthetic_dataset(args.hr_dir, cfg, args.out, args.crop, args.max_crops, args.seed, workers=args.workers)
    logger.info("%s: %d pairs %s", cfg.config_id, len(m["pairs"]), m["split_counts"])


def cmd_pair(args: argparse.Namespace) -> None:
    cfg = PairingConfig(
        threshold=args.threshold,
        crop=args.crop,
        max_crops=args.max_crops,
        test_fraction=args.test_fraction,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )
    m = run_pairing(args.list, args.out, cfg)
    logger.info("kept %d of %d scenes, %d crops %s", m["kept"], m["scenes"], len(m["pairs"]), m["split_counts"])


def cmd_train(args: argparse.Namespace) -> None:
    bands = [int(b) for b in args.bands.split(",")] if args.bands else None
    spec = spec_profile(args.spec, in_bands=len(bands) if bands else 3)
    logger.info("model %s: %d parameters", args.spec, param_count(spec))
    result = train(args.manifest, spec, _train_cfg(args), args.out, bands=bands)
    if result.history:
        logger.info("final loss %.6f", result.history[-1][1])


def cmd_eval(args: argparse.Namespace) -> None:
    splits = ("train", "val", "test") if args.split == "all" else (args.split,)
    report = evaluate_checkpoint(
        args.ckpt,
        args.manifest,
        splits,
        tile=args.tile,
        overlap=args.overlap,
        samples_dir=Path(args.report).parent / "samples" if args.samples else None,
        n_samples=args.samples,
    )
    report.write(args.report)
    for split in splits:
        s = report.splits[split]
        logger.info("%s: %s dB (bicubic %s dB)", split, format_db(s.mean_psnr), format_db(s.bicubic_psnr))


def cmd_table1(args: argparse.Namespace) -> None:
    base = AcquisitionConfig(False, "none", args.sigma_alias, args.sigma_noalias, args.noise, args.seed)
    grid = run_table1_experiment(
        args.hr_dir,
        args.out,
        base=base,
        spec=spec_profile(args.spec),
        train_cfg=_train_cfg(args),
        crop=args.crop,
        max_crops=args.max_crops,
        seed=args.seed,
    )
    render_report(list(grid.cells.values()), Path(args.out) / "report")


def cmd_xspectral(args: argparse.Namespace) -> None:
    report = run_cross_spectral_experiment(args.manifest, args.out, spec=spec_profile(args.spec), train_cfg=_train_cfg(args))
    logger.info(
        "joint %s dB, ensemble %s dB, gap %s dB",
        format_db(report.joint.mean_psnr),
        format_db(report.ensemble.mean_psnr),
        format_db(report.gap),
    )


def cmd_report(args: argparse.Namespace) -> None:
    src = Path(args.input)
    if (src / GRID_NAME).exists():
        reports = list(read_grid(src).cells.values())
    elif src.is_file():
        reports = [read_report(src)]
    else:
        reports = [read_report(p) for p in sorted(src.rglob("report.json"))]
    if not reports:
        raise DatasetError("no reports found", src)
    render_report(reports, args.out)


def cmd_ingest(args: argparse.Namespace) -> None:
    loaded, skipped = ingest_directory(args.hr_dir, args.out, dry_run=args.dry_run, trim_even=not args.no_trim)
    logger.info("ingested %d images, skipped %d%s", len(loaded), len(skipped), " (dry-run)" if args.dry_run else "")


def cmd_calibrate(args: argparse.Namespace) -> None:
    cfg = AcquisitionConfig(False, "none", args.sigma_alias, args.sigma_noalias)
    result = calibrate(args.hr_dir, cfg)
    print(json.dumps(result, indent=2))


def _add_train_args(p: argparse.ArgumentParser, iters: int) -> None:
    p.add_argument("--spec", choices=sorted(PROFILES), default="tiny")
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-crop", type=int, default=32, help="LR patch size sampled per batch item")


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--max-crops", type=int, default=8)
    p.add_argument("--noise", type=float, default=NOISE_LEVEL)
    p.add_argument("--sigma-alias", type=float, default=SIGMA_ALIAS)
    p.add_argument("--sigma-noalias", type=float, default=SIGMA_NOALIAS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srlab", description="Alias / inter-band shift super-resolution lab")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Build a synthetic LR/HR dataset for one acquisition configuration")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--config", required=True, help="{alias|noalias}:{none|fixed|random}")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="processes simulating HR images in parallel")
    _add_sim_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pair", help="Build a real LR/HR dataset from a pairing list")
    p.add_argument("--list", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--max-crops", type=int, default=20)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("train", help="Train a model on the train split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bands", default=None, help="comma-separated band subset, e.g. 1")
    p.add_argument("--checkpoint-every", type=int, default=0)
    _add_train_args(p, 1000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on a manifest split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    p.add_argument("--report", required=True)
    p.add_argument("--tile", type=int, default=DEFAULT_TILE)
    p.add_argument("--overlap", type=int, default=MIN_OVERLAP)
    p.add_argument("--samples", type=int, default=0, help="write SR rasters for the first N pairs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("table1", help="Six-configuration alias / shift study")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out", required=True)
    _add_sim_args(p)
    _add_train_args(p, 3000)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("xspectral", help="Joint RGB model vs per-band ensemble")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_train_args(p, 3000)
    p.set_defaults(func=cmd_xspectral)

    p = sub.add_parser("report", help="Render CSV, text table and panels from evaluation reports")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ingest", help="Convert HR PNG/RAS1 images to RAS1")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dry-run", action="store_true", help="Read and validate only, no writes")
    p.add_argument("--no-trim", action="store_true", help="Keep odd dimensions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("calibrate", help="Mean alias energy ratio of both blur regimes over a corpus")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--sigma-alias", type=float, default=SIGMA_ALIAS)
    p.add_argument("--sigma-noalias", type=float, default=SIGMA_NOALIAS)
    p.set_defaults(func=cmd_calibrate)
    return parser


def _run_dir(args: argparse.Namespace) -> Path | None:
    if args.command == "eval":
        return Path(args.report).parent
    out = getattr(args, "out", None)
    return Path(out) if out else None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    run_dir = _run_dir(args)
    if run_dir is not None:
        setup_run(run_dir)
    tracing.emit("run_started", "srlab.main", command=args.command, argv=argv if argv is not None else sys.argv[1:])
    try:
        args.func(args)
    except TrainingDivergedError as e:
        logger.error("training diverged: %s", e)
        print(f"srlab: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except DataError as e:
        logger.error("data error: %s", e)
        print(f"srlab: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        logger.error("invalid argument: %s", e)
        print(f"srlab: invalid argument: {e}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        tracing.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
