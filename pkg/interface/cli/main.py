#!/usr/bin/env python3
"""
CLI Interface for UCapsNet colourisation
Provides commands for codebook building, training, colourising, evaluation,
linear probing and the capsule/skip ablation
"""
import sys
import argparse
import logging
from datetime import datetime
from pathlib import Path

# Add the project root to Python path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from domain.model.errors import ColorizationError
from domain.model.network_config import AblationVariant
from domain.model.train_config import LossMode
from domain.service.quantizer import DEFAULT_GAMUT_MODE, GAMUT_MODES, LAMBDA_MIX, SIGMA_PRIOR
from application.service.ablation_runner import AblationRunner
from application.service.codebook_builder import build_codebook_from_dataset, build_codebook_from_folder
from application.service.colorizer import Colorizer
from application.service.dataset_loader import load_dataset
from application.service.evaluator import evaluate_folder
from application.service.linear_probe import linear_probe, load_labelled_folder
from application.service.trainer import Trainer, resume
from infrastructure.config.config import LOG_FORMAT, Config, load_config_file, resolve_configs
from infrastructure.persistence.checkpoint.checkpoint_store import CheckpointStore
from infrastructure.persistence.codebook.codebook_store import load_codebook, save_codebook
from infrastructure.persistence.run.run_directory import RunDirectory

logger = logging.getLogger(__name__)
console = Console()

RUNTIME_ERRORS = (ColorizationError, ValidationError, OSError, ValueError, RuntimeError)


def _fail(action: str, error: Exception) -> int:
    console.print(f"[red]✗ Error {action}: {error}[/red]")
    return 1


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.3f}"


def _run_root_for(checkpoint: Path) -> Path:
    """Run directory owning a checkpoint file"""
    parent = Path(checkpoint).resolve().parent
    return parent.parent if parent.name == 'checkpoints' else parent


def _report_path(args, kind: str) -> Path:
    """--out if given, else the eval/probe report slot of the checkpoint's run"""
    if args.out:
        return Path(args.out)
    with RunDirectory(_run_root_for(args.checkpoint)) as run_dir:
        return run_dir.eval_report_path if kind == 'eval' else run_dir.probe_report_path


def _resolve(args, extra=None):
    file_values = load_config_file(args.config) if getattr(args, 'config', None) else {}
    overrides = dict(extra or {})
    net_cfg, train_cfg = resolve_configs(getattr(args, 'preset', None), file_values, overrides)
    explicit_bins = 'num_bins' in file_values or 'num_bins' in overrides
    return net_cfg, train_cfg, explicit_bins


def build_codebook_cmd(args):
    """Build the colour codebook from a training folder"""
    out = Path(args.out) if args.out else Config.RUN_ROOT / 'codebook.txt'
    console.print(f"Building codebook from {args.data}...")
    try:
        codebook = build_codebook_from_folder(
            args.data, args.image_size, out,
            lambda_mix=args.lambda_mix, sigma_prior=args.sigma_prior, gamut_mode=args.gamut_mode,
        )
    except RUNTIME_ERRORS as e:
        return _fail("building codebook", e)

    console.print(f"[green]✓ Codebook with {codebook.Q} bins written to {out}[/green]")
    console.print(f"  fingerprint {codebook.fingerprint()[:16]}…  "
                  f"weights [{codebook.weights.min():.3f}, {codebook.weights.max():.3f}]")
    return 0


def train_cmd(args):
    """Train UCapsNet on an image folder"""
    try:
        if args.resume:
            return _resume(args)

        net_cfg, train_cfg, explicit_bins = _resolve(args, {
            'data_dir': args.data,
            'epochs': args.epochs,
            'max_steps': args.steps,
            'batch_size': args.batch_size,
            'learning_rate': args.lr,
            'seed': args.seed,
            'image_size': args.image_size,
            'checkpoint_every': args.checkpoint_every,
            'ablation': args.ablation,
            'loss_mode': args.loss,
        })
        run_root = Path(args.run_dir) if args.run_dir else (
            Config.RUN_ROOT / f"{train_cfg.ablation.value}-{datetime.now():%Y%m%d-%H%M%S}")
        dataset = load_dataset(train_cfg.data_dir, train_cfg.image_size)
        dataset.print_summary()

        with RunDirectory(run_root) as run_dir:
            if args.codebook:
                codebook = load_codebook(args.codebook)
            elif run_dir.codebook_path.exists():
                codebook = load_codebook(run_dir.codebook_path)
            else:
                codebook = build_codebook_from_dataset(dataset)
            save_codebook(codebook, run_dir.codebook_path)
            if not explicit_bins:
                net_cfg = net_cfg.with_bins(codebook.Q)

            state = Trainer(train_cfg, net_cfg, codebook, run_dir).train(dataset)
    except RUNTIME_ERRORS as e:
        return _fail("training", e)

    last = state.last
    console.print(f"[green]✓ Training finished at step {state.step} in {run_root}[/green]")
    if last:
        console.print(f"  final l_q {last.l_q:.4f}  l_c {last.l_c:.4f}  total {last.total:.4f}")
    return 0


def _resume(args):
    checkpoint = Path(args.resume)
    bundle = CheckpointStore().load(checkpoint)
    data_dir = args.data or bundle.train_config.data_dir
    dataset = load_dataset(data_dir, bundle.train_config.image_size)
    dataset.print_summary()
    run_root = Path(args.run_dir) if args.run_dir else _run_root_for(checkpoint)
    with RunDirectory(run_root) as run_dir:
        trainer = resume(checkpoint, dataset, run_dir, max_steps=args.steps, epochs=args.epochs)
    console.print(f"[green]✓ Resumed run finished at step {trainer.state.step} in {run_root}[/green]")
    return 0


def colorize_cmd(args):
    """Colourise a file or a folder of images"""
    try:
        colorizer = Colorizer.from_checkpoint(args.checkpoint)
    except RUNTIME_ERRORS as e:
        return _fail("loading checkpoint", e)

    try:
        stats = colorizer.colorize_path(args.input, args.output)
    except RUNTIME_ERRORS as e:
        return _fail("colourising", e)

    console.print(f"[green]✓ {stats['written']} images written to {args.output}[/green]")
    if stats['failed']:
        console.print(f"[yellow]⚠ {stats['failed']} inputs failed[/yellow]")
    return 0 if stats['written'] > 0 else 1


def eval_cmd(args):
    """Compute PSNR over a folder of reference images"""
    try:
        colorizer = Colorizer.from_checkpoint(args.checkpoint)
        report = evaluate_folder(colorizer, args.data)
        out = RunDirectory.write_report(report, _report_path(args, 'eval'))
    except RUNTIME_ERRORS as e:
        return _fail("evaluating", e)

    table = Table(title="PSNR")
    table.add_column("Image")
    table.add_column("PSNR (dB)", justify="right")
    for name, value in zip(report.file_names, report.per_image_psnr):
        table.add_row(name, f"{value:.2f}")
    console.print(table)
    console.print(f"[green]✓ Mean PSNR {report.mean_psnr:.2f} dB over {report.image_count} images "
                  f"({report.skipped} skipped), report at {out}[/green]")
    return 0


def probe_cmd(args):
    """Linear-probe the encoder taps on a labelled folder"""
    try:
        bundle = CheckpointStore().load(args.checkpoint)
        colorizer = Colorizer.from_bundle(bundle)
        size = bundle.network_config.input_size[0]
        data = load_labelled_folder(args.data, size)
        report = linear_probe(colorizer.model, data, epochs=args.epochs, seed=args.seed,
                              test_fraction=args.test_fraction, random_baseline=args.random_baseline)
        out = RunDirectory.write_report(report, _report_path(args, 'probe'))
    except RUNTIME_ERRORS as e:
        return _fail("probing", e)

    table = Table(title="Linear probe" + (" (random features)" if report.random_baseline else ""))
    table.add_column("Tap")
    table.add_column("Pool", justify="right")
    table.add_column("Dim", justify="right")
    table.add_column("Accuracy", justify="right")
    for i, (acc, dim, pool) in enumerate(zip(report.per_layer_accuracy, report.feature_dims,
                                             report.pool_sizes), 1):
        table.add_row(f"D{i}", str(pool), str(dim), f"{acc:.3f}")
    console.print(table)
    console.print(f"[green]✓ Probe report written to {out}[/green]")
    return 0


def ablate_cmd(args):
    """Train and evaluate the four capsule/skip variants"""
    try:
        net_cfg, train_cfg, _ = _resolve(args, {
            'data_dir': args.data,
            'max_steps': args.steps,
            'seed': args.seed,
        })
        runner = AblationRunner(train_cfg, net_cfg, args.out)
        rows = runner.run()
    except RUNTIME_ERRORS as e:
        return _fail("running ablation", e)

    table = Table(title="Ablation")
    for column in ("Variant", "Mean PSNR", "l_q", "l_c", "Status"):
        table.add_column(column)
    for row in rows:
        table.add_row(row.label, _fmt(row.mean_psnr), _fmt(row.final_l_q), _fmt(row.final_l_c), row.status)
    console.print(table)
    console.print(f"[green]✓ Report written to {Path(args.out) / 'ablation_report.csv'}[/green]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="UCapsNet self-supervised colourisation CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Build the codebook from a training folder
  python -m interface.cli.main codebook --data data/train --out runs/codebook.txt

  # Train the full model (desk preset)
  python -m interface.cli.main train --data data/train --run-dir runs/full

  # Train the no-capsules/no-skip baseline on the colour-error loss only
  python -m interface.cli.main train --data data/train --ablation no_caps_no_skip --loss lc

  # Colourise a folder of legacy photos
  python -m interface.cli.main colorize --checkpoint runs/full/checkpoints/latest.ckpt --input old/ --output out/

  # Evaluate, probe and ablate
  python -m interface.cli.main eval --checkpoint runs/full/checkpoints/latest.ckpt --data data/val
  python -m interface.cli.main probe --checkpoint runs/full/checkpoints/latest.ckpt --data data/labelled
  python -m interface.cli.main ablate --data data/train --out runs/ablation --steps 500
        """
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Codebook command
    codebook_parser = subparsers.add_parser("codebook", help="Build the ab codebook from training images")
    codebook_parser.add_argument("--data", type=str, required=True, help="Training image folder")
    codebook_parser.add_argument("--out", type=str, default=None, help="Codebook file (default $UCAPS_RUN_ROOT/codebook.txt)")
    codebook_parser.add_argument("--image-size", type=int, default=64, help="Resize before estimating the prior")
    codebook_parser.add_argument("--lambda-mix", type=float, default=LAMBDA_MIX, help="Uniform mixing for the weights")
    codebook_parser.add_argument("--sigma-prior", type=float, default=SIGMA_PRIOR, help="Prior smoothing width")
    codebook_parser.add_argument("--gamut-mode", type=str, default=DEFAULT_GAMUT_MODE, choices=GAMUT_MODES,
                                 help="In-gamut test on whole cells (default) or bin centres")
    codebook_parser.set_defaults(func=build_codebook_cmd)

    # Train command
    train_parser = subparsers.add_parser("train", help="Train UCapsNet")
    train_parser.add_argument("--data", type=str, required=True, help="Training image folder")
    train_parser.add_argument("--config", type=str, default=None, help="key = value config file")
    train_parser.add_argument("--preset", type=str, default=None, choices=["desk", "paper"], help="Base preset")
    train_parser.add_argument("--ablation", type=str, default=None, choices=[v.value for v in AblationVariant],
                              help="Architecture variant")
    train_parser.add_argument("--loss", type=str, default=None, choices=[m.value for m in LossMode],
                              help="Loss term to optimise")
    train_parser.add_argument("--run-dir", type=str, default=None, help="Run directory")
    train_parser.add_argument("--codebook", type=str, default=None, help="Existing codebook file")
    train_parser.add_argument("--epochs", type=int, default=None, help="Epochs")
    train_parser.add_argument("--steps", type=int, default=None, help="Global step cap")
    train_parser.add_argument("--batch-size", type=int, default=None, help="Batch size")
    train_parser.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    train_parser.add_argument("--seed", type=int, default=None, help="Random seed")
    train_parser.add_argument("--image-size", type=int, default=None, help="Training image side length")
    train_parser.add_argument("--checkpoint-every", type=int, default=None, help="Checkpoint interval in steps")
    train_parser.add_argument("--resume", type=str, default=None, help="Checkpoint to resume from")
    train_parser.set_defaults(func=train_cmd)

    # Colorize command
    colorize_parser = subparsers.add_parser("colorize", help="Colourise images")
    colorize_parser.add_argument("--checkpoint", type=str, required=True, help="Trained checkpoint")
    colorize_parser.add_argument("--input", type=str, required=True, help="Image file or folder")
    colorize_parser.add_argument("--output", type=str, required=True, help="Output folder for PNGs")
    colorize_parser.set_defaults(func=colorize_cmd)

    # Eval command
    eval_parser = subparsers.add_parser("eval", help="PSNR over a reference folder")
    eval_parser.add_argument("--checkpoint", type=str, required=True, help="Trained checkpoint")
    eval_parser.add_argument("--data", type=str, required=True, help="Reference colour images")
    eval_parser.add_argument("--out", type=str, default=None, help="Report path (default <run>/eval_report.json)")
    eval_parser.set_defaults(func=eval_cmd)

    # Probe command
    probe_parser = subparsers.add_parser("probe", help="Linear probe on encoder features")
    probe_parser.add_argument("--checkpoint", type=str, required=True, help="Trained checkpoint")
    probe_parser.add_argument("--data", type=str, required=True, help="Labelled folder, one sub-folder per class")
    probe_parser.add_argument("--epochs", type=int, default=100, help="Probe training epochs")
    probe_parser.add_argument("--seed", type=int, default=0, help="Split and classifier seed")
    probe_parser.add_argument("--test-fraction", type=float, default=0.2, help="Held-out share per class")
    probe_parser.add_argument("--random-baseline", action="store_true", help="Probe untrained features instead")
    probe_parser.add_argument("--out", type=str, default=None, help="Report path (default <run>/probe_report.json)")
    probe_parser.set_defaults(func=probe_cmd)

    # Ablate command
    ablate_parser = subparsers.add_parser("ablate", help="Run the four-variant ablation")
    ablate_parser.add_argument("--data", type=str, required=True, help="Training image folder")
    ablate_parser.add_argument("--out", type=str, required=True, help="Report directory")
    ablate_parser.add_argument("--config", type=str, default=None, help="key = value config file")
    ablate_parser.add_argument("--preset", type=str, default=None, choices=["desk", "paper"], help="Base preset")
    ablate_parser.add_argument("--steps", type=int, default=None, help="Steps per variant")
    ablate_parser.add_argument("--seed", type=int, default=None, help="Shared seed")
    ablate_parser.set_defaults(func=ablate_cmd)

    return parser


def main(argv=None):
    """Main CLI function"""
    logging.basicConfig(level=Config.LOG_LEVEL, format=LOG_FORMAT)
    parser = build_parser()

    # Parse arguments
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    # Execute the selected command
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
