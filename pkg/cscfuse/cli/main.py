"""Main CLI entry point."""

import dataclasses
import functools
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
import numpy as np

from cscfuse import __version__
from cscfuse.config import TASKS, STRATEGIES, FusionConfig, load_run_config
from cscfuse.errors import CscFuseError, DataError, DivergenceError

TASK_CHOICE = click.Choice(TASKS, case_sensitive=False)


class ClickHandler(logging.Handler):
    """Logging handler that outputs to click.echo."""

    def emit(self, record):
        try:
            msg = self.format(record)
            prefix = "Warning: " if record.levelno == logging.WARNING else f"{record.levelname.capitalize()}: "
            click.echo(f"{prefix}{msg}", err=True)
        except Exception:
            self.handleError(record)


logging.basicConfig(level=logging.WARNING, handlers=[ClickHandler()])
logger = logging.getLogger(__name__)


def exit_on_error(func):
    """Map library exceptions to the CLI exit codes (2 config, 3 data, 4 divergence)."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CscFuseError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("--verbose", "-v", count=True, help="Show progress (-v) or step-level detail (-vv)")
def cli(verbose: int):
    """cscfuse - deep convolutional sparse coding networks for image fusion."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.getLogger().setLevel(level)


def _suffixed(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


@cli.command()
@click.argument("task", type=TASK_CHOICE)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON or YAML run configuration")
@click.option("--data", required=True,
              help="Dataset manifest, directory containing manifest.json, or 'synthetic[:N]'")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Checkpoint to write")
@click.option("--seed", type=int, help="Override train.seed")
@click.option("--log", "log_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Training log (default: <out>.log.json)")
@exit_on_error
def train(task: str, config_path: Optional[Path], data: str, out: Path, seed: Optional[int],
          log_path: Optional[Path]):
    """Train the TASK network (ivf, mef or mmf) and write its checkpoint."""
    from cscfuse.pipelines.checkpoint import save_checkpoint
    from cscfuse.pipelines.datasets import load_dataset
    from cscfuse.pipelines.ivf import ivfn_train
    from cscfuse.pipelines.mef import mefn_train
    from cscfuse.pipelines.mmf import mmfn_train
    from cscfuse.pipelines.trainer import TrainingLog

    task = task.lower()
    overrides = {"train": {"seed": seed}} if seed is not None else None
    cfg = load_run_config(task, config_path, overrides)
    log_path = log_path or _suffixed(out, ".log.json")

    click.echo(f"Loading {task} training data from: {data}")
    dataset = load_dataset(data, cfg)
    click.echo(f"Training on {len(dataset)} item(s) for {cfg.train.epochs} epoch(s) (seed {cfg.train.seed})")

    trainers = {"ivf": ivfn_train, "mef": mefn_train, "mmf": mmfn_train}
    log = TrainingLog()
    try:
        checkpoint = trainers[task](dataset, cfg, log)
    except DivergenceError as e:
        if e.last_good is not None:
            fallback = save_checkpoint(e.last_good, _suffixed(out, ".last_good"))
            click.echo(f"Last good checkpoint written to {_suffixed(out, '.last_good')} ({fallback.digest[:12]})",
                       err=True)
        else:
            click.echo(f"No last good checkpoint written: training diverged at step "
                       f"{e.diagnostics.get('step', 1)} before the first update", err=True)
        log.write(log_path)
        raise

    save_checkpoint(checkpoint, out)
    log.write(log_path)
    click.echo(f"Checkpoint: {out}")
    click.echo(f"Digest: {checkpoint.digest}")
    click.echo(f"Training log: {log_path}")
    if log.epochs:
        click.echo(f"Final loss: {log.epochs[-1].loss:.6g}")


def _fusion_config(task: str, config_path: Optional[Path], base: Optional[str], detail: Optional[str]) -> FusionConfig:
    fusion = load_run_config(task, config_path).fusion if config_path else FusionConfig()
    changes = {k: v for k, v in (("base_strategy", base), ("detail_strategy", detail)) if v}
    fusion = dataclasses.replace(fusion, **changes)
    fusion.validate()
    return fusion


@cli.command()
@click.argument("task", type=TASK_CHOICE)
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Trained checkpoint")
@click.option("--out", required=True, type=click.Path(path_type=Path),
              help="Fused image (ivf, mef) or output directory for the fused bands (mmf)")
@click.option("--base-strategy", type=click.Choice(STRATEGIES), help="IVF base-branch fusion strategy")
@click.option("--detail-strategy", type=click.Choice(STRATEGIES), help="IVF detail-branch fusion strategy")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Configuration whose 'fusion' section sets strategy and stretch defaults")
@exit_on_error
def fuse(task: str, inputs: Sequence[Path], ckpt: Path, out: Path, base_strategy: Optional[str],
         detail_strategy: Optional[str], config_path: Optional[Path]):
    """
    Fuse INPUTS with a trained network.

    \b
    ivf: INFRARED VISIBLE
    mef: EXPOSURE... (two or more)
    mmf: GUIDE LR_BAND... (one gray image per low-resolution band)
    """
    from cscfuse.imaging.planes import ImagePlane, load_stack
    from cscfuse.imaging.reader_factory import load_image, save_image
    from cscfuse.pipelines.checkpoint import load_checkpoint
    from cscfuse.pipelines.ivf import ivfn_fuse
    from cscfuse.pipelines.mef import mefn_fuse
    from cscfuse.pipelines.mmf import mmfn_fuse

    task = task.lower()
    fusion = _fusion_config(task, config_path, base_strategy, detail_strategy)
    checkpoint = load_checkpoint(ckpt, kind=task)

    if task == "ivf":
        if len(inputs) != 2:
            raise DataError(f"ivf fusion takes INFRARED and VISIBLE, got {len(inputs)} input(s)")
        fused = ivfn_fuse(checkpoint, load_image(inputs[0]), load_image(inputs[1]), fusion=fusion)
        written = [save_image(ImagePlane.clipped(fused), out)]
    elif task == "mef":
        written = [save_image(mefn_fuse(checkpoint, load_stack(inputs), fusion), out)]
    else:
        if len(inputs) < 2:
            raise DataError("mmf fusion takes GUIDE followed by at least one LR band image")
        guide = load_image(inputs[0]).pixels
        lr = np.stack([load_image(p).pixels[0] for p in inputs[1:]])
        fused = mmfn_fuse(checkpoint, lr, guide)
        written = [
            save_image(ImagePlane.clipped(band), Path(out) / f"band_{i:02d}.png", bit_depth=16)
            for i, band in enumerate(fused)
        ]

    for path in written:
        click.echo(str(path))


def _band_cube(paths: Sequence[Path]) -> np.ndarray:
    from cscfuse.imaging.reader_factory import load_image

    return np.stack([load_image(p).pixels[0] for p in paths])


def _evaluate(task: str, inputs: Sequence[Path], fused: Sequence[Path], ref: Sequence[Path]):
    from cscfuse.analysis.metrics import evaluate_all
    from cscfuse.imaging.reader_factory import load_image

    if task == "mmf":
        reference = ref or inputs
        if not reference or not fused:
            raise DataError("mmf evaluation needs --ref (or --inputs) band images and --fused band images")
        if len(reference) != len(fused):
            raise DataError(f"Reference has {len(reference)} band(s), fused has {len(fused)}")
        return evaluate_all("mmf", [_band_cube(reference)], _band_cube(fused),
                            sources=[str(p) for p in reference], fused_path=";".join(str(p) for p in fused))
    if not inputs or len(fused) != 1:
        raise DataError(f"{task} evaluation needs --inputs and exactly one --fused image")
    return evaluate_all(task, [load_image(p) for p in inputs], load_image(fused[0]),
                        sources=[str(p) for p in inputs], fused_path=str(fused[0]))


def _batch_rows(task: str, batch_dir: Path):
    from cscfuse.pipelines.datasets import load_manifest

    manifest = load_manifest(batch_dir)
    if manifest.task != task:
        raise DataError(f"Batch manifest is for task {manifest.task!r}, not {task!r}")
    reports = []
    for i, item in enumerate(manifest.items):
        if "inputs" not in item or "fused" not in item:
            raise DataError(f"Batch item {i} needs 'inputs' and 'fused' lists")
        fused = item["fused"] if isinstance(item["fused"], list) else [item["fused"]]
        inputs = [manifest.root / p for p in item["inputs"]]
        reports.append(_evaluate(task, inputs, [manifest.root / p for p in fused], inputs if task == "mmf" else []))
    return reports


@cli.command(name="eval")
@click.argument("task", type=TASK_CHOICE)
@click.option("--inputs", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Source image (repeat for each source)")
@click.option("--fused", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Fused image; for mmf repeat once per band")
@click.option("--ref", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="mmf reference band image (repeat per band)")
@click.option("--batch", "batch_dir", type=click.Path(exists=True, path_type=Path),
              help="Evaluate every row of a batch manifest instead")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the report here instead of stdout")
@click.option("--error-map", "error_map_dir", type=click.Path(file_okay=False, path_type=Path),
              help="mmf only: write amplified |ref - fused| maps, one PNG per band")
@exit_on_error
def evaluate(task: str, inputs: Sequence[Path], fused: Sequence[Path], ref: Sequence[Path], batch_dir: Optional[Path],
             fmt: str, out: Optional[Path], error_map_dir: Optional[Path]):
    """Compute the TASK metric set and print it as CSV or JSON."""
    from cscfuse.analysis.metrics import error_map
    from cscfuse.analysis.reporter import render
    from cscfuse.imaging.planes import ImagePlane
    from cscfuse.imaging.reader_factory import save_image

    task = task.lower()
    if batch_dir is not None:
        reports = _batch_rows(task, batch_dir)
    else:
        reports = [_evaluate(task, inputs, fused, ref)]

    if error_map_dir is not None:
        if task != "mmf" or batch_dir is not None:
            raise DataError("--error-map applies to a single mmf evaluation")
        maps = error_map(_band_cube(ref or inputs), _band_cube(fused))
        for i, band in enumerate(maps):
            save_image(ImagePlane(band), Path(error_map_dir) / f"error_{i:02d}.png")

    text = render(reports, fmt)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        click.echo(f"Report written to {out}")
    else:
        click.echo(text.rstrip("\n"))


def _parse_rho(value: str) -> Optional[float]:
    if value == "auto":
        return None
    try:
        rho = float(value)
    except ValueError:
        raise click.BadParameter(f"expected 'auto' or a number, got {value!r}", param_hint="--rho")
    if rho <= 0:
        raise click.BadParameter("must be positive", param_hint="--rho")
    return rho


@cli.command()
@click.option("--image", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Image to code (default: seeded 16x16 noise)")
@click.option("--dict-seed", type=int, default=0, show_default=True, help="Seed of the random dictionary")
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True, help="Sparsity weight")
@click.option("--rho", default="auto", show_default=True, help="'auto' (1.05 x power-iteration estimate) or a value")
@click.option("--iters", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--atoms", type=click.IntRange(min=1), default=8, show_default=True, help="Dictionary size q")
@click.option("--kernel-size", type=click.IntRange(min=1), default=3, show_default=True)
@exit_on_error
def ista(image: Optional[Path], dict_seed: int, lam: float, rho: str, iters: int, atoms: int, kernel_size: int):
    """Run the reference ISTA solver and print its objective trace."""
    from cscfuse.csc.ista import IstaProblem, ista_solve
    from cscfuse.imaging.reader_factory import load_image
    from cscfuse.tensor.core import Tensor
    from cscfuse.tensor.ops import ConvFilter

    if kernel_size % 2 == 0:
        raise click.BadParameter("must be odd", param_hint="--kernel-size")
    rho_value = _parse_rho(rho)
    rng = np.random.default_rng(dict_seed)
    if image is not None:
        pixels = load_image(image).pixels
    else:
        pixels = rng.uniform(0.0, 1.0, size=(1, 16, 16))
    x = pixels[None]
    weight = rng.standard_normal((x.shape[1], atoms, kernel_size, kernel_size))
    weight /= np.sqrt((weight ** 2).sum(axis=(0, 2, 3), keepdims=True))
    dictionary = ConvFilter(Tensor(weight, dtype=np.float64))

    if rho_value is None:
        problem = IstaProblem.with_auto_rho(x, dictionary, lam, iters)
    else:
        problem = IstaProblem(x, dictionary, lam, rho_value, iters)
    result = ista_solve(problem)

    click.echo(f"rho: {problem.rho:.10g}")
    for k, value in enumerate(result.trace):
        click.echo(f"{k:5d} {value:.12e}")
    sparsity = 100.0 * float(np.mean(result.code == 0.0))
    click.echo(f"sparsity: {sparsity:.2f}%")


@cli.command()
@click.option("--module", "module_name", type=click.Choice(["all", "tensor_core", "csc_core", "losses", "pipelines"]),
              default="all", show_default=True, help="Which check suite to run")
@click.option("--corrupt", "corrupt_op", hidden=True, help="Double the backward pass of this operator")
@exit_on_error
def gradcheck(module_name: str, corrupt_op: Optional[str]):
    """Compare every gradient against central finite differences."""
    from cscfuse.cli.gradcheck import MODULE_NAMES, run_suites
    from cscfuse.tensor.core import corrupt_gradient

    names: List[str] = list(MODULE_NAMES) if module_name == "all" else [module_name]
    if corrupt_op:
        with corrupt_gradient(corrupt_op):
            outcomes = run_suites(names)
    else:
        outcomes = run_suites(names)

    failed = []
    for o in outcomes:
        status = "ok" if o.passed else "FAIL"
        click.echo(f"{o.suite:12} {o.name:22} {o.max_error:.3e}  (tol {o.tolerance:.0e})  {status}")
        if not o.passed:
            failed.append(f"{o.suite}/{o.name}")
    if failed:
        click.echo(f"Gradient check failed for: {', '.join(failed)}", err=True)
        sys.exit(1)
    click.echo(f"All {len(outcomes)} gradient checks passed")


if __name__ == "__main__":
    cli()
