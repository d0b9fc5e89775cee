"""
rigstable CLI

Verbs wired to the Operations facade:
- synth-gen / perturb: synthetic articulated clips
- tokenize / detokenize: skeleton token codec
- skel-loss / skin-loss: training objectives evaluated on a clip
- skel-metrics / skin-metrics: temporal stability reports over clips
- demo-finetune: toy skinning fine-tuning run
- report: re-render a saved metric report

Help texts mark each default as [published] (value from the source method)
or [toolkit] (a choice made here).
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler

from .cli_context import CLIContext
from .operations import run_and_exit
from .operations.facade import DEFAULT_FINETUNE_SIGMA, REPORT_FORMATS
from .operations.printers import (
    print_finetune_summary,
    print_loss_report,
    print_metric_report,
    print_written,
)
from .synthgen import TOPOLOGIES, SynthConfig

app = typer.Typer(name="rigstable", help="Temporal rig-consistency losses, metrics and training demo", no_args_is_help=True)

_LOGGER_NAME = "rigstable"


def _configure_logging(level: str) -> None:
    """Install a single rich handler on the package logger."""
    logger = logging.getLogger(_LOGGER_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=Console(stderr=True), show_path=False))
    logger.setLevel(level)
    logger.propagate = False


def _ctx(ctx: typer.Context) -> CLIContext:
    if not isinstance(ctx.obj, CLIContext):
        ctx.obj = CLIContext.from_env()
    return ctx.obj


def _emit(context: CLIContext, text: str, out: Optional[Path]) -> None:
    """Write machine output to ``out`` or stdout."""
    if out is None:
        typer.echo(text, nl=False)
    else:
        print_written([context.ops.emit(text, out)])


def _check_format(fmt: str) -> str:
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"--format must be one of {', '.join(REPORT_FORMATS)}, got {fmt!r}")
    return fmt


@app.callback()
def main_callback(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Global seed for every stochastic stage [toolkit: 42, env RIGSTABLE_SEED]"),
    threads: Optional[int] = typer.Option(None, "--threads", min=0, help="Clip-level worker threads, 0 = one per CPU, 1 = serial [toolkit: 0]"),
    params: Optional[Path] = typer.Option(None, "--params", help="YAML parameter overrides (sections token, geom, skin, metrics, train)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
) -> None:
    """Temporal rig-consistency toolkit."""

    def _setup() -> None:
        context = CLIContext.from_env(seed=seed, threads=threads, params_path=params, verbose=verbose)
        _configure_logging("DEBUG" if verbose else context.settings.log_level)
        ctx.obj = context

    run_and_exit(_setup)


@app.command("synth-gen")
def synth_gen(
    ctx: typer.Context,
    out: Path = typer.Argument(..., help="Output clip JSON (a directory when --count > 1)"),
    joints: int = typer.Option(6, "--joints", min=1, help="Joint count [toolkit: 6]"),
    topology: str = typer.Option("two_branch", "--topology", help=f"One of {', '.join(TOPOLOGIES)} [toolkit: two_branch]"),
    amplitude: float = typer.Option(0.6, "--amplitude", help="Swing amplitude in radians, 0 = static clip [toolkit: 0.6]"),
    frames: int = typer.Option(3, "--frames", min=1, help="Frames including the anchor [toolkit: 3]"),
    gen_seed: Optional[int] = typer.Option(None, "--gen-seed", min=0, help="Generator seed [default: global --seed]"),
    clip_id: Optional[str] = typer.Option(None, "--clip-id", help="Clip identifier [default: derived from config]"),
    count: int = typer.Option(1, "--count", min=1, help="Number of clips, generator seeds increase by one [toolkit: 1]"),
    sigma: float = typer.Option(0.0, "--sigma", min=0.0, help="Gaussian noise on non-anchor frames [toolkit: 0]"),
) -> None:
    """Generate synthetic articulated clips with ground-truth skin weights."""

    def _cmd() -> None:
        context = _ctx(ctx)
        cfg = SynthConfig(
            joint_count=joints,
            topology=topology,
            amplitude=amplitude,
            frame_count=frames,
            seed=context.config.seed if gen_seed is None else gen_seed,
            clip_id=clip_id,
        )
        print_written(context.ops.synth_gen(out, cfg, count=count, sigma=sigma), "clip")

    run_and_exit(_cmd)


@app.command()
def perturb(
    ctx: typer.Context,
    src: Path = typer.Argument(..., help="Input clip JSON"),
    out: Path = typer.Argument(..., help="Output clip JSON"),
    sigma: float = typer.Option(..., "--sigma", min=0.0, help="Gaussian noise standard deviation on non-anchor joints and vertices"),
) -> None:
    """Add seeded Gaussian noise to every non-anchor frame."""

    def _cmd() -> None:
        context = _ctx(ctx)
        print_written([context.ops.perturb(src, out, sigma)], "clip")

    run_and_exit(_cmd)


@app.command()
def tokenize(
    ctx: typer.Context,
    src: Path = typer.Argument(..., help="Input clip JSON"),
    out: Path = typer.Argument(..., help="Output token JSON"),
    n_disc: Optional[int] = typer.Option(None, "--n-disc", min=2, help="Coordinate bins [published: 256]"),
) -> None:
    """Quantize every skeleton frame into 4 tokens per joint."""

    def _cmd() -> None:
        context = _ctx(ctx)
        print_written([context.ops.tokenize(src, out, n_disc)], "tokens")

    run_and_exit(_cmd)


@app.command()
def detokenize(
    ctx: typer.Context,
    src: Path = typer.Argument(..., help="Input token JSON"),
    out: Path = typer.Argument(..., help="Output skeleton-only clip JSON"),
) -> None:
    """Decode a token file back to bin-center joints and parents."""

    def _cmd() -> None:
        context = _ctx(ctx)
        print_written([context.ops.detokenize(src, out)], "clip")

    run_and_exit(_cmd)


@app.command("skel-loss")
def skel_loss(
    ctx: typer.Context,
    clip: Path = typer.Argument(..., help="Input clip JSON"),
    anchor_logits: Optional[Path] = typer.Option(None, "--anchor-logits", help="SPRL scores for the anchor [default: one-hot of anchor tokens]"),
    frame_logits: Optional[List[Path]] = typer.Option(None, "--frame-logits", help="SPRL scores per non-anchor frame, repeat in frame order [default: one-hot of each frame's tokens]"),
    n_disc: Optional[int] = typer.Option(None, "--n-disc", min=2, help="Coordinate bins [published: 256]"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Parent-slot weight [published: 3]"),
    lambda_anchor: Optional[float] = typer.Option(None, "--lambda-anchor", help="Anchor token term [toolkit: 1]"),
    lambda_sym: Optional[float] = typer.Option(None, "--lambda-sym", help="Symmetric token term [toolkit: 1]"),
    max_frames: Optional[int] = typer.Option(None, "--max-frames", min=1, help="Subsample non-anchor frames [default: all]"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Fraction of longest edges for directions [toolkit: 1]"),
    lambda_dir: Optional[float] = typer.Option(None, "--lambda-dir", help="Direction term [toolkit: 1]"),
    lambda_len: Optional[float] = typer.Option(None, "--lambda-len", help="Length term [toolkit: 1]"),
    lambda_ch: Optional[float] = typer.Option(None, "--lambda-ch", help="Endpoint Chamfer term [toolkit: 1]"),
    alignment: Optional[str] = typer.Option(None, "--alignment", help="structure_tensor or kabsch [published: structure_tensor]"),
    lambda_token: Optional[float] = typer.Option(None, "--lambda-token", help="Token loss weight in the total [toolkit: 1]"),
    lambda_geom: Optional[float] = typer.Option(None, "--lambda-geom", help="Geometry loss weight in the total [published: 0.5]"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the loss JSON here instead of stdout"),
) -> None:
    """Token and geometry consistency losses of one clip."""

    def _cmd() -> None:
        context = _ctx(ctx)
        flags = dict(
            n_disc=n_disc, alpha=alpha, lambda_anchor=lambda_anchor, lambda_sym=lambda_sym, max_frames=max_frames,
            rho=rho, lambda_dir=lambda_dir, lambda_len=lambda_len, lambda_ch=lambda_ch, alignment=alignment,
            lambda_token=lambda_token, lambda_geom=lambda_geom,
        )
        report = context.ops.skel_loss(clip, anchor_logits, frame_logits or (), flags)
        _emit(context, context.ops.to_json(report), out)
        if out is not None:
            print_loss_report(report)

    run_and_exit(_cmd)


@app.command("skin-loss")
def skin_loss(
    ctx: typer.Context,
    clip: Path = typer.Argument(..., help="Clip JSON with mesh frames and per-frame skin weights"),
    teacher: Optional[Path] = typer.Option(None, "--teacher", help="Clip whose anchor weights are the teacher [default: the clip's own anchor weights]"),
    epoch: int = typer.Option(0, "--epoch", min=0, help="Epoch for the prior warmup [toolkit: 0]"),
    samples_csv: Optional[Path] = typer.Option(None, "--samples-csv", help="Dump the surface samples as CSV"),
    n_samples: Optional[int] = typer.Option(None, "--n-samples", min=1, help="Surface samples [toolkit: 1024]"),
    k_s: Optional[int] = typer.Option(None, "--k-s", min=1, help="Top-k teacher support [published: 4]"),
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Teacher weight floor [toolkit: 0]"),
    min_valid_joints: Optional[int] = typer.Option(None, "--min-valid-joints", min=1, help="Reject clips with fewer valid joints [toolkit: 1; source data used 10]"),
    lambda_sym: Optional[float] = typer.Option(None, "--lambda-sym", help="Symmetric KL term [toolkit: 1]"),
    lambda_1: Optional[float] = typer.Option(None, "--lambda-1", help="L1 term [toolkit: 1]"),
    lambda_anchor: Optional[float] = typer.Option(None, "--lambda-anchor", help="Anchor L1 term [published: 0.25]"),
    lambda_ent: Optional[float] = typer.Option(None, "--lambda-ent", help="Entropy term [published: 0.02]"),
    lambda_prior: Optional[float] = typer.Option(None, "--lambda-prior", help="Geometric prior term [published: 0.1]"),
    beta: Optional[float] = typer.Option(None, "--beta", help="Prior sharpness [published: 15]"),
    warmup_epochs: Optional[int] = typer.Option(None, "--warmup-epochs", min=0, help="Prior warmup length [published: 5]"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Numerical floor [published: 1e-8]"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the loss JSON here instead of stdout"),
) -> None:
    """Masked skinning distillation loss of a clip's per-frame weights."""

    def _cmd() -> None:
        context = _ctx(ctx)
        flags = dict(
            n_samples=n_samples, k_s=k_s, gamma=gamma, min_valid_joints=min_valid_joints,
            lambda_sym=lambda_sym, lambda_1=lambda_1, lambda_anchor=lambda_anchor, lambda_ent=lambda_ent,
            lambda_prior=lambda_prior, beta=beta, warmup_epochs=warmup_epochs, epsilon=epsilon,
        )
        report = context.ops.skin_loss(clip, teacher, epoch, samples_csv, flags)
        _emit(context, context.ops.to_json(report), out)
        if out is not None:
            print_loss_report(report)

    run_and_exit(_cmd)


@app.command("skel-metrics")
def skel_metrics(
    ctx: typer.Context,
    inputs: List[Path] = typer.Argument(..., help="Clip JSON files or directories of them"),
    reference: Optional[Path] = typer.Option(None, "--reference", help="Ground-truth clip for anchor MPJPE and static Chamfer"),
    n_eigs: Optional[int] = typer.Option(None, "--n-eigs", min=1, help="Laplacian eigenvalues compared by GSD [toolkit: 8]"),
    samples_per_bone: Optional[int] = typer.Option(None, "--samples-per-bone", min=2, help="Points per bone for bone Chamfer [toolkit: 16]"),
    fmt: str = typer.Option("json", "--format", help="json, csv or md"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the report here instead of stdout"),
) -> None:
    """PJDD, BLRD, GSD and JAD over one or more clips."""

    def _cmd() -> None:
        context = _ctx(ctx)
        flags = dict(n_eigs=n_eigs, samples_per_bone=samples_per_bone)
        report = context.ops.skel_metrics(inputs, reference, flags)
        _emit(context, context.ops.render(report, _check_format(fmt)), out)
        if out is not None:
            print_metric_report(report, verbose=context.verbose)

    run_and_exit(_cmd)


@app.command("skin-metrics")
def skin_metrics(
    ctx: typer.Context,
    inputs: List[Path] = typer.Argument(..., help="Clip JSON files or directories of them"),
    teacher: Optional[Path] = typer.Option(None, "--teacher", help="Clip whose anchor weights are the teacher [default: each clip's own anchor weights]"),
    k_s: Optional[int] = typer.Option(None, "--k-s", min=1, help="Top-k teacher support [published: 4]"),
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Teacher weight floor [toolkit: 0]"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Numerical floor [published: 1e-8]"),
    static_threshold: Optional[float] = typer.Option(None, "--static-threshold", help="Influence threshold for precision/recall [toolkit: 1e-4]"),
    fmt: str = typer.Option("json", "--format", help="json, csv or md"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the report here instead of stdout"),
) -> None:
    """Skinning consistency (L1, symmetric KL, entropy) over one or more clips."""

    def _cmd() -> None:
        context = _ctx(ctx)
        flags = dict(k_s=k_s, gamma=gamma, epsilon=epsilon, static_threshold=static_threshold)
        report = context.ops.skin_metrics(inputs, teacher, flags)
        _emit(context, context.ops.render(report, _check_format(fmt)), out)
        if out is not None:
            print_metric_report(report, verbose=context.verbose)

    run_and_exit(_cmd)


@app.command("demo-finetune")
def demo_finetune(
    ctx: typer.Context,
    clip: Optional[Path] = typer.Option(None, "--clip", help="Clip with mesh and skin weights [default: generated synthetic clip]"),
    sigma: float = typer.Option(DEFAULT_FINETUNE_SIGMA, "--sigma", min=0.0, help="Noise on the generated clip's non-anchor frames [toolkit: 0.02]"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Learning rate per sampled point [toolkit: 0.05]"),
    steps: Optional[int] = typer.Option(None, "--steps", min=0, help="Gradient steps, one step = one warmup epoch [toolkit: 200]"),
    n_samples: Optional[int] = typer.Option(None, "--n-samples", min=1, help="Surface samples [toolkit: 1024]"),
    ablation: bool = typer.Option(False, "--ablation", help="Also run each single-weight-zeroed variant over seeds 0, 1, 2"),
    trace_out: Path = typer.Option(Path("trace.csv"), "--trace-out", help="Loss trace CSV (step, total, sym, l1, anchor, ent, prior)"),
    out: Path = typer.Option(Path("finetune.json"), "--out", help="Before/after report JSON"),
) -> None:
    """Fine-tune the toy skinning model and report consistency before and after."""

    def _cmd() -> None:
        context = _ctx(ctx)
        flags = dict(lr=lr, steps=steps, n_samples=n_samples)
        report, trace = context.ops.demo_finetune(clip, sigma, ablation, flags)
        written = [context.ops.emit(trace, trace_out), context.ops.emit(context.ops.to_json(report), out)]
        print_written(written)
        print_finetune_summary(report)

    run_and_exit(_cmd)


@app.command()
def report(
    ctx: typer.Context,
    src: Path = typer.Argument(..., help="Metric report JSON written by skel-metrics or skin-metrics"),
    fmt: str = typer.Option("md", "--format", help="json, csv or md"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write here instead of stdout"),
) -> None:
    """Re-render a saved metric report."""

    def _cmd() -> None:
        context = _ctx(ctx)
        _emit(context, context.ops.report(src, _check_format(fmt)), out)

    run_and_exit(_cmd)


def main() -> None:
    """CLI entry point."""
    app()


if __name__ == "__main__":
    main()
