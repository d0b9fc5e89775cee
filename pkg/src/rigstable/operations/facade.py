"""
Operations Facade - Application service layer.

One method per CLI verb. The facade reads inputs, calls the pure library
functions, owns all parallelism (clip-level thread pool) and writes outputs.
Exceptions bubble up for central mapping in ``mappers``.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar, Union

from ..errors import RigError
from ..report import (
    FinetuneReport,
    LossReport,
    MetricReport,
    build_report,
    evaluate_skeleton_clip,
    evaluate_skin_clip,
    model_to_json,
    report_to_csv,
    report_to_json,
    report_to_markdown,
    round_sig,
)
from ..rig_types import RigClip
from ..rigcore import validate_clip
from ..rigmetrics import top_improved_joints
from ..settings import ParamOverrides, Settings
from ..skelgeom import geom_loss, skeleton_total_loss
from ..skeltoken import SlotLogits, detokenize, subsample_frames, token_loss, tokenize
from ..skinloss import geometric_prior, skin_total_loss
from ..skinops import barycentric_transfer
from ..storage import (
    atomic_write_text,
    read_clip,
    read_logits,
    read_tokens,
    write_clip,
    write_samples_csv,
    write_tokens,
)
from ..synthgen import SynthConfig, generate_clip, perturb_clip
from ..toytrain import ablation_sweep, finetune, prepare_skin_problem

logger = logging.getLogger(__name__)

T = TypeVar("T")

REPORT_FORMATS = ("json", "csv", "md")
TRACE_COLUMNS = ("step", "total", "sym", "l1", "anchor", "ent", "prior")
DEFAULT_FINETUNE_SIGMA = 0.02
SKIN_WEIGHT_FLAGS = (
    "lambda_sym", "lambda_1", "lambda_anchor", "lambda_ent", "lambda_prior", "beta", "warmup_epochs", "epsilon",
)


@dataclass(frozen=True)
class OpsConfig:
    """
    Run policy shared by every command.

    Attributes:
        seed: Global seed; per-clip streams derive from it and the clip_id
        threads: Clip-level worker threads (0 = one per CPU, 1 = serial)
        float_digits: Significant digits in report files
        n_disc: Token codec bins
        verbose: Show detailed output
    """
    seed: int = 42
    threads: int = 0
    float_digits: int = 12
    n_disc: int = 256
    verbose: bool = False

    @classmethod
    def from_settings(cls, settings: Settings, **flags: Any) -> OpsConfig:
        """Settings overlaid with the non-None command-line ``flags``."""
        cfg = cls(
            seed=settings.seed,
            threads=settings.threads,
            float_digits=settings.float_digits,
            n_disc=settings.n_disc,
        )
        return replace(cfg, **{k: v for k, v in flags.items() if v is not None})

    def worker_count(self) -> int:
        return Settings(threads=self.threads).effective_threads()


def clip_paths(inputs: Sequence[Union[str, Path]]) -> List[Path]:
    """
    Expand files and directories (their ``*.json`` files, sorted) into clip paths.

    Raises:
        FileNotFoundError: An input does not exist or a directory holds no clips
    """
    paths: List[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found = sorted(p.glob("*.json"))
            if not found:
                raise FileNotFoundError(f"No clip files (*.json) in {p}")
            paths.extend(found)
        elif p.is_file():
            paths.append(p)
        else:
            raise FileNotFoundError(f"Input does not exist: {p}")
    return paths


def format_report(report: MetricReport, fmt: str) -> str:
    if fmt == "json":
        return report_to_json(report)
    if fmt == "csv":
        return report_to_csv(report)
    if fmt == "md":
        return report_to_markdown(report)
    raise ValueError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")


def _teacher_weights(path: Path):
    """Anchor-frame skin weights of a teacher clip."""
    clip = read_clip(path)
    if not clip.skin_weights:
        raise RigError("NO_SKIN_WEIGHTS", f"teacher clip {clip.clip_id!r} carries no skin weights")
    return clip.skin_weights[0]


def _rounded(values: Dict[str, float], digits: int) -> Dict[str, float]:
    return {k: round_sig(v, digits) for k, v in values.items()}


class Operations:
    """
    Application service facade for CLI operations.

    Stateless apart from the injected run policy and parameter overrides;
    library modules stay pure and thread-safe, this class decides what runs
    concurrently and where results are written.
    """

    def __init__(self, config: OpsConfig, overrides: Optional[ParamOverrides] = None):
        self.cfg = config
        self.params = overrides if overrides is not None else ParamOverrides()

    def map_clips(self, func: Callable[[Path], T], paths: Sequence[Path]) -> List[T]:
        """Apply ``func`` to every path, results in input order for any thread count."""
        workers = min(self.cfg.worker_count(), max(1, len(paths)))
        if workers == 1:
            return [func(p) for p in paths]
        logger.debug(f"Evaluating {len(paths)} clip(s) on {workers} threads")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, paths))

    # generation

    def synth_gen(self, out: Path, synth: SynthConfig, count: int = 1, sigma: float = 0.0) -> List[Path]:
        """
        Generate ``count`` clips; several clips go to ``out`` as a directory.

        Clip ``i`` uses generator seed ``synth.seed + i``; ``sigma > 0`` perturbs
        the non-anchor frames with the global seed.
        """
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        written: List[Path] = []
        for i in range(count):
            cfg = replace(synth, seed=synth.seed + i, clip_id=synth.clip_id if count == 1 else None)
            clip = perturb_clip(generate_clip(cfg), sigma, self.cfg.seed)
            target = out if count == 1 else Path(out) / f"{clip.clip_id}.json"
            written.append(write_clip(target, clip))
        logger.info(f"Wrote {len(written)} synthetic clip(s)")
        return written

    def perturb(self, src: Path, out: Path, sigma: float) -> Path:
        return write_clip(out, perturb_clip(read_clip(src), sigma, self.cfg.seed))

    # tokens

    def tokenize(self, src: Path, out: Path, n_disc: Optional[int] = None) -> Path:
        """Tokenize every skeleton frame of a clip."""
        n = self.params.token.merged(n_disc=n_disc).get("n_disc", self.cfg.n_disc)
        clip = read_clip(src)
        return write_tokens(out, clip.clip_id, [tokenize(s, n) for s in clip.skeleton_frames])

    def detokenize(self, src: Path, out: Path) -> Path:
        """Decode a token file into a skeleton-only clip."""
        doc = read_tokens(src)
        frames = tuple(detokenize(seq) for seq in doc.sequences())
        if not frames:
            raise RigError("EMPTY_CLIP", f"{src} holds no token frames")
        clip = RigClip(skeleton_frames=frames, clip_id=doc.clip_id, metadata={"n_disc": doc.n_disc})
        return write_clip(out, clip)

    # losses

    def skel_loss(
        self,
        src: Path,
        anchor_logits: Optional[Path] = None,
        frame_logits: Sequence[Path] = (),
        flags: Optional[Dict[str, Any]] = None,
    ) -> LossReport:
        """
        Token plus geometry loss of one clip.

        Without logits files each frame is scored by a confident one-hot
        predictor of its own tokens, so the symmetric term measures token drift.
        """
        flags = dict(flags or {})
        clip = read_clip(src)
        token_params = self.params.token.merged(**{k: flags.get(k) for k in ("n_disc", "max_frames")})
        n_disc = token_params.get("n_disc", self.cfg.n_disc)
        weights = self.params.token.weights(**{k: flags.get(k) for k in ("alpha", "lambda_anchor", "lambda_sym")})
        geom_cfg = self.params.geom.config(
            **{k: flags.get(k) for k in ("rho", "lambda_dir", "lambda_len", "lambda_ch", "alignment")}
        )
        mix = self.params.geom.merged(lambda_token=flags.get("lambda_token"), lambda_geom=flags.get("lambda_geom"))

        max_frames = token_params.get("max_frames")
        frames = list(range(1, clip.frame_count))
        if max_frames is not None:
            frames = subsample_frames(clip.frame_count, max_frames, self.cfg.seed)

        targets = tokenize(clip.anchor, n_disc)
        anchor_scores = read_logits(anchor_logits) if anchor_logits else SlotLogits.one_hot(targets)
        if frame_logits:
            if len(frame_logits) != clip.frame_count - 1:
                raise RigError(
                    "FRAME_COUNT_MISMATCH",
                    f"{len(frame_logits)} frame logits files for {clip.frame_count - 1} non-anchor frames",
                )
            frame_scores = [read_logits(frame_logits[k - 1]) for k in frames]
        else:
            frame_scores = [SlotLogits.one_hot(tokenize(clip.skeleton_frames[k], n_disc)) for k in frames]

        tok = token_loss(anchor_scores, frame_scores, targets, weights)
        geo = geom_loss(clip.anchor, [clip.skeleton_frames[k] for k in frames], geom_cfg)
        total = skeleton_total_loss(tok.total, geo.total, mix.get("lambda_token", 1.0), mix.get("lambda_geom", 0.5))
        digits = self.cfg.float_digits
        terms = {
            "total": total,
            "token_total": tok.total,
            "token_anchor": tok.anchor_term,
            "token_sym": tok.sym_term,
            "geom_total": geo.total,
        }
        per_frame = []
        for k, t in zip(frames, geo.frames):
            row = t.as_dict()
            row["frame"] = k
            for key in ("dir", "len", "ch", "total"):
                row[key] = round_sig(row[key], digits)
            per_frame.append(row)
        params = {
            "n_disc": n_disc,
            "token": asdict(weights),
            "geom": asdict(geom_cfg),
            "lambda_token": mix.get("lambda_token", 1.0),
            "lambda_geom": mix.get("lambda_geom", 0.5),
            "frames": frames,
        }
        return LossReport(
            kind="skeleton", clip_id=clip.clip_id, terms=_rounded(terms, digits), params=params, frames=per_frame,
        )

    def skin_loss(
        self,
        src: Path,
        teacher: Optional[Path] = None,
        epoch: int = 0,
        samples_csv: Optional[Path] = None,
        flags: Optional[Dict[str, Any]] = None,
    ) -> LossReport:
        """
        Skinning loss of a clip's per-frame weights against the anchor teacher.

        Per-vertex weights are carried to the surface samples barycentrically.
        """
        flags = dict(flags or {})
        clip = read_clip(src)
        weights = self.params.skin.weights(**{k: flags.get(k) for k in SKIN_WEIGHT_FLAGS})
        sp = self.params.skin.merged(**{k: flags.get(k) for k in ("k_s", "gamma", "n_samples", "min_valid_joints")})
        if not clip.skin_weights:
            raise RigError("NO_SKIN_WEIGHTS", f"clip {clip.clip_id!r} carries no skin weights")
        vertex_teacher = _teacher_weights(teacher) if teacher else None
        problem = prepare_skin_problem(
            clip,
            n_samples=sp.get("n_samples", 1024),
            seed=self.cfg.seed,
            k_s=sp.get("k_s", 4),
            gamma=sp.get("gamma", 0.0),
            epsilon=weights.epsilon,
            min_valid_joints=sp.get("min_valid_joints", 1),
            vertex_teacher=vertex_teacher,
        )
        if samples_csv is not None:
            write_samples_csv(samples_csv, problem.samples)
        preds = [barycentric_transfer(w, problem.samples) for w in clip.skin_weights]
        prior = geometric_prior(problem.samples, clip.anchor, problem.teacher.valid, weights.beta, weights.prior_window)
        loss = skin_total_loss(preds, problem.teacher, prior, weights, epoch)
        params = dict(asdict(weights), epoch=epoch, **{k: sp.get(k) for k in ("k_s", "gamma", "n_samples")})
        return LossReport(
            kind="skin", clip_id=clip.clip_id, terms=_rounded(loss.as_dict(), self.cfg.float_digits), params=params,
        )

    # metrics

    def _metric_params(self, flags: Dict[str, Any]) -> Dict[str, Any]:
        return self.params.metrics.merged(**flags)

    def skel_metrics(
        self,
        inputs: Sequence[Union[str, Path]],
        reference: Optional[Path] = None,
        flags: Optional[Dict[str, Any]] = None,
    ) -> MetricReport:
        """Temporal skeleton metrics over one or more clips."""
        mp = self._metric_params(dict(flags or {}))
        n_eigs = mp.get("n_eigs", 8)
        per_bone = mp.get("samples_per_bone", 16)
        ref_clip = read_clip(reference) if reference else None

        def _one(path: Path):
            clip = read_clip(path)
            for v in validate_clip(clip).violations:
                if v.severity == "error":
                    logger.warning(f"{clip.clip_id}: {v.code}: {v.message}")
            return evaluate_skeleton_clip(clip, n_eigs, ref_clip, per_bone)

        results = self.map_clips(_one, clip_paths(inputs))
        params: Dict[str, Any] = {"n_eigs": n_eigs}
        if ref_clip is not None:
            params.update(samples_per_bone=per_bone, reference=ref_clip.clip_id)
        return build_report("skeleton", results, self.cfg.seed, self.cfg.float_digits, params)

    def skin_metrics(
        self,
        inputs: Sequence[Union[str, Path]],
        teacher: Optional[Path] = None,
        flags: Optional[Dict[str, Any]] = None,
    ) -> MetricReport:
        """Per-vertex skinning consistency over one or more clips."""
        flags = dict(flags or {})
        sp = self.params.skin.merged(**{k: flags.pop(k, None) for k in ("k_s", "gamma", "epsilon")})
        mp = self._metric_params(flags)
        k_s, gamma, eps = sp.get("k_s", 4), sp.get("gamma", 0.0), sp.get("epsilon", 1e-8)
        threshold = mp.get("static_threshold", 1e-4)
        teacher_w = _teacher_weights(teacher) if teacher else None

        def _one(path: Path):
            return evaluate_skin_clip(read_clip(path), teacher_w, k_s, gamma, eps, threshold)

        results = self.map_clips(_one, clip_paths(inputs))
        params = {"k_s": k_s, "gamma": gamma, "epsilon": eps, "static_threshold": threshold}
        return build_report("skin", results, self.cfg.seed, self.cfg.float_digits, params)

    # training demo

    def demo_finetune(
        self,
        src: Optional[Path] = None,
        sigma: float = DEFAULT_FINETUNE_SIGMA,
        ablation: bool = False,
        flags: Optional[Dict[str, Any]] = None,
    ) -> tuple[FinetuneReport, str]:
        """
        Toy fine-tuning run.

        Without ``src`` the default synthetic clip is generated and its
        non-anchor frames perturbed by ``sigma``.

        Returns:
            (before/after report, trace CSV text)
        """
        flags = dict(flags or {})
        seed = self.cfg.seed
        opts = self.params.train.options(seed, **{k: flags.get(k) for k in ("lr", "steps")})
        weights = self.params.skin.weights()
        sp = self.params.skin.merged(n_samples=flags.get("n_samples"))
        if src is None:
            clip = perturb_clip(generate_clip(SynthConfig(seed=seed)), sigma, seed)
        else:
            clip = read_clip(src)
        problem = prepare_skin_problem(
            clip,
            n_samples=sp.get("n_samples", 1024),
            seed=seed,
            k_s=sp.get("k_s", 4),
            gamma=sp.get("gamma", 0.0),
            epsilon=weights.epsilon,
            min_valid_joints=sp.get("min_valid_joints", 1),
        )
        result = finetune(clip, problem.teacher, weights, opts, problem.samples)

        digits = self.cfg.float_digits
        before, after = result.before.as_dict(), result.after.as_dict()
        reduction = {
            key: round_sig(100.0 * (before[key] - after[key]) / before[key], digits) if before[key] > 0 else 0.0
            for key in ("l1_bca", "symkl_bca")
        }
        sweep = None
        if ablation:
            sweep = ablation_sweep(clip, problem.teacher, weights, opts, problem.samples)
            sweep = {k: [round_sig(v, digits) for v in vals] for k, vals in sweep.items()}
        report = FinetuneReport(
            clip_id=clip.clip_id,
            seed=seed,
            params={"train": asdict(opts), "skin": asdict(weights), "n_samples": problem.samples.count},
            before=_rounded(before, digits),
            after=_rounded(after, digits),
            reduction_pct=reduction,
            cons_before=[round_sig(c, digits) for c in result.cons_before],
            cons_after=[round_sig(c, digits) for c in result.cons_after],
            joint_delta=[round_sig(d, digits) for d in result.delta],
            top_improved_joints=top_improved_joints(result.delta, min(5, result.delta.size)),
            ablation=sweep,
        )
        return report, self.trace_csv(result.trace_rows())

    def trace_csv(self, rows: Sequence[Dict[str, float]]) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow(
                [int(row["step"])] + [repr(round_sig(row[c], self.cfg.float_digits)) for c in TRACE_COLUMNS[1:]]
            )
        return buf.getvalue()

    # output

    def emit(self, text: str, out: Optional[Path]) -> Optional[Path]:
        """Write ``text`` atomically to ``out``; None means the caller prints it."""
        if out is None:
            return None
        return atomic_write_text(out, text)

    def report(self, src: Path, fmt: str) -> str:
        """Re-render a saved metric report JSON."""
        text = Path(src).read_text(encoding="utf-8")
        return format_report(MetricReport.model_validate_json(text), fmt)

    def render(self, report: MetricReport, fmt: str) -> str:
        return format_report(report, fmt)

    @staticmethod
    def to_json(model: Any) -> str:
        return model_to_json(model)
