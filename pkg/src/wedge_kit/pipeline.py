"""The three-step adaptation pipeline and its sweeps.

For every seed: train a source-only baseline, train with style injection from web images
(stage 1), pseudo-label the web images with the stage 1 model, then fine-tune on source plus
pseudo labels (stage 2). Every trained model is evaluated on each held-out target domain.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .config import ExperimentConfig, format_config
from .corpus import CorpusManifest, fetch_corpus, load_labels, load_manifest
from .errors import ConfigError, MissingDataError
from .features import LabelMap
from .images import read_label_png, write_label_png
from .metrics import (
    PseudoLabelQuality,
    default_class_names,
    evaluate_model,
    format_table,
    miou,
    pseudo_label_quality,
    read_class_catalog,
    write_csv,
)
from .model import ToySegmenter, forward, load_checkpoint, save_checkpoint
from .pseudo_label import PseudoLabelConfig, PseudoLabelStats, generate_pseudo_labels
from .style_injection import InjectionConfig
from .synth_data import (
    OFFTOPIC_FAMILY,
    WEB_FAMILY,
    SplitPlan,
    default_scene_spec,
    generate_split,
    sample_offtopic_shift,
    sample_web_shift,
    source_shift,
    target_shifts,
)
from .train import LabeledSet, TrainResult, train, write_loss_trace

# Module logger
logger = logging.getLogger(__name__)

# Report column per training stage
METHOD_COLUMNS = {"source_only": "Src. only", "stage1_SI": "SI", "stage2_PL": "PL"}
TARGET_PREFIX = "target_"

Reference = Literal["web", "offtopic", "none"]


# --------------------------------------------------------------------------------------------
# Data


@dataclass(frozen=True)
class Dataset:
    """Everything a pipeline run reads from disk.

    ``web_truth`` holds the generator's ground truth for web images; it is only used to
    measure pseudo-label quality, never for training.
    """

    source: LabeledSet
    web_images: tuple[np.ndarray, ...]
    web_truth: tuple[LabelMap, ...] | None
    targets: dict[str, LabeledSet]
    offtopic_images: tuple[np.ndarray, ...] = ()


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingDataError(path, hint)
    return path


def _ingest_local(manifest: CorpusManifest, path: Path):
    corpus = fetch_corpus(manifest)
    if corpus.failures:
        first = corpus.failures[0]
        raise MissingDataError(first.record.source, f"listed in {path}: {first.reason}")
    return corpus


def load_labeled_split(manifest_path: Path, num_classes: int) -> LabeledSet:
    """Images and label maps listed in a manifest."""
    path = _require(manifest_path, "run gen-data first or check paths.data_dir")
    corpus = _ingest_local(load_manifest(path), path)
    return LabeledSet(tuple(corpus.images()), tuple(load_labels(corpus, num_classes)))


def load_targets(cfg: ExperimentConfig) -> dict[str, LabeledSet]:
    """Every ``target_<domain>`` split under the data directory, sorted by domain name."""
    manifests = sorted(cfg.data_dir.glob(f"{TARGET_PREFIX}*/manifest.jsonl"))
    if not manifests:
        raise MissingDataError(cfg.data_dir / f"{TARGET_PREFIX}*", "no target domains found")
    return {
        m.parent.name[len(TARGET_PREFIX) :]: load_labeled_split(m, cfg.data.num_classes)
        for m in manifests
    }


def _load_web(cfg: ExperimentConfig):
    if cfg.paths.web_manifest:
        path = _require(Path(cfg.paths.web_manifest), "check paths.web_manifest")
        corpus = fetch_corpus(load_manifest(path))
        images = corpus.images("web")
        if not images:
            raise MissingDataError(path, "no web image could be ingested")
        return tuple(images), None
    path = _require(cfg.data_dir / "web" / "manifest.jsonl", "run gen-data first")
    corpus = _ingest_local(load_manifest(path), path)
    truth = None
    if all(item.record.label is not None for item in corpus.items):
        truth = tuple(load_labels(corpus, cfg.data.num_classes))
    return tuple(corpus.images()), truth


def load_dataset(cfg: ExperimentConfig, with_offtopic: bool = False) -> Dataset:
    """Load the source, web and target splits (and the off-topic references when asked).

    Raises:
        MissingDataError: Naming the first split or file that is not on disk.
    """
    source = load_labeled_split(cfg.data_dir / "source" / "manifest.jsonl", cfg.data.num_classes)
    web_images, web_truth = _load_web(cfg)
    offtopic: tuple[np.ndarray, ...] = ()
    if with_offtopic:
        path = _require(cfg.data_dir / "offtopic" / "manifest.jsonl", "run gen-data first")
        offtopic = tuple(_ingest_local(load_manifest(path), path).images())
    data = Dataset(source, web_images, web_truth, load_targets(cfg), offtopic)
    logger.info(
        "Loaded %d source, %d web and %d target domains (%s)",
        len(source),
        len(web_images),
        len(data.targets),
        ", ".join(data.targets),
    )
    return data


def class_names(cfg: ExperimentConfig) -> tuple[str, ...]:
    if cfg.paths.class_catalog:
        path = _require(Path(cfg.paths.class_catalog), "check paths.class_catalog")
        return read_class_catalog(path, cfg.data.num_classes)
    return default_class_names(cfg.data.num_classes)


def cmd_gen_data(cfg: ExperimentConfig, seed: int | None = None) -> Path:
    """Generate the source, web, off-topic and target splits under ``paths.data_dir``.

    Reruns with the same configuration and seed produce byte-identical files.
    """
    seed = cfg.data.seed if seed is None else seed
    class_names(cfg)
    d = cfg.data
    spec = replace(default_scene_spec(d.num_classes, d.height, d.width), density=d.density)
    plans = [
        SplitPlan("source", "source", d.source_count, shift=source_shift(), note="source"),
        SplitPlan(
            "web",
            "web",
            d.web_count,
            sampler=sample_web_shift,
            distractors=d.web_distractors,
            note="web",
        ),
        SplitPlan(
            "offtopic",
            "web",
            d.offtopic_count,
            sampler=sample_offtopic_shift,
            offtopic=True,
            note="off-topic",
        ),
    ]
    targets = target_shifts()
    for shift in targets:
        for family in (WEB_FAMILY, OFFTOPIC_FAMILY):
            if family.contains(shift):
                raise ConfigError(f"target domain {shift.name!r} lies in the {family.name} family")
    plans += [
        SplitPlan(f"{TARGET_PREFIX}{shift.name}", "target", d.target_count, shift=shift)
        for shift in targets
    ]
    root = cfg.data_dir
    for plan in plans:
        generate_split(root, spec, plan, seed)
    domains = {
        "seed": seed,
        "source": source_shift().to_dict(),
        "targets": [shift.to_dict() for shift in targets],
        "families": [asdict(WEB_FAMILY), asdict(OFFTOPIC_FAMILY)],
    }
    (root / "domains.json").write_text(json.dumps(domains, indent=2, sort_keys=True) + "\n")
    logger.info("Generated %d splits under %s", len(plans), root)
    return root


# --------------------------------------------------------------------------------------------
# One pipeline run


@dataclass(frozen=True)
class Variant:
    """Overrides of one sweep point.

    Attributes:
        name: Sweep value as written to the reports.
        stages: Training stages to run; ``stage2_PL`` needs ``stage1_SI``.
        injection: Stage 1 injection settings (config's when ``None``).
        tau: Pseudo-label threshold (config's when ``None``).
        web_fraction: Fraction of the web split to use, drawn per seed.
        reference: Where stage 1 takes its style references from.
    """

    name: str = "default"
    stages: tuple[str, ...] = ("source_only", "stage1_SI", "stage2_PL")
    injection: InjectionConfig | None = None
    tau: float | None = None
    web_fraction: float = 1.0
    reference: Reference = "web"

    def __post_init__(self):
        if "stage2_PL" in self.stages and "stage1_SI" not in self.stages:
            raise ConfigError("stage2_PL needs stage1_SI")
        if not 0 < self.web_fraction <= 1:
            raise ConfigError(f"web_fraction must be in (0, 1], got {self.web_fraction}")


@dataclass(frozen=True)
class DomainScore:
    per_class: tuple[float | None, ...]
    mean: float


@dataclass
class SeedRun:
    """Scores and artifacts of one (variant, seed) run."""

    variant: str
    seed: int
    scores: dict[str, dict[str, DomainScore]] = field(default_factory=dict)
    tau: float | None = None
    pseudo_stats: PseudoLabelStats | None = None
    quality: PseudoLabelQuality | None = None
    artifacts: dict[str, str] = field(default_factory=dict)


def select_web(
    images: Sequence[np.ndarray],
    truth: Sequence[LabelMap] | None,
    fraction: float,
    seed: int,
):
    """A seeded subset of ``ceil(fraction * N)`` web images, kept in their original order."""
    if fraction >= 1.0:
        return tuple(images), truth
    count = max(1, math.ceil(fraction * len(images)))
    keep = np.sort(np.random.default_rng(seed).permutation(len(images))[:count])
    subset_truth = tuple(truth[i] for i in keep) if truth is not None else None
    return tuple(images[i] for i in keep), subset_truth


def pseudo_label_images(
    model: ToySegmenter, images: Sequence[np.ndarray], cfg: PseudoLabelConfig
) -> tuple[list[LabelMap], PseudoLabelStats]:
    """Label every image with the model's confident predictions (no injection)."""
    labels, parts = [], []
    for image in images:
        pseudo, stats = generate_pseudo_labels(forward(model, image), cfg)
        labels.append(pseudo)
        parts.append(stats)
    return labels, PseudoLabelStats.combine(parts)


def _score(model: ToySegmenter, targets: dict[str, LabeledSet]) -> dict[str, DomainScore]:
    scores = {}
    for domain, split in targets.items():
        cm = evaluate_model(model, split.images, split.labels, model.num_classes)
        per_class, mean = miou(cm)
        scores[domain] = DomainScore(per_class, mean)
    return scores


def _finish_stage(
    stage: str,
    result: TrainResult,
    runs: Sequence[SeedRun],
    targets: dict[str, LabeledSet],
    seed_dir: Path | None,
) -> None:
    scores = _score(result.model, targets)
    checkpoint = None
    if seed_dir is not None:
        checkpoint = seed_dir / "checkpoints" / f"{stage}.wdgk"
        save_checkpoint(checkpoint, result.model)
        write_loss_trace(seed_dir / "traces" / f"{stage}.csv", result.trace)
    for run in runs:
        run.scores[stage] = scores
        if checkpoint is not None:
            run.artifacts[stage] = checkpoint.as_posix()
    average = np.mean([s.mean for s in scores.values()])
    logger.info("Seed %d %s: mean target mIoU %.4f", runs[0].seed, stage, average)


def _label_and_retrain(
    cfg: ExperimentConfig,
    data: Dataset,
    run: SeedRun,
    stage1: TrainResult,
    web: tuple[tuple[np.ndarray, ...], tuple[LabelMap, ...] | None],
    references: tuple[np.ndarray, ...],
    injection: InjectionConfig,
    tau: float | None,
    seed_dir: Path | None,
) -> None:
    web_images, web_truth = web
    tau_cfg = cfg.pseudo_label_config(tau)
    run.tau = tau_cfg.tau
    pseudo, run.pseudo_stats = pseudo_label_images(stage1.model, web_images, tau_cfg)
    if web_truth is not None:
        run.quality = PseudoLabelQuality.combine(
            pseudo_label_quality(p, t) for p, t in zip(pseudo, web_truth)
        )
    if seed_dir is not None:
        label_dir = seed_dir / "pseudo_labels"
        paths = [label_dir / f"{i:04d}.png" for i in range(len(pseudo))]
        for path, labels in zip(paths, pseudo):
            write_label_png(path, labels)
        pseudo = [read_label_png(path, cfg.data.num_classes) for path in paths]
        run.artifacts["pseudo_labels"] = label_dir.as_posix()
    logger.info(
        "Seed %d pseudo labels at tau=%g cover %.1f%% of web pixels",
        run.seed,
        tau_cfg.tau,
        100.0 * run.pseudo_stats.labeled_fraction,
    )
    stage2_cfg = cfg.train_config("stage2_PL", run.seed, injection=injection)
    stage2 = train(
        stage1.model,
        data.source,
        references,
        cfg=stage2_cfg,
        web_labeled=LabeledSet(web_images, pseudo),
    )
    _finish_stage("stage2_PL", stage2, [run], data.targets, seed_dir)


def run_seed_group(
    cfg: ExperimentConfig,
    data: Dataset,
    seed: int,
    variants: Sequence[Variant],
    artifact_dir: Path | None = None,
) -> list[SeedRun]:
    """Run variants that differ only in ``tau`` for one seed, one run per variant.

    The source-only baseline and stage 1 are trained once and shared; only pseudo labeling and
    stage 2 repeat per variant. With ``artifact_dir`` the checkpoints, loss traces and
    pseudo-label maps are written under ``artifact_dir / seed_<seed>``, and stage 2 reads its
    pseudo labels back from those files.

    Raises:
        ConfigError: If the variants differ in anything but name and tau, or if artifacts are
            requested for more than one variant.
    """
    if not variants:
        raise ConfigError("no variants to run")
    first = variants[0]
    if any(replace(v, name=first.name, tau=first.tau) != first for v in variants[1:]):
        raise ConfigError("variants sharing stage 1 may differ only in tau")
    if artifact_dir is not None and len(variants) > 1:
        raise ConfigError("artifacts are written for a single variant only")
    runs = [SeedRun(v.name, seed) for v in variants]
    seed_dir = artifact_dir / f"seed_{seed}" if artifact_dir is not None else None
    init = ToySegmenter.initialize(
        cfg.data.num_classes, seed, feature_channels=cfg.model.feature_channels
    )
    web = select_web(data.web_images, data.web_truth, first.web_fraction, seed)

    if "source_only" in first.stages:
        result = train(init, data.source, cfg=cfg.train_config("source_only", seed))
        _finish_stage("source_only", result, runs, data.targets, seed_dir)
    if "stage1_SI" not in first.stages:
        return runs

    injection = first.injection or cfg.injection_config()
    references: tuple[np.ndarray, ...] = web[0]
    if first.reference == "offtopic":
        references = data.offtopic_images
    elif first.reference == "none":
        references, injection = (), InjectionConfig(method="none")
    stage1_cfg = cfg.train_config("stage1_SI", seed, injection=injection)
    stage1 = train(init, data.source, references, cfg=stage1_cfg)
    _finish_stage("stage1_SI", stage1, runs, data.targets, seed_dir)
    if "stage2_PL" not in first.stages:
        return runs

    for run, variant in zip(runs, variants):
        _label_and_retrain(
            cfg, data, run, stage1, web, references, injection, variant.tau, seed_dir
        )
    return runs


def _run_task(task) -> list[SeedRun]:
    return run_seed_group(*task)


def run_all(cfg: ExperimentConfig, tasks: list[tuple]) -> list[SeedRun]:
    """Run ``(cfg, data, seed, variants, artifact_dir)`` tasks, in parallel when ``jobs > 1``.

    Results come back in task order, flattened over each task's variants.
    """
    jobs = cfg.experiment.jobs
    if jobs == 1 or len(tasks) == 1:
        return [run for task in tasks for run in _run_task(task)]
    logger.info("Running %d tasks on %d processes", len(tasks), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return [run for runs in pool.map(_run_task, tasks) for run in runs]


# --------------------------------------------------------------------------------------------
# Reports


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _write_metadata(out_dir: Path, command: str, cfg: ExperimentConfig, extra: dict) -> None:
    metadata = {
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": format_config(cfg),
        **extra,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def _relative(path: str, root: Path) -> str:
    try:
        return Path(path).relative_to(root).as_posix()
    except ValueError:
        return path


def pipeline_table(runs: Sequence[SeedRun], domains: Sequence[str]) -> list[list]:
    """Rows ``[domain, Src. only, SI, PL]`` with seed means, then an ``avg`` row."""
    rows = []
    for domain in domains:
        row = [domain]
        for stage in METHOD_COLUMNS:
            row.append(_mean(r.scores[stage][domain].mean for r in runs if stage in r.scores))
        rows.append(row)
    avg = ["avg"]
    for col in range(1, len(METHOD_COLUMNS) + 1):
        avg.append(_mean(row[col] for row in rows))
    rows.append(avg)
    return rows


def _score_rows(runs: Sequence[SeedRun], names: Sequence[str], label: str | None = None):
    """Long-format per-domain and per-class rows."""
    domain_rows, class_rows = [], []
    for run in runs:
        prefix = [run.variant] if label else []
        for stage, by_domain in run.scores.items():
            for domain, score in by_domain.items():
                domain_rows.append(prefix + [run.seed, stage, domain, score.mean])
                for name, iou in zip(names, score.per_class):
                    class_rows.append(prefix + [run.seed, stage, domain, name, iou])
    return domain_rows, class_rows


def _pseudo_rows(runs: Sequence[SeedRun], label: bool = False) -> list[list]:
    rows = []
    for run in runs:
        if run.pseudo_stats is None:
            continue
        quality = run.quality
        rows.append(
            ([run.variant] if label else [])
            + [
                run.seed,
                run.tau,
                run.pseudo_stats.labeled_pixels,
                run.pseudo_stats.total_pixels,
                run.pseudo_stats.labeled_fraction,
                quality.unscored_pixels if quality else None,
                quality.precision if quality else None,
            ]
        )
    return rows


PROVENANCE_HEADER = ["seed", "stage1_checkpoint", "pseudo_labels", "tau", "stage2_checkpoint"]
PSEUDO_HEADER = [
    "seed",
    "tau",
    "labeled_pixels",
    "total_pixels",
    "coverage",
    "unscored_pixels",
    "precision",
]


def cmd_run_pipeline(cfg: ExperimentConfig) -> Path:
    """Run all three steps for every configured seed and write the report.

    Outputs under ``paths.out_dir``: ``report.csv`` (rows = target domains plus ``avg``,
    columns = Src. only / SI / PL, seed means), ``per_seed.csv``, ``per_class.csv``,
    ``pseudo_labels.csv``, ``provenance.csv``, ``metadata.json`` and per-seed checkpoints,
    loss traces and pseudo-label maps.

    Returns:
        Path of ``report.csv``.
    """
    out_dir = cfg.out_dir
    data = load_dataset(cfg)
    names = class_names(cfg)
    tasks = [(cfg, data, seed, (Variant(),), out_dir) for seed in cfg.experiment.seeds]
    runs = run_all(cfg, tasks)

    domains = list(data.targets)
    header = ["domain", *METHOD_COLUMNS.values()]
    table = pipeline_table(runs, domains)
    report = out_dir / "report.csv"
    write_csv(report, header, table)
    domain_rows, class_rows = _score_rows(runs, names)
    write_csv(out_dir / "per_seed.csv", ["seed", "stage", "domain", "miou"], domain_rows)
    write_csv(
        out_dir / "per_class.csv", ["seed", "stage", "domain", "class", "iou"], class_rows
    )
    write_csv(out_dir / "pseudo_labels.csv", PSEUDO_HEADER, _pseudo_rows(runs))

    provenance = [
        [
            run.seed,
            _relative(run.artifacts["stage1_SI"], out_dir),
            _relative(run.artifacts["pseudo_labels"], out_dir),
            run.tau,
            _relative(run.artifacts["stage2_PL"], out_dir),
        ]
        for run in runs
    ]
    write_csv(
        out_dir / "provenance.csv",
        PROVENANCE_HEADER,
        provenance,
    )
    _write_metadata(
        out_dir,
        "run",
        cfg,
        {
            "seeds": list(cfg.experiment.seeds),
            "provenance": [dict(zip(PROVENANCE_HEADER, row)) for row in provenance],
        },
    )
    print(format_table(header, table))
    logger.info("Wrote report to %s", report)
    return report


# --------------------------------------------------------------------------------------------
# Sweeps

SweepKind = Literal["tau", "method", "points", "corpus", "reference"]


def sweep_variants(cfg: ExperimentConfig, kind: SweepKind) -> list[Variant]:
    """The sweep points of ``kind``, each a variant of the stage 1 + stage 2 pipeline.

    Raises:
        ConfigError: If the configured list for the sweep is empty.
    """
    s = cfg.sweeps
    stages = ("stage1_SI", "stage2_PL")
    if kind == "tau":
        values = [Variant(f"{tau:g}", stages, tau=tau) for tau in s.taus]
    elif kind == "method":
        values = [
            Variant(method, stages, injection=cfg.injection_config(method=method))
            for method in s.methods
        ]
    elif kind == "points":
        values = [
            Variant(
                ",".join(str(p) for p in points),
                stages,
                injection=cfg.injection_config(injection_points=frozenset(points)),
            )
            for points in s.point_sets
        ]
    elif kind == "corpus":
        values = [Variant(f"{f:g}", stages, web_fraction=f) for f in s.corpus_fractions]
    elif kind == "reference":
        values = [
            Variant("none", ("stage1_SI",), reference="none"),
            Variant("off-topic", ("stage1_SI",), reference="offtopic"),
            Variant("web", stages, reference="web"),
        ]
    else:
        raise ConfigError(f"unknown sweep: {kind!r}")
    if not values:
        raise ConfigError(f"the {kind} sweep list is empty")
    return values


def sweep_summary(runs: Sequence[SeedRun], variants: Sequence[Variant]) -> list[list]:
    """Per (sweep value, stage): mean and std over seeds of the domain-averaged mIoU, plus
    pseudo-label coverage and precision means."""
    rows = []
    for variant in variants:
        mine = [r for r in runs if r.variant == variant.name]
        for stage in METHOD_COLUMNS:
            per_seed = [
                np.mean([s.mean for s in r.scores[stage].values()])
                for r in mine
                if stage in r.scores
            ]
            if not per_seed:
                continue
            rows.append(
                [
                    variant.name,
                    stage,
                    float(np.mean(per_seed)),
                    float(np.std(per_seed)),
                    _mean(r.pseudo_stats.labeled_fraction for r in mine if r.pseudo_stats),
                    _mean(r.quality.precision for r in mine if r.quality),
                ]
            )
    return rows


def cmd_sweep(cfg: ExperimentConfig, kind: SweepKind) -> Path:
    """Run one sweep for every configured seed; outputs go to ``out_dir / sweep_<kind>``.

    The source-only baseline is trained once per seed and reported as its own sweep value.
    A tau sweep trains stage 1 once per seed and repeats only pseudo labeling and stage 2 per
    threshold.

    Returns:
        Path of ``summary.csv``.
    """
    variants = sweep_variants(cfg, kind)
    data = load_dataset(cfg, with_offtopic=kind == "reference")
    names = class_names(cfg)
    out_dir = cfg.out_dir / f"sweep_{kind}"
    baseline = Variant("source_only", ("source_only",))
    groups = [(baseline,)]
    groups += [tuple(variants)] if kind == "tau" else [(v,) for v in variants]
    tasks = [(cfg, data, seed, group, None) for group in groups for seed in cfg.experiment.seeds]
    runs = run_all(cfg, tasks)

    header = ["value", "stage", "mean_miou", "std_miou", "coverage", "precision"]
    summary = sweep_summary(runs, [baseline, *variants])
    summary_path = out_dir / "summary.csv"
    write_csv(summary_path, header, summary)
    domain_rows, class_rows = _score_rows(runs, names, label="value")
    write_csv(out_dir / "results.csv", ["value", "seed", "stage", "domain", "miou"], domain_rows)
    write_csv(
        out_dir / "per_class.csv",
        ["value", "seed", "stage", "domain", "class", "iou"],
        class_rows,
    )
    write_csv(out_dir / "pseudo_labels.csv", ["value", *PSEUDO_HEADER], _pseudo_rows(runs, True))
    _write_metadata(out_dir, f"sweep-{kind}", cfg, {"values": [v.name for v in variants]})
    print(format_table(header, summary))
    logger.info("Wrote %s sweep to %s", kind, out_dir)
    return summary_path


# --------------------------------------------------------------------------------------------
# Evaluation of a stored checkpoint


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path) -> Path:
    """Evaluate ``checkpoint`` on every target domain.

    Writes ``eval.csv`` (per-domain mIoU plus ``avg``) and ``eval_per_class.csv``.

    Raises:
        MissingDataError: If the checkpoint or a target split is missing.
    """
    model = load_checkpoint(_require(Path(checkpoint), "pass a checkpoint written by run"))
    if model.num_classes != cfg.data.num_classes:
        raise ConfigError(
            f"checkpoint predicts {model.num_classes} classes, config has {cfg.data.num_classes}"
        )
    names = class_names(cfg)
    scores = _score(model, load_targets(cfg))
    rows = [[domain, s.mean] for domain, s in scores.items()]
    rows.append(["avg", _mean(s.mean for s in scores.values())])
    out = cfg.out_dir / "eval.csv"
    write_csv(out, ["domain", "miou"], rows)
    write_csv(
        cfg.out_dir / "eval_per_class.csv",
        ["domain", "class", "iou"],
        [[d, n, v] for d, s in scores.items() for n, v in zip(names, s.per_class)],
    )
    print(format_table(["domain", "miou"], rows))
    return out
