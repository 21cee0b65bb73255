"""Experiment configuration read from an INI file.

Every section maps to a frozen dataclass; missing keys keep the defaults below, unknown
sections or keys are rejected. ``format_config`` writes the fully resolved configuration in the
same format, so its output can be fed back with ``--config``.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, MissingDataError
from .pseudo_label import PseudoLabelConfig
from .style_injection import METHODS, InjectionConfig
from .train import TrainConfig

# Module logger
logger = logging.getLogger(__name__)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _parse_point_sets(text: str) -> tuple[tuple[int, ...], ...]:
    """``"1; 2; 1,2"`` -> ((1,), (2,), (1, 2))."""
    return tuple(_parse_int_list(group) for group in text.split(";") if group.strip())


def _parse_optional_int(text: str) -> int | None:
    return int(text) if text.strip() else None


def _format_list(values) -> str:
    return ", ".join(str(v) for v in values)


def _format_point_sets(groups) -> str:
    return "; ".join(",".join(str(p) for p in group) for group in groups)


def _format_optional(value) -> str:
    return "" if value is None else str(value)


def _opt(default: Any, parse: Callable[[str], Any], fmt: Callable[[Any], str] = str):
    return field(default=default, metadata={"parse": parse, "format": fmt})


@dataclass(frozen=True)
class PathsSection:
    data_dir: str = _opt("data", str)
    out_dir: str = _opt("runs", str)
    class_catalog: str = _opt("", str)
    web_manifest: str = _opt("", str)


@dataclass(frozen=True)
class DataSection:
    num_classes: int = _opt(5, int)
    height: int = _opt(32, int)
    width: int = _opt(32, int)
    density: float = _opt(2.0, float)
    source_count: int = _opt(200, int)
    web_count: int = _opt(200, int)
    target_count: int = _opt(60, int)
    offtopic_count: int = _opt(200, int)
    web_distractors: float = _opt(1.0, float)
    seed: int = _opt(0, int)

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"data.num_classes must be >= 2, got {self.num_classes}")
        counts = (self.source_count, self.web_count, self.target_count, self.offtopic_count)
        if min(counts) < 0:
            raise ConfigError("data counts must be non-negative")


@dataclass(frozen=True)
class ModelSection:
    feature_channels: int = _opt(8, int)

    def __post_init__(self):
        if self.feature_channels < 1:
            raise ConfigError(f"model.feature_channels must be >= 1, got {self.feature_channels}")


@dataclass(frozen=True)
class TrainSection:
    """Settings shared by every training stage."""

    batch_size: int = _opt(4, int)
    momentum: float = _opt(0.9, float)
    weight_decay: float = _opt(1e-5, float)
    log_every: int = _opt(200, int)


@dataclass(frozen=True)
class StageSection:
    learning_rate: float = _opt(0.1, float)
    iterations: int = _opt(1000, int)


@dataclass(frozen=True)
class InjectionSection:
    method: str = _opt("procrustes", str)
    points: tuple[int, ...] = _opt((1,), _parse_int_list, _format_list)
    probability: float = _opt(0.5, float)
    knn_k: int = _opt(5, int)
    adain_epsilon: float = _opt(1e-5, float)
    affinity_epsilon: float = _opt(1e-8, float)
    subsample_stride: int | None = _opt(None, _parse_optional_int, _format_optional)


@dataclass(frozen=True)
class PseudoLabelSection:
    tau: float = _opt(0.05, float)


@dataclass(frozen=True)
class SweepsSection:
    taus: tuple[float, ...] = _opt((0.1, 0.05, 0.01, 0.005), _parse_float_list, _format_list)
    methods: tuple[str, ...] = _opt(METHODS, _parse_str_list, _format_list)
    point_sets: tuple[tuple[int, ...], ...] = _opt(
        ((0,), (1,), (2,), (1, 2)), _parse_point_sets, _format_point_sets
    )
    corpus_fractions: tuple[float, ...] = _opt((0.25, 0.5, 1.0), _parse_float_list, _format_list)

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"sweeps.methods has unknown methods {sorted(unknown)}")
        if any(not 0 < f <= 1 for f in self.corpus_fractions):
            raise ConfigError("sweeps.corpus_fractions must lie in (0, 1]")


@dataclass(frozen=True)
class BenchSection:
    sizes: tuple[int, ...] = _opt((256, 1024, 4096), _parse_int_list, _format_list)
    channels: tuple[int, ...] = _opt((16, 64), _parse_int_list, _format_list)
    repetitions: int = _opt(10, int)
    knn_k: int = _opt(5, int)

    def __post_init__(self):
        if not self.sizes or not self.channels:
            raise ConfigError("bench.sizes and bench.channels must not be empty")
        if self.repetitions < 1:
            raise ConfigError(f"bench.repetitions must be >= 1, got {self.repetitions}")
        if self.knn_k > min(self.sizes):
            raise ConfigError(f"bench.knn_k={self.knn_k} exceeds the smallest size")


@dataclass(frozen=True)
class ExperimentSection:
    seeds: tuple[int, ...] = _opt((0, 1, 2), _parse_int_list, _format_list)
    jobs: int = _opt(1, int)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("experiment.seeds must not be empty")
        if self.jobs < 1:
            raise ConfigError(f"experiment.jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class ExperimentConfig:
    """The resolved experiment configuration."""

    paths: PathsSection = field(default_factory=PathsSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    stage1: StageSection = field(default_factory=StageSection)
    stage2: StageSection = field(
        default_factory=lambda: StageSection(learning_rate=0.01, iterations=300)
    )
    injection: InjectionSection = field(default_factory=InjectionSection)
    pseudo_label: PseudoLabelSection = field(default_factory=PseudoLabelSection)
    sweeps: SweepsSection = field(default_factory=SweepsSection)
    bench: BenchSection = field(default_factory=BenchSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def __post_init__(self):
        # Build the derived records once so bad values surface at load time
        self.injection_config()
        self.pseudo_label_config()
        for stage in ("source_only", "stage1_SI", "stage2_PL"):
            self.train_config(stage, seed=0)

    @property
    def data_dir(self) -> Path:
        return Path(self.paths.data_dir)

    @property
    def out_dir(self) -> Path:
        return Path(self.paths.out_dir)

    def injection_config(self, **overrides) -> InjectionConfig:
        s = self.injection
        values = dict(
            method=s.method,
            injection_points=frozenset(s.points),
            probability=s.probability,
            adain_epsilon=s.adain_epsilon,
            knn_k=s.knn_k,
            affinity_epsilon=s.affinity_epsilon,
            subsample_stride=s.subsample_stride,
        )
        values.update(overrides)
        return InjectionConfig(**values)

    def pseudo_label_config(self, tau: float | None = None) -> PseudoLabelConfig:
        return PseudoLabelConfig(self.pseudo_label.tau if tau is None else tau)

    def train_config(
        self, stage: str, seed: int, injection: InjectionConfig | None = None
    ) -> TrainConfig:
        """Training settings of one pipeline stage; ``source_only`` uses the stage 1 schedule."""
        schedule = self.stage2 if stage == "stage2_PL" else self.stage1
        if stage == "source_only":
            injection = InjectionConfig(method="none")
        return TrainConfig(
            learning_rate=schedule.learning_rate,
            iterations=schedule.iterations,
            seed=seed,
            stage=stage,
            injection=injection or self.injection_config(),
            tau=self.pseudo_label_config(),
            batch_size=self.train.batch_size,
            momentum=self.train.momentum,
            weight_decay=self.train.weight_decay,
            log_every=self.train.log_every,
        )

    def with_overrides(
        self,
        seed: int | None = None,
        out_dir: str | None = None,
        jobs: int | None = None,
    ) -> "ExperimentConfig":
        """Apply command-line flags."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, experiment=replace(cfg.experiment, seeds=(seed,)))
        if out_dir is not None:
            cfg = replace(cfg, paths=replace(cfg.paths, out_dir=str(out_dir)))
        if jobs is not None:
            cfg = replace(cfg, experiment=replace(cfg.experiment, jobs=jobs))
        return cfg


SECTION_NAMES = tuple(f.name for f in fields(ExperimentConfig))


def _section_from(name: str, items: dict[str, str], default):
    known = {f.name: f for f in fields(default)}
    unknown = set(items) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    values = {}
    for key, text in items.items():
        try:
            values[key] = known[key].metadata["parse"](text)
        except ValueError as e:
            raise ConfigError(f"[{name}] {key} = {text!r}: {e}") from e
    return replace(default, **values)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse INI text into an ``ExperimentConfig``.

    Raises:
        ConfigError: On syntax errors, unknown sections or keys, or invalid values.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e
    unknown = set(parser.sections()) - set(SECTION_NAMES)
    if unknown:
        raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")
    base = ExperimentConfig()
    sections = {}
    for name in SECTION_NAMES:
        if parser.has_section(name):
            sections[name] = _section_from(name, dict(parser.items(name)), getattr(base, name))
    try:
        return replace(base, **sections)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from e


def load_config(path: Path | None) -> ExperimentConfig:
    """Load ``path``; ``None`` gives the built-in defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise MissingDataError(path, "configuration file not found")
    logger.debug("Loading configuration from %s", path)
    return parse_config(path.read_text(), source=str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Every setting, defaults included, in INI form."""
    blocks = []
    for name in SECTION_NAMES:
        section = getattr(cfg, name)
        lines = [f"[{name}]"]
        for f in fields(section):
            lines.append(f"{f.name} = {f.metadata['format'](getattr(section, f.name))}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
