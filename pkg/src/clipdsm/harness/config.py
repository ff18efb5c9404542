"""Experiment configuration: YAML sections mapped onto dataclasses.

A config file has the sections ``problem``, ``topology``, ``noise``,
``schedule``, ``moreau`` and ``run``. Missing keys take the defaults below;
unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from clipdsm.algorithm import ScheduleSpec
from clipdsm.harness.idx import image_signal, load_idx_images
from clipdsm.moreau import MoreauConfig, auto_mu
from clipdsm.noise import NoiseSpec, rng_stream
from clipdsm.objectives import (
    ConstraintSet,
    ObjectiveInstance,
    OracleConfig,
    ZeroObjective,
    gen_phase_retrieval,
    gen_quadratic_test,
)
from clipdsm.topology import (
    MixingSchedule,
    complete_mixing,
    load_weights,
    ring_mixing,
    static_schedule,
)

DATA_DIR_ENV = "CLIPDSM_DATA_DIR"
MNIST_FILENAME = "train-images-idx3-ubyte"


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    kind: str = "phase_retrieval"
    n: int = 49
    n_agents: int = 7
    m: int = 21
    signal: str = "random"
    mnist_path: str | None = None
    image_index: int = 0
    radius: float = 1.0
    spread: float = 1.0
    instance_seed: int = 0
    oracle: str = "minibatch"
    batch_size: int = 1


@dataclass
class TopologyConfig:
    kind: str = "ring"
    n_agents: int = 7
    weights_file: str | None = None


@dataclass
class NoiseConfig:
    family: str = "none"
    alpha: float = 2.0
    gamma: float = 1.0


@dataclass
class ScheduleConfig:
    step_scale: float = 1.0
    step_exponent: float = 1.0
    clip_scale: float | str = "auto"
    clip_exponent: float = 0.4
    alpha_tail: float | None = None
    override: bool = False


@dataclass
class MoreauSection:
    mu: float | str = "auto"
    inner_max_iters: int = 2000
    inner_tol: float = 1e-5


@dataclass
class RunConfig:
    rounds: int = 2000
    measure_every: int = 10
    moreau_every: int = 100
    seed: int = 0
    workers: int = 1
    init_radius: float = 0.1
    method: str = "clipped"


SECTIONS = {
    "problem": ProblemConfig,
    "topology": TopologyConfig,
    "noise": NoiseConfig,
    "schedule": ScheduleConfig,
    "moreau": MoreauSection,
    "run": RunConfig,
}


def _coerce(value, default):
    """YAML 1.1 reads '1e-5' as a string; coerce by the field's default type."""
    if value is None or isinstance(default, bool) or isinstance(value, bool):
        return value
    if isinstance(default, int) and isinstance(value, (int, float, str)):
        try:
            return int(value)
        except ValueError:
            return int(float(value))
    if isinstance(default, float) and isinstance(value, (int, str)):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, str) and value != "auto" and default in ("auto", None):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, int) and default in ("auto", None):
        return float(value)
    return value


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    moreau: MoreauSection = field(default_factory=MoreauSection)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = d or {}
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, section_cls in SECTIONS.items():
            raw = d.get(name) or {}
            names = {f.name: f for f in fields(section_cls)}
            bad = set(raw) - set(names)
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            defaults = section_cls()
            parts[name] = section_cls(
                **{k: _coerce(v, getattr(defaults, k)) for k, v in raw.items()}
            )
        cfg = cls(**parts)
        cfg.check()
        return cfg

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    def check(self) -> None:
        p, t = self.problem, self.topology
        if p.kind not in ("phase_retrieval", "quadratic", "zero"):
            raise ConfigError(f"unknown problem kind {p.kind!r}")
        if p.signal not in ("random", "mnist", "zero"):
            raise ConfigError(f"unknown signal source {p.signal!r}")
        if t.kind not in ("ring", "complete", "custom"):
            raise ConfigError(f"unknown topology kind {t.kind!r}")
        if t.kind == "custom" and not t.weights_file:
            raise ConfigError("custom topology needs weights_file")
        if t.n_agents != p.n_agents:
            raise ConfigError(
                f"topology has {t.n_agents} agents but the problem has {p.n_agents}"
            )
        if p.oracle not in ("exact", "minibatch", "synthetic"):
            raise ConfigError(f"unknown oracle mode {p.oracle!r}")
        if p.oracle == "minibatch" and p.kind != "phase_retrieval":
            raise ConfigError("mini-batch oracle needs measurement data (phase_retrieval)")
        if isinstance(self.schedule.clip_scale, str) and self.schedule.clip_scale != "auto":
            raise ConfigError("clip_scale must be a number or 'auto'")
        if isinstance(self.moreau.mu, str) and self.moreau.mu != "auto":
            raise ConfigError("mu must be a number or 'auto'")
        if self.run.method not in ("clipped", "dpsm", "stodpsm"):
            raise ConfigError(f"unknown method {self.run.method!r}")
        if self.run.rounds < 0 or self.run.measure_every < 1 or self.run.moreau_every < 1:
            raise ConfigError("rounds must be >= 0 and cadences >= 1")


# ---------------------------------------------------------------------------
# presets


def desk_preset() -> ExperimentConfig:
    """n = 49, N = 7, m = 21, so N * m = 3n; runs in seconds."""
    return ExperimentConfig()


def mnist_preset() -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.problem.n, cfg.problem.n_agents, cfg.problem.m = 784, 28, 84
    cfg.topology.n_agents = 28
    return cfg


# ---------------------------------------------------------------------------
# building runtime objects


def resolve_mnist_path(path: str | None) -> Path:
    if path:
        return Path(path)
    base = os.environ.get(DATA_DIR_ENV, "data")
    return Path(base) / MNIST_FILENAME


def build_instance(cfg: ExperimentConfig) -> ObjectiveInstance:
    p = cfg.problem
    rng = rng_stream(p.instance_seed, 0, "instance")
    omega = ConstraintSet.ball(p.n, p.radius)
    if p.kind == "quadratic":
        return gen_quadratic_test(p.n, p.n_agents, rng, constraint=omega, spread=p.spread)
    if p.kind == "zero":
        return ZeroObjective(p.n_agents, p.n, omega)
    if p.signal == "mnist":
        path = resolve_mnist_path(p.mnist_path)
        if not path.exists():
            raise FileNotFoundError(
                f"MNIST image file not found at {path}; place train-images-idx3-ubyte there, "
                f"set {DATA_DIR_ENV}, or use a synthetic signal"
            )
        images = load_idx_images(path)
        signal = image_signal(images[p.image_index], p.n)
    elif p.signal == "zero":
        signal = np.zeros(p.n)
    else:
        signal = "random"
    return gen_phase_retrieval(p.n, p.n_agents, p.m, rng, signal=signal, constraint=omega)


def build_topology(cfg: ExperimentConfig) -> MixingSchedule:
    t = cfg.topology
    if t.kind == "ring":
        m = ring_mixing(t.n_agents)
    elif t.kind == "complete":
        m = complete_mixing(t.n_agents)
    else:
        m = load_weights(t.weights_file)
        if m.n_agents != t.n_agents:
            raise ConfigError("weights file size does not match n_agents")
    return static_schedule(m)


def build_noise(cfg: ExperimentConfig) -> NoiseSpec:
    n = cfg.noise
    return NoiseSpec(n.family, float(n.alpha), float(n.gamma), cfg.problem.n)


def build_oracle(cfg: ExperimentConfig) -> OracleConfig:
    p = cfg.problem
    noise = build_noise(cfg) if p.oracle == "synthetic" else None
    return OracleConfig(p.oracle, p.batch_size, noise)


def build_schedule(cfg: ExperimentConfig, inst: ObjectiveInstance) -> ScheduleSpec:
    s = cfg.schedule
    clip_scale = 2.0 * inst.constants.C0 if s.clip_scale == "auto" else float(s.clip_scale)
    alpha_tail = float(s.alpha_tail) if s.alpha_tail is not None else float(cfg.noise.alpha)
    if cfg.noise.family == "gaussian" and s.alpha_tail is None:
        alpha_tail = 2.0
    return ScheduleSpec(
        float(s.step_scale), float(s.step_exponent), clip_scale, float(s.clip_exponent), alpha_tail
    )


def build_moreau(cfg: ExperimentConfig, inst: ObjectiveInstance) -> MoreauConfig:
    m = cfg.moreau
    rho = inst.constants.rho_hat if inst.constants else 0.0
    mu = auto_mu(rho) if m.mu == "auto" else float(m.mu)
    return MoreauConfig(mu=mu, inner_max_iters=int(m.inner_max_iters), inner_tol=float(m.inner_tol))
