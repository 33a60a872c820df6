"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys, malformed values
and inconsistent algorithm settings raise :class:`ConfigError` naming the key
and line, before anything is run.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..core import DEFAULT_RADIUS
from ..estimators import EstimatorConfig
from ..solver import SolverConfig

OUTPUT_DIR_ENV = "BILEVEL_VR_OUTPUT_DIR"

PROBLEMS = ("synthetic", "hyperclean", "hyperclean-idx")
ALGORITHMS = ("als-spider", "als-storm", "sgd-baseline")
STORM_TAUS = (0.01, 0.0001, 0.01)

# the keys that define the problem instance (compare_runs requires equality)
PROBLEM_KEYS = (
    "problem", "dim", "n", "reg", "data_seed", "n_train", "n_val", "n_test",
    "n_classes", "corruption_prob", "separation", "train_images", "train_labels",
    "test_images", "test_labels",
)


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"field '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{' at '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _batch(text):
    return None if text.lower() == "full" else int(text)


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _seeds(text):
    return tuple(int(part) for part in text.replace(",", " ").split())


def _str(text):
    return text


_PARSERS = {
    "problem": _str, "algorithm": _str, "name": _str,
    "dim": _int, "n": _int, "reg": _float, "data_seed": _int,
    "n_train": _int, "n_val": _int, "n_test": _int, "n_classes": _int,
    "corruption_prob": _float, "separation": _float,
    "train_images": _str, "train_labels": _str, "test_images": _str, "test_labels": _str,
    "k_max": _int, "t_steps": _int, "j_steps": _int,
    "step_x": _float, "step_y": _float, "step_v": _float, "radius": _float,
    "tau_x": _float, "tau_y": _float, "tau_v": _float,
    "s1": _batch, "s2": _batch, "q1": _int,
    "seeds": _seeds, "seed": _seeds,
    "eval_every": _int, "output": _str, "record_time": _bool, "lyapunov": _bool,
    "freeze_x": _bool,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to build a problem and run one or more seeds."""

    problem: str = "synthetic"
    algorithm: str = "als-spider"
    name: str | None = None
    # problem instance
    dim: int = 100
    n: int = 5000
    reg: float | None = None
    data_seed: int = 0
    n_train: int = 1000
    n_val: int = 300
    n_test: int = 3000
    n_classes: int = 3
    corruption_prob: float = 0.3
    separation: float = 2.5
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    # solver
    k_max: int = 500
    t_steps: int = 5
    j_steps: int = 2
    step_x: float = 0.01
    step_y: float = 0.1
    step_v: float = 0.01
    radius: float = DEFAULT_RADIUS
    tau_x: float | None = None
    tau_y: float | None = None
    tau_v: float | None = None
    s1: int | None = 500
    s2: int | None = 10
    q1: int | None = None
    seeds: tuple = (0,)
    freeze_x: bool = False
    # reporting
    eval_every: int = 1
    output: str = "metrics.csv"
    record_time: bool = False
    lyapunov: bool = True
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def label(self):
        return self.name or self.algorithm

    @property
    def problem_reg(self):
        if self.reg is not None:
            return self.reg
        return 0.5 if self.problem == "synthetic" else 0.01

    def taus(self):
        if self.algorithm == "als-spider":
            default = (0.0, 0.0, 0.0)
        elif self.algorithm == "als-storm":
            default = STORM_TAUS
        else:
            default = (1.0, 1.0, 1.0)
        given = (self.tau_x, self.tau_y, self.tau_v)
        return tuple(d if g is None else g for g, d in zip(given, default))

    def period(self):
        if self.q1 is not None:
            return self.q1
        if self.algorithm == "als-spider":
            return 10
        return self.k_max

    def estimator_config(self):
        tau_x, tau_y, tau_v = self.taus()
        return EstimatorConfig(
            tau_x=tau_x, tau_y=tau_y, tau_v=tau_v, s1=self.s1, s2=self.s2, q1=self.period()
        )

    def solver_config(self, seed):
        return SolverConfig(
            k_max=self.k_max, t_steps=self.t_steps, j_steps=self.j_steps,
            step_x=self.step_x, step_y=self.step_y, step_v=self.step_v,
            radius=self.radius, estimator=self.estimator_config(), seed=seed,
            freeze_x=self.freeze_x,
        )

    def problem_signature(self):
        return {key: getattr(self, key) for key in PROBLEM_KEYS} | {"reg": self.problem_reg}

    def output_path(self, seed=None):
        path = Path(self.output)
        env_dir = os.environ.get(OUTPUT_DIR_ENV)
        if env_dir:
            path = Path(env_dir) / path.name
        if seed is not None and len(self.seeds) > 1:
            path = path.with_name(f"{path.stem}_seed{seed}{path.suffix}")
        return path

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def validate(cfg):
    """Check cross-field consistency; raises :class:`ConfigError`."""
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {PROBLEMS}", "problem")
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}; choose from {ALGORITHMS}", "algorithm")
    for key in ("dim", "n", "n_train", "n_val", "n_test", "k_max", "t_steps", "j_steps", "eval_every"):
        if getattr(cfg, key) < 1:
            raise ConfigError("must be >= 1", key)
    if cfg.n_classes < 2:
        raise ConfigError("must be >= 2", "n_classes")
    if not 0.0 <= cfg.corruption_prob <= 1.0:
        raise ConfigError("must lie in [0, 1]", "corruption_prob")
    if not cfg.problem_reg > 0:
        raise ConfigError("must be > 0", "reg")
    for key in ("step_x", "step_y", "step_v", "radius"):
        if not getattr(cfg, key) > 0:
            raise ConfigError("must be > 0", key)
    for key in ("s1", "s2"):
        size = getattr(cfg, key)
        if size is not None and size < 1:
            raise ConfigError("must be >= 1 or 'full'", key)
    if not cfg.seeds:
        raise ConfigError("at least one seed is required", "seeds")
    if cfg.problem == "hyperclean-idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not getattr(cfg, key):
                raise ConfigError("required for problem 'hyperclean-idx'", key)

    taus = cfg.taus()
    q1 = cfg.period()
    if q1 < 1:
        raise ConfigError("must be >= 1", "q1")
    for key, tau in zip(("tau_x", "tau_y", "tau_v"), taus):
        if not 0.0 <= tau <= 1.0:
            raise ConfigError("must lie in [0, 1]", key)
        if cfg.algorithm == "als-spider" and tau != 0.0:
            raise ConfigError("als-spider requires tau = 0", key)
        if cfg.algorithm == "als-storm" and not 0.0 < tau < 1.0:
            raise ConfigError("als-storm requires 0 < tau < 1", key)
        if cfg.algorithm == "sgd-baseline" and tau != 1.0:
            raise ConfigError("sgd-baseline requires tau = 1", key)
    if cfg.algorithm == "als-spider" and q1 > cfg.k_max:
        raise ConfigError("als-spider requires q1 <= k_max", "q1")
    if cfg.algorithm == "als-storm" and q1 != cfg.k_max:
        raise ConfigError("als-storm requires q1 = k_max (anchor only at k = 0)", "q1")


def parse_config(text, source=None):
    """Parse config text into a validated :class:`RunConfig`."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key, lineno)
        if key in values or (key in ("seed", "seeds") and "seeds" in values):
            raise ConfigError("duplicate key", key, lineno)
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r} ({exc})", key, lineno) from None
        key = "seeds" if key == "seed" else key
        values[key] = parsed
        lines[key] = lineno
    try:
        return RunConfig(source=source, **values)
    except ConfigError as exc:
        if exc.key in lines and exc.line is None:
            raise ConfigError(str(exc).split(": ", 1)[1], exc.key, lines[exc.key]) from None
        raise


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config(text, source=str(path))


def dump_config(cfg):
    """Serialise back to the flat text format (round-trips through parse_config)."""
    out = []
    for f in dataclasses.fields(cfg):
        if f.name == "source":
            continue
        value = getattr(cfg, f.name)
        if value is None and f.name in ("s1", "s2"):
            value = "full"
        if value is None:
            continue
        if f.name == "seeds":
            value = ", ".join(str(s) for s in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        out.append(f"{f.name} = {value}")
    return "\n".join(out) + "\n"
