"""Declarative experiment configuration.

Configs are TOML: flat typed scalars at the top level plus [initial] and
[solver] sections. parse_config validates strictly (unknown keys are
rejected, with key path and line where the source text allows), applies
documented defaults, and returns an immutable ExperimentConfig.
render_config writes a config back out such that parse(render(c)) == c.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

try:
    import tomllib as _toml
except ImportError:  # Python 3.10
    import tomli as _toml

from importlib import resources

from .analytic import BkwSolution

_MISSING = object()

DEFAULT_METRICS = (
    "cov11",
    "cov_err_sq_frobenius",
    "entropy_rate",
    "momentum_drift",
    "energy_drift",
)

KNOWN_METRICS = (
    "cov11",
    "cov_err_sq_frobenius",
    "score_err_normalized",
    "l2_density_err",
    "entropy_rate",
    "momentum_drift",
    "energy_drift",
    "weighted_loss",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BkwInitial:
    kind: str = "bkw"


@dataclass(frozen=True)
class GaussianInitial:
    mean: tuple
    variances: tuple
    kind: str = "gaussian"


@dataclass(frozen=True)
class SbtmSettings:
    hidden: tuple
    learning_rate: float = 4e-4
    steps_per_iteration: int = 25
    denoise_alpha: float = 0.4
    train_mode: str = "fixed"
    init_threshold: float = 1e-2
    precision: str = "float64"
    kind: str = "sbtm"


@dataclass(frozen=True)
class BlobSettings:
    bandwidth_mode: str = "per_step"
    kind: str = "blob"


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    gamma: float
    kernel_constant: float
    particles: int
    seed: int
    t_start: float
    t_end: float
    dt: float
    initial: object
    solver: object
    metrics: tuple = DEFAULT_METRICS
    snapshot_times: tuple = ()
    l2_grid: int = 64
    output_dir: str = ""

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))


def _line_of(text: str, key: str, section: str | None) -> str:
    """Best-effort line lookup for a key in the TOML source."""
    lines = text.splitlines()
    start = 0
    if section:
        for i, line in enumerate(lines):
            if re.match(rf"\s*\[{re.escape(section)}\]\s*(#.*)?$", line):
                start = i + 1
                break
    pat = re.compile(rf"\s*{re.escape(key)}\s*=")
    for i in range(start, len(lines)):
        if pat.match(lines[i]):
            return f" (line {i + 1})"
    return ""


class _Section:
    def __init__(self, data: dict, name: str | None, text: str):
        self.data = dict(data)
        self.name = name
        self.text = text

    def path(self, key: str) -> str:
        return f"{self.name}.{key}" if self.name else key

    def err(self, key: str, message: str):
        raise ConfigError(
            f"{self.path(key)}{_line_of(self.text, key, self.name)}: {message}"
        )

    def take(self, key: str, types, default=_MISSING, required: bool = False):
        if key not in self.data:
            if required:
                self.err(key, "required key is missing")
            return None if default is _MISSING else default
        val = self.data.pop(key)
        if types is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if isinstance(val, bool) or not isinstance(val, types):
            self.err(key, f"expected {getattr(types, '__name__', types)}, "
                          f"got {type(val).__name__}")
        return val

    def take_list(self, key: str, elem_types, default=()):
        if key not in self.data:
            return default
        val = self.data.pop(key)
        if not isinstance(val, list):
            self.err(key, f"expected an array, got {type(val).__name__}")
        out = []
        for item in val:
            if elem_types is float and isinstance(item, int) and not isinstance(item, bool):
                item = float(item)
            if isinstance(item, bool) or not isinstance(item, elem_types):
                self.err(key, f"array elements must be {elem_types}")
            out.append(item)
        return tuple(out)

    def finish(self):
        if self.data:
            key = next(iter(self.data))
            self.err(key, "unknown key")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    top = _Section(raw, None, text)
    dimension = top.take("dimension", int, required=True)
    gamma = top.take("gamma", float, default=0.0)
    kernel_constant = top.take("kernel_constant", float, default=1.0)
    particles = top.take("particles", int, required=True)
    seed = top.take("seed", int, default=0)
    t_end = top.take("t_end", float, required=True)
    dt = top.take("dt", float, required=True)
    metrics = top.take_list("metrics", str, default=DEFAULT_METRICS)
    l2_grid = top.take("l2_grid", int, default=64)
    output_dir = top.take("output_dir", str, default="")

    initial_raw = top.take("initial", dict)
    if initial_raw is None:
        raise ConfigError("initial: section required")
    init_sec = _Section(initial_raw, "initial", text)
    kind = init_sec.take("kind", str, required=True)
    if kind == "bkw":
        initial = BkwInitial()
    elif kind == "gaussian":
        mean = init_sec.take_list("mean", float, default=None)
        variances = init_sec.take_list("variances", float, default=None)
        if variances is None:
            init_sec.err("variances", "required for gaussian initial data")
        if mean is None:
            mean = tuple(0.0 for _ in range(dimension))
        initial = GaussianInitial(mean=mean, variances=variances)
    else:
        init_sec.err("kind", f"unknown initial condition {kind!r}")
    init_sec.finish()

    t_start_default = 5.5 if isinstance(initial, BkwInitial) else 0.0
    t_start = top.take("t_start", float, default=t_start_default)
    snapshot_times = top.take_list("snapshot_times", float, default=(t_start, t_end))

    solver_raw = top.take("solver", dict)
    if solver_raw is None or not solver_raw:
        raise ConfigError("solver: section required")
    sol_sec = _Section(solver_raw, "solver", text)
    skind = sol_sec.take("kind", str, required=True)
    if skind == "sbtm":
        default_hidden = (100, 100) if isinstance(initial, BkwInitial) else (100,)
        solver = SbtmSettings(
            hidden=sol_sec.take_list("hidden", int, default=default_hidden),
            learning_rate=sol_sec.take("learning_rate", float, default=4e-4),
            steps_per_iteration=sol_sec.take("steps_per_iteration", int, default=25),
            denoise_alpha=sol_sec.take("denoise_alpha", float, default=0.4),
            train_mode=sol_sec.take("train_mode", str, default="fixed"),
            init_threshold=sol_sec.take("init_threshold", float, default=1e-2),
            precision=sol_sec.take("precision", str, default="float64"),
        )
    elif skind == "blob":
        solver = BlobSettings(
            bandwidth_mode=sol_sec.take("bandwidth_mode", str, default="per_step"),
        )
    else:
        sol_sec.err("kind", f"unknown solver {skind!r}")
    sol_sec.finish()
    top.finish()

    cfg = ExperimentConfig(
        dimension=dimension, gamma=gamma, kernel_constant=kernel_constant,
        particles=particles, seed=seed, t_start=t_start, t_end=t_end, dt=dt,
        initial=initial, solver=solver, metrics=metrics,
        snapshot_times=snapshot_times, l2_grid=l2_grid, output_dir=output_dir,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    def fail(msg):
        raise ConfigError(msg)

    if cfg.dimension < 1:
        fail("dimension: must be >= 1")
    if not -cfg.dimension - 1 <= cfg.gamma <= 1:
        fail(f"gamma: {cfg.gamma} outside [{-cfg.dimension - 1}, 1]")
    if cfg.kernel_constant <= 0:
        fail("kernel_constant: must be positive")
    if cfg.particles < 2:
        fail("particles: need at least 2")
    if cfg.dt <= 0:
        fail("dt: must be positive")
    if cfg.t_end < cfg.t_start:
        fail("t_end: must be >= t_start")
    span = cfg.t_end - cfg.t_start
    steps = round(span / cfg.dt)
    if span > 0 and abs(cfg.t_start + steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        fail("dt: (t_end - t_start) must be a whole number of steps")
    for m in cfg.metrics:
        if m not in KNOWN_METRICS:
            fail(f"metrics: unknown metric {m!r}")
    if isinstance(cfg.initial, GaussianInitial):
        if len(cfg.initial.mean) != cfg.dimension:
            fail("initial.mean: length must equal dimension")
        if len(cfg.initial.variances) != cfg.dimension:
            fail("initial.variances: length must equal dimension")
        if any(v <= 0 for v in cfg.initial.variances):
            fail("initial.variances: entries must be positive")
        needs_truth = {"score_err_normalized", "l2_density_err", "weighted_loss"}
        used = needs_truth.intersection(cfg.metrics)
        if used:
            fail(f"metrics: {sorted(used)} need an analytic solution "
                 "(only the bkw initial condition provides one)")
    else:
        if cfg.dimension < 2:
            fail("dimension: bkw initial condition needs d >= 2")
        if cfg.t_start <= 0:
            fail("t_start: must be positive for the bkw initial condition")
        sol = BkwSolution(cfg.dimension, cfg.kernel_constant, cfg.t_start)
        if sol.P <= 0:
            fail(f"t_start: {cfg.t_start} not above the singular time "
                 f"{sol.singular_time:.6g}")
        if "weighted_loss" in cfg.metrics and cfg.gamma != 0.0:
            fail("metrics: weighted_loss needs gamma = 0")
    if "l2_density_err" in cfg.metrics and cfg.dimension > 3:
        fail("metrics: l2_density_err supports d <= 3 only")
    if cfg.l2_grid < 2:
        fail("l2_grid: must be >= 2")
    if isinstance(cfg.solver, SbtmSettings):
        s = cfg.solver
        if not s.hidden or any(h < 1 for h in s.hidden):
            fail("solver.hidden: need positive layer widths")
        if s.learning_rate <= 0:
            fail("solver.learning_rate: must be positive")
        if s.steps_per_iteration < 0:
            fail("solver.steps_per_iteration: must be >= 0")
        if s.denoise_alpha <= 0:
            fail("solver.denoise_alpha: must be positive")
        if s.train_mode not in ("fixed", "adaptive"):
            fail(f"solver.train_mode: unknown mode {s.train_mode!r}")
        if s.init_threshold <= 0:
            fail("solver.init_threshold: must be positive")
        if s.precision not in ("float32", "float64"):
            fail(f"solver.precision: unknown precision {s.precision!r}")
    elif isinstance(cfg.solver, BlobSettings):
        if cfg.solver.bandwidth_mode not in ("per_step", "fixed_initial"):
            fail(f"solver.bandwidth_mode: unknown mode {cfg.solver.bandwidth_mode!r}")
    else:
        fail("solver: section required")
    for ts in cfg.snapshot_times:
        if ts < cfg.t_start - 1e-12 or ts > cfg.t_end + 1e-12:
            fail(f"snapshot_times: {ts} outside [t_start, t_end]")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value)}")


def render_config(cfg: ExperimentConfig) -> str:
    lines = [
        f"dimension = {_fmt(cfg.dimension)}",
        f"gamma = {_fmt(cfg.gamma)}",
        f"kernel_constant = {_fmt(cfg.kernel_constant)}",
        f"particles = {_fmt(cfg.particles)}",
        f"seed = {_fmt(cfg.seed)}",
        f"t_start = {_fmt(cfg.t_start)}",
        f"t_end = {_fmt(cfg.t_end)}",
        f"dt = {_fmt(cfg.dt)}",
        f"metrics = {_fmt(cfg.metrics)}",
        f"snapshot_times = {_fmt(cfg.snapshot_times)}",
        f"l2_grid = {_fmt(cfg.l2_grid)}",
    ]
    if cfg.output_dir:
        lines.append(f"output_dir = {_fmt(cfg.output_dir)}")
    lines.append("")
    lines.append("[initial]")
    lines.append(f'kind = "{cfg.initial.kind}"')
    if isinstance(cfg.initial, GaussianInitial):
        lines.append(f"mean = {_fmt(cfg.initial.mean)}")
        lines.append(f"variances = {_fmt(cfg.initial.variances)}")
    lines.append("")
    lines.append("[solver]")
    lines.append(f'kind = "{cfg.solver.kind}"')
    if isinstance(cfg.solver, SbtmSettings):
        s = cfg.solver
        lines.append(f"hidden = {_fmt(s.hidden)}")
        lines.append(f"learning_rate = {_fmt(s.learning_rate)}")
        lines.append(f"steps_per_iteration = {_fmt(s.steps_per_iteration)}")
        lines.append(f"denoise_alpha = {_fmt(s.denoise_alpha)}")
        lines.append(f'train_mode = "{s.train_mode}"')
        lines.append(f"init_threshold = {_fmt(s.init_threshold)}")
        lines.append(f'precision = "{s.precision}"')
    else:
        lines.append(f'bandwidth_mode = "{cfg.solver.bandwidth_mode}"')
    lines.append("")
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_names() -> list[str]:
    files = resources.files("landau.presets")
    return sorted(
        p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml")
    )


def preset_text(name: str) -> str:
    files = resources.files("landau.presets")
    path = files / f"{name}.toml"
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Replace fields and revalidate. When the time window changes and
    snapshot_times is not itself overridden, out-of-window snapshots are
    dropped and the new endpoints are used instead."""
    out = replace(cfg, **kwargs)
    if ("t_start" in kwargs or "t_end" in kwargs) and "snapshot_times" not in kwargs:
        kept = tuple(
            t for t in out.snapshot_times if out.t_start <= t <= out.t_end
        )
        endpoints = tuple(
            t for t in (out.t_start, out.t_end) if t not in kept
        )
        out = replace(out, snapshot_times=tuple(sorted(kept + endpoints)))
    validate_config(out)
    return out
