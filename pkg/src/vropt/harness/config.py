"""Experiment configuration: TOML parsing, validation, defaults, hashing.

Unknown keys are rejected by name; invalid values fail with the full field
path. The config hash is a sha256 over a canonical JSON rendering (sorted
keys), so it is stable under field reordering in the source file.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


PROBLEM_KINDS = ("quadratic", "linear_regression", "logistic_regression", "mlp")
OPTIMIZER_KINDS = ("sgd", "vr_sgd", "momentum", "adam", "vr_adam")
VR_MODES = ("mean_normalized", "algorithm_literal")
GRANULARITIES = ("per_parameter", "global_scalar")
NOISE_KINDS = ("constant", "two_level", "ramp", "periodic_burst")
NOISE_DISTS = ("gaussian", "rademacher", "exponential")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "constant"
    base: float = 1.0
    high: float = 1.0
    block: int = 50
    period: int = 100
    dist: str = "gaussian"


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "quadratic"
    dim: int = 1
    l: float = 1.0
    x0_scale: float = 1.0
    dataset: str | None = None
    label_column: str | None = None
    ridge: float = 0.0
    layer_sizes: tuple[int, ...] = ()
    activation: str = "tanh"
    eval_fraction: float = 0.0
    noise: NoiseSpec | None = None


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    alpha: float = 0.01
    s: float = 2.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    bias_correction: bool = True
    mode: str = "mean_normalized"
    granularity: str = "per_parameter"
    eps_guard: float = 1e-8


@dataclass(frozen=True)
class RunSpec:
    batch_size: int = 100
    steps: int = 100
    seeds: tuple[int, ...] = (1,)
    metric_cadence: int = 10
    eval_cadence: int = 0  # 0 means once per epoch (dataset problems only)
    out_dir: str = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    run: RunSpec = field(default_factory=RunSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _take(raw: dict, known: dict, section: str) -> dict:
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    out = dict(known)
    out.update(raw)
    return out


def _build_noise(raw: dict, section: str) -> NoiseSpec:
    vals = _take(raw, asdict(NoiseSpec()), section)
    _require(vals["kind"] in NOISE_KINDS, f"{section}.kind", f"must be one of {NOISE_KINDS}")
    _require(vals["dist"] in NOISE_DISTS, f"{section}.dist", f"must be one of {NOISE_DISTS}")
    _require(vals["base"] >= 0 and vals["high"] >= 0, f"{section}.base/high", "must be >= 0")
    _require(int(vals["block"]) >= 1, f"{section}.block", "must be >= 1")
    _require(int(vals["period"]) >= 1, f"{section}.period", "must be >= 1")
    vals["block"] = int(vals["block"])
    vals["period"] = int(vals["period"])
    return NoiseSpec(**vals)


def _build_problem(raw: dict) -> ProblemSpec:
    noise_raw = raw.pop("noise", None)
    defaults = asdict(ProblemSpec())
    defaults.pop("noise")
    vals = _take(raw, defaults, "problem")
    _require(vals["kind"] in PROBLEM_KINDS, "problem.kind", f"must be one of {PROBLEM_KINDS}")
    _require(vals["dim"] >= 1, "problem.dim", "must be >= 1")
    _require(vals["l"] > 0, "problem.l", "must be > 0")
    _require(vals["ridge"] >= 0, "problem.ridge", "must be >= 0")
    _require(0.0 <= vals["eval_fraction"] < 1.0, "problem.eval_fraction", "must be in [0, 1)")
    if vals["kind"] in ("linear_regression", "logistic_regression", "mlp"):
        _require(vals["dataset"] is not None, "problem.dataset",
                 f"required for kind={vals['kind']}")
    if vals["kind"] == "mlp":
        _require(len(vals["layer_sizes"]) >= 3, "problem.layer_sizes",
                 "need [in, hidden..., out]")
        _require(vals["activation"] in ("tanh", "relu"), "problem.activation",
                 "must be tanh or relu")
    vals["layer_sizes"] = tuple(int(s) for s in vals["layer_sizes"])
    noise = _build_noise(noise_raw, "problem.noise") if noise_raw is not None else None
    return ProblemSpec(noise=noise, **vals)


def _build_optimizer(raw: dict) -> OptimizerSpec:
    vals = _take(raw, asdict(OptimizerSpec()), "optimizer")
    _require(vals["kind"] in OPTIMIZER_KINDS, "optimizer.kind",
             f"must be one of {OPTIMIZER_KINDS}")
    _require(vals["alpha"] > 0, "optimizer.alpha", "must be > 0")
    _require(vals["s"] > 0, "optimizer.s", "must be > 0")
    _require(0 <= vals["beta1"] < 1, "optimizer.beta1", "must be in [0, 1)")
    _require(0 <= vals["beta2"] < 1, "optimizer.beta2", "must be in [0, 1)")
    _require(vals["mode"] in VR_MODES, "optimizer.mode", f"must be one of {VR_MODES}")
    _require(vals["granularity"] in GRANULARITIES, "optimizer.granularity",
             f"must be one of {GRANULARITIES}")
    return OptimizerSpec(**vals)


def _build_run(raw: dict) -> RunSpec:
    vals = _take(raw, asdict(RunSpec()), "run")
    _require(int(vals["batch_size"]) >= 1, "run.batch_size", "must be >= 1")
    _require(int(vals["steps"]) >= 1, "run.steps", "must be >= 1")
    seeds = tuple(int(s) for s in vals["seeds"])
    _require(len(seeds) >= 1, "run.seeds", "must be non-empty")
    _require(len(set(seeds)) == len(seeds), "run.seeds", "must be distinct")
    _require(int(vals["metric_cadence"]) >= 1, "run.metric_cadence", "must be >= 1")
    _require(int(vals["eval_cadence"]) >= 0, "run.eval_cadence", "must be >= 0")
    vals.update(
        batch_size=int(vals["batch_size"]), steps=int(vals["steps"]), seeds=seeds,
        metric_cadence=int(vals["metric_cadence"]), eval_cadence=int(vals["eval_cadence"]),
        out_dir=str(vals["out_dir"]),
    )
    return RunSpec(**vals)


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - {"problem", "optimizer", "run"})
    if unknown:
        raise ConfigError(f"unknown top-level sections: {', '.join(unknown)}")
    return ExperimentConfig(
        problem=_build_problem(dict(raw.get("problem", {}))),
        optimizer=_build_optimizer(dict(raw.get("optimizer", {}))),
        run=_build_run(dict(raw.get("run", {}))),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_dict(raw)


def dump_config(config: ExperimentConfig) -> str:
    """TOML rendering that round-trips through load (used by tests and `run`)."""
    lines = []

    def emit(section: str, values: dict) -> None:
        lines.append(f"[{section}]")
        for key, val in values.items():
            if val is None:
                continue
            if isinstance(val, bool):
                rendered = "true" if val else "false"
            elif isinstance(val, str):
                rendered = json.dumps(val)
            elif isinstance(val, (list, tuple)):
                rendered = "[" + ", ".join(str(v) for v in val) + "]"
            else:
                rendered = repr(float(val)) if isinstance(val, float) else str(val)
            lines.append(f"{key} = {rendered}")
        lines.append("")

    prob = asdict(ExperimentConfig().problem)  # key order template
    actual = asdict(config.problem)
    noise = actual.pop("noise")
    prob.pop("noise")
    emit("problem", {k: actual[k] for k in prob})
    if noise is not None:
        emit("problem.noise", noise)
    emit("optimizer", asdict(config.optimizer))
    emit("run", asdict(config.run))
    return "\n".join(lines)
