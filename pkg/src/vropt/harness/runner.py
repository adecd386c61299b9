"""Seeded experiment execution, metric records, and paired comparison.

Each (config, seed) run is a pure function of its inputs: problem setup,
batch sampling and noise all draw from counter-based streams derived from
the seed, so a rerun reproduces the record bit for bit. Records carry a
wall-time column for convenience, but canonical bytes and the content hash
exclude it; everything else is covered by the determinism contract.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import optim
from ..numerics import RngStream
from ..problems import (
    LinearRegressionProblem,
    LogisticRegressionProblem,
    MLPProblem,
    NoiseSchedule,
    Problem,
    QuadraticProblem,
    heteroskedastic_stream,
)
from .config import ExperimentConfig
from .datasets import Dataset, load_csv_dataset

THREADS_ENV = "VR_OPTIM_THREADS"

CONVERGENCE_WINDOW = 50
CONVERGENCE_RTOL = 1e-8

COLUMNS = (
    "step", "train_loss", "eval_loss", "eval_acc", "lambda_mean", "lambda_min",
    "lambda_max", "rho_mean", "x_norm", "r_t", "wall_time",
)
_HASH_EXCLUDED = ("wall_time",)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass(frozen=True)
class MetricRow:
    step: int
    train_loss: float
    eval_loss: float | None = None
    eval_acc: float | None = None
    lambda_mean: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    rho_mean: float | None = None
    x_norm: float = 0.0
    r_t: float | None = None
    wall_time: float = 0.0

    def values(self) -> dict:
        return {name: getattr(self, name) for name in COLUMNS}


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    seed: int
    rows: tuple[MetricRow, ...]
    status: str  # converged | budget_exhausted | diverged

    def __post_init__(self):
        steps = [row.step for row in self.rows]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("metric rows must be strictly increasing in step")

    def csv_text(self, include_wall_time: bool = True) -> str:
        cols = COLUMNS if include_wall_time else tuple(
            c for c in COLUMNS if c not in _HASH_EXCLUDED
        )
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in self.rows:
            vals = row.values()
            buf.write(",".join(_fmt(vals[c]) for c in cols) + "\n")
        return buf.getvalue()

    def canonical_bytes(self) -> bytes:
        head = f"config_hash={self.config_hash},seed={self.seed},status={self.status}\n"
        return (head + self.csv_text(include_wall_time=False)).encode()

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def metric_series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        steps = np.array([row.step for row in self.rows], dtype=np.int64)
        vals = np.array(
            [math.nan if getattr(row, metric) is None else float(getattr(row, metric))
             for row in self.rows]
        )
        return steps, vals


def build_problem(spec, dataset: Dataset | None, seed: int) -> Problem:
    if spec.kind == "quadratic":
        return QuadraticProblem(spec.l, spec.dim, x0_scale=spec.x0_scale)
    if dataset is None:
        raise ValueError(f"problem kind {spec.kind} needs a dataset")
    if spec.kind == "linear_regression":
        return LinearRegressionProblem(dataset.features, dataset.labels, ridge=spec.ridge)
    if spec.kind == "logistic_regression":
        return LogisticRegressionProblem(dataset.features, dataset.labels)
    return MLPProblem(
        spec.layer_sizes, spec.activation, dataset.features,
        dataset.labels.astype(np.int64), seed,
    )


def _noise_schedule(spec) -> NoiseSchedule | None:
    if spec is None:
        return None
    return NoiseSchedule(kind=spec.kind, base=spec.base, high=spec.high,
                         block=spec.block, period=spec.period, dist=spec.dist)


def _split_indices(n: int, eval_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    n_eval = int(round(n * eval_fraction))
    n_train = n - n_eval
    return np.arange(n_train), np.arange(n_train, n)


class _EpochSampler:
    """Without-replacement batches; reshuffled every epoch from the stream."""

    def __init__(self, indices: np.ndarray, m: int, rng: RngStream):
        self.indices = indices
        self.m = m
        self.rng = rng
        self._queue: list[np.ndarray] = []

    def next_batch(self) -> np.ndarray:
        if not self._queue:
            perm = self.rng.permutation(len(self.indices))
            shuffled = self.indices[perm]
            self._queue = [
                shuffled[i: i + self.m] for i in range(0, len(shuffled), self.m)
            ][::-1]
        return self._queue.pop()


def run_single(config: ExperimentConfig, seed: int,
               dataset: Dataset | None = None) -> RunRecord:
    """One seeded run; bit-identical across invocations for fixed inputs."""
    spec = config.problem
    run = config.run
    if dataset is None and spec.dataset is not None:
        dataset = load_csv_dataset(spec.dataset, spec.label_column or "label")
    problem = build_problem(spec, dataset, seed)
    schedule = _noise_schedule(spec.noise)

    rng_init = RngStream(seed, stream_id=0)
    rng_data = RngStream(seed, stream_id=1)
    x0 = problem.initial_point(rng_init)

    opt_spec = config.optimizer
    opt_config = optim.OptimizerConfig(
        kind=opt_spec.kind, alpha=opt_spec.alpha, s=opt_spec.s, beta1=opt_spec.beta1,
        beta2=opt_spec.beta2, adam_eps=opt_spec.adam_eps,
        bias_correction=opt_spec.bias_correction, vr_mode=opt_spec.mode,
        granularity=opt_spec.granularity, eps_guard=opt_spec.eps_guard,
    )
    state = optim.init_state(opt_config, x0)

    stream = None
    sampler = None
    steps_per_epoch = None
    train_idx = eval_idx = None
    if schedule is not None or problem.n_samples is None:
        if schedule is None:
            raise ValueError("quadratic runs need a [problem.noise] section")
        stream = heteroskedastic_stream(problem, schedule, rng_data)
        if problem.n_samples is not None:
            train_idx, eval_idx = _split_indices(problem.n_samples, spec.eval_fraction)
    else:
        train_idx, eval_idx = _split_indices(problem.n_samples, spec.eval_fraction)
        sampler = _EpochSampler(train_idx, run.batch_size, rng_data)
        steps_per_epoch = max(1, math.ceil(len(train_idx) / run.batch_size))

    eval_cadence = run.eval_cadence
    if eval_cadence == 0:
        eval_cadence = steps_per_epoch or 0

    def train_loss(x) -> float:
        if train_idx is not None and len(train_idx) < (problem.n_samples or 0):
            return problem.subset_loss(x, train_idx)
        return problem.full_loss(x)

    rows: list[MetricRow] = []
    status = "budget_exhausted"
    loss_window: list[float] = []
    t_start = time.perf_counter()

    def record(step: int, state: optim.OptimizerState, loss: float, do_eval: bool) -> None:
        lam = state.last_lambda
        rho = state.last_rho
        r_t = None
        if problem.x_star is not None:
            diff = state.x - problem.x_star
            r_t = float(diff @ diff)
        ev_loss = ev_acc = None
        if do_eval and eval_idx is not None and len(eval_idx) > 0:
            ev_loss = problem.subset_loss(state.x, eval_idx)
            ev_acc = _subset_accuracy(problem, state.x, eval_idx)
        rows.append(MetricRow(
            step=step, train_loss=loss, eval_loss=ev_loss, eval_acc=ev_acc,
            lambda_mean=None if lam is None else float(lam.mean()),
            lambda_min=None if lam is None else float(lam.min()),
            lambda_max=None if lam is None else float(lam.max()),
            rho_mean=None if rho is None else float(rho.mean()),
            x_norm=float(np.sqrt(state.x @ state.x)),
            r_t=r_t, wall_time=time.perf_counter() - t_start,
        ))

    for t in range(1, run.steps + 1):
        if stream is not None:
            increments = stream.batch(state.x, run.batch_size)
        else:
            batch = sampler.next_batch()
            increments = problem.per_sample_grads(state.x, batch)
        try:
            state = optim.step(state, increments)
        except optim.DivergedError:
            status = "diverged"
            record(t, state, train_loss(state.x), do_eval=False)
            break
        cur_loss = train_loss(state.x)
        do_eval = eval_cadence > 0 and t % eval_cadence == 0
        if t % run.metric_cadence == 0 or t == run.steps or do_eval:
            record(t, state, cur_loss, do_eval=do_eval)
        loss_window.append(cur_loss)
        if len(loss_window) > CONVERGENCE_WINDOW:
            loss_window.pop(0)
            first, last = loss_window[0], loss_window[-1]
            denom = max(abs(first), 1e-300)
            if abs(first - last) / denom < CONVERGENCE_RTOL:
                status = "converged"
                if not rows or rows[-1].step != t:
                    record(t, state, cur_loss, do_eval=False)
                break

    return RunRecord(
        config_hash=config.config_hash(), seed=seed, rows=tuple(rows), status=status
    )


def _subset_accuracy(problem: Problem, x, indices) -> float | None:
    if isinstance(problem, MLPProblem):
        return problem.accuracy(x, indices)
    if isinstance(problem, LogisticRegressionProblem):
        preds = (problem.X[indices] @ np.asarray(x)) > 0.0
        return float((preds == (problem.y[indices] > 0.5)).mean())
    return None


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        return max(1, int(raw))
    return min(4, os.cpu_count() or 1)


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """Run every seed in the config; results ordered by the config's seed list."""
    dataset = None
    if config.problem.dataset is not None:
        dataset = load_csv_dataset(
            config.problem.dataset, config.problem.label_column or "label"
        )
    seeds = config.run.seeds
    workers = min(thread_cap(), len(seeds))
    if workers <= 1:
        return [run_single(config, s, dataset) for s in seeds]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {s: pool.submit(run_single, config, s, dataset) for s in seeds}
        return [futures[s].result() for s in seeds]


def write_records(records: list[RunRecord], out_dir) -> Path:
    """Persist one CSV per seed plus a JSON manifest; returns the run directory."""
    out_dir = Path(out_dir)
    run_dir = out_dir / records[0].config_hash
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": records[0].config_hash, "runs": []}
    for rec in records:
        name = f"seed{rec.seed}.csv"
        (run_dir / name).write_text(rec.csv_text())
        manifest["runs"].append({
            "seed": rec.seed, "status": rec.status,
            "content_hash": rec.content_hash(), "csv": name,
        })
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return run_dir


def load_records(run_dir) -> list[RunRecord]:
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    records = []
    for entry in manifest["runs"]:
        text = (run_dir / entry["csv"]).read_text().splitlines()
        header = text[0].split(",")
        rows = []
        for line in text[1:]:
            cells = dict(zip(header, line.split(",")))
            kwargs = {}
            for col in COLUMNS:
                raw = cells.get(col, "")
                if raw == "":
                    kwargs[col] = None
                elif col == "step":
                    kwargs[col] = int(raw)
                else:
                    kwargs[col] = float(raw)
            rows.append(MetricRow(**kwargs))
        records.append(RunRecord(
            config_hash=manifest["config_hash"], seed=entry["seed"],
            rows=tuple(rows), status=entry["status"],
        ))
    return records


@dataclass(frozen=True)
class ComparisonSummary:
    metric: str
    n_pairs: int
    final_step: int
    win_rate_b: float          # ties count half
    median_final_a: float
    median_final_b: float
    median_final_diff: float   # b - a
    csv_text: str = field(repr=False, default="")


def compare_report(records_a: list[RunRecord], records_b: list[RunRecord],
                   metric: str = "train_loss") -> ComparisonSummary:
    """Paired per-seed comparison at every common recorded step.

    Emits a CSV of per-step medians and quartiles for both sides, plus a
    summary at the last common step: median difference (b - a) and the
    fraction of seeds where b beats a (ties count 0.5).
    """
    by_seed_a = {r.seed: r for r in records_a}
    by_seed_b = {r.seed: r for r in records_b}
    if set(by_seed_a) != set(by_seed_b):
        raise ValueError(
            f"seed sets differ: {sorted(by_seed_a)} vs {sorted(by_seed_b)}"
        )
    seeds = sorted(by_seed_a)
    common_steps = None
    series_a, series_b = {}, {}
    for s in seeds:
        st_a, va = by_seed_a[s].metric_series(metric)
        st_b, vb = by_seed_b[s].metric_series(metric)
        series_a[s] = dict(zip(st_a.tolist(), va.tolist()))
        series_b[s] = dict(zip(st_b.tolist(), vb.tolist()))
        steps = set(st_a.tolist()) & set(st_b.tolist())
        common_steps = steps if common_steps is None else common_steps & steps
    steps = sorted(common_steps)
    if not steps:
        raise ValueError("no common recorded steps to compare")

    buf = io.StringIO()
    buf.write("step,median_a,q25_a,q75_a,median_b,q25_b,q75_b,median_diff,win_rate_b\n")
    final = steps[-1]
    summary_vals = None
    for step in steps:
        a = np.array([series_a[s][step] for s in seeds])
        b = np.array([series_b[s][step] for s in seeds])
        diff = b - a
        wins = float(np.mean((b < a) + 0.5 * (b == a)))
        row = (
            step, np.median(a), np.quantile(a, 0.25), np.quantile(a, 0.75),
            np.median(b), np.quantile(b, 0.25), np.quantile(b, 0.75),
            np.median(diff), wins,
        )
        buf.write(",".join(_fmt(v) for v in row) + "\n")
        if step == final:
            summary_vals = (np.median(a), np.median(b), np.median(diff), wins)
    med_a, med_b, med_diff, win = summary_vals
    return ComparisonSummary(
        metric=metric, n_pairs=len(seeds), final_step=final, win_rate_b=float(win),
        median_final_a=float(med_a), median_final_b=float(med_b),
        median_final_diff=float(med_diff), csv_text=buf.getvalue(),
    )
