"""Batch evaluation: experiment plans, metrics, sweeps and result files."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .config import PRNG_ALGORITHM, TABLE_SETTINGS, TASK_SETTINGS, EnvConfig, SpawnModel, TaskRegion
from .episode import EpisodeResult, run_episode
from .policies import make_policy

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class MissingReference(KeyError):
    """A setting has no usable reference reward."""


@dataclass(frozen=True)
class ExperimentPlan:
    env: EnvConfig
    policy: str = "greedy"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    episodes_per_seed: int = 96
    horizon: int | None = None  # overrides env.horizon when set
    policy_params: dict = field(default_factory=dict)

    @property
    def config(self) -> EnvConfig:
        return self.env if self.horizon is None else self.env.replace(horizon=self.horizon)

    def episodes(self) -> list[tuple[int, int]]:
        return [(s, e) for s in self.seeds for e in range(self.episodes_per_seed)]


@dataclass(frozen=True)
class MetricsRecord:
    policy: str
    config_hash: str
    n_episodes: int
    mean: float
    std: float
    ci_low: float
    ci_high: float
    rewards: tuple[float, ...]
    mean_revision_interval: float
    n_invalid: int
    ci_method: str = "normal-approx-95"
    wall_per_step: float = field(default=0.0, compare=False)

    @classmethod
    def from_results(cls, policy: str, config: EnvConfig, results: list[EpisodeResult]) -> MetricsRecord:
        valid = [r for r in results if r.valid]
        rewards = tuple(float(r.reward) for r in valid)
        mean, std, lo, hi = summarize(rewards)
        intervals = [r.revision_interval for r in valid if not math.isnan(r.revision_interval)]
        steps = sum(r.steps for r in results)
        wall = sum(r.wall_seconds for r in results)
        return cls(
            policy=policy, config_hash=config.config_hash(), n_episodes=len(results),
            mean=mean, std=std, ci_low=lo, ci_high=hi, rewards=rewards,
            mean_revision_interval=float(np.mean(intervals)) if intervals else float("nan"),
            n_invalid=len(results) - len(valid),
            wall_per_step=wall / steps if steps else 0.0,
        )

    def summary_row(self) -> dict:
        return {
            "policy": self.policy, "config_hash": self.config_hash, "n_episodes": self.n_episodes,
            "mean": repr(self.mean), "std": repr(self.std), "ci_low": repr(self.ci_low),
            "ci_high": repr(self.ci_high), "mean_revision_interval": repr(self.mean_revision_interval),
            "n_invalid": self.n_invalid, "ci_method": self.ci_method,
        }


def summarize(values) -> tuple[float, float, float, float]:
    """(mean, population std, 95% CI low, high); the CI uses the sample std."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return (float("nan"),) * 4
    mean = float(x.mean())
    std = float(x.std())
    half = Z95 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
    return mean, std, mean - half, mean + half


def _run_one(args) -> EpisodeResult:
    config, policy, params, seed, episode = args
    try:
        return run_episode(config, make_policy(policy, **params), seed, episode)
    except Exception as exc:  # noqa: BLE001 - a broken episode must not stop the run
        log.warning("seed %d episode %d failed: %s", seed, episode, exc)
        return EpisodeResult(seed, episode, 0.0, float("nan"), 0, valid=False,
                             error=f"{type(exc).__name__}: {exc}")


def run_episodes(plan: ExperimentPlan, workers: int = 1) -> list[EpisodeResult]:
    """All episodes of ``plan`` in (seed, episode) order, whatever ``workers`` is."""
    jobs = [(plan.config, plan.policy, dict(plan.policy_params), s, e) for s, e in plan.episodes()]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_plan(plan: ExperimentPlan, workers: int = 1, out_dir: str | Path | None = None,
             tag: str | None = None) -> MetricsRecord:
    results = run_episodes(plan, workers)
    metrics = MetricsRecord.from_results(plan.policy, plan.config, results)
    if out_dir is not None:
        tag = tag or f"{plan.policy}-{plan.config.config_hash()}"
        meta = run_header(plan)
        write_summary_csv(Path(out_dir) / f"{tag}.summary.csv", [metrics.summary_row()], meta)
        write_episodes(Path(out_dir) / f"{tag}.episodes.ndjson", results, meta)
    return metrics


def run_header(plan: ExperimentPlan) -> dict:
    return {"seeds": list(plan.seeds), "episodes_per_seed": plan.episodes_per_seed,
            "prng": PRNG_ALGORITHM, "config_hash": plan.config.config_hash(),
            "policy": plan.policy, "config": plan.config.to_dict()}


def write_summary_csv(path: str | Path, rows: list[dict], meta: dict) -> None:
    """Comma-separated table preceded by ``# key: value`` header lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        for key, value in meta.items():
            f.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        if rows:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def read_summary_csv(path: str | Path) -> tuple[dict, list[dict]]:
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            lines.append(line)
    return meta, list(csv.DictReader(lines))


def write_episodes(path: str | Path, results: Iterable[EpisodeResult], meta: dict,
                   extra: Mapping | None = None) -> None:
    """Newline-delimited per-episode records; the first line is the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        f.write(json.dumps({"header": meta}, sort_keys=True) + "\n")
        for r in results:
            rec = r.record()
            if extra:
                rec.update(extra)
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_episodes(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    return json.loads(lines[0])["header"], [json.loads(x) for x in lines[1:]]


# -- scalability --------------------------------------------------------------

def level_mix(total: int, setting: str = "M2") -> tuple[int, ...]:
    """Split ``total`` tasks over levels in the proportions of ``setting``
    (largest remainder, ties to the lower level)."""
    base = np.asarray(TASK_SETTINGS[setting], dtype=float)
    share = base / base.sum() * total
    counts = np.floor(share).astype(int)
    rest = total - counts.sum()
    order = sorted(range(len(base)), key=lambda i: (-(share[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return tuple(int(c) for c in counts)


def sweep_config(base: EnvConfig, n_robots: int, robot_density: float,
                 task_density: float = 0.1) -> EnvConfig:
    W = int(round(math.sqrt(n_robots / robot_density)))
    n_tasks = int(round(task_density * W * W))
    return base.replace(width=W, n_robots=n_robots, task_setting=level_mix(n_tasks),
                        region=TaskRegion("homogeneous"), spawn=SpawnModel("instant"))


@dataclass(frozen=True)
class SweepPoint:
    n_robots: int
    width: int
    n_tasks: int
    metrics: MetricsRecord


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    slope: float
    intercept: float
    r2: float

    def rows(self) -> list[dict]:
        return [{"n_robots": p.n_robots, "width": p.width, "n_tasks": p.n_tasks,
                 "mean": repr(p.metrics.mean), "std": repr(p.metrics.std),
                 "n_episodes": p.metrics.n_episodes, "wall_per_step": p.metrics.wall_per_step}
                for p in self.points]


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def scalability_sweep(base: ExperimentPlan, robot_density: float = 0.1,
                      n_list=(10, 40, 160, 640, 1000), task_density: float = 0.1,
                      workers: int = 1) -> SweepResult:
    points = []
    for n in n_list:
        cfg = sweep_config(base.config, n, robot_density, task_density)
        plan = ExperimentPlan(cfg, base.policy, base.seeds, base.episodes_per_seed,
                              policy_params=base.policy_params)
        log.info("sweep N=%d W=%d tasks=%d", n, cfg.width, sum(cfg.task_counts))
        points.append(SweepPoint(n, cfg.width, sum(cfg.task_counts), run_plan(plan, workers)))
    slope, intercept, r2 = linear_fit([p.n_robots for p in points], [p.metrics.mean for p in points])
    return SweepResult(tuple(points), slope, intercept, r2)


# -- generalization -------------------------------------------------------------

def generalizability_score(results: Mapping[str, float], reference: Mapping[str, float]) -> float:
    """Mean over settings of policy reward divided by the reference reward."""
    if not results:
        raise ValueError("no settings to score")
    ratios = []
    for name, reward in results.items():
        ref = reference.get(name)
        if ref is None or not ref > 0:
            raise MissingReference(f"no positive reference reward for setting {name!r}")
        ratios.append(reward / ref)
    return float(np.mean(ratios))


def load_reference(path: str | Path) -> dict[str, float]:
    """Reference rewards from JSON/YAML mapping, or a CSV with setting,reward."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
        return {r["setting"]: float(r["reward"]) for r in rows}
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return {str(k): float(v) for k, v in data.items()}


def eval_matrix(base: ExperimentPlan, settings=TABLE_SETTINGS, workers: int = 1,
                out_dir: str | Path | None = None) -> dict[str, tuple[MetricsRecord, list[EpisodeResult]]]:
    """Run ``base`` once per task setting; returns metrics and raw episodes."""
    out = {}
    for name in settings:
        plan = ExperimentPlan(base.config.replace(task_setting=name), base.policy, base.seeds,
                              base.episodes_per_seed, policy_params=base.policy_params)
        results = run_episodes(plan, workers)
        out[name] = (MetricsRecord.from_results(plan.policy, plan.config, results), results)
    if out_dir is not None:
        meta = run_header(base)
        meta["config_hash"] = {k: m.config_hash for k, (m, _) in out.items()}
        meta["settings"] = list(settings)
        rows = [{"setting": k, **m.summary_row()} for k, (m, _) in out.items()]
        write_summary_csv(Path(out_dir) / f"eval-{base.policy}.summary.csv", rows, meta)
        path = Path(out_dir) / f"eval-{base.policy}.episodes.ndjson"
        with path.open("w") as f:
            f.write(json.dumps({"header": meta}, sort_keys=True) + "\n")
            for k, (m, results) in out.items():
                for r in results:
                    f.write(json.dumps({"setting": k, "config_hash": m.config_hash, **r.record()},
                                       sort_keys=True) + "\n")
    return out
