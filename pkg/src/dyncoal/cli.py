"""Command line entry point: ``python -m dyncoal <command>``.

Environment settings come from ``--preset`` and/or ``--config`` (JSON or
YAML); individual flags override them, ``--set key=value`` overrides any
field. Commands exit non-zero when an episode was invalid.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, TABLE_SETTINGS, ConfigError, EnvConfig, SpawnModel, TaskRegion, load_config, preset
from .harness import (ExperimentPlan, eval_matrix, generalizability_score, load_reference,
                      read_summary_csv, run_episodes, run_header, scalability_sweep,
                      write_episodes, write_summary_csv, MetricsRecord, MissingReference)
from .policies import POLICY_NAMES

log = logging.getLogger("dyncoal")


def _xy(text: str) -> tuple[int, int]:
    x, y = text.split(",")
    return int(x), int(y)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _env_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("environment")
    g.add_argument("--preset", choices=sorted(PRESETS), default="nonhomogeneous")
    g.add_argument("--config", type=Path, help="JSON or YAML config file")
    g.add_argument("--width", type=int)
    g.add_argument("--n-robots", type=int)
    g.add_argument("--view-range", type=int)
    g.add_argument("--comm-range", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--task-setting", help="catalog name such as M2, or counts like 4,3,3")
    g.add_argument("--region", choices=("homogeneous", "corner"))
    g.add_argument("--spawn", choices=("instant", "bernoulli"))
    g.add_argument("--spawn-p", type=float, help="per-cell spawn probability (bernoulli)")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field; VALUE is parsed as JSON when possible")


def _run_args(p: argparse.ArgumentParser, default_eps: int = 96) -> None:
    p.add_argument("--policy", choices=POLICY_NAMES, default="greedy")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--episodes", type=int, default=default_eps, help="episodes per seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))


def build_config(args) -> EnvConfig:
    cfg = load_config(args.config) if args.config else preset(args.preset)
    changes = {}
    for flag, key in (("width", "width"), ("n_robots", "n_robots"), ("view_range", "view_range"),
                      ("comm_range", "comm_range"), ("horizon", "horizon")):
        if getattr(args, flag) is not None:
            changes[key] = getattr(args, flag)
    if args.task_setting:
        ts = args.task_setting
        changes["task_setting"] = tuple(_int_list(ts)) if "," in ts else ts
    if args.region:
        changes["region"] = TaskRegion(args.region)
    if args.spawn or args.spawn_p is not None:
        kind = args.spawn or ("bernoulli" if args.spawn_p is not None else cfg.spawn.kind)
        changes["spawn"] = SpawnModel(kind, args.spawn_p if args.spawn_p is not None else cfg.spawn.p)
    d = cfg.replace(**changes).to_dict()
    for item in args.set:
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        d[key] = value
    return EnvConfig.from_dict(d)


def cmd_run(args) -> int:
    cfg = build_config(args)
    params = {}
    sink = None
    if args.ledger_dump:
        if args.policy != "pcfa":
            raise SystemExit("--ledger-dump only applies to --policy pcfa")
        args.ledger_dump.parent.mkdir(parents=True, exist_ok=True)
        sink = args.ledger_dump.open("w")
        params["ledger_sink"] = lambda lines: sink.write("".join(x + "\n" for x in lines))
        args.workers = 1  # the sink is a local file handle
    plan = ExperimentPlan(cfg, args.policy, tuple(args.seeds), args.episodes, policy_params=params)
    try:
        results = run_episodes(plan, args.workers)
    finally:
        if sink is not None:
            sink.close()
    metrics = MetricsRecord.from_results(args.policy, cfg, results)
    meta = run_header(plan)
    tag = f"run-{args.policy}-{cfg.config_hash()}"
    write_summary_csv(args.out / f"{tag}.summary.csv", [metrics.summary_row()], meta)
    write_episodes(args.out / f"{tag}.episodes.ndjson", results, meta)
    print(f"{args.policy}: mean {metrics.mean:.3f} std {metrics.std:.3f} "
          f"95% CI [{metrics.ci_low:.3f}, {metrics.ci_high:.3f}] over {metrics.n_episodes} episodes "
          f"({metrics.n_invalid} invalid) -> {args.out}/{tag}.*")
    return 1 if metrics.n_invalid else 0


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    plan = ExperimentPlan(cfg, args.policy, tuple(args.seeds), args.episodes)
    res = scalability_sweep(plan, args.density, args.n_list, args.task_density, args.workers)
    meta = run_header(plan)
    meta.update(robot_density=args.density, task_density=args.task_density,
                slope=res.slope, intercept=res.intercept, r2=res.r2)
    path = args.out / f"sweep-{args.policy}-{args.density}.csv"
    write_summary_csv(path, res.rows(), meta)
    for row in res.rows():
        print(f"N={row['n_robots']:5d} W={row['width']:4d} tasks={row['n_tasks']:5d} "
              f"mean={float(row['mean']):10.2f} step={row['wall_per_step'] * 1e3:7.2f} ms")
    print(f"slope {res.slope:.4f} intercept {res.intercept:.3f} R^2 {res.r2:.4f} -> {path}")
    return 1 if any(p.metrics.n_invalid for p in res.points) else 0


def cmd_eval(args) -> int:
    cfg = build_config(args)
    plan = ExperimentPlan(cfg, args.policy, tuple(args.seeds), args.episodes)
    out = eval_matrix(plan, args.settings, args.workers, args.out)
    for name, (m, _) in out.items():
        print(f"{name:4s} mean {m.mean:10.3f} std {m.std:9.3f} n={m.n_episodes} invalid={m.n_invalid}")
    return 1 if any(m.n_invalid for m, _ in out.values()) else 0


def cmd_score(args) -> int:
    _, rows = read_summary_csv(args.results)
    results = {r["setting"]: float(r["mean"]) for r in rows}
    if args.settings:
        results = {k: v for k, v in results.items() if k in args.settings}
    score = generalizability_score(results, load_reference(args.reference))
    print(f"generalizability score {score:.6f} over {len(results)} settings")
    return 0


def cmd_plan_debug(args) -> int:
    from .plan import NoPath, PlanQuery, astar
    from .world import EMPTY, init_episode

    cfg = build_config(args)
    state = init_episode(cfg, args.seed)
    start = args.start or tuple(state.robots[args.robot].position)
    goal = args.goal or next(iter(sorted(state.tasks.values(), key=lambda t: t.id))).location
    blocked = state.occupancy != EMPTY
    blocked[start[1], start[0]] = False
    expansions: list = []
    query = PlanQuery(tuple(start), tuple(goal), blocked)
    try:
        path = astar(query, expansions)
        out = {"start": list(start), "goal": list(goal), "to_adjacent": query.adjacent_goal,
               "cost": path.cost, "path": [list(c) for c in path.cells]}
    except NoPath as exc:
        out = {"start": list(start), "goal": list(goal), "to_adjacent": query.adjacent_goal,
               "no_path": str(exc)}
    out["expanded"] = len(expansions)
    if args.show_expansions:
        out["expansions"] = [list(c) for c in expansions]
    print(json.dumps(out))
    return 0


def cmd_bridge(args) -> int:
    from .bridge import Transport, serve, unix_listen

    cfg = build_config(args)
    transport = unix_listen(str(args.socket)) if args.socket else Transport.stdio()
    episodes = [(s, e) for s in args.seeds for e in range(args.episodes)]
    try:
        return serve(transport, cfg, episodes, timeout=args.timeout)
    finally:
        transport.close()


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyncoal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment plan")
    _env_args(p)
    _run_args(p)
    p.add_argument("--ledger-dump", type=Path, help="pcfa only: write per-step coalition records")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="scalability sweep at constant robot and task density")
    _env_args(p)
    _run_args(p, default_eps=2)
    p.add_argument("--density", type=float, default=0.1, help="robots per cell")
    p.add_argument("--task-density", type=float, default=0.1)
    p.add_argument("--n-list", type=_int_list, default=[10, 40, 160, 640, 1000])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate one policy on every task setting")
    _env_args(p)
    _run_args(p)
    p.add_argument("--settings", nargs="+", default=list(TABLE_SETTINGS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="generalizability score from an eval summary")
    p.add_argument("--results", type=Path, required=True, help="summary CSV written by eval")
    p.add_argument("--reference", type=Path, required=True, help="per-setting reference rewards")
    p.add_argument("--settings", nargs="+")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("plan-debug", help="plan one path in a freshly seeded world")
    _env_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--robot", type=int, default=0)
    p.add_argument("--start", type=_xy)
    p.add_argument("--goal", type=_xy, help="defaults to the oldest task")
    p.add_argument("--show-expansions", action="store_true")
    p.set_defaults(func=cmd_plan_debug)

    p = sub.add_parser("bridge", help="serve episodes to an external policy process")
    _env_args(p)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--socket", type=Path, help="unix socket path (default: stdin/stdout)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_bridge)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MissingReference, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
