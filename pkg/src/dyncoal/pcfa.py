"""Market-based coalition formation baseline with per-step recomputation.

Every environment step each robot bids on the tasks it can see, bid tables
are flooded over the communication graph (links only between robots within
``comm_range``), every connected component resolves the same coalitions
from its consensus table, and robots commit. Nothing carries over between
steps except each robot's exploration memory.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .policies import Policy, PolicyDecision
from .world import EMPTY, WALL, Position, Task, WorldState

log = logging.getLogger(__name__)

_OFFSETS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


def utility(task: Task, eta: float, wait: float, now: int) -> float:
    """Level-squared reward discounted by total delay since the task spawned.

    The arrival time is ``now + eta``; ``eta = inf`` (unreachable) gives 0.
    """
    if eta < 0 or wait < 0:
        raise ValueError("eta and wait must be non-negative")
    if math.isinf(eta):
        return 0.0
    return task.level ** 2 * math.exp(-2.0 * (now + eta + wait - task.spawn_time))


@dataclass(frozen=True)
class Bid:
    robot_id: int
    task_id: int
    utility: float
    eta: int
    stamp: int

    def beats(self, other: Bid) -> bool:
        return (self.utility, -self.robot_id, self.stamp) > (other.utility, -other.robot_id, other.stamp)


BidTable = dict  # (task_id, robot_id) -> Bid


@dataclass
class CoalitionLedger:
    """Outcome of one round for one connected communication component."""

    t: int
    members: tuple[int, ...]
    tasks: dict[int, Task]
    # per task: (robot_id, utility), best first, at most `level` long
    candidates: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    assigned: dict[int, int] = field(default_factory=dict)  # robot -> task, full or partial
    iterations: int = 0

    @property
    def full(self) -> set[int]:
        return {k for k, c in self.candidates.items() if len(c) == self.tasks[k].level}

    @property
    def committed(self) -> dict[int, int]:
        full = self.full
        return {r: k for r, k in self.assigned.items() if k in full}

    def check(self) -> None:
        seen: set[int] = set()
        for k, cand in self.candidates.items():
            assert len(cand) <= self.tasks[k].level, f"task {k} oversubscribed"
            for r, _ in cand:
                assert r not in seen, f"robot {r} in two coalitions"
                seen.add(r)
                assert self.assigned[r] == k

    def records(self, component: int) -> list[dict]:
        return [
            {"t": self.t, "component": component, "task_id": k,
             "coalition": [r for r, _ in cand], "utilities": [u for _, u in cand],
             "full": k in self.full}
            for k, cand in sorted(self.candidates.items())
        ]


@dataclass
class PCFAMemory:
    """Per-robot state that survives between steps: what was seen when, and
    where an idle robot is heading."""

    last_seen: np.ndarray  # (N, W, W) int32, -1 never seen
    explore: list[Position | None]
    ledgers: list[CoalitionLedger] = field(default_factory=list)
    parallel: bool = False
    workers: int = 4

    @classmethod
    def for_state(cls, state: WorldState, parallel: bool = False, workers: int = 4) -> PCFAMemory:
        n, W = len(state.robots), state.width
        return cls(np.full((n, W, W), -1, dtype=np.int32), [None] * n, parallel=parallel,
                   workers=workers)


def communication_components(positions: np.ndarray, comm_range: int) -> tuple[list[list[int]], list[list[int]]]:
    """Neighbour lists and connected components of the Chebyshev-range graph.

    Components are lists of robot ids, sorted, ordered by their smallest id.
    """
    pos = np.asarray(positions).reshape(-1, 2)
    n = len(pos)
    d = np.abs(pos[:, None, :] - pos[None, :, :]).max(axis=2)
    adj = (d <= comm_range) & ~np.eye(n, dtype=bool)
    nbrs = [np.flatnonzero(row).tolist() for row in adj]
    comp = [-1] * n
    comps: list[list[int]] = []
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = len(comps)
        members, queue = [s], deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if comp[v] < 0:
                    comp[v] = comp[s]
                    members.append(v)
                    queue.append(v)
        comps.append(sorted(members))
    return nbrs, comps


def component_diameter(members: list[int], nbrs: list[list[int]]) -> int:
    best = 0
    for s in members:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        best = max(best, max(dist.values()))
    return best


def task_etas(blocked: list, W: int, start: Position, tasks: list[Task]) -> list[float]:
    """Fewest moves from ``start`` to a cell next to each task; inf if none.

    One breadth-first flood serves all tasks; since moves cost one step each,
    these equal the A* path costs for the same goals.
    """
    etas = [math.inf] * len(tasks)
    if not tasks:
        return etas
    sx, sy = start
    s = sy * W + sx
    # cell index -> tasks it is next to
    goal_of: dict[int, list[int]] = {}
    for k, t in enumerate(tasks):
        tx, ty = t.location
        for dx, dy in _OFFSETS:
            x, y = tx + dx, ty + dy
            if 0 <= x < W and 0 <= y < W:
                goal_of.setdefault(y * W + x, []).append(k)
    left = len(tasks)
    dist = {s: 0}
    queue = deque([(sx, sy)])
    while queue and left:
        x, y = queue.popleft()
        i = y * W + x
        d = dist[i]
        for k in goal_of.get(i, ()):
            if etas[k] == math.inf:
                etas[k] = d
                left -= 1
        for dx, dy in _OFFSETS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < W and 0 <= ny < W:
                j = ny * W + nx
                if j not in dist and not blocked[j]:
                    dist[j] = d + 1
                    queue.append((nx, ny))
    return etas


def generate_bids(state: WorldState, rid: int, blocked: list) -> BidTable:
    """Stage 1: bids for every reachable task within the robot's view."""
    cfg = state.config
    p = state.robots[rid].position
    seen = [t for t in state.tasks.values() if p.chebyshev(t.location) <= cfg.view_range]
    seen.sort(key=lambda t: t.id)
    table: BidTable = {}
    for t, eta in zip(seen, task_etas(blocked, state.width, p, seen)):
        if math.isinf(eta):
            continue
        table[(t.id, rid)] = Bid(rid, t.id, utility(t, eta, 0, state.time), int(eta), state.time)
    return table


def merge_tables(own: BidTable, others: Iterable[BidTable]) -> BidTable:
    out = dict(own)
    for table in others:
        for key, bid in table.items():
            cur = out.get(key)
            if cur is bid:
                continue
            if cur is None or bid.beats(cur):
                out[key] = bid
    return out


def propagate(tables: list[BidTable], nbrs: list[list[int]], pool=None) -> tuple[list[BidTable], int]:
    """Stage 2: synchronous neighbour merges until no table changes."""
    rounds = 0
    while True:
        def merged(i):
            return merge_tables(tables[i], (tables[j] for j in nbrs[i]))

        idx = range(len(tables))
        new = list(pool.map(merged, idx)) if pool is not None else [merged(i) for i in idx]
        if new == tables:
            return tables, rounds
        tables = new
        rounds += 1


def _select(active: dict, util: dict, tasks: dict[int, Task]) -> dict[int, list[int]]:
    by_task: dict[int, list[int]] = {}
    for k, r in active:
        by_task.setdefault(k, []).append(r)
    return {k: sorted(rs, key=lambda r: (-util[(k, r)], r))[:tasks[k].level]
            for k, rs in by_task.items()}


def resolve(bids: BidTable, tasks: dict[int, Task], now: int, cap: int) -> tuple[dict[int, list[tuple[int, float]]], int]:
    """Stage 3: candidate coalitions from a consensus bid table.

    Each task takes its top-``level`` bidders by (utility desc, robot id);
    a robot selected by several tasks keeps the one where its utility is
    highest (lower task id on ties) and withdraws its other bids, until no
    robot is selected twice. Waits are then recomputed from the selected
    coalitions and the whole selection repeats, at most ``cap`` times.
    """
    etas = {key: b.eta for key, b in bids.items()}
    wait = {key: 0 for key in bids}
    cands: dict[int, list[int]] = {}
    util: dict = {}
    it = 0
    for it in range(1, cap + 1):
        util = {key: utility(tasks[key[0]], etas[key], wait[key], now) for key in bids}
        active = dict.fromkeys(bids)
        while True:
            cands = _select(active, util, tasks)
            picked: dict[int, list[int]] = {}
            for k, rs in cands.items():
                for r in rs:
                    picked.setdefault(r, []).append(k)
            clash = {r: ks for r, ks in picked.items() if len(ks) > 1}
            if not clash:
                break
            for r, ks in clash.items():
                keep = min(ks, key=lambda k: (-util[(k, r)], k))
                for k in ks:
                    if k != keep:
                        del active[(k, r)]
        new_wait = {}
        for (k, r), eta in etas.items():
            slowest = max((etas[(k, m)] for m in cands.get(k, ())), default=eta)
            new_wait[(k, r)] = max(0, slowest - eta)
        if new_wait == wait:
            break
        wait = new_wait
    out = {k: [(r, util[(k, r)]) for r in rs] for k, rs in sorted(cands.items()) if rs}
    return out, it


def _update_seen(state: WorldState, memory: PCFAMemory) -> None:
    V, W, t = state.config.view_range, state.width, state.time
    for r in state.robots:
        x, y = r.position
        memory.last_seen[r.id, max(0, y - V):min(W, y + V + 1), max(0, x - V):min(W, x + V + 1)] = t


def _explore_target(state: WorldState, rid: int, memory: PCFAMemory) -> Position:
    """Oldest-seen open cell in the communication window, nearest first."""
    cfg = state.config
    p = state.robots[rid].position
    prev = memory.explore[rid]
    if prev is not None and prev.chebyshev(p) > cfg.view_range:
        return prev
    R, W = cfg.comm_range, state.width
    y0, y1 = max(0, p.y - R), min(W, p.y + R + 1)
    x0, x1 = max(0, p.x - R), min(W, p.x + R + 1)
    seen = memory.last_seen[rid, y0:y1, x0:x1].astype(np.int64)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dist = np.maximum(np.abs(xs - p.x), np.abs(ys - p.y))
    open_ = state.occupancy[y0:y1, x0:x1] != WALL
    key = np.where(open_, seen, np.iinfo(np.int64).max)
    oldest = key.min()
    cand = key == oldest
    d = np.where(cand, dist, np.iinfo(np.int64).max)
    r, c = np.unravel_index(np.argmin(np.where(d == d.min(), ys * W + xs, np.iinfo(np.int64).max)), d.shape)
    target = Position(int(xs[r, c]), int(ys[r, c]))
    memory.explore[rid] = target
    return target


def pcfa_round(state: WorldState, memory: PCFAMemory | None = None) -> tuple[list[CoalitionLedger], list[Position | None]]:
    """One full bid, propagate, resolve, commit round for the current step.

    Returns one ledger per connected component and a target per robot:
    its coalition's task, an exploration cell when it sees no reachable
    task, or None (hold) when it was outbid everywhere.
    """
    if memory is None:
        memory = PCFAMemory.for_state(state)
    cfg = state.config
    n = len(state.robots)
    _update_seen(state, memory)
    blocked = (state.occupancy.ravel() != EMPTY).tolist()
    by_id = {t.id: t for t in state.tasks.values()}
    nbrs, comps = communication_components(state.positions, cfg.comm_range)

    pool = ThreadPoolExecutor(memory.workers) if memory.parallel else None
    try:
        own = (list(pool.map(lambda i: generate_bids(state, i, blocked), range(n))) if pool
               else [generate_bids(state, i, blocked) for i in range(n)])
        tables, _ = propagate(own, nbrs, pool)
    finally:
        if pool is not None:
            pool.shutdown()

    ledgers: list[CoalitionLedger] = []
    targets: list[Position | None] = [None] * n
    for members in comps:
        table = tables[members[0]]
        for r in members[1:]:
            assert tables[r] == table, f"component {members}: robot {r} disagrees"
        tasks = {k: by_id[k] for k, _ in table}
        cap = max(1, 2 * component_diameter(members, nbrs))
        cands, iters = resolve(table, tasks, state.time, cap)
        ledger = CoalitionLedger(state.time, tuple(members), tasks, cands, iterations=iters)
        for k, cand in cands.items():
            for r, _ in cand:
                ledger.assigned[r] = k
        ledger.check()
        ledgers.append(ledger)
        for r in members:
            if r in ledger.assigned:
                targets[r] = tasks[ledger.assigned[r]].location
                memory.explore[r] = None
            elif not any(rid == r for _, rid in table):
                targets[r] = _explore_target(state, r, memory) if not _sees_task(state, r) else None
            else:
                log.debug("t=%d robot %d outbid on every task, holding", state.time, r)
    memory.ledgers = ledgers
    return ledgers, targets


def _sees_task(state: WorldState, rid: int) -> bool:
    p = state.robots[rid].position
    V = state.config.view_range
    return any(p.chebyshev(loc) <= V for loc in state.tasks)


def ledger_lines(ledgers: list[CoalitionLedger]) -> list[str]:
    return [json.dumps(rec, sort_keys=True) for i, led in enumerate(ledgers) for rec in led.records(i)]


class PCFAPolicy(Policy):
    """Team policy running :func:`pcfa_round` every step."""

    name = "pcfa"
    needs_observations = False

    def __init__(self, parallel: bool = False, workers: int = 4, ledger_sink=None):
        self.parallel = parallel
        self.workers = workers
        self.ledger_sink = ledger_sink  # callable taking NDJSON lines

    def reset(self, state, rng):
        super().reset(state, rng)
        self.memory = PCFAMemory.for_state(state, self.parallel, self.workers)

    def act(self, state, obs):
        ledgers, targets = pcfa_round(state, self.memory)
        if self.ledger_sink is not None:
            self.ledger_sink(ledger_lines(ledgers))
        return [PolicyDecision(tg, tg != r.assigned_target) for tg, r in zip(targets, state.robots)]
