"""Policy interface and the built-in non-learned baselines.

Per-robot decision functions take an :class:`~dyncoal.observe.Observation`
(which carries the action mask) plus the robot's own memory. Team policies
wrap them so the episode loop can treat every policy, PCFA included, alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observe import Observation, ObservationBatch
from .world import Position, WorldState


@dataclass(frozen=True)
class PolicyDecision:
    target: Position | None  # None: hold position
    revised: bool


def _decision(target, previous) -> PolicyDecision:
    return PolicyDecision(target, target != previous)


def random_policy(obs: Observation, rng: np.random.Generator, previous=None) -> PolicyDecision:
    legal = np.flatnonzero(obs.mask)
    target = obs.cell_of_index(legal[rng.integers(legal.size)])
    return _decision(target, previous)


def first_legal_policy(obs: Observation, previous=None) -> PolicyDecision:
    """Deterministic: the first legal window cell in row-major order."""
    return _decision(obs.cell_of_index(int(np.argmax(obs.mask.ravel()))), previous)


@dataclass(frozen=True)
class GreedyParams:
    hysteresis: float = 1.2
    # multiplier when the robot's arrival would complete the coalition
    coalition_bonus: float = 1.5
    # multiplier when incoming intent already covers the task's level
    saturation_penalty: float = 0.5


def intent_support(intent: np.ndarray) -> np.ndarray:
    """Summed intent on the eight neighbours of every window cell.

    Works on ``(..., S, S)`` stacks; cells outside the window count as zero.
    """
    x = np.asarray(intent, dtype=np.float64)
    S = x.shape[-1]
    pad = np.zeros(x.shape[:-2] + (S + 2, S + 2))
    pad[..., 1:-1, 1:-1] = x
    total = np.zeros_like(x)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            if dr != 1 or dc != 1:
                total += pad[..., dr:dr + S, dc:dc + S]
    return total


def _window_distance(side: int) -> np.ndarray:
    d = np.abs(np.arange(side) - side // 2)
    return np.maximum(d[:, None], d[None, :])


def _adjust(base, level, support, params: GreedyParams, committed: bool = False):
    # the robot's current task is never penalised for saturation: otherwise two
    # robots sharing a task see each other, both leave, and both come back
    bonus = np.where(support + 1.0 >= level, base * params.coalition_bonus, base)
    if committed:
        return bonus
    return np.where(support >= level, base * params.saturation_penalty, bonus)


def greedy_scores(obs: Observation, params: GreedyParams = GreedyParams()):
    """Score every task in view.

    Returns a list of ``(score, base, level, distance, row, col, kept)`` with
    ``base = level**2 / (1 + distance)``, ``score`` the base after the
    coalition adjustment and ``kept`` the score the robot's current task
    would get (no saturation penalty). Support for a task is the summed intent weight of
    other robots on its eight neighbouring cells: a task the robot would
    complete gets ``coalition_bonus``, one already covered gets
    ``saturation_penalty``.
    """
    support = intent_support(obs.intent)
    dist = _window_distance(obs.side)
    out = []
    levels, rows, cols = np.nonzero(obs.task)
    for lvl0, r, c in zip(levels.tolist(), rows.tolist(), cols.tolist()):
        level = lvl0 + 1
        d = int(dist[r, c])
        base = level * level / (1.0 + d)
        score = float(_adjust(base, level, support[r, c], params))
        kept = float(_adjust(base, level, support[r, c], params, committed=True))
        out.append((score, base, level, d, r, c, kept))
    return out


def _explore(obs: Observation, previous, rng) -> PolicyDecision:
    if previous is not None and previous != obs.center and obs.is_legal(previous):
        return _decision(previous, previous)
    far = _window_distance(obs.side) > obs.view_range
    cand = np.flatnonzero(obs.mask & far)
    if cand.size == 0:
        cand = np.flatnonzero(obs.mask)
    pick = cand[0] if rng is None else cand[rng.integers(cand.size)]
    return _decision(obs.cell_of_index(pick), previous)


def greedy_policy(obs: Observation, previous=None, rng: np.random.Generator | None = None,
                  params: GreedyParams = GreedyParams()) -> PolicyDecision:
    """Coalition-seeking greedy choice with hysteresis.

    Keeps the previous task unless the best challenger beats its score by
    more than ``params.hysteresis``. With no task in view the robot explores:
    it keeps an unreached previous target, otherwise draws a random legal
    cell outside its view range.
    """
    scored = greedy_scores(obs, params)
    if not scored:
        return _explore(obs, previous, rng)
    # ties: higher score, then nearer, then row-major window order
    best = min(scored, key=lambda s: (-s[0], s[3], s[4], s[5]))
    target = obs.to_grid(best[4], best[5])
    if previous is not None and previous != target and obs.is_legal(previous):
        pr, pc = obs.to_window(previous)
        prev = next((s for s in scored if s[4] == pr and s[5] == pc), None)
        if prev is not None and best[0] <= params.hysteresis * prev[6]:
            target = previous
    return _decision(target, previous)


class Policy:
    """Team policy: one decision per robot per step."""

    name = "base"
    needs_observations = True

    def reset(self, state: WorldState, rng: np.random.Generator) -> None:
        self.rng = rng

    def act(self, state: WorldState, obs: ObservationBatch | None) -> list[PolicyDecision]:
        raise NotImplementedError


class RandomPolicy(Policy):
    name = "random"

    def act(self, state, obs):
        return [random_policy(obs[i], self.rng, r.assigned_target)
                for i, r in enumerate(state.robots)]


class FirstLegalPolicy(Policy):
    name = "first-legal"

    def act(self, state, obs):
        return [first_legal_policy(obs[i], r.assigned_target) for i, r in enumerate(state.robots)]


def _best_per_robot(I, score, dist):
    """(robots, indices) of each robot's pick among entries grouped by robot.

    Entries are in row-major window order within each robot, so the first
    entry left after keeping the highest score, then the nearest, is the pick.
    """
    if I.size == 0:
        return [], []
    head = np.flatnonzero(np.r_[True, I[1:] != I[:-1]])
    group = np.repeat(np.arange(head.size), np.diff(np.r_[head, I.size]))
    cand = score == np.maximum.reduceat(score, head)[group]
    d = np.where(cand, dist, np.iinfo(dist.dtype).max)
    cand &= d == np.minimum.reduceat(d, head)[group]
    idx = np.flatnonzero(cand)
    idx = idx[np.r_[True, I[idx[1:]] != I[idx[:-1]]]]
    return I[idx].tolist(), idx.tolist()


class GreedyPolicy(Policy):
    """Team-batched :func:`greedy_policy`; decisions match it robot for robot."""

    name = "greedy"

    def __init__(self, params: GreedyParams | None = None, **kw):
        self.params = params or GreedyParams(**kw)

    def act(self, state, obs):
        p = self.params
        n = len(obs)
        S = obs.masks.shape[-1]
        R = S // 2
        # only cells holding a visible task are scored; flat indices of a
        # contiguous copy are much cheaper than nonzero on the strided view
        levels = np.ascontiguousarray(obs.levels)
        flat = np.flatnonzero(levels)
        I, rc = np.divmod(flat, S * S)
        r, c = np.divmod(rc, S)
        level = levels.ravel()[flat].astype(np.float64)
        # a zero ring around each intent window replaces bounds checks
        padded = np.zeros((n, S + 2, S + 2), dtype=obs.intent.dtype)
        padded[:, 1:-1, 1:-1] = obs.intent
        support = np.zeros(I.size)
        for dr in (-1, 0, 1):  # same summation order as intent_support
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                support += padded[I, r + 1 + dr, c + 1 + dc]
        dist = np.maximum(np.abs(r - R), np.abs(c - R))
        base = level * level / (1.0 + dist)
        score = _adjust(base, level, support, p)
        kept = np.zeros((n, S, S))
        kept[I, r, c] = _adjust(base, level, support, p, committed=True)
        best_of = dict(zip(*_best_per_robot(I, score, dist)))

        out = []
        for i, robot in enumerate(state.robots):
            prev = robot.assigned_target
            k = best_of.get(i)
            if k is None:
                out.append(_explore(obs[i], prev, self.rng))
                continue
            cx, cy = robot.position
            target = Position(cx - R + int(c[k]), cy - R + int(r[k]))
            if prev is not None and prev != target:
                pr, pc = prev[1] - cy + R, prev[0] - cx + R
                if 0 <= pr < S and 0 <= pc < S and obs.masks[i, pr, pc]:
                    if score[k] <= p.hysteresis * kept[i, pr, pc]:
                        target = prev
            out.append(PolicyDecision(target, target != prev))
        return out


def make_policy(name: str, **params) -> Policy:
    """Look a policy up by name: random, greedy, first-legal or pcfa.

    ``bridge`` policies are created by :mod:`dyncoal.bridge`, which owns the
    connection to the external process.
    """
    if name == "random":
        return RandomPolicy()
    if name in ("first-legal", "first_legal"):
        return FirstLegalPolicy()
    if name == "greedy":
        return GreedyPolicy(**params)
    if name == "pcfa":
        from .pcfa import PCFAPolicy

        return PCFAPolicy(**params)
    raise ValueError(f"unknown policy {name!r}")


POLICY_NAMES = ("random", "greedy", "pcfa", "first-legal")
