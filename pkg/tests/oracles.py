"""Independent reference computations used by the tests.

These deliberately share no code with the package: plain breadth-first
search, exact rational arithmetic and exhaustive enumeration.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from itertools import product

MOVES = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


def bfs_cost(blocked, start, goal, adjacent):
    """Fewest 8-connected unit moves from start to goal (or to a cell next
    to goal when ``adjacent``), never entering a blocked cell. None if
    unreachable. ``blocked`` is a nested [y][x] sequence of bools."""
    H, W = len(blocked), len(blocked[0])

    def done(c):
        if adjacent:
            return max(abs(c[0] - goal[0]), abs(c[1] - goal[1])) == 1
        return c == tuple(goal)

    start = tuple(start)
    dist = {start: 0}
    q = deque([start])
    while q:
        c = q.popleft()
        if done(c):
            return dist[c]
        for dx, dy in MOVES:
            n = (c[0] + dx, c[1] + dy)
            if 0 <= n[0] < W and 0 <= n[1] < H and not blocked[n[1]][n[0]] and n not in dist:
                dist[n] = dist[c] + 1
                q.append(n)
    return None


def exact_weights(n, alpha=Fraction(2, 3)):
    """Goal-anchored weights for an n-cell path, robot -> goal, as fractions."""
    return [alpha ** (n - 1 - i) for i in range(n)]


def enumerate_completions(robots, tasks):
    """Brute-force the completion rule on a tiny instance.

    ``robots``: list of (position, assigned_target); ``tasks``: dict
    location -> level. Every task is checked against every subset of robots;
    a task completes iff some subset of size >= level consists of robots
    adjacent to and assigned to it. Returns (completed locations, reward).
    """
    done = []
    for loc, level in tasks.items():
        ok = False
        for pick in product((0, 1), repeat=len(robots)):
            chosen = [r for r, b in zip(robots, pick) if b]
            if len(chosen) < level:
                continue
            if all(tgt == loc and max(abs(p[0] - loc[0]), abs(p[1] - loc[1])) == 1
                   for p, tgt in chosen):
                ok = True
                break
        if ok:
            done.append(loc)
    return sorted(done), sum(tasks[c] ** 2 for c in done)
