"""Per-robot observations, intention maps and the legal-action mask.

Every channel is a square window of side ``2*comm_range + 1`` centred on the
observing robot. Robot, task and obstacle channels are zero beyond
``view_range``; the intent channel covers the whole window.

Channel order: robot, task level 1..l_max, obstacle, intent.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import chain

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .world import ROBOT, WALL, Position, WorldState


@dataclass
class IntentionMap:
    """Sparse weight field over the grid: one weight per planned-path cell."""

    cells: list[Position]
    weights: np.ndarray
    owner: int = -1
    stamp: int = 0

    def dense(self, width: int) -> np.ndarray:
        grid = np.zeros((width, width))
        for (x, y), w in zip(self.cells, self.weights):
            grid[y, x] += w
        return grid


def path_weights(n: int, alpha: float = 2.0 / 3.0, anchor: str = "goal") -> np.ndarray:
    """Weights for an n-cell path ordered robot -> destination."""
    if anchor == "goal":
        return alpha ** np.arange(n - 1, -1, -1, dtype=float)
    if anchor == "robot":
        return alpha ** np.arange(n, dtype=float)
    raise ValueError(f"unknown anchor {anchor!r}")


def build_intention_map(path, alpha: float = 2.0 / 3.0, anchor: str = "goal",
                        owner: int = -1, stamp: int = 0) -> IntentionMap:
    cells = [Position(*p) for p in path]
    return IntentionMap(cells, path_weights(len(cells), alpha, anchor), owner, stamp)


@dataclass
class Observation:
    channels: np.ndarray  # float32 (l_max + 3, S, S)
    mask: np.ndarray  # bool (S, S)
    center: Position
    view_range: int
    comm_range: int

    @property
    def side(self) -> int:
        return self.mask.shape[0]

    @property
    def robot(self) -> np.ndarray:
        return self.channels[0]

    @property
    def task(self) -> np.ndarray:
        """(l_max, S, S); index 0 is level 1."""
        return self.channels[1:-2]

    @property
    def obstacle(self) -> np.ndarray:
        return self.channels[-2]

    @property
    def intent(self) -> np.ndarray:
        return self.channels[-1]

    def to_grid(self, row: int, col: int) -> Position:
        R = self.comm_range
        return Position(self.center.x - R + col, self.center.y - R + row)

    def to_window(self, p) -> tuple[int, int]:
        R = self.comm_range
        return p[1] - self.center.y + R, p[0] - self.center.x + R

    def cell_of_index(self, index: int) -> Position:
        return self.to_grid(*divmod(int(index), self.side))

    def index_of(self, p) -> int:
        r, c = self.to_window(p)
        return r * self.side + c

    def is_legal(self, p) -> bool:
        r, c = self.to_window(p)
        S = self.side
        return 0 <= r < S and 0 <= c < S and bool(self.mask[r, c])

    def to_array(self) -> np.ndarray:
        """Channels followed by the mask plane, float32, row-major."""
        return np.concatenate([self.channels, self.mask[None].astype(np.float32)]).astype(
            np.float32, copy=False)


@dataclass
class ObservationBatch:
    """Observations of several robots, stored compactly.

    ``planes`` holds uint8 (n, 4, S, S) windows: robot, task level (0 for
    none), obstacle and, unused by observers, open cells. The float channel
    stack is built on demand.
    """

    planes: np.ndarray
    intent: np.ndarray  # float32 (n, S, S)
    masks: np.ndarray  # bool (n, S, S)
    robot_ids: np.ndarray
    centers: np.ndarray  # (n, 2) xy
    view_range: int
    comm_range: int
    l_max: int

    def __len__(self) -> int:
        return len(self.robot_ids)

    @property
    def levels(self) -> np.ndarray:
        return self.planes[:, 1]

    def channel_stack(self, k) -> np.ndarray:
        """float32 (..., l_max + 3, S, S) for index or slice ``k``."""
        g = self.planes[k]
        lv = g[..., 1, :, :]
        parts = [g[..., 0, :, :]] + [lv == lvl for lvl in range(1, self.l_max + 1)]
        parts += [g[..., 2, :, :], self.intent[k]]
        return np.stack(parts, axis=-3).astype(np.float32)

    @property
    def channels(self) -> np.ndarray:
        return self.channel_stack(slice(None))

    def __getitem__(self, k: int) -> Observation:
        return Observation(self.channel_stack(k), self.masks[k], Position(*map(int, self.centers[k])),
                           self.view_range, self.comm_range)


def view_window_mask(view_range: int, comm_range: int) -> np.ndarray:
    S = 2 * comm_range + 1
    d = np.abs(np.arange(S) - comm_range)
    return np.maximum(d[:, None], d[None, :]) <= view_range


def render_all(state: WorldState, robot_ids=None) -> ObservationBatch:
    """Render observations and action masks for several robots at once."""
    cfg = state.config
    R, W = cfg.comm_range, state.width
    S = 2 * R + 1
    if robot_ids is None:
        robot_ids = np.arange(len(state.robots))
    robot_ids = np.asarray(robot_ids, dtype=np.int64)
    all_pos = state.positions
    pos = all_pos[robot_ids]
    xs, ys = pos[:, 0], pos[:, 1]

    occ = state.occupancy
    # channel-last so one fancy-index gathers (n, 4, S, S) windows in a single copy;
    # out-of-grid cells read as obstacle
    base = np.zeros((W + 2 * R, W + 2 * R, 4), dtype=np.uint8)
    inner = base[R:R + W, R:R + W]
    inner[..., 0] = occ == ROBOT
    inner[..., 1] = state.task_level
    base[..., 2] = 1
    inner[..., 2] = occ == WALL
    inner[..., 3] = occ != WALL

    planes = sliding_window_view(base, (S, S), axis=(0, 1))[ys, xs]  # (n, 4, S, S)
    # blank the first three planes outside the view range; done in the
    # gathered (channel-last) memory order, which is much faster than
    # multiplying through the strided channel-first view
    keep = np.ones((S, S, 4), dtype=np.uint8)
    keep[..., :3] = view_window_mask(cfg.view_range, R)[..., None]
    cells_last = planes.transpose(0, 2, 3, 1)
    cells_last *= keep
    planes[:, 0, R, R] = 0  # the observer itself
    tasks_seen = planes[:, 1] > 0
    has_task = tasks_seen.reshape(len(robot_ids), -1).max(axis=1)
    masks = np.where(has_task[:, None, None], tasks_seen, planes[:, 3] > 0)
    intent = _intent_windows(state, robot_ids, all_pos, R).astype(np.float32)
    return ObservationBatch(planes, intent, masks, robot_ids, pos, cfg.view_range, R, cfg.l_max)


def render_observation(state: WorldState, robot_id: int) -> Observation:
    return render_all(state, [robot_id])[0]


def _path_arrays(state: WorldState):
    """Flattened (x, y, weight) of every planned path, with per-robot starts and lengths."""
    cfg = state.config
    paths = [r.planned_path for r in state.robots]
    lens = np.fromiter(map(len, paths), dtype=np.int64, count=len(paths))
    starts = np.cumsum(lens) - lens
    total = int(lens.sum())
    cells = np.fromiter(chain.from_iterable(chain.from_iterable(paths)), dtype=np.int64,
                        count=2 * total).reshape(total, 2)
    # index along each path, then the exponent the anchor implies
    k = np.arange(total) - np.repeat(starts, lens)
    if cfg.intent_anchor == "goal":
        k = np.repeat(lens, lens) - 1 - k
    elif cfg.intent_anchor != "robot":
        raise ValueError(f"unknown anchor {cfg.intent_anchor!r}")
    table = cfg.alpha ** np.arange(int(lens.max(initial=0)), dtype=float)
    return cells[:, 0], cells[:, 1], table[k], starts, lens


def _intent_windows(state: WorldState, robot_ids, all_pos, R) -> np.ndarray:
    """Sum of the intention maps of every *other* robot within comm range."""
    W = state.width
    S = 2 * R + 1
    n = len(robot_ids)
    px, py, pw, starts, lens = _path_arrays(state)
    if pw.size == 0:
        return np.zeros((n, S, S))

    # neighbours via a padded robot-id grid; window scan order fixes summation order.
    # Robots without a path contribute nothing and stay off the grid.
    has = lens > 0
    ids = np.full((W + 2 * R, W + 2 * R), -1, dtype=np.int32)
    ids[all_pos[has, 1] + R, all_pos[has, 0] + R] = np.flatnonzero(has)
    ox, oy = all_pos[robot_ids, 0], all_pos[robot_ids, 1]
    win = sliding_window_view(ids, (S, S))[oy, ox].reshape(n, S * S)
    I, K = np.divmod(np.flatnonzero(win >= 0), S * S)
    J = win[I, K]
    keep = J != robot_ids[I]
    I, J = I[keep], J[keep]
    if I.size == 0:
        return np.zeros((n, S, S))
    cnt = lens[J]
    ends = np.cumsum(cnt)
    cell = np.arange(int(ends[-1])) + np.repeat(starts[J] - (ends - cnt), cnt)
    lx = px[cell] - np.repeat(ox[I] - R, cnt)
    ly = py[cell] - np.repeat(oy[I] - R, cnt)
    ok = (lx >= 0) & (lx < S) & (ly >= 0) & (ly < S)
    flat = (np.repeat(I, cnt) * S + ly) * S + lx
    out = np.bincount(flat[ok], weights=pw[cell[ok]], minlength=n * S * S)
    return out.reshape(n, S, S)

    # neighbours via a padded robot-id grid; window scan order fixes summation order
    ids = np.full((W + 2 * R, W + 2 * R), -1, dtype=np.int32)
    ids[all_pos[:, 1] + R, all_pos[:, 0] + R] = np.arange(len(all_pos))
    win = sliding_window_view(ids, (S, S))[all_pos[robot_ids, 1], all_pos[robot_ids, 0]]
    win = win.reshape(n, S * S)
    I, K = np.nonzero(win >= 0)
    J = win[I, K]
    keep = J != robot_ids[I]
    I, J = I[keep], J[keep]
    cnt = lens[J]
    I, J, cnt = I[cnt > 0], J[cnt > 0], cnt[cnt > 0]
    if I.size == 0:
        return out.reshape(n, S, S)
    total = int(cnt.sum())
    rep_i = np.repeat(I, cnt)
    offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cell = np.repeat(starts[J], cnt) + offs
    lx = px[cell] - all_pos[robot_ids[rep_i], 0] + R
    ly = py[cell] - all_pos[robot_ids[rep_i], 1] + R
    ok = (lx >= 0) & (lx < S) & (ly >= 0) & (ly < S)
    flat = rep_i[ok] * (S * S) + ly[ok] * S + lx[ok]
    out = np.bincount(flat, weights=pw[cell[ok]], minlength=n * S * S)
    return out.reshape(n, S, S)
