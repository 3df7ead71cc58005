from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyncoal.config import EnvConfig, TaskRegion, preset
from dyncoal.observe import (build_intention_map, path_weights, render_all, render_observation,
                             view_window_mask)
from dyncoal.world import ROBOT, TASK, WALL, Position, from_layout, init_episode

from oracles import exact_weights

NO_TASKS = (0, 0, 0)


def cfg(**kw):
    base = dict(width=20, n_robots=1, region=TaskRegion("homogeneous"), task_setting=NO_TASKS)
    base.update(kw)
    return EnvConfig(**base)


def naive_render(state, i):
    """Cell-by-cell rendering straight from the channel definitions."""
    c = state.config
    R, V, W, L = c.comm_range, c.view_range, state.width, c.l_max
    S = 2 * R + 1
    me = state.robots[i].position
    ch = np.zeros((L + 3, S, S))
    for r in range(S):
        for col in range(S):
            x, y = me.x - R + col, me.y - R + r
            inside = 0 <= x < W and 0 <= y < W
            if max(abs(x - me.x), abs(y - me.y)) <= V:
                if not inside:
                    ch[L + 1, r, col] = 1
                else:
                    code = state.occupancy[y, x]
                    if code == ROBOT and (x, y) != me:
                        ch[0, r, col] = 1
                    if code == TASK:
                        ch[state.task_level[y, x], r, col] = 1
                    if code == WALL:
                        ch[L + 1, r, col] = 1
    for j, other in enumerate(state.robots):
        if j == i or other.position.chebyshev(me) > R or not other.planned_path:
            continue
        w = path_weights(len(other.planned_path), c.alpha, c.intent_anchor)
        for (x, y), wk in zip(other.planned_path, w):
            r, col = y - me.y + R, x - me.x + R
            if 0 <= r < S and 0 <= col < S:
                ch[L + 2, r, col] += wk
    return ch


def naive_mask(state, i):
    c = state.config
    R, V, W = c.comm_range, c.view_range, state.width
    me = state.robots[i].position
    S = 2 * R + 1
    tasks = np.zeros((S, S), bool)
    open_ = np.zeros((S, S), bool)
    for r in range(S):
        for col in range(S):
            x, y = me.x - R + col, me.y - R + r
            if 0 <= x < W and 0 <= y < W:
                open_[r, col] = state.occupancy[y, x] != WALL
                tasks[r, col] = state.occupancy[y, x] == TASK and max(abs(x - me.x), abs(y - me.y)) <= V
    return tasks if tasks.any() else open_


class TestIntentionMap:
    def test_three_cell_path(self):
        m = build_intention_map([(1, 1), (2, 2), (3, 3)])
        assert m.weights == pytest.approx([4 / 9, 2 / 3, 1.0], abs=1e-15)

    def test_single_cell(self):
        assert build_intention_map([(4, 4)]).weights.tolist() == [1.0]

    def test_ten_cells_min_weight(self):
        w = build_intention_map([(i, 1) for i in range(1, 11)]).weights
        assert w.min() == pytest.approx(float(Fraction(2, 3) ** 9), abs=1e-15)
        assert w.min() == pytest.approx(0.026, abs=5e-4)

    def test_empty_path(self):
        m = build_intention_map([])
        assert m.weights.size == 0 and not m.dense(5).any()

    def test_robot_anchor_switch(self):
        w = path_weights(3, anchor="robot")
        assert w.tolist() == pytest.approx([1.0, 2 / 3, 4 / 9])

    @given(st.integers(1, 30))
    def test_matches_exact_rationals(self, n):
        w = path_weights(n)
        exact = exact_weights(n)
        assert np.allclose(w, [float(f) for f in exact], rtol=0, atol=1e-12)
        assert np.allclose(w[1:] / w[:-1], 1.5, rtol=1e-12)

    def test_dense_sums_revisits(self):
        m = build_intention_map([(1, 1), (2, 1), (1, 1)])
        d = m.dense(4)
        assert d[1, 1] == pytest.approx(4 / 9 + 1.0)


class TestRender:
    def test_window_side_and_hidden_far_task(self):
        c = cfg(n_robots=2)
        s = from_layout(c, [(5, 10), (12, 10)], [((11, 11), 2)])
        # robot 1 plans a path through the far task's neighbourhood
        s.robots[1].planned_path = [Position(12, 10), Position(11, 10)]
        o = render_observation(s, 0)
        assert o.channels.shape == (6, 17, 17)
        assert not o.task.any()  # task at Chebyshev distance 6
        r, col = o.to_window((11, 10))
        assert o.intent[r, col] == pytest.approx(1.0)

    def test_alone_no_tasks(self):
        s = from_layout(cfg(), [(10, 10)])
        o = render_observation(s, 0)
        assert not o.robot.any() and not o.task.any() and not o.intent.any()
        assert not o.obstacle.any()  # the window stays inside the interior
        assert o.mask.all()

    def test_two_tasks_two_legal_cells(self):
        s = from_layout(cfg(), [(10, 10)], [((8, 8), 1), ((12, 13), 3)])
        o = render_observation(s, 0)
        assert o.mask.sum() == 2
        assert o.is_legal((8, 8)) and o.is_legal((12, 13))

    def test_alone_mask_excludes_out_of_grid_and_walls(self):
        s = from_layout(cfg(), [(2, 2)])
        o = render_observation(s, 0)
        legal = {o.cell_of_index(i) for i in np.flatnonzero(o.mask)}
        assert legal == {Position(x, y) for x in range(1, 11) for y in range(1, 11)}

    def test_self_excluded_from_intent(self):
        s = from_layout(cfg(), [(10, 10)])
        s.robots[0].planned_path = [Position(10, 10), Position(11, 11)]
        assert not render_observation(s, 0).intent.any()

    def test_intent_locality(self):
        c = cfg(n_robots=2)
        for dx, expect in ((8, True), (9, False)):
            s = from_layout(c, [(5, 10), (5 + dx, 10)])
            s.robots[1].planned_path = [Position(5 + dx, 10), Position(5 + dx - 1, 10)]
            seen = render_observation(s, 0).intent.any()
            assert seen == expect

    def test_round_trip_cells(self):
        s = from_layout(cfg(), [(4, 7)])
        o = render_observation(s, 0)
        for idx in (0, 5, 100, 288):
            assert o.index_of(o.cell_of_index(idx)) == idx

    def test_to_array_layout(self):
        s = init_episode(preset("nonhomogeneous"), 0)
        o = render_observation(s, 3)
        a = o.to_array()
        assert a.dtype == np.float32 and a.shape == (7, 17, 17)
        assert (a[-1] == o.mask).all() and (a[:-1] == o.channels).all()


def _random_state(seed):
    rng = np.random.default_rng(seed)
    W = int(rng.integers(8, 24))
    V = int(rng.integers(1, 6))
    R = V + int(rng.integers(0, 4))
    c = EnvConfig(width=W, n_robots=int(rng.integers(1, 10)), view_range=V, comm_range=R,
                  region=TaskRegion("homogeneous"), task_setting=(2, 2, 1),
                  intent_anchor=("goal", "robot")[seed % 2])
    s = init_episode(c, seed)
    for r in s.robots:  # arbitrary walks as planned paths
        path = [r.position]
        for _ in range(int(rng.integers(0, 8))):
            p = path[-1]
            path.append(Position(int(np.clip(p.x + rng.integers(-1, 2), 0, W - 1)),
                                 int(np.clip(p.y + rng.integers(-1, 2), 0, W - 1))))
        r.planned_path = path if len(path) > 1 or rng.random() < 0.5 else []
    return s


@given(st.integers(0, 10_000))
@settings(max_examples=150, deadline=None)
def test_batch_render_matches_naive(seed):
    s = _random_state(seed)
    batch = render_all(s)
    V, R = s.config.view_range, s.config.comm_range
    far = ~view_window_mask(V, R)
    for i in range(len(s.robots)):
        o = batch[i]
        ref = naive_render(s, i)
        assert np.allclose(o.channels, ref, rtol=0, atol=1e-6)
        assert (o.mask == naive_mask(s, i)).all()
        assert o.mask.any()
        # view masking: nothing but intent beyond view range
        assert not o.channels[:-1, far].any()
        if o.task.any():
            assert (o.mask == o.task.any(axis=0)).all()


def test_subset_render_matches_full():
    s = _random_state(3)
    full = render_all(s)
    part = render_all(s, [0])
    assert np.array_equal(part.channels[0], full.channels[0])
