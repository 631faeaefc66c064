import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cte.agent import PhysicsConfig, path_is_valid, playable, solidity_grid
from cte.corpus import LevelGrid, parse_vglc_level
from cte.fixtures import fixture_game
from cte.metrics import TileRoleMap

ROLES = TileRoleMap("toy", solids="X")
PHYS = PhysicsConfig(max_jump_height=4, max_jump_span=4)


def flat(rows=8, cols=20):
    cells = np.full((rows, cols), "-", dtype="<U1")
    cells[-1] = "X"
    return cells


def test_solidity_grid():
    assert not solidity_grid(LevelGrid(np.full((3, 4), "-")), ROLES).any()
    s = solidity_grid(LevelGrid(flat(3, 4)), ROLES)
    assert s[-1].all() and not s[:-1].any()
    lv = parse_vglc_level("-E-o\n-XX-\nXX-X")
    np.testing.assert_array_equal(solidity_grid(lv, ROLES), [[0, 0, 0, 0], [0, 1, 1, 0], [1, 1, 0, 1]])


def test_flat_ground_is_a_straight_walk():
    res = playable(LevelGrid(flat()), ROLES, PHYS)
    assert res.playable
    rows = {r for r, _ in res.path}
    cols = [c for _, c in res.path]
    assert rows == {6} and cols == sorted(cols) and cols[-1] == 19
    assert path_is_valid(LevelGrid(flat()), ROLES, res.path, PHYS)


def test_tall_wall_blocks():
    cells = flat()
    cells[:-1, 10] = "X"  # wall from the ground to the ceiling
    res = playable(LevelGrid(cells), ROLES, PHYS)
    assert not res.playable and res.reason == "no path"


def test_wall_within_jump_height_passes():
    cells = flat()
    cells[3:-1, 10] = "X"  # height 4 above the ground
    assert playable(LevelGrid(cells), ROLES, PHYS).playable
    cells[2, 10] = "X"  # height 5 with headroom above is one row too many
    assert not playable(LevelGrid(cells), ROLES, PHYS).playable


@pytest.mark.parametrize("width,ok", [(PHYS.max_jump_span - 1, True), (PHYS.max_jump_span, True), (PHYS.max_jump_span + 1, False), (PHYS.max_jump_span + 2, False)])
def test_gap_width_bound(width, ok):
    cells = flat()
    cells[-1, 8 : 8 + width] = "-"
    assert playable(LevelGrid(cells), ROLES, PHYS).playable is ok


def test_no_start():
    res = playable(LevelGrid(np.full((4, 6), "-")), ROLES, PHYS)
    assert not res.playable and res.reason == "no start"


@pytest.mark.parametrize("game", ["plumber", "castle", "miner"])
def test_fixture_levels_playable(game):
    roles = TileRoleMap.builtin(game)
    for lv in fixture_game(game).levels:
        res = playable(lv, roles)
        assert res.playable, lv.level_id
        assert path_is_valid(lv, roles, res.path)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.6))
def test_removing_unused_solids_keeps_level_playable(seed, frac):
    rng = np.random.default_rng(seed)
    cells = flat(10, 24)
    cells[-1, rng.integers(0, 24, 4)] = "-"
    for _ in range(6):
        r, c = rng.integers(3, 9), rng.integers(2, 22)
        cells[r, c : c + rng.integers(1, 4)] = "X"
    lv = LevelGrid(cells)
    res = playable(lv, ROLES, PHYS)
    if not res.playable:
        return
    support = {(r + 1, c) for r, c in res.path}
    solid = list(zip(*np.nonzero(cells == "X")))
    removable = [p for p in solid if tuple(int(v) for v in p) not in support]
    for r, c in removable:
        if rng.random() < frac:
            cells[r, c] = "-"
    lv2 = LevelGrid(cells)
    assert path_is_valid(lv2, ROLES, res.path, PHYS)
    assert playable(lv2, ROLES, PHYS).playable
