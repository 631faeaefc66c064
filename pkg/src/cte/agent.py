"""A* reachability check for side-scrolling levels.

The agent stands on cells that are empty with a solid cell below. From a
standing cell it can walk one column, step off a ledge and fall, or jump:
rise up to ``max_jump_height`` rows in place, drift up to
``max_jump_span + 1`` columns at that height, then fall until it lands.
Enemies are ignored.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

START_COLUMNS = 3


@dataclass(frozen=True)
class PhysicsConfig:
    max_jump_height: int = 4
    max_jump_span: int = 4

    def __post_init__(self):
        if self.max_jump_height < 1 or self.max_jump_span < 1:
            raise ValueError("jump bounds must be positive")


@dataclass
class PlayResult:
    playable: bool
    path: list  # [(row, col), ...] standing cells
    reason: str = ""

    def __bool__(self):
        return self.playable

    def __iter__(self):
        return iter((self.playable, self.path))


def solidity_grid(level, roles):
    cells = level.cells if hasattr(level, "cells") else np.asarray(level)
    return np.isin(cells, sorted(roles.solids))


def standable(solid):
    solid = np.asarray(solid, dtype=bool)
    out = np.zeros_like(solid)
    out[:-1] = ~solid[:-1] & solid[1:]
    return out


def _land(solid, row, col):
    """Row where a body released at ``(row, col)`` comes to rest, or None if it falls out."""
    rows = solid.shape[0]
    if solid[row, col]:
        return None
    r = row
    while r + 1 < rows and not solid[r + 1, col]:
        r += 1
    return r if r + 1 < rows else None


def moves(solid, state, physics):
    """Standing cells reachable in one move from ``state``, each with its column displacement."""
    rows, cols = solid.shape
    r, c = state
    out = []
    for d in (1, -1):
        nc = c + d
        if 0 <= nc < cols and not solid[r, nc]:
            land = _land(solid, r, nc)
            if land is not None:
                out.append((land, nc))
    for h in range(1, physics.max_jump_height + 1):
        top = r - h
        if top < 0 or solid[top, c]:
            break
        for d in (1, -1):
            for k in range(1, physics.max_jump_span + 2):
                nc = c + d * k
                if not 0 <= nc < cols or solid[top, nc]:
                    break
                land = _land(solid, top, nc)
                if land is not None:
                    out.append((land, nc))
    return sorted(set(out))


def is_legal_move(solid, a, b, physics=PhysicsConfig()):
    return tuple(b) in moves(np.asarray(solid, dtype=bool), tuple(a), physics)


def playable(level, roles, physics=PhysicsConfig()):
    """A* from any standing cell in the leftmost columns to one in the rightmost column.

    Move cost is ``max(1, |dx|)`` so the remaining column count is an
    admissible heuristic. Ties prefer the state further right, then lower.
    """
    solid = solidity_grid(level, roles)
    stand = standable(solid)
    rows, cols = solid.shape
    goal_col = cols - 1
    starts = [(r, c) for c in range(min(START_COLUMNS, cols)) for r in range(rows) if stand[r, c]]
    if not starts:
        return PlayResult(False, [], "no start")
    best = {}
    parent = {}
    heap = []
    for s in starts:
        best[s] = 0
        parent[s] = None
        heapq.heappush(heap, (goal_col - s[1], -s[1], -s[0], 0, s))
    while heap:
        f, _, _, g, s = heapq.heappop(heap)
        if g > best[s]:
            continue
        if s[1] == goal_col:
            path = []
            while s is not None:
                path.append(s)
                s = parent[s]
            return PlayResult(True, path[::-1])
        for n in moves(solid, s, physics):
            ng = g + max(1, abs(n[1] - s[1]))
            if ng < best.get(n, np.inf):
                best[n] = ng
                parent[n] = s
                heapq.heappush(heap, (ng + goal_col - n[1], -n[1], -n[0], ng, n))
    return PlayResult(False, [], "no path")


def path_is_valid(level, roles, path, physics=PhysicsConfig()):
    solid = solidity_grid(level, roles)
    stand = standable(solid)
    if not path or path[0][1] >= START_COLUMNS or path[-1][1] != solid.shape[1] - 1:
        return False
    if not all(stand[r, c] for r, c in path):
        return False
    return all(is_legal_move(solid, a, b, physics) for a, b in zip(path, path[1:]))


def save_path_overlay(image, path, out_path, tile=16):
    """Debug render: tint the standing cells of a path."""
    from PIL import Image

    px = np.asarray(image.pixels if hasattr(image, "pixels") else image).copy()
    for r, c in path:
        block = px[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile].astype(np.int32)
        block = (block + np.array([255, 0, 0])) // 2
        px[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile] = block.astype(np.uint8)
    Image.fromarray(px).save(out_path, format="PNG")
