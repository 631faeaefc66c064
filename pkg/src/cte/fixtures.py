"""Eight small procedurally built games used for tests and desk-scale runs.

Every game has symbol levels, a sprite sheet, an affordance map and a role
map, so the whole pipeline can run without copyrighted level data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .corpus import TILE, AffordanceMap, LevelGrid, render_symbols

FIXTURE_SEED = 20211
GAMES = ("plumber", "steppe", "castle", "miner", "climber", "dungeon", "blaster", "kong")


def data_json(kind, game):
    return json.loads((resources.files("cte") / "data" / kind / f"{game}.json").read_text())


def fixture_affordances(game):
    return AffordanceMap.from_json(data_json("affordances", game), game=game)


# ---------------------------------------------------------------------------
# sprites
# ---------------------------------------------------------------------------


def _pattern(kind):
    y, x = np.mgrid[0:TILE, 0:TILE]
    if kind == "flat":
        return np.zeros((TILE, TILE))
    if kind == "brick":
        return ((y % 8 == 0) | (x + 8 * ((y // 8) % 2)) % 16 == 0).astype(float)
    if kind == "checker":
        return ((x // 4 + y // 4) % 2).astype(float)
    if kind == "border":
        return ((x < 2) | (x > 13) | (y < 2) | (y > 13)).astype(float)
    if kind == "dot":
        return (((x - 7.5) ** 2 + (y - 7.5) ** 2) < 16).astype(float)
    if kind == "ring":
        r2 = (x - 7.5) ** 2 + (y - 7.5) ** 2
        return ((r2 < 42) & (r2 > 12)).astype(float)
    if kind == "hstripe":
        return ((y // 3) % 2).astype(float)
    if kind == "vstripe":
        return ((x // 3) % 2).astype(float)
    if kind == "cross":
        return ((abs(x - 7.5) < 2) | (abs(y - 7.5) < 2)).astype(float)
    if kind == "diag":
        return (((x + y) // 4) % 2).astype(float)
    if kind == "ladder":
        return ((x < 3) | (x > 12) | (y % 5 == 0)).astype(float)
    if kind == "spike":
        return (y >= 15 - 2 * abs((x % 8) - 3.5)).astype(float)
    if kind == "top":
        return (y < 5).astype(float)
    if kind == "left":
        return ((x < 4) | (y < 3)).astype(float)
    if kind == "right":
        return ((x > 11) | (y < 3)).astype(float)
    if kind == "face":
        eyes = ((abs(x - 4.5) < 1.5) | (abs(x - 10.5) < 1.5)) & (abs(y - 5) < 2)
        return ((((x - 7.5) ** 2 + (y - 8) ** 2) < 50) & ~eyes).astype(float)
    if kind == "wave":
        return (np.abs(y - 8 - 3 * np.sin(x / 2.5)) < 2).astype(float)
    if kind == "tri":
        return (y >= 2 * abs(x - 7.5)).astype(float)
    raise ValueError(kind)


def make_sprite(base, ink, kind):
    p = _pattern(kind)[..., None]
    base, ink = np.asarray(base, dtype=float), np.asarray(ink, dtype=float)
    return np.clip(np.rint(base * (1 - p) + ink * p), 0, 255).astype(np.uint8)


SKY = (92, 148, 252)
SPRITE_SPECS = {
    "plumber": {
        "-": (SKY, SKY, "flat"), "X": ((200, 76, 12), (0, 0, 0), "brick"), "S": ((180, 60, 20), (250, 200, 160), "checker"),
        "?": ((252, 160, 68), (120, 40, 0), "dot"), "Q": ((136, 80, 40), (60, 30, 10), "border"),
        "E": (SKY, (160, 70, 20), "face"), "o": (SKY, (252, 216, 0), "ring"),
        "<": ((0, 168, 0), (0, 80, 0), "left"), ">": ((0, 168, 0), (0, 80, 0), "right"),
        "[": ((0, 140, 0), (0, 60, 0), "vstripe"), "]": ((0, 140, 0), (0, 60, 0), "hstripe"),
        "B": ((40, 40, 40), (200, 200, 200), "cross"), "b": ((40, 40, 40), (120, 120, 120), "diag"),
    },
    "steppe": {
        ".": ((120, 200, 90), (120, 200, 90), "flat"), "F": ((120, 200, 90), (20, 100, 30), "tri"),
        "M": ((150, 130, 110), (80, 60, 50), "tri"), "C": ((170, 170, 170), (70, 70, 90), "border"),
        "D": ((236, 210, 140), (200, 170, 100), "dot"), "R": ((40, 90, 220), (150, 200, 255), "wave"),
        "T": ((200, 160, 120), (120, 30, 30), "checker"),
    },
    "castle": {
        "W": ((90, 90, 110), (40, 40, 50), "brick"), ".": ((30, 20, 20), (30, 20, 20), "flat"),
        "I": ((30, 20, 20), (240, 220, 60), "dot"), "e": ((30, 20, 20), (220, 40, 40), "face"),
        "D": ((110, 60, 20), (200, 150, 60), "vstripe"),
    },
    "miner": {
        ".": ((0, 0, 0), (0, 0, 0), "flat"), "B": ((170, 60, 30), (240, 160, 120), "brick"),
        "b": ((100, 100, 100), (200, 200, 200), "border"), "#": ((0, 0, 0), (230, 230, 230), "ladder"),
        "-": ((0, 0, 0), (230, 230, 230), "top"), "G": ((0, 0, 0), (255, 200, 0), "tri"),
        "E": ((0, 0, 0), (240, 60, 200), "face"), "M": ((0, 0, 0), (80, 200, 255), "cross"),
    },
    "climber": {
        "-": ((20, 20, 60), (20, 20, 60), "flat"), "#": ((200, 200, 160), (120, 120, 90), "hstripe"),
        "T": ((160, 220, 240), (60, 100, 140), "diag"), "H": ((20, 20, 60), (255, 80, 80), "spike"),
        "D": ((90, 40, 120), (230, 200, 90), "ring"),
    },
    "dungeon": {
        "W": ((60, 110, 60), (20, 50, 20), "checker"), "F": ((220, 200, 150), (220, 200, 150), "flat"),
        "B": ((120, 90, 60), (60, 40, 20), "border"), "M": ((220, 200, 150), (60, 60, 200), "face"),
        "D": ((30, 30, 30), (120, 120, 120), "top"), "O": ((40, 120, 200), (140, 200, 255), "wave"),
        "S": ((220, 200, 150), (90, 70, 50), "hstripe"),
    },
    "blaster": {
        "-": ((0, 60, 120), (0, 60, 120), "flat"), "#": ((150, 150, 170), (60, 60, 90), "border"),
        "|": ((0, 60, 120), (250, 250, 120), "ladder"), "H": ((0, 60, 120), (230, 230, 230), "spike"),
        "C": ((0, 60, 120), (250, 120, 0), "dot"), "M": ((200, 80, 200), (90, 20, 90), "hstripe"),
    },
    "kong": {
        ".": ((10, 10, 10), (10, 10, 10), "flat"), "=": ((230, 40, 90), (120, 10, 40), "diag"),
        "L": ((10, 10, 10), (80, 220, 240), "ladder"), "o": ((10, 10, 10), (160, 90, 30), "ring"),
        "P": ((10, 10, 10), (250, 130, 200), "face"), "F": ((10, 10, 10), (250, 140, 20), "tri"),
    },
}


def sprites(game):
    return {s: make_sprite(*spec) for s, spec in SPRITE_SPECS[game].items()}


# ---------------------------------------------------------------------------
# level builders; each takes an rng and returns a list of row strings
# ---------------------------------------------------------------------------


def _canvas(rows, cols, fill):
    return np.full((rows, cols), fill, dtype="<U1")


def _plumber(rng, rows=12, cols=40):
    g = _canvas(rows, cols, "-")
    g[rows - 2 :, :] = "X"
    c = 5
    while c < cols - 5:
        if rng.random() < 0.25:
            w = int(rng.integers(1, 4))
            g[rows - 2 :, c : c + w] = "-"
            c += w + 3
        else:
            c += 1
    ground = rows - 3
    for c in range(4, cols - 4):
        if g[rows - 1, c] != "X" or g[rows - 1, c - 1] != "X" or g[rows - 1, c + 1] != "X":
            continue
        if (g[:ground + 1, c - 1 : c + 3] != "-").any():
            continue
        u = rng.random()
        if u < 0.06 and g[rows - 1, c + 2] == "X":
            h = int(rng.integers(2, 4))
            g[ground - h + 1 : ground + 1, c] = "["
            g[ground - h + 1 : ground + 1, c + 1] = "]"
            g[ground - h + 1, c], g[ground - h + 1, c + 1] = "<", ">"
        elif u < 0.12:
            g[ground, c] = "E"
        elif u < 0.15:
            g[ground, c], g[ground - 1, c] = "b", "B"
        elif u < 0.2:
            h = int(rng.integers(1, 4))
            for k in range(h):
                g[ground - k, c + k : c + h] = "X"
    for _ in range(int(rng.integers(3, 8))):
        r = int(rng.integers(3, 7))
        c0 = int(rng.integers(3, cols - 8))
        w = int(rng.integers(3, 6))
        if (g[r - 1 : r + 2, c0 - 1 : c0 + w + 1] != "-").any():
            continue
        g[r, c0 : c0 + w] = rng.choice(["S", "S", "S", "?", "Q"], size=w)
        for k in range(w):
            if rng.random() < 0.3 and g[r - 1, c0 + k] == "-":
                g[r - 1, c0 + k] = "o" if rng.random() < 0.7 else "E"
    return g


def _steppe(rng, rows=12, cols=16):
    g = _canvas(rows, cols, ".")
    for sym, n, size in (("F", 3, 4), ("M", 2, 3), ("D", 1, 4)):
        for _ in range(int(rng.integers(1, n + 1))):
            r0, c0 = int(rng.integers(0, rows)), int(rng.integers(0, cols))
            for _ in range(size * 3):
                r = int(np.clip(r0 + rng.integers(-size // 2, size // 2 + 1), 0, rows - 1))
                c = int(np.clip(c0 + rng.integers(-size // 2, size // 2 + 1), 0, cols - 1))
                g[r, c] = sym
    c = int(rng.integers(2, cols - 2))
    for r in range(rows):
        g[r, c] = "R"
        c = int(np.clip(c + rng.integers(-1, 2), 0, cols - 1))
    for sym, n in (("T", 3), ("C", 1)):
        for _ in range(int(rng.integers(1, n + 1))):
            g[int(rng.integers(0, rows)), int(rng.integers(0, cols))] = sym
    return g


def _castle(rng, rows=11, cols=16):
    g = _canvas(rows, cols, ".")
    g[0, :] = g[-1, :] = "W"
    g[:, 0] = g[:, -1] = "W"
    for _ in range(int(rng.integers(2, 5))):
        if rng.random() < 0.5:
            r, c0 = int(rng.integers(2, rows - 2)), int(rng.integers(1, cols - 5))
            g[r, c0 : c0 + int(rng.integers(2, 5))] = "W"
        else:
            c, r0 = int(rng.integers(2, cols - 2)), int(rng.integers(1, rows - 4))
            g[r0 : r0 + int(rng.integers(2, 4)), c] = "W"
    free = np.argwhere(g == ".")
    picks = rng.choice(len(free), size=int(rng.integers(3, 8)), replace=False)
    for i, (r, c) in enumerate(free[picks]):
        g[r, c] = "I" if i % 2 == 0 else "e"
    g[rows // 2, 0] = "D"
    g[rows // 2, cols - 1] = "D"
    return g


def _miner(rng, rows=12, cols=24):
    g = _canvas(rows, cols, ".")
    g[-1, :] = "b"
    for r in range(3, rows - 1, 3):
        g[r, :] = "B"
        for c in rng.choice(cols, size=int(rng.integers(2, 5)), replace=False):
            g[r, c] = "."
        for c in rng.choice(cols, size=2, replace=False):
            g[r - 2 : r + 1, c] = "#"
    for r in range(1, rows - 1, 3):
        c0 = int(rng.integers(0, cols - 6))
        if rng.random() < 0.5:
            g[r, c0 : c0 + int(rng.integers(3, 6))] = "-"
    free = np.argwhere(g == ".")
    picks = rng.choice(len(free), size=8, replace=False)
    for i, (r, c) in enumerate(free[picks]):
        g[r, c] = "G" if i < 5 else ("E" if i < 7 else "M")
    return g


def _climber(rng, rows=16, cols=12):
    g = _canvas(rows, cols, "-")
    g[-1, :] = "#"
    g[:, 0] = g[:, -1] = "#"
    for r in range(rows - 4, 0, -3):
        c0 = int(rng.integers(1, cols - 5))
        w = int(rng.integers(3, 6))
        g[r, c0 : c0 + w] = "T" if rng.random() < 0.3 else "#"
        if rng.random() < 0.4:
            g[r - 1, c0 + int(rng.integers(0, w))] = "H"
    g[1, int(rng.integers(2, cols - 2))] = "D"
    return g


def _dungeon(rng, rows=11, cols=16):
    g = _canvas(rows, cols, "F")
    g[:2, :] = g[-2:, :] = "W"
    g[:, :2] = g[:, -2:] = "W"
    g[0:2, cols // 2 - 1 : cols // 2 + 1] = "D"
    layout = rng.integers(0, 3)
    if layout == 0:
        for r, c in ((3, 4), (3, cols - 5), (rows - 4, 4), (rows - 4, cols - 5)):
            g[r, c] = "B"
    elif layout == 1:
        g[4 : rows - 4, 5 : cols - 5] = "O"
    else:
        g[rows // 2, 3 : cols - 3] = "B"
    free = np.argwhere(g == "F")
    picks = rng.choice(len(free), size=int(rng.integers(2, 5)), replace=False)
    for r, c in free[picks]:
        g[r, c] = "M"
    if rng.random() < 0.3:
        r, c = free[rng.integers(len(free))]
        g[r, c] = "S"
    return g


def _blaster(rng, rows=12, cols=32):
    g = _canvas(rows, cols, "-")
    h = 3
    for c in range(cols):
        if c % 4 == 0 and 2 < c < cols - 3:
            h = int(np.clip(h + rng.integers(-1, 2), 2, 5))
        g[rows - h :, c] = "#"
    g[0, :] = "#"
    for _ in range(int(rng.integers(1, 4))):
        c = int(rng.integers(3, cols - 3))
        top = 1 + int(np.argmax(g[1:, c] == "#"))
        g[max(1, top - 4) : top, c] = "|"
    for _ in range(int(rng.integers(1, 4))):
        c = int(rng.integers(2, cols - 2))
        top = 1 + int(np.argmax(g[1:, c] == "#"))
        if g[top - 1, c] == "-":
            g[top - 1, c] = "H" if rng.random() < 0.5 else "C"
    r, c = int(rng.integers(3, 6)), int(rng.integers(4, cols - 6))
    g[r, c : c + 2] = "M"
    return g


def _kong(rng, rows=12, cols=20):
    g = _canvas(rows, cols, ".")
    for r in range(2, rows, 3):
        c0, c1 = (0, cols - 2) if (r // 3) % 2 == 0 else (2, cols)
        g[r, c0:c1] = "="
    for r in range(2, rows - 3, 3):
        for c in rng.choice(np.arange(2, cols - 2), size=2, replace=False):
            g[r + 1 : r + 3, c] = "L"
    for r in range(1, rows - 1, 3):
        for c in rng.choice(cols, size=int(rng.integers(0, 3)), replace=False):
            if g[r, c] == ".":
                g[r, c] = "o"
    g[0, int(rng.integers(0, 4))] = "P"
    g[rows - 2, cols - 1] = "F"
    return g


BUILDERS = {
    "plumber": (_plumber, 20), "steppe": (_steppe, 10), "castle": (_castle, 10), "miner": (_miner, 8),
    "climber": (_climber, 8), "dungeon": (_dungeon, 8), "blaster": (_blaster, 8), "kong": (_kong, 8),
}


@dataclass
class FixtureGame:
    name: str
    levels: list  # LevelGrid
    sprites: dict
    affordances: AffordanceMap

    def images(self):
        return [render_symbols(lv, self.sprites) for lv in self.levels]


def fixture_levels(game, seed=FIXTURE_SEED):
    builder, count = BUILDERS[game]
    rng = np.random.default_rng([seed, GAMES.index(game)])
    return [
        LevelGrid.from_rows(["".join(row) for row in builder(rng)], level_id=f"{game}_{i:02d}", game=game)
        for i in range(count)
    ]


def fixture_game(game, seed=FIXTURE_SEED):
    return FixtureGame(game, fixture_levels(game, seed), sprites(game), fixture_affordances(game))


def write_fixture_corpus(root, games=GAMES, seed=FIXTURE_SEED):
    """Write levels as ``<root>/<game>/<level>.txt`` plus PNG renders next to them."""
    from pathlib import Path

    from .corpus import save_image

    root = Path(root)
    for game in games:
        fx = fixture_game(game, seed)
        d = root / game
        d.mkdir(parents=True, exist_ok=True)
        for lv, img in zip(fx.levels, fx.images()):
            (d / f"{lv.level_id}.txt").write_bytes(lv.to_text().encode())
            save_image(img, d / f"{lv.level_id}.png")
    return root
