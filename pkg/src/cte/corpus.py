"""Level corpora: VGLC text grids, affordance maps, level images and tile samples."""

from __future__ import annotations

import json
import logging
import math
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BoundsError, FormatError, MissingMappingError

log = logging.getLogger(__name__)

TILE = 16
CONTEXT = 3 * TILE
N_AFFORDANCES = 13
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
BORDER_POLICY = "edge-clamp"

# Order used by the prior tile-embedding mapping files; overridable per file.
DEFAULT_AFFORDANCES = (
    "block", "breakable", "climbable", "collectable", "element", "empty", "hazard",
    "moving", "openable", "passable", "pipe", "solid", "wall",
)


@dataclass(frozen=True, eq=False)
class LevelGrid:
    """Rectangular grid of single-character tile symbols, top row first."""

    cells: np.ndarray
    level_id: str = ""
    game: str = ""
    line_ending: str = field(default="\n", repr=False)
    trailing_newline: bool = field(default=False, repr=False)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype="<U1")
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise FormatError(f"level grid must be a nonempty 2-D array, got shape {cells.shape}")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_rows(cls, rows, **kw):
        return parse_vglc_level("\n".join(rows), **kw)

    @property
    def rows(self):
        return self.cells.shape[0]

    @property
    def cols(self):
        return self.cells.shape[1]

    @property
    def shape(self):
        return self.cells.shape

    def symbols(self):
        return set(np.unique(self.cells).tolist())

    def row_strings(self):
        return ["".join(r) for r in self.cells]

    def to_text(self):
        text = self.line_ending.join(self.row_strings())
        return text + self.line_ending if self.trailing_newline else text

    def __eq__(self, other):
        return isinstance(other, LevelGrid) and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.cells.tobytes())


def parse_vglc_level(text, level_id="", game=""):
    if not text or not text.strip("\r\n"):
        raise FormatError("empty level text")
    line_ending = "\r\n" if "\r\n" in text else "\n"
    trailing = text.endswith(line_ending)
    body = text[: -len(line_ending)] if trailing else text
    lines = body.split(line_ending)
    width = len(lines[0])
    for i, line in enumerate(lines, start=1):
        if len(line) != width:
            raise FormatError(f"line {i} has length {len(line)}, expected {width} (ragged level {level_id!r})")
        if width == 0:
            raise FormatError(f"line {i} is empty")
    cells = np.array([list(line) for line in lines], dtype="<U1")
    return LevelGrid(cells, level_id=level_id, game=game, line_ending=line_ending, trailing_newline=trailing)


def read_vglc_level(path, game=""):
    path = Path(path)
    return parse_vglc_level(path.read_text(encoding="utf-8"), level_id=path.stem, game=game)


# ---------------------------------------------------------------------------
# affordances
# ---------------------------------------------------------------------------


@dataclass
class AffordanceMap:
    game: str
    names: tuple
    entries: dict
    annotated: bool = True

    def __post_init__(self):
        if len(self.names) != N_AFFORDANCES:
            raise FormatError(f"expected {N_AFFORDANCES} affordance names, got {len(self.names)}")
        for sym, vec in self.entries.items():
            v = np.asarray(vec)
            if v.shape != (N_AFFORDANCES,) or not np.isin(v, (0, 1)).all():
                raise FormatError(f"affordance vector for {sym!r} must be 13 binary entries")

    @classmethod
    def unannotated(cls, game):
        return cls(game=game, names=DEFAULT_AFFORDANCES, entries={}, annotated=False)

    @classmethod
    def from_json(cls, data, game=""):
        """Accepts ``{"affordances": [...], "tiles": {sym: [names]}}`` or a bare ``{sym: [names]}``."""
        if "tiles" in data:
            names = tuple(data.get("affordances", DEFAULT_AFFORDANCES))
            tiles = data["tiles"]
            game = data.get("game", game)
        else:
            names, tiles = DEFAULT_AFFORDANCES, data
        index = {n: i for i, n in enumerate(names)}
        entries = {}
        for sym, labels in tiles.items():
            vec = np.zeros(N_AFFORDANCES, dtype=np.uint8)
            for lab in labels:
                if lab not in index:
                    raise FormatError(f"tile {sym!r} uses unknown affordance {lab!r}")
                vec[index[lab]] = 1
            entries[sym] = vec
        return cls(game=game, names=names, entries=entries)

    @classmethod
    def load(cls, path, game=""):
        return cls.from_json(json.loads(Path(path).read_text()), game=game)

    def vector(self, symbol):
        return lookup_affordance(self, symbol)

    def matrix(self, cells):
        cells = np.asarray(cells)
        if not self.annotated:
            return np.zeros(cells.shape + (N_AFFORDANCES,), dtype=np.uint8)
        missing = set(np.unique(cells).tolist()) - set(self.entries)
        if missing:
            raise MissingMappingError(missing, self.game)
        out = np.zeros(cells.shape + (N_AFFORDANCES,), dtype=np.uint8)
        for sym, vec in self.entries.items():
            out[cells == sym] = vec
        return out


def lookup_affordance(amap, symbol):
    if not amap.annotated:
        return np.zeros(N_AFFORDANCES, dtype=np.uint8)
    try:
        return amap.entries[symbol].copy()
    except KeyError:
        raise MissingMappingError([symbol], amap.game) from None


# ---------------------------------------------------------------------------
# images and tile contexts
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LevelImage:
    pixels: np.ndarray  # (H, W, 3) uint8
    level_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise FormatError(f"level image must be HxWx3, got {px.shape}")
        if px.shape[0] % TILE or px.shape[1] % TILE or px.shape[0] == 0 or px.shape[1] == 0:
            raise FormatError(f"image size {px.shape[1]}x{px.shape[0]} is not a positive multiple of {TILE}")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def tile_shape(self):
        return self.height // TILE, self.width // TILE

    def tile(self, row, col):
        return self.pixels[row * TILE : (row + 1) * TILE, col * TILE : (col + 1) * TILE]

    def tiles(self):
        """All tiles as an array ``(rows, cols, 16, 16, 3)``."""
        r, c = self.tile_shape
        return self.pixels.reshape(r, TILE, c, TILE, 3).transpose(0, 2, 1, 3, 4)


def load_image(path):
    path = Path(path)
    with Image.open(path) as im:
        return LevelImage(np.asarray(im.convert("RGB")), level_id=path.stem)


def save_image(image, path):
    px = image.pixels if isinstance(image, LevelImage) else np.asarray(image, dtype=np.uint8)
    Image.fromarray(px, mode="RGB").save(path, format="PNG", optimize=False)


def _context_u8(image, row, col):
    rows, cols = image.tile_shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise BoundsError(f"tile ({row}, {col}) outside {rows}x{cols} tile grid")
    out = np.empty((CONTEXT, CONTEXT, 3), dtype=np.uint8)
    for i, dr in enumerate((-1, 0, 1)):
        for j, dc in enumerate((-1, 0, 1)):
            rr = min(max(row + dr, 0), rows - 1)
            cc = min(max(col + dc, 0), cols - 1)
            out[i * TILE : (i + 1) * TILE, j * TILE : (j + 1) * TILE] = image.tile(rr, cc)
    return out


def slice_context(image, row, col):
    """3x3-tile neighbourhood centred on ``(row, col)``, scaled to [0, 1].

    Neighbours past the level border repeat the nearest edge tile.
    """
    return _context_u8(image, row, col).astype(np.float64) / 255.0


def all_contexts_u8(image):
    """Contexts for every tile, ``(rows*cols, 48, 48, 3)`` uint8, row-major."""
    rows, cols = image.tile_shape
    tiles = image.tiles()
    ri = np.clip(np.arange(rows)[:, None] + np.array([-1, 0, 1]), 0, rows - 1)
    ci = np.clip(np.arange(cols)[:, None] + np.array([-1, 0, 1]), 0, cols - 1)
    # (rows, cols, 3, 3, 16, 16, 3)
    blocks = tiles[ri[:, None, :, None], ci[None, :, None, :]]
    ctx = blocks.transpose(0, 1, 2, 4, 3, 5, 6).reshape(rows * cols, CONTEXT, CONTEXT, 3)
    return np.ascontiguousarray(ctx)


class TileVocabulary:
    """Assigns symbols to byte-identical 16x16 patches, in first-seen order."""

    POOL = [c for c in string.printable if not c.isspace()] + [chr(i) for i in range(0xC0, 0x250)]

    def __init__(self):
        self.symbol_of = {}
        self.sprites = {}

    def symbol(self, patch):
        key = np.ascontiguousarray(patch, dtype=np.uint8).tobytes()
        sym = self.symbol_of.get(key)
        if sym is None:
            if len(self.symbol_of) >= len(self.POOL):
                raise FormatError("too many distinct tiles for the symbol pool")
            sym = self.POOL[len(self.symbol_of)]
            self.symbol_of[key] = sym
            self.sprites[sym] = np.array(patch, dtype=np.uint8)
        return sym


def tile_identity(image, vocab=None, game=""):
    """Symbolic grid for an unannotated level image (identical pixels = same tile)."""
    vocab = vocab if vocab is not None else TileVocabulary()
    rows, cols = image.tile_shape
    cells = np.empty((rows, cols), dtype="<U1")
    for r in range(rows):
        for c in range(cols):
            cells[r, c] = vocab.symbol(image.tile(r, c))
    return LevelGrid(cells, level_id=image.level_id, game=game), vocab


def render_symbols(grid, sprites, level_id=None):
    rows, cols = grid.shape
    px = np.zeros((rows * TILE, cols * TILE, 3), dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            px[r * TILE : (r + 1) * TILE, c * TILE : (c + 1) * TILE] = sprites[grid.cells[r, c]]
    return LevelImage(px, level_id=grid.level_id if level_id is None else level_id)


# ---------------------------------------------------------------------------
# tile samples
# ---------------------------------------------------------------------------


@dataclass
class TileSample:
    context: np.ndarray  # (48, 48, 3) in [0, 1]
    affordance: np.ndarray  # (13,)
    edges: np.ndarray  # (16, 16) binary
    origin: tuple  # (level id, row, col)


@dataclass
class SampleSet:
    """Column-oriented batch of tile samples; contexts kept as uint8 until model input."""

    contexts: np.ndarray  # (N, 48, 48, 3) uint8
    affordances: np.ndarray  # (N, 13) uint8
    edges: np.ndarray  # (N, 16, 16) uint8
    tiles: np.ndarray  # (N, 16, 16, 3) uint8, the centre patch
    symbols: np.ndarray  # (N,) '<U1'
    games: np.ndarray  # (N,) str
    levels: np.ndarray  # (N,) str
    positions: np.ndarray  # (N, 2) int (row, col)

    def __len__(self):
        return len(self.symbols)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return TileSample(
                context=self.contexts[idx].astype(np.float64) / 255.0,
                affordance=self.affordances[idx].copy(),
                edges=self.edges[idx].copy(),
                origin=(str(self.levels[idx]), int(self.positions[idx, 0]), int(self.positions[idx, 1])),
            )
        return SampleSet(*(getattr(self, f)[idx] for f in self._fields()))

    @staticmethod
    def _fields():
        return ("contexts", "affordances", "edges", "tiles", "symbols", "games", "levels", "positions")

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in cls._fields()))

    def save(self, path):
        np.savez_compressed(path, **{f: getattr(self, f) for f in self._fields()})

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            return cls(*(z[f] for f in cls._fields()))


def build_samples(image, grid, amap, game=""):
    """Tile samples for one level in row-major order."""
    from .features import edge_maps

    rows, cols = image.tile_shape
    if grid.shape != (rows, cols):
        raise FormatError(f"grid {grid.shape} does not match image tiling {(rows, cols)}")
    n = rows * cols
    tiles = image.tiles().reshape(n, TILE, TILE, 3)
    return SampleSet(
        contexts=all_contexts_u8(image),
        affordances=amap.matrix(grid.cells).reshape(n, N_AFFORDANCES),
        edges=edge_maps(tiles),
        tiles=np.ascontiguousarray(tiles),
        symbols=grid.cells.reshape(n).copy(),
        games=np.full(n, game or grid.game),
        levels=np.full(n, grid.level_id),
        positions=np.stack(np.divmod(np.arange(n), cols), axis=1),
    )


# ---------------------------------------------------------------------------
# splits and statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple
    validation: tuple
    test: tuple
    seed: int
    fractions: tuple = SPLIT_FRACTIONS

    def part_of(self, level_id):
        for name in ("train", "validation", "test"):
            if level_id in getattr(self, name):
                return name
        raise KeyError(level_id)

    def to_dict(self):
        return {"train": list(self.train), "validation": list(self.validation), "test": list(self.test), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["train"]), tuple(d["validation"]), tuple(d["test"]), int(d["seed"]))


def split_levels(levels, seed):
    """80/10/10 split; validation and test sizes round to nearest, train takes the rest."""
    ids = [getattr(lv, "level_id", lv) for lv in levels]
    n = len(ids)
    if n == 0:
        raise ValueError("cannot split an empty level list")
    if len(set(ids)) != n:
        raise ValueError("level ids must be unique")
    if n < 10:
        log.warning("only %d levels; using floor counts with at least one test level", n)
        n_val = math.floor(n * SPLIT_FRACTIONS[1])
        n_test = max(1, math.floor(n * SPLIT_FRACTIONS[2]))
    else:
        n_val = int(math.floor(n * SPLIT_FRACTIONS[1] + 0.5))
        n_test = int(math.floor(n * SPLIT_FRACTIONS[2] + 0.5))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    return CorpusSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        seed=seed,
    )


def level_percentages(level):
    syms, counts = np.unique(level.cells, return_counts=True)
    total = level.rows * level.cols
    return {s: c * 100.0 / total for s, c in zip(syms.tolist(), counts.tolist())}


def tile_distribution(levels):
    """Per-symbol median over levels of the symbol's percentage of tiles (absent = 0%)."""
    levels = list(levels)
    if not levels:
        raise ValueError("tile_distribution needs at least one level")
    per_level = [level_percentages(lv) for lv in levels]
    symbols = sorted(set().union(*per_level))
    return {s: float(np.median([p.get(s, 0.0) for p in per_level])) for s in symbols}


# ---------------------------------------------------------------------------
# VGLC checkouts
# ---------------------------------------------------------------------------

VGLC_GAMES = {
    "smb": ("Super Mario Bros", "Processed"),
    "smb2j": ("Super Mario Bros 2 (Japan)", "Processed"),
    "lode_runner": ("Lode Runner", "Processed"),
    "kid_icarus": ("Kid Icarus", "Processed"),
    "megaman": ("MegaMan", "Processed"),
    "zelda": ("The Legend of Zelda", "Processed"),
}


def load_vglc_game(root, game):
    """Text levels (and original images, when present) of one VGLC game folder."""
    folder, sub = VGLC_GAMES.get(game, (game, "Processed"))
    base = Path(root) / folder
    text_dir = base / sub
    if not text_dir.is_dir():
        raise FileNotFoundError(f"no VGLC level folder at {text_dir}")
    levels = [read_vglc_level(p, game=game) for p in sorted(text_dir.glob("*.txt"))]
    images = {}
    orig = base / "Original"
    if orig.is_dir():
        for p in sorted(orig.glob("*.png")):
            images[p.stem] = p
    return levels, images
