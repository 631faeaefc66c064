"""Per-level style metrics, SSIM, edit distance and expressive-range grids."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import PhysicsConfig, playable
from .errors import DimensionError, MissingMappingError
from .features import LUMA

log = logging.getLogger(__name__)

METRICS = ("leniency", "density", "linearity", "interestingness", "enemy_sparsity")
GAP_ROWS = 2
SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2



@dataclass(frozen=True)
class TileRoleMap:
    game: str
    solids: frozenset
    rewards: frozenset = frozenset()
    enemies: frozenset = frozenset()
    interesting: frozenset = frozenset()
    platforms: frozenset | None = None  # defaults to the solids
    movement_costs: dict = field(default_factory=dict)
    gap_rows: int = GAP_ROWS

    def __post_init__(self):
        for name in ("solids", "rewards", "enemies", "interesting"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "platforms", frozenset(self.solids if self.platforms is None else self.platforms))
        for sym, cost in self.movement_costs.items():
            if not math.isfinite(cost):
                raise ValueError(f"movement cost of {sym!r} is not finite")

    @classmethod
    def from_json(cls, data, game=""):
        return cls(
            game=data.get("game", game),
            solids=data.get("solids", ()),
            rewards=data.get("rewards", ()),
            enemies=data.get("enemies", ()),
            interesting=data.get("interesting", ()),
            platforms=data.get("platforms"),
            movement_costs={k: float(v) for k, v in data.get("movement_costs", {}).items()},
            gap_rows=int(data.get("gap_rows", GAP_ROWS)),
        )

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))

    @classmethod
    def builtin(cls, game):
        from .fixtures import data_json

        return cls.from_json(data_json("roles", game), game=game)


def _cells(level):
    return level.cells if hasattr(level, "cells") else np.asarray(level)


def _count(cells, symbols):
    return int(np.isin(cells, sorted(symbols)).sum()) if symbols else 0


def gap_count(level, roles):
    """Columns with no solid tile in the bottom ``gap_rows`` rows."""
    cells = _cells(level)
    bottom = np.isin(cells[-roles.gap_rows :], sorted(roles.solids))
    return int((~bottom.any(axis=0)).sum())


def leniency(level, roles):
    cells = _cells(level)
    r = _count(cells, roles.rewards)
    e = _count(cells, roles.enemies)
    g = gap_count(level, roles)
    return (2 * r - 0.5 * g - e) / cells.size


def density(level, roles):
    cells = _cells(level)
    return _count(cells, roles.solids) / cells.size


def interestingness(level, roles):
    cells = _cells(level)
    return _count(cells, roles.interesting) / cells.size


def platform_segments(level, roles):
    """Maximal horizontal runs of platform tiles with a non-solid cell directly above.

    Returns ``(row, first_col, last_col)`` triples.
    """
    cells = _cells(level)
    plat = np.isin(cells, sorted(roles.platforms))
    solid = np.isin(cells, sorted(roles.solids))
    above_free = np.ones_like(solid)
    above_free[1:] = ~solid[:-1]
    top = plat & above_free
    segs = []
    for r in range(cells.shape[0]):
        c = 0
        while c < cells.shape[1]:
            if top[r, c]:
                start = c
                while c + 1 < cells.shape[1] and top[r, c + 1]:
                    c += 1
                segs.append((r, start, c))
            c += 1
    return segs


def linearity(level, roles, normalize=True):
    """Mean squared vertical residual of platform centres about their least-squares line.

    Centres are ``(mean column, height)``; with ``normalize`` the height is
    divided by the row count. Fewer than two platforms gives 0.
    """
    cells = _cells(level)
    rows = cells.shape[0]
    segs = platform_segments(level, roles)
    if len(segs) < 2:
        return 0.0
    x = np.array([(a + b) / 2.0 for _, a, b in segs])
    y = np.array([rows - 1 - r for r, _, _ in segs], dtype=np.float64)
    if normalize:
        y = y / rows
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx if sxx > 0 else 0.0
    resid = y - (ym + slope * (x - xm))
    return float(np.mean(resid**2))


def enemy_sparsity(level, roles):
    """Mean absolute deviation of enemy columns; 0 when there are no enemies."""
    cells = _cells(level)
    cols = np.nonzero(np.isin(cells, sorted(roles.enemies)))[1] if roles.enemies else np.array([])
    if len(cols) == 0:
        return 0.0
    return float(np.mean(np.abs(cols - cols.mean())))


def has_enemies(level, roles):
    return _count(_cells(level), roles.enemies) > 0


def movement_cost_leniency(level, roles):
    cells = _cells(level)
    costs = roles.movement_costs
    missing = set(np.unique(cells).tolist()) - set(costs)
    if missing:
        raise MissingMappingError(missing, roles.game, what="movement cost")
    total = sum(costs[s] * n for s, n in zip(*np.unique(cells, return_counts=True)))
    return float(total) / cells.size


def _grid_array(g):
    for attr in ("ids", "cells"):
        if hasattr(g, attr):
            return np.asarray(getattr(g, attr))
    return np.asarray(g)


def edit_distance(a, b):
    """Hamming distance on the shared top-left region plus the cell-count difference."""
    a, b = _grid_array(a), _grid_array(b)
    r, c = min(a.shape[0], b.shape[0]), min(a.shape[1], b.shape[1])
    mismatch = int(np.sum(a[:r, :c] != b[:r, :c]))
    return mismatch + abs(a.size - b.size) + (min(a.size, b.size) - r * c)


def min_edit_distance(generated, corpus):
    corpus = list(corpus)
    if not corpus:
        raise ValueError("edit distance needs a nonempty corpus")
    return min(edit_distance(generated, g) for g in corpus)


def _gray(image):
    px = image.pixels if hasattr(image, "pixels") else np.asarray(image)
    px = np.asarray(px, dtype=np.float64)
    return px @ LUMA if px.ndim == 3 else px


def _box_mean(x, w):
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    return (s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]) / (w * w)


def ssim(a, b, window=SSIM_WINDOW):
    """Mean SSIM over all ``window x window`` placements of the grayscale images (0-255)."""
    x, y = _gray(a), _gray(b)
    if x.shape != y.shape:
        raise DimensionError(f"images differ in size: {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise DimensionError(f"images smaller than the {window}x{window} window")
    mx, my = _box_mean(x, window), _box_mean(y, window)
    vx = _box_mean(x * x, window) - mx * mx
    vy = _box_mean(y * y, window) - my * my
    cxy = _box_mean(x * y, window) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

METRIC_FUNCS = {
    "leniency": leniency,
    "density": density,
    "linearity": linearity,
    "interestingness": interestingness,
    "enemy_sparsity": enemy_sparsity,
}


def level_metrics(level, roles, physics=PhysicsConfig()):
    row = {name: fn(level, roles) for name, fn in METRIC_FUNCS.items()}
    row["no_enemies"] = not has_enemies(level, roles)
    row["playable"] = bool(playable(level, roles, physics).playable)
    if roles.movement_costs:
        row["movement_cost_leniency"] = movement_cost_leniency(level, roles)
    return row


@dataclass
class MetricReport:
    source: str
    levels: list  # level ids
    rows: list  # dicts from level_metrics
    physics: PhysicsConfig = PhysicsConfig()

    def values(self, metric):
        return np.array([r[metric] for r in self.rows], dtype=np.float64)

    def aggregate(self):
        """Mean and population standard deviation per metric, plus playability percent."""
        out = {}
        for m in METRICS:
            v = self.values(m)
            out[m] = (float(v.mean()), float(v.std())) if len(v) else (float("nan"), float("nan"))
        out["playable_pct"] = 100.0 * float(np.mean([r["playable"] for r in self.rows])) if self.rows else float("nan")
        return out


def metric_report(levels, roles, source="", physics=PhysicsConfig()):
    levels = list(levels)
    return MetricReport(source, [lv.level_id for lv in levels], [level_metrics(lv, roles, physics) for lv in levels], physics)


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return f"{x:.10g}"


def write_level_csv(path, reports):
    """One row per level, one column per metric."""
    reports = [reports] if isinstance(reports, MetricReport) else list(reports)
    extra = any("movement_cost_leniency" in r for rep in reports for r in rep.rows)
    cols = list(METRICS) + (["movement_cost_leniency"] if extra else []) + ["no_enemies", "playable"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["source", "level"] + cols)
        for rep in reports:
            for lid, row in zip(rep.levels, rep.rows):
                wr.writerow([rep.source, lid] + [fmt(row[c]) if c in row else "" for c in cols])


AGGREGATE_HEADER = ["source", "n_levels"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")] + ["playable_pct"]


def aggregate_row(rep):
    agg = rep.aggregate()
    row = [rep.source, len(rep.rows)]
    for m in METRICS:
        row += [fmt(agg[m][0]), fmt(agg[m][1])]
    return row + [fmt(agg["playable_pct"])]


def write_aggregate_csv(path, reports):
    reports = [reports] if isinstance(reports, MetricReport) else list(reports)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(AGGREGATE_HEADER)
        for rep in reports:
            wr.writerow(aggregate_row(rep))


# ---------------------------------------------------------------------------
# expressive range
# ---------------------------------------------------------------------------


@dataclass
class ExpressiveRange:
    grid: np.ndarray  # (bins_y, bins_x); rows index metric_y
    x_edges: np.ndarray
    y_edges: np.ndarray
    metric_x: str
    metric_y: str


def _metric_values(levels, metric, roles):
    fn = METRIC_FUNCS.get(metric, metric) if isinstance(metric, str) else metric
    return np.array([fn(lv, roles) for lv in levels], dtype=np.float64)


def _edges(values, rng, bins, name):
    lo, hi = (float(values.min()), float(values.max())) if rng is None else map(float, rng)
    if not hi > lo:
        log.warning("degenerate %s range; using a single bin", name)
        return np.array([lo, lo])
    return np.linspace(lo, hi, bins + 1)


def _bin(values, edges):
    n = len(edges) - 1
    if n == 1 or edges[-1] == edges[0]:
        return np.zeros(len(values), dtype=np.int64)
    idx = np.floor((values - edges[0]) / (edges[-1] - edges[0]) * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def expressive_range(levels, metric_x, metric_y, bins=10, roles=None, x_range=None, y_range=None):
    """Normalized 2-D histogram of two metrics over ``levels``.

    Axis ranges default to the data extent; an axis with no spread collapses
    to a single bin.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("expressive range needs at least one level")
    xs = _metric_values(levels, metric_x, roles)
    ys = _metric_values(levels, metric_y, roles)
    xe, ye = _edges(xs, x_range, bins, "x"), _edges(ys, y_range, bins, "y")
    grid = np.zeros((len(ye) - 1, len(xe) - 1))
    np.add.at(grid, (_bin(ys, ye), _bin(xs, xe)), 1.0)
    grid /= grid.sum()
    name = lambda m: m if isinstance(m, str) else getattr(m, "__name__", "metric")
    return ExpressiveRange(grid, xe, ye, name(metric_x), name(metric_y))


def expressive_range_pair(generated, dataset, metric_x, metric_y, bins=10, roles=None):
    """Histograms of two level sets over shared axis ranges."""
    allv = list(generated) + list(dataset)
    xs, ys = _metric_values(allv, metric_x, roles), _metric_values(allv, metric_y, roles)
    xr, yr = (xs.min(), xs.max()), (ys.min(), ys.max())
    return (
        expressive_range(generated, metric_x, metric_y, bins, roles, xr, yr),
        expressive_range(dataset, metric_x, metric_y, bins, roles, xr, yr),
    )


def histogram_intersection(a, b):
    a = a.grid if isinstance(a, ExpressiveRange) else np.asarray(a)
    b = b.grid if isinstance(b, ExpressiveRange) else np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"histograms differ in shape: {a.shape} vs {b.shape}")
    return float(np.minimum(a, b).sum())


def write_expressive_range(er, csv_path, png_path=None):
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"{er.metric_y}\\{er.metric_x}"] + [fmt(v) for v in er.x_edges[:-1]])
        for lo, row in zip(er.y_edges[:-1], er.grid):
            wr.writerow([fmt(lo)] + [fmt(v) for v in row])
    if png_path is not None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(4, 4))
        extent = [er.x_edges[0], er.x_edges[-1], er.y_edges[0], er.y_edges[-1]]
        if extent[0] == extent[1]:
            extent[0], extent[1] = extent[0] - 0.5, extent[1] + 0.5
        if extent[2] == extent[3]:
            extent[2], extent[3] = extent[2] - 0.5, extent[3] + 0.5
        ax.imshow(er.grid, origin="lower", extent=extent, aspect="auto", cmap="magma")
        ax.set_xlabel(er.metric_x)
        ax.set_ylabel(er.metric_y)
        fig.tight_layout()
        fig.savefig(png_path, metadata={"Software": None})
        plt.close(fig)
