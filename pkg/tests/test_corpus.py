import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cte.corpus import (
    CONTEXT,
    N_AFFORDANCES,
    AffordanceMap,
    LevelImage,
    TILE,
    all_contexts_u8,
    build_samples,
    lookup_affordance,
    parse_vglc_level,
    render_symbols,
    slice_context,
    split_levels,
    tile_distribution,
    tile_identity,
)
from cte.errors import BoundsError, FormatError, MissingMappingError
from cte.fixtures import fixture_affordances, fixture_game


def test_parse_small_level():
    g = parse_vglc_level("--\nXX")
    assert g.shape == (2, 2)
    assert g.row_strings() == ["--", "XX"]


def test_parse_ragged_names_line():
    with pytest.raises(FormatError, match="line 2"):
        parse_vglc_level("abc\nde")


@pytest.mark.parametrize("text", ["", "\n", "\r\n"])
def test_parse_empty(text):
    with pytest.raises(FormatError):
        parse_vglc_level(text)


@given(
    st.lists(st.text(alphabet="-XQ?Eo", min_size=3, max_size=3), min_size=1, max_size=6),
    st.sampled_from(["\n", "\r\n"]),
    st.booleans(),
)
def test_parse_round_trips_text(lines, eol, trailing):
    text = eol.join(lines) + (eol if trailing else "")
    assert parse_vglc_level(text).to_text() == text


def _blocks_image(rows, cols):
    # every tile a distinct flat colour so blocks are easy to identify
    px = np.zeros((rows * TILE, cols * TILE, 3), dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            px[r * TILE : (r + 1) * TILE, c * TILE : (c + 1) * TILE] = (10 * r + 1, 10 * c + 1, 7)
    return LevelImage(px)


def test_interior_context_is_plain_copy():
    img = _blocks_image(4, 4)
    ctx = slice_context(img, 1, 2)
    assert ctx.shape == (CONTEXT, CONTEXT, 3)
    np.testing.assert_array_equal(ctx, img.pixels[0:48, 16:64] / 255.0)


def test_corner_context_matches_hand_padded_raster():
    img = _blocks_image(4, 4)
    # pad one tile on each side by repeating the edge tiles
    tiles = img.tiles()
    padded = np.zeros((6 * TILE, 6 * TILE, 3), dtype=np.uint8)
    for r in range(6):
        for c in range(6):
            sr, sc = min(max(r - 1, 0), 3), min(max(c - 1, 0), 3)
            padded[r * TILE : (r + 1) * TILE, c * TILE : (c + 1) * TILE] = tiles[sr, sc]
    ctx = slice_context(img, 0, 0)
    np.testing.assert_array_equal(ctx, padded[0:48, 0:48] / 255.0)
    # five of the nine blocks come from padding
    inside = [(i, j) for i in range(3) for j in range(3) if i >= 1 and j >= 1]
    assert 9 - len(inside) == 5


def test_uniform_gray_context():
    img = LevelImage(np.full((32, 32, 3), 77, dtype=np.uint8))
    np.testing.assert_array_equal(slice_context(img, 1, 1), np.full((48, 48, 3), 77 / 255.0))


def test_context_out_of_range():
    img = _blocks_image(2, 2)
    with pytest.raises(BoundsError):
        slice_context(img, 2, 0)
    with pytest.raises(BoundsError):
        slice_context(img, 0, -1)


def test_vectorised_contexts_match_single_slices():
    img = _blocks_image(3, 5)
    allc = all_contexts_u8(img)
    for k in range(15):
        r, c = divmod(k, 5)
        np.testing.assert_array_equal(allc[k] / 255.0, slice_context(img, r, c))


def test_unannotated_game_gives_zero_vectors():
    amap = AffordanceMap.unannotated("kong")
    np.testing.assert_array_equal(lookup_affordance(amap, "@"), np.zeros(N_AFFORDANCES))


def test_affordance_vectors():
    amap = AffordanceMap.from_json({"X": ["solid"], "C": ["solid", "hazard"], "-": []})
    assert lookup_affordance(amap, "X").sum() == 1
    v = lookup_affordance(amap, "C")
    assert v.sum() == 2
    assert v[amap.names.index("solid")] == 1 and v[amap.names.index("hazard")] == 1
    with pytest.raises(MissingMappingError, match="'Z'"):
        lookup_affordance(amap, "Z")
    with pytest.raises(MissingMappingError):
        amap.matrix(np.array([["X", "Z"]]))


def test_unknown_affordance_name():
    with pytest.raises(FormatError):
        AffordanceMap.from_json({"X": ["sticky"]})


@pytest.mark.parametrize("n,sizes", [(37, (29, 4, 4)), (10, (8, 1, 1)), (100, (80, 10, 10)), (15, (11, 2, 2))])
def test_split_sizes(n, sizes):
    s = split_levels([f"l{i}" for i in range(n)], seed=3)
    assert (len(s.train), len(s.validation), len(s.test)) == sizes
    assert sorted(s.train + s.validation + s.test) == sorted(f"l{i}" for i in range(n))


def test_split_deterministic():
    ids = [f"l{i}" for i in range(23)]
    assert split_levels(ids, 5) == split_levels(ids, 5)
    assert split_levels(ids, 5) != split_levels(ids, 6)


def test_split_empty():
    with pytest.raises(ValueError):
        split_levels([], 0)


def test_tile_distribution():
    assert tile_distribution([parse_vglc_level("----\n----")]) == {"-": 100.0}
    a = parse_vglc_level("--\nXX")  # 50% '-'
    b = parse_vglc_level("--\n--")  # 100% '-'
    c = parse_vglc_level("XX\nXX")  # 0% '-'
    d = tile_distribution([a, b, c])
    assert d["-"] == 50.0 and d["X"] == 50.0


def test_tile_identity_round_trip():
    game = fixture_game("plumber")
    img = game.images()[0]
    grid, vocab = tile_identity(img)
    again = render_symbols(grid, vocab.sprites)
    np.testing.assert_array_equal(again.pixels, img.pixels)
    # symbols are a relabeling of the annotated grid
    pairs = set(zip(grid.cells.ravel().tolist(), game.levels[0].cells.ravel().tolist()))
    assert len(pairs) == len({p[0] for p in pairs}) == len({p[1] for p in pairs})


def test_build_samples_row_major():
    game = fixture_game("castle")
    img, grid = game.images()[0], game.levels[0]
    s = build_samples(img, grid, fixture_affordances("castle"), game="castle")
    assert len(s) == grid.rows * grid.cols
    k = 2 * grid.cols + 5
    assert tuple(s.positions[k]) == (2, 5)
    assert s.symbols[k] == grid.cells[2, 5]
    np.testing.assert_array_equal(s.tiles[k], img.tile(2, 5))
    np.testing.assert_array_equal(s[k].context, slice_context(img, 2, 5))
