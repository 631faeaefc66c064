"""Stage graph for the full pipeline.

Every stage reads its inputs from the output directories of earlier stages,
writes into ``<out>/<stage>.partial`` and renames that directory into place
when it finishes, so a stage directory is either complete or absent. Each
directory carries a ``manifest.json`` with the config digest, seeds, model
versions and wall time.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import (
    GMM_BLOCKS,
    BlockStandardizer,
    DbscanModel,
    GmmModel,
    assign_cluster,
    default_eps_grid,
    dbscan_tune,
    first_occurrences,
    gmm_features,
    select_k_elbow,
    write_assignments_csv,
)
from .corpus import (
    AffordanceMap,
    CorpusSplit,
    SampleSet,
    build_samples,
    load_image,
    load_vglc_game,
    parse_vglc_level,
    render_symbols,
    save_image,
    split_levels,
    tile_distribution,
)
from .errors import DependencyError, FormatError
from .fixtures import data_json, fixture_game, make_sprite
from .metrics import (
    AGGREGATE_HEADER,
    TileRoleMap,
    aggregate_row,
    expressive_range_pair,
    fmt,
    histogram_intersection,
    metric_report,
    ssim,
    write_expressive_range,
    write_level_csv,
)
from .agent import PhysicsConfig
from .neuralkit import REGRESSION, SequenceModelConfig, load_container, save_container, set_determinism

log = logging.getLogger(__name__)

STAGES = (
    "ingest", "features", "gmm", "train-ae", "embed", "dbscan", "train-gen",
    "generate", "train-trans", "translate", "metrics", "expressive-range", "render",
)
DEPENDS = {
    "ingest": (),
    "features": ("ingest",),
    "gmm": ("features",),
    "train-ae": ("features", "gmm"),
    "embed": ("ingest", "train-ae"),
    "dbscan": ("ingest", "features", "embed"),
    "train-gen": ("ingest", "embed", "dbscan"),
    "generate": ("ingest", "dbscan", "train-gen"),
    "train-trans": ("ingest", "embed", "dbscan"),
    "translate": ("ingest", "dbscan", "generate", "train-trans"),
    "metrics": ("ingest",),
    "expressive-range": ("ingest", "metrics"),
    "render": ("ingest", "dbscan"),
}
VARIANTS = ("vglc", "two_step", "cte", "ablation")


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------


class Run:
    """Paths and shared loaders for one output directory."""

    def __init__(self, config):
        self.cfg = config
        self.out = Path(config["run"]["out"])
        self._cache = {}

    def dir(self, stage):
        return self.out / stage

    def need(self, stage, by):
        d = self.dir(stage)
        if not (d / "manifest.json").is_file():
            raise DependencyError(
                f"stage {by!r} needs the output of {stage!r} (missing {d}); run `cte {stage}` first"
            )
        return d

    @property
    def target(self):
        return self.cfg["corpus"]["target"]

    @property
    def games(self):
        return list(self.cfg["corpus"]["games"])

    # --- corpus -----------------------------------------------------------

    def index(self):
        if "index" not in self._cache:
            self._cache["index"] = json.loads((self.dir("ingest") / "levels.json").read_text())
        return self._cache["index"]

    def levels(self, game):
        key = ("levels", game)
        if key not in self._cache:
            d = self.dir("ingest") / "levels" / game
            self._cache[key] = [
                parse_vglc_level((d / f"{lid}.txt").read_text(), level_id=lid, game=game)
                for lid in self.index()["levels"][game]
            ]
        return self._cache[key]

    def image(self, game, level_id):
        return load_image(self.dir("ingest") / "images" / game / f"{level_id}.png")

    def split(self, game):
        return CorpusSplit.from_dict(self.index()["splits"][game])

    def affordances(self, game):
        p = self.cfg["corpus"]["affordances"].get(game)
        if p:
            return AffordanceMap.load(p, game=game)
        try:
            return AffordanceMap.from_json(data_json("affordances", game), game=game)
        except FileNotFoundError:
            log.warning("no affordance mapping for %s; treating it as unannotated", game)
            return AffordanceMap.unannotated(game)

    def roles(self, game):
        p = self.cfg["corpus"]["roles"].get(game)
        return TileRoleMap.load(p) if p else TileRoleMap.builtin(game)

    def physics(self):
        m = self.cfg["metrics"]
        return PhysicsConfig(m["max_jump_height"], m["max_jump_span"])

    def samples(self, game):
        key = ("samples", game)
        if key not in self._cache:
            with np.load(self.dir("features") / f"samples_{game}.npz", allow_pickle=False) as z:
                self._cache[key] = SampleSet(*(z[f] for f in SampleSet._fields()))
        return self._cache[key]

    def samples_by_level(self, game):
        s = self.samples(game)
        return {lid: s[s.levels == lid] for lid in self.index()["levels"][game]}

    def target_shape(self):
        shapes = {lv.shape for lv in self.levels(self.target)}
        rows = {r for r, _ in shapes}
        if len(rows) != 1:
            raise FormatError(f"levels of {self.target} differ in height {sorted(rows)}; generation needs one height")
        return rows.pop()


# ---------------------------------------------------------------------------
# small io helpers
# ---------------------------------------------------------------------------


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(text.encode("utf-8"))


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_int_grid(path, a):
    _write_text(path, "\n".join(" ".join(str(int(v)) for v in row) for row in np.asarray(a)) + "\n")


def _read_int_grid(path):
    return np.array([[int(v) for v in ln.split()] for ln in Path(path).read_text().split("\n") if ln], dtype=np.int64)


def _level_text(level):
    return "\n".join(level.row_strings()) + "\n"


def _read_levels(folder, game=""):
    folder = Path(folder)
    return [parse_vglc_level(p.read_text(), level_id=p.stem, game=game) for p in sorted(folder.glob("*.txt"))]


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def placeholder_sprites(symbols, game=""):
    """Deterministic stand-in sprites for symbolic levels without aligned original images."""
    kinds = ("flat", "brick", "checker", "border", "dot", "ring", "hstripe", "vstripe", "cross", "diag", "tri", "wave")
    out = {}
    for s in sorted(symbols):
        h = hashlib.sha256(f"{game}:{s}".encode()).digest()
        base, ink = tuple(h[0:3]), tuple(255 - b for b in h[3:6])
        out[s] = make_sprite(base, ink, kinds[h[6] % len(kinds)])
    return out


def _latent_sequence(latents):
    """Scan-order token stream of a ``(rows, cols, d)`` latent grid."""
    lat = np.asarray(latents)
    return lat[::-1].reshape(-1, lat.shape[-1]).copy()


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_ingest(run, tmp):
    c = run.cfg["corpus"]
    index = {"levels": {}, "splits": {}, "images": {}}
    dist_rows = []
    for game in run.games:
        if c["source"] == "fixture":
            fx = fixture_game(game)
            levels, images = fx.levels, fx.images()
            provenance = ["fixture"] * len(levels)
        else:
            levels, originals = load_vglc_game(c["vglc_root"], game)
            sprites = placeholder_sprites(set().union(*(lv.symbols() for lv in levels)), game)
            images, provenance = [], []
            for lv in levels:
                img = None
                if lv.level_id in originals:
                    cand = load_image(originals[lv.level_id])
                    if cand.tile_shape == lv.shape:
                        img = cand
                if img is None:
                    img = render_symbols(lv, sprites)
                    provenance.append("placeholder")
                else:
                    provenance.append("original")
                images.append(img)
            if "placeholder" in provenance:
                log.warning("%s: %d of %d levels drawn with placeholder sprites", game,
                            provenance.count("placeholder"), len(levels))
        amap = run.affordances(game)
        for lv in levels:
            amap.matrix(lv.cells)  # fails early on unmapped symbols
            _write_text(tmp / "levels" / game / f"{lv.level_id}.txt", _level_text(lv))
        for lv, img in zip(levels, images):
            p = tmp / "images" / game / f"{lv.level_id}.png"
            p.parent.mkdir(parents=True, exist_ok=True)
            save_image(img, p)
        index["levels"][game] = [lv.level_id for lv in levels]
        index["splits"][game] = split_levels(levels, c["split_seed"]).to_dict()
        index["images"][game] = dict(zip([lv.level_id for lv in levels], provenance))
        for sym, pct in sorted(tile_distribution(levels).items()):
            dist_rows.append([game, sym, fmt(pct)])
    _write_json(tmp / "levels.json", index)
    with open(tmp / "tile_distribution.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["game", "symbol", "median_pct"])
        wr.writerows(dist_rows)
    return {}


def stage_features(run, tmp):
    counts = {}
    for game in run.games:
        amap = run.affordances(game)
        sets = [build_samples(run.image(game, lv.level_id), lv, amap, game) for lv in run.levels(game)]
        s = SampleSet.concat(sets)
        np.savez(tmp / f"samples_{game}.npz", **{f: getattr(s, f) for f in SampleSet._fields()})
        counts[game] = len(s)
    _write_json(tmp / "counts.json", counts)
    return {}


def _split_samples(run, part):
    sets = []
    for game in run.games:
        s = run.samples(game)
        ids = set(getattr(run.split(game), part))
        sets.append(s[np.isin(s.levels, sorted(ids))])
    return SampleSet.concat(sets)


def dedupe_samples(s):
    """Keep the first copy of each distinct (context, affordance) pair."""
    key = np.concatenate([s.contexts.reshape(len(s), -1), s.affordances.reshape(len(s), -1).astype(np.uint8)], axis=1)
    first, _ = first_occurrences(key)
    return s[np.sort(first)]


def _load_standardizer(path):
    arr, meta = load_container(path)
    return BlockStandardizer(tuple(meta["blocks"]), arr["mean"].astype(np.float64), arr["scale"].astype(np.float64))


def stage_gmm(run, tmp):
    g = run.cfg["gmm"]
    train = _split_samples(run, "train")
    F = gmm_features(train.tiles, train.affordances, train.edges)
    std = BlockStandardizer(GMM_BLOCKS).fit(F)
    save_container(tmp / "standardizer.bin", {"mean": std.mean, "scale": std.scale},
                   {"kind": "standardizer", "blocks": list(GMM_BLOCKS)})
    std = _load_standardizer(tmp / "standardizer.bin")
    Z = std.transform(F)
    first, inverse = first_occurrences(Z)
    counts = np.bincount(inverse).astype(np.float64)
    k_max = min(g["k_max"], len(first))
    el = select_k_elbow(Z[first], range(g["k_min"], k_max + 1), seed=g["seed"], sample_weight=counts)
    el.models[el.k].save(tmp / "gmm.bin", {"k": el.k})
    with open(tmp / "elbow.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "bic", "silhouette", "chosen"])
        for k in sorted(el.bic):
            wr.writerow([k, fmt(el.bic[k]), fmt(el.silhouette[k]), int(k == el.k)])
    return {"k": el.k, "unique_rows": int(len(first))}


def _gmm_targets(run, samples):
    from .embedding import one_hot

    std = _load_standardizer(run.dir("gmm") / "standardizer.bin")
    gmm = GmmModel.load(run.dir("gmm") / "gmm.bin")
    labels = gmm.predict(std.transform(gmm_features(samples.tiles, samples.affordances, samples.edges)))
    return one_hot(labels, gmm.K), labels, gmm.K


def _write_curves(path, curves):
    keys = sorted(curves)
    n = max(len(v) for v in curves.values())
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch"] + keys)
        for e in range(n):
            wr.writerow([e] + [fmt(curves[k][e]) if e < len(curves[k]) else "" for k in keys])


def stage_train_ae(run, tmp):
    from .embedding import (
        CteConfig,
        affordance_macro_f1,
        cluster_head_accuracy,
        embed_samples,
        latent_separation_ratio,
        load_cte,
        save_cte,
        train_cte,
    )

    a = run.cfg["autoencoder"]
    train = dedupe_samples(_split_samples(run, "train"))
    val = dedupe_samples(_split_samples(run, "validation"))
    if len(val) == 0:
        log.warning("empty validation split; validating on the training samples")
        val = train
    t_train, _, k = _gmm_targets(run, train)
    t_val, val_labels, _ = _gmm_targets(run, val)
    base = CteConfig(n_clusters=k, loss_weights=tuple(a["loss_weights"]), use_edges=a["use_edges"],
                     use_cluster_loss=a["use_cluster_loss"], epochs=a["epochs"], batch_size=a["batch_size"], lr=a["lr"])
    report = {"train_samples": len(train), "val_samples": len(val), "k": k}
    for name, cfg in (("cte", base), ("ablation", base.ablation())):
        set_determinism(a["seed"])
        res = train_cte(train, t_train, cfg, seed=a["seed"], val_samples=val, val_targets=t_val)
        save_cte(tmp / f"{name}.bin", res.model, {"best_epoch": res.best_epoch})
        model, _ = load_cte(tmp / f"{name}.bin")
        _write_curves(tmp / f"curves_{name}.csv", res.curves)
        lat = embed_samples(model, val)
        report[name] = {
            "version": model.version,
            "best_epoch": res.best_epoch,
            "initial_val_loss": res.initial_val_loss,
            "final_val_loss": res.curves["val_total"][-1] if res.curves["val_total"] else res.initial_val_loss,
            "affordance_macro_f1": affordance_macro_f1(model, val),
            "cluster_head_accuracy": cluster_head_accuracy(model, val, val_labels),
            "separation_ratio": latent_separation_ratio(lat, val_labels) if len(set(val_labels.tolist())) > 1 else None,
        }
    _write_json(tmp / "diagnostics.json", report)
    return {"versions": {n: report[n]["version"] for n in ("cte", "ablation")}}


def _load_ae(run, name):
    from .embedding import load_cte

    return load_cte(run.dir("train-ae") / f"{name}.bin")[0]


def stage_embed(run, tmp):
    from .embedding import embed_level, save_embeddings

    versions = {}
    for name, games in (("cte", run.games), ("ablation", [run.target])):
        model = _load_ae(run, name)
        versions[name] = model.version
        out = []
        for game in games:
            amap = run.affordances(game)
            for lv in run.levels(game):
                out.append(embed_level(model, run.image(game, lv.level_id), amap.matrix(lv.cells), game, lv.level_id))
        save_embeddings(tmp / f"{name}.bin", tmp / f"{name}.csv", out)
    return {"versions": versions}


def _embeddings(run, name, game=None):
    from .embedding import load_embeddings

    key = ("emb", name)
    if key not in run._cache:
        run._cache[key] = load_embeddings(run.dir("embed") / f"{name}.bin")
    game = run.target if game is None else game
    return {e.level_id: e for e in run._cache[key] if e.game == game}


def stage_dbscan(run, tmp):
    from .generation import ClusterGrid, build_member_index

    d = run.cfg["dbscan"]
    emb = _embeddings(run, "cte")
    split = run.split(run.target)
    X = np.concatenate([emb[lid].latents.reshape(-1, emb[lid].latents.shape[-1]) for lid in split.train])
    first, _ = first_occurrences(X)
    U = X[first]
    eps_grid = default_eps_grid(U, n=d["eps_count"], seed=d["seed"])
    tune = dbscan_tune(U, eps_grid=eps_grid, min_pts_grid=d["min_pts"], max_noise=d["max_noise"], seed=d["seed"])
    tune.model.save(tmp / "dbscan.bin", {"k": tune.k, "silhouette": tune.silhouette})
    model = DbscanModel.load(tmp / "dbscan.bin")
    with open(tmp / "tuning.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["eps", "min_pts", "k", "noise", "silhouette"])
        for eps, mp, k, noise, sil in tune.table:
            wr.writerow([fmt(eps), mp, k, fmt(noise), fmt(sil)])
    grids, origins, labels = {}, [], []
    for lid, e in emb.items():
        rows, cols, dim = e.latents.shape
        ids = assign_cluster(model, e.latents.reshape(-1, dim)).reshape(rows, cols)
        grids[lid] = ClusterGrid(ids, tune.k, lid, run.target)
        _write_text(tmp / "clusters" / f"{lid}.txt", grids[lid].to_text())
        origins += [(run.target, lid, r, c) for r in range(rows) for c in range(cols)]
        labels.append(ids.reshape(-1))
    write_assignments_csv(tmp / "assignments.csv", origins, np.concatenate(labels))
    by_level = run.samples_by_level(run.target)
    train_grids = [grids[lid] for lid in split.train]
    build_member_index([emb[lid] for lid in split.train], train_grids, by_level).save(tmp / "members_cte.bin")
    abl = _embeddings(run, "ablation")
    build_member_index([abl[lid] for lid in split.train], train_grids, by_level).save(tmp / "members_ablation.bin")
    return {"k": tune.k, "silhouette": tune.silhouette, "eps": model.eps, "min_pts": model.min_pts,
            "distinct_latents": int(len(U))}


def _grids(run):
    from .generation import ClusterGrid

    d = run.dir("dbscan") / "clusters"
    return {lid: ClusterGrid.load(d / f"{lid}.txt", game=run.target) for lid in run.index()["levels"][run.target]}


def _member_index(run, name):
    from .generation import ClusterMemberIndex

    key = ("members", name)
    if key not in run._cache:
        run._cache[key] = ClusterMemberIndex.load(run.dir("dbscan") / f"members_{name}.bin")
    return run._cache[key]


def stage_train_gen(run, tmp):
    from .generation import (
        SequenceModel,
        TrainConfig,
        linearize,
        perplexity,
        reference_level,
        train_sequence_model,
        unigram_perplexity,
    )

    g = run.cfg["generator"]
    split = run.split(run.target)
    grids = _grids(run)
    levels = {lv.level_id: lv for lv in run.levels(run.target)}
    h = g["history_length"]
    train_ids = list(split.train)
    cluster_seqs = [linearize(grids[lid]) for lid in train_ids]
    ref, _ = reference_level(cluster_seqs, h)
    primer = {"level": train_ids[ref], "history": h}
    _write_json(tmp / "primer.json", primer)
    tc = TrainConfig(epochs=g["epochs"], lr=g["lr"])
    seq_cfg = SequenceModelConfig(g["layers"], g["hidden_units"], h)
    reg_cfg = SequenceModelConfig(g["layers"], g["hidden_units"], h, output_mode=REGRESSION)
    k = next(iter(grids.values())).k
    report = {"primer": primer}
    val_ids = list(split.validation) or list(split.test)

    set_determinism(g["seed"])
    m = train_sequence_model(cluster_seqs, seq_cfg, g["seed"], vocab=list(range(k)), kind="cluster", train=tc)
    m.save(tmp / "two_step.bin")
    m = SequenceModel.load(tmp / "two_step.bin")
    vs = [linearize(grids[lid]) for lid in val_ids]
    if vs:
        report["two_step"] = {"perplexity": perplexity(m, vs),
                              "unigram_perplexity": unigram_perplexity(cluster_seqs, vs, list(range(k)))}

    sym_seqs = [linearize(levels[lid]) for lid in train_ids]
    vocab = sorted(set(np.concatenate(sym_seqs).tolist()))
    set_determinism(g["seed"])
    m = train_sequence_model(sym_seqs, seq_cfg, g["seed"], vocab=vocab, kind="symbol", train=tc)
    m.save(tmp / "vglc.bin")
    m = SequenceModel.load(tmp / "vglc.bin")
    vs = [s for s in (linearize(levels[lid]) for lid in val_ids) if set(s.tolist()) <= set(vocab)]
    if vs:
        report["vglc"] = {"perplexity": perplexity(m, vs), "unigram_perplexity": unigram_perplexity(sym_seqs, vs, vocab)}

    for name in ("cte", "ablation"):
        emb = _embeddings(run, name)
        seqs = [_latent_sequence(emb[lid].latents) for lid in train_ids]
        set_determinism(g["seed"])
        m = train_sequence_model(seqs, reg_cfg, g["seed"], train=tc)
        m.save(tmp / f"{name}.bin")
        report[name] = {"final_train_mse": m.curves["train_loss"][-1]}
    _write_json(tmp / "report.json", report)
    return {}


def _generation_size(run):
    rows = run.target_shape()
    cols = run.cfg["generate"]["cols"]
    if cols is None:
        primer = json.loads((run.dir("train-gen") / "primer.json").read_text())
        cols = next(lv.cols for lv in run.levels(run.target) if lv.level_id == primer["level"])
    return rows, int(cols)


def stage_generate(run, tmp):
    from .generation import GenerationSeed, SequenceModel, greedy_rollout, linearize, render_level, sample_level, seed_from

    gcfg = run.cfg["generate"]
    primer = json.loads((run.dir("train-gen") / "primer.json").read_text())
    lid, h = primer["level"], primer["history"]
    rows, cols = _generation_size(run)
    grids = _grids(run)
    level = next(lv for lv in run.levels(run.target) if lv.level_id == lid)
    records = []
    for v_idx, (name, source) in enumerate((("two_step", linearize(grids[lid])), ("vglc", linearize(level)))):
        model = SequenceModel.load(run.dir("train-gen") / f"{name}.bin")
        seed = seed_from(source, h, f"prefix of {lid}")
        for i in range(gcfg["n_levels"]):
            rng_seed = [gcfg["seed"], v_idx, i]
            out = sample_level(model, seed, rows, cols, gcfg["temperature"], np.random.default_rng(rng_seed))
            gid = f"gen_{i:03d}"
            if name == "two_step":
                _write_text(tmp / name / f"{gid}.txt", out.to_text())
            else:
                _write_text(tmp / name / f"{gid}.txt", _level_text(out))
            records.append({"variant": name, "level": gid, "rng_seed": rng_seed})
    for name in ("cte", "ablation"):
        model = SequenceModel.load(run.dir("train-gen") / f"{name}.bin")
        index = _member_index(run, name)
        seq = _latent_sequence(_embeddings(run, name)[lid].latents)
        embedded, members = greedy_rollout(model, GenerationSeed(seq[:h], f"prefix of {lid}"), rows, cols, snap=index)
        grid = render_level(embedded, index, members, level_id="gen_000").grid
        _write_text(tmp / name / "gen_000.txt", _level_text(grid))
        _write_int_grid(tmp / name / "gen_000.members", members)
        records.append({"variant": name, "level": "gen_000", "rng_seed": None})
    _write_json(tmp / "generation.json", {"primer": primer, "rows": rows, "cols": cols,
                                          "temperature": gcfg["temperature"], "levels": records})
    return {"n_levels": gcfg["n_levels"]}


def stage_train_trans(run, tmp):
    from .generation import TranslatorConfig, save_translator, train_translator

    t = run.cfg["translator"]
    grids = _grids(run)
    emb = _embeddings(run, "cte")
    pairs = [(grids[lid], emb[lid]) for lid in run.split(run.target).train]
    cfg = TranslatorConfig(t["hidden_units"], t["layers"], t["epochs"], t["lr"])
    set_determinism(t["seed"])
    net = train_translator(pairs, cfg, seed=t["seed"])
    save_translator(tmp / "translator.bin", net)
    _write_curves(tmp / "curves.csv", net.curves)
    return {}


def stage_translate(run, tmp):
    from .generation import ClusterGrid, load_translator, render_level, translate_level

    net = load_translator(run.dir("train-trans") / "translator.bin")
    index = _member_index(run, "cte")
    grids = _grids(run)
    levels = {lv.level_id: lv for lv in run.levels(run.target)}
    rows = []
    for lid in run.split(run.target).test:
        tr = translate_level(net, grids[lid], index)
        r = render_level(tr.embedded, index, tr.members, level_id=lid)
        member_ok = float(np.mean(index.labels[tr.members] == grids[lid].ids))
        tile_diff = float(np.mean(r.grid.cells != levels[lid].cells))
        rows.append([lid, fmt(ssim(r.image, run.image(run.target, lid))), fmt(member_ok), fmt(tile_diff)])
        _write_text(tmp / "test" / f"{lid}.txt", _level_text(r.grid))
        _write_int_grid(tmp / "test" / f"{lid}.members", tr.members)
    with open(tmp / "test_fidelity.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["level", "ssim", "membership", "tile_difference"])
        wr.writerows(rows)
    gen_dir = run.dir("generate") / "two_step"
    for p in sorted(gen_dir.glob("*.txt")):
        grid = ClusterGrid.load(p, game=run.target)
        tr = translate_level(net, grid, index)
        r = render_level(tr.embedded, index, tr.members, level_id=p.stem)
        _write_text(tmp / "two_step" / f"{p.stem}.txt", _level_text(r.grid))
        _write_int_grid(tmp / "two_step" / f"{p.stem}.members", tr.members)
    return {}


def variant_levels(run, name):
    """Generated symbol levels of one variant, or None when that variant has not been produced."""
    folder = (run.dir("translate") if name == "two_step" else run.dir("generate")) / name
    if not folder.is_dir():
        return None
    levels = _read_levels(folder, run.target)
    return levels or None


def compare_generators(config, dest=None):
    """Mean and standard deviation of every metric per generator variant, plus the dataset row.

    Variants whose levels are missing are skipped with a warning. Returns the
    written CSV path and the list of reports.
    """
    run = config if isinstance(config, Run) else Run(config)
    run.need("ingest", "compare")
    roles, physics = run.roles(run.target), run.physics()
    reports = [metric_report(run.levels(run.target), roles, "dataset", physics)]
    for name in run.cfg["compare"]["variants"]:
        levels = variant_levels(run, name)
        if levels is None:
            log.warning("variant %r has no generated levels; omitting its row", name)
            continue
        reports.append(metric_report(levels, roles, name, physics))
    dest = Path(dest) if dest is not None else run.dir("compare") / "comparison.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(AGGREGATE_HEADER)
        for rep in reports:
            wr.writerow(aggregate_row(rep))
    return dest, reports


def stage_metrics(run, tmp):
    physics = run.physics()
    for game in run.games:
        write_level_csv(tmp / f"dataset_{game}.csv", metric_report(run.levels(game), run.roles(game), "dataset", physics))
    _, reports = compare_generators(run, tmp / "comparison.csv")
    write_level_csv(tmp / "levels.csv", reports)
    return {"variants": [r.source for r in reports]}


def stage_expressive_range(run, tmp):
    e = run.cfg["expressive_range"]
    roles = run.roles(run.target)
    dataset = run.levels(run.target)
    rows = []
    for name in VARIANTS:
        levels = variant_levels(run, name)
        if levels is None:
            continue
        gen, data = expressive_range_pair(levels, dataset, e["x"], e["y"], e["bins"], roles)
        write_expressive_range(gen, tmp / f"{name}.csv", tmp / f"{name}.png")
        write_expressive_range(data, tmp / f"dataset_vs_{name}.csv", tmp / f"dataset_vs_{name}.png")
        rows.append([name, fmt(histogram_intersection(gen, data))])
    with open(tmp / "intersection.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["variant", "histogram_intersection"])
        wr.writerows(rows)
    return {}


def stage_render(run, tmp):
    from .generation import render_level
    from .embedding import EmbeddedLevel

    index = _member_index(run, "cte")
    sprites = None
    if run.cfg["corpus"]["source"] == "fixture":
        sprites = fixture_game(run.target).sprites
    for name, folder in (("two_step", run.dir("translate") / "two_step"), ("test", run.dir("translate") / "test"),
                         ("cte", run.dir("generate") / "cte"), ("ablation", run.dir("generate") / "ablation")):
        idx = index if name != "ablation" else _member_index(run, "ablation")
        for p in sorted(folder.glob("*.members")):
            members = _read_int_grid(p)
            emb = EmbeddedLevel(idx.latents[members])
            r = render_level(emb, idx, members, level_id=p.stem)
            (tmp / name).mkdir(parents=True, exist_ok=True)
            save_image(r.image, tmp / name / f"{p.stem}.png")
    vglc = variant_levels(run, "vglc")
    for lv in vglc or []:
        sp = sprites or placeholder_sprites(lv.symbols(), run.target)
        (tmp / "vglc").mkdir(parents=True, exist_ok=True)
        save_image(render_symbols(lv, sp), tmp / "vglc" / f"{lv.level_id}.png")
    return {}


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "features": stage_features,
    "gmm": stage_gmm,
    "train-ae": stage_train_ae,
    "embed": stage_embed,
    "dbscan": stage_dbscan,
    "train-gen": stage_train_gen,
    "generate": stage_generate,
    "train-trans": stage_train_trans,
    "translate": stage_translate,
    "metrics": stage_metrics,
    "expressive-range": stage_expressive_range,
    "render": stage_render,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _seeds(cfg):
    return {sec: v["seed"] for sec, v in cfg.items() if isinstance(v, dict) and "seed" in v}


def run_stage(stage, config):
    """Run one stage and return its manifest."""
    if stage not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    run = config if isinstance(config, Run) else Run(config)
    for dep in DEPENDS[stage]:
        run.need(dep, stage)
    run.out.mkdir(parents=True, exist_ok=True)
    final = run.dir(stage)
    tmp = run.out / f"{stage}.partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    t0 = time.perf_counter()
    log.info("stage %s", stage)
    try:
        info = STAGE_FUNCS[stage](run, tmp) or {}
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    artifacts = {str(p.relative_to(tmp)): _sha(p) for p in sorted(tmp.rglob("*")) if p.is_file()}
    manifest = {
        "stage": stage,
        "package_version": __version__,
        "config_digest": run.cfg.digest(),
        "config_source": run.cfg.source,
        "seeds": _seeds(run.cfg),
        "depends": list(DEPENDS[stage]),
        "upstream": {d: json.loads((run.dir(d) / "manifest.json").read_text())["artifacts_digest"] for d in DEPENDS[stage]},
        "info": info,
        "artifacts": artifacts,
        "artifacts_digest": hashlib.sha256(json.dumps(artifacts, sort_keys=True).encode()).hexdigest()[:16],
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    _write_json(tmp / "manifest.json", manifest)
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)
    return manifest


def run_all(config, stages=STAGES):
    run = config if isinstance(config, Run) else Run(config)
    return [run_stage(s, run) for s in stages]
