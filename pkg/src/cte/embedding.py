"""The cluster-based tile embedding autoencoder."""

from __future__ import annotations

import copy
import csv
import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import CONTEXT, N_AFFORDANCES, TILE, LevelImage, SampleSet, TileSample, all_contexts_u8
from .errors import DimensionError, NumericError
from .features import edge_maps
from .neuralkit import Adam, AdamHyper, check_finite, init_module_, load_container, load_module_state, save_container

log = logging.getLogger(__name__)

LATENT_DIM = 256
LOSS_WEIGHTS = (0.5, 1.5, 0.5, 0.5)  # context, affordance, edge, cluster
EDGE_DIM = TILE * TILE


@dataclass(frozen=True)
class CteConfig:
    latent_dim: int = LATENT_DIM
    context_filters: tuple = (16, 32)
    context_dense: int = 256
    affordance_units: int = 32
    edge_units: int = 64
    n_clusters: int = 10
    loss_weights: tuple = LOSS_WEIGHTS
    use_edges: bool = True
    use_cluster_loss: bool = True
    soft_targets: bool = False
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3

    def ablation(self):
        """Original-embedding approximation: no edge branch, no cluster loss."""
        return replace(self, use_edges=False, use_cluster_loss=False)

    def effective_weights(self):
        w_i, w_a, w_e, w_c = self.loss_weights
        return (w_i, w_a, w_e if self.use_edges else 0.0, w_c if self.use_cluster_loss else 0.0)


class CteModel(nn.Module):
    def __init__(self, config=CteConfig()):
        super().__init__()
        self.config = config
        f1, f2 = config.context_filters
        side = CONTEXT // 4
        flat = f2 * side * side
        self.context_encoder = nn.Sequential(
            nn.Conv2d(3, f1, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(f1, f2, 3, stride=2, padding=1), nn.ReLU(),
            nn.Flatten(), nn.Linear(flat, config.context_dense), nn.ReLU(),
        )
        self.affordance_encoder = nn.Sequential(nn.Linear(N_AFFORDANCES, config.affordance_units), nn.ReLU())
        fused = config.context_dense + config.affordance_units
        if config.use_edges:
            self.edge_encoder = nn.Sequential(nn.Linear(EDGE_DIM, config.edge_units), nn.ReLU())
            fused += config.edge_units
        self.fuse = nn.Linear(fused, config.latent_dim)

        self.context_decoder = nn.Sequential(
            nn.Linear(config.latent_dim, flat), nn.ReLU(), nn.Unflatten(1, (f2, side, side)),
            nn.ConvTranspose2d(f2, f1, 4, stride=2, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(f1, 3, 4, stride=2, padding=1),
        )
        self.affordance_decoder = nn.Sequential(
            nn.Linear(config.latent_dim, config.affordance_units), nn.ReLU(), nn.Linear(config.affordance_units, N_AFFORDANCES)
        )
        if config.use_edges:
            self.edge_decoder = nn.Sequential(
                nn.Linear(config.latent_dim, config.edge_units), nn.ReLU(), nn.Linear(config.edge_units, EDGE_DIM)
            )
        self.cluster_head = nn.Linear(config.latent_dim, config.n_clusters)
        init_module_(self)
        self.trained = False
        self.version = "untrained"

    def encode(self, context, affordance, edges):
        parts = [self.context_encoder(context), self.affordance_encoder(affordance)]
        if self.config.use_edges:
            parts.append(self.edge_encoder(edges))
        return self.fuse(torch.cat(parts, dim=1))

    def forward(self, context, affordance, edges):
        z = self.encode(context, affordance, edges)
        return CteOutputs(
            latent=z,
            context_logits=self.context_decoder(z),
            affordance_logits=self.affordance_decoder(z),
            edge_logits=self.edge_decoder(z) if self.config.use_edges else None,
            cluster_logits=self.cluster_head(z),
        )


@dataclass
class CteOutputs:
    latent: torch.Tensor
    context_logits: torch.Tensor  # (B, 3, 48, 48)
    affordance_logits: torch.Tensor
    edge_logits: torch.Tensor | None
    cluster_logits: torch.Tensor

    @property
    def recon_context(self):
        return torch.sigmoid(self.context_logits)

    @property
    def recon_affordance(self):
        return torch.sigmoid(self.affordance_logits)

    @property
    def recon_edge(self):
        return None if self.edge_logits is None else torch.sigmoid(self.edge_logits)

    @property
    def cluster_probs(self):
        return torch.softmax(self.cluster_logits, dim=1)


@dataclass
class Batch:
    context: torch.Tensor  # (B, 3, 48, 48) in [0, 1]
    affordance: torch.Tensor  # (B, 13)
    edges: torch.Tensor  # (B, 256)

    @classmethod
    def from_arrays(cls, contexts, affordances, edges, dtype=torch.float32):
        ctx = np.asarray(contexts)
        ctx = ctx.astype(np.float64) / 255.0 if ctx.dtype == np.uint8 else ctx.astype(np.float64)
        if ctx.ndim != 4 or ctx.shape[1:] != (CONTEXT, CONTEXT, 3):
            raise DimensionError(f"contexts must be (B, 48, 48, 3), got {ctx.shape}")
        aff = np.asarray(affordances, dtype=np.float64).reshape(len(ctx), -1)
        edg = np.asarray(edges, dtype=np.float64).reshape(len(ctx), -1)
        if aff.shape[1] != N_AFFORDANCES or edg.shape[1] != EDGE_DIM:
            raise DimensionError(f"affordances {aff.shape} / edges {edg.shape} have the wrong width")
        return cls(
            context=torch.as_tensor(ctx.transpose(0, 3, 1, 2).copy(), dtype=dtype),
            affordance=torch.as_tensor(aff, dtype=dtype),
            edges=torch.as_tensor(edg, dtype=dtype),
        )

    @classmethod
    def from_samples(cls, samples, idx=None, dtype=torch.float32):
        if isinstance(samples, TileSample):
            return cls.from_arrays(samples.context[None], samples.affordance[None], samples.edges[None], dtype)
        if idx is None:
            idx = slice(None)
        return cls.from_arrays(samples.contexts[idx], samples.affordances[idx], samples.edges[idx], dtype)


def _model_dtype(model):
    return next(model.parameters()).dtype


def cte_forward(model, sample):
    """Run the autoencoder on a TileSample, a SampleSet or a prepared Batch."""
    batch = sample if isinstance(sample, Batch) else Batch.from_samples(sample, dtype=_model_dtype(model))
    return model(batch.context, batch.affordance, batch.edges)


@dataclass
class LossParts:
    total: torch.Tensor
    image: torch.Tensor
    affordance: torch.Tensor
    edge: torch.Tensor
    cluster: torch.Tensor

    def as_floats(self):
        return {k: float(getattr(self, k).detach()) for k in ("total", "image", "affordance", "edge", "cluster")}


def weighted_total(image, affordance, edge, cluster, weights=LOSS_WEIGHTS):
    w_i, w_a, w_e, w_c = weights
    return w_i * image + w_a * affordance + w_e * edge + w_c * cluster


def cte_loss(outputs, batch, gmm_target, weights=LOSS_WEIGHTS):
    """Weighted sum of context MSE, affordance BCE, edge MSE and cluster cross-entropy."""
    target = gmm_target if isinstance(gmm_target, torch.Tensor) else torch.as_tensor(gmm_target)
    target = target.to(outputs.cluster_logits.dtype)
    l_i = F.mse_loss(outputs.recon_context, batch.context)
    l_a = F.binary_cross_entropy_with_logits(outputs.affordance_logits, batch.affordance)
    if outputs.edge_logits is None:
        l_e = outputs.latent.new_zeros(())
    else:
        l_e = F.mse_loss(torch.sigmoid(outputs.edge_logits), batch.edges)
    l_c = -(target * F.log_softmax(outputs.cluster_logits, dim=1)).sum(dim=1).mean()
    for name, v in (("image", l_i), ("affordance", l_a), ("edge", l_e), ("cluster", l_c)):
        if not torch.isfinite(v):
            raise NumericError(f"{name} reconstruction loss is not finite")
    return LossParts(weighted_total(l_i, l_a, l_e, l_c, weights), l_i, l_a, l_e, l_c)


def one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: CteModel
    curves: dict  # "train_total", "val_total", "val_image", ... -> per-epoch lists
    initial_val_loss: float
    best_epoch: int
    aborted: bool = False


def _params_digest(model):
    h = hashlib.sha256()
    for k, v in model.state_dict().items():
        h.update(k.encode())
        h.update(v.detach().cpu().numpy().tobytes())
    return h.hexdigest()[:16]


@torch.no_grad()
def evaluate_loss(model, samples, targets, batch_size=256):
    model.eval()
    dtype = _model_dtype(model)
    weights = model.config.effective_weights()
    sums = {k: 0.0 for k in ("total", "image", "affordance", "edge", "cluster")}
    n = len(samples)
    for start in range(0, n, batch_size):
        idx = slice(start, start + batch_size)
        batch = Batch.from_samples(samples, idx, dtype)
        parts = cte_loss(model(batch.context, batch.affordance, batch.edges), batch, torch.as_tensor(targets[idx]), weights)
        m = batch.context.shape[0]
        for k, v in parts.as_floats().items():
            sums[k] += v * m
    return {k: v / n for k, v in sums.items()}


def train_cte(samples, targets, config=CteConfig(), seed=0, val_samples=None, val_targets=None, dtype=torch.float32):
    """Fit the autoencoder; returns the checkpoint with the lowest validation loss.

    ``targets`` are frozen GMM assignments, one-hot (or soft) ``(N, K)``.
    """
    if len(samples) == 0:
        raise ValueError("no training samples")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(samples), config.n_clusters):
        raise DimensionError(f"targets {targets.shape} do not match ({len(samples)}, {config.n_clusters})")
    if val_samples is None:
        val_samples, val_targets = samples, targets
    torch.manual_seed(seed)
    model = CteModel(config).to(dtype)
    opt = Adam(model.parameters(), AdamHyper(lr=config.lr))
    weights = config.effective_weights()

    curves = {f"{p}_{k}": [] for p in ("train", "val") for k in ("total", "image", "affordance", "edge", "cluster")}
    initial = evaluate_loss(model, val_samples, val_targets)["total"]
    best_loss, best_state, best_epoch = initial, copy.deepcopy(model.state_dict()), -1
    n = len(samples)
    for epoch in range(config.epochs):
        model.train()
        order = np.random.default_rng([seed, epoch]).permutation(n)
        sums = dict.fromkeys(("total", "image", "affordance", "edge", "cluster"), 0.0)
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            batch = Batch.from_samples(samples, idx, dtype)
            try:
                parts = cte_loss(model(batch.context, batch.affordance, batch.edges), batch,
                                 torch.as_tensor(targets[idx], dtype=dtype), weights)
            except NumericError as exc:
                model.load_state_dict(best_state)
                model.trained, model.version = True, _params_digest(model)
                err = NumericError(f"training diverged at epoch {epoch}: {exc}")
                err.result = TrainResult(model, curves, initial, best_epoch, aborted=True)
                raise err from exc
            opt.zero_grad()
            parts.total.backward()
            opt.step()
            for k, v in parts.as_floats().items():
                sums[k] += v * len(idx)
        for k, v in sums.items():
            curves[f"train_{k}"].append(v / n)
        val = evaluate_loss(model, val_samples, val_targets)
        for k, v in val.items():
            curves[f"val_{k}"].append(v)
        log.info("epoch %d train %.4f val %.4f", epoch, sums["total"] / n, val["total"])
        if val["total"] < best_loss:
            best_loss, best_state, best_epoch = val["total"], copy.deepcopy(model.state_dict()), epoch
    model.load_state_dict(best_state)
    model.eval()
    model.trained, model.version = True, _params_digest(model)
    return TrainResult(model, curves, initial, best_epoch)


def save_cte(path, model, meta=None):
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    save_container(path, arrays, {"kind": "cte", "config": asdict(model.config), "version": model.version, **(meta or {})})


def load_cte(path):
    arrays, meta = load_container(path)
    cfg = meta["config"]
    cfg = CteConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()})
    model = load_module_state(CteModel(cfg), arrays)
    model.eval()
    model.trained, model.version = True, meta.get("version", "unknown")
    return model, meta


# ---------------------------------------------------------------------------
# embedding levels
# ---------------------------------------------------------------------------


@dataclass
class EmbeddedLevel:
    latents: np.ndarray  # (rows, cols, 256)
    game: str = ""
    level_id: str = ""
    model_version: str = ""

    @property
    def rows(self):
        return self.latents.shape[0]

    @property
    def cols(self):
        return self.latents.shape[1]


@torch.no_grad()
def embed_samples(model, samples, batch_size=256):
    if not getattr(model, "trained", False):
        raise ValueError("model has not been trained")
    model.eval()
    dtype = _model_dtype(model)
    out = []
    for start in range(0, len(samples), batch_size):
        batch = Batch.from_samples(samples, slice(start, start + batch_size), dtype)
        z = model.encode(batch.context, batch.affordance, batch.edges)
        out.append(check_finite(z, "latent").cpu().numpy())
    return np.concatenate(out) if out else np.zeros((0, model.config.latent_dim))


def embed_level(model, image, affordances=None, game="", level_id=None):
    """Latents for every tile of a level image, laid out ``(rows, cols, latent)``.

    ``affordances`` is ``(rows, cols, 13)``; omitted for unannotated games.
    """
    if not getattr(model, "trained", False):
        raise ValueError("model has not been trained")
    rows, cols = image.tile_shape
    n = rows * cols
    aff = np.zeros((n, N_AFFORDANCES)) if affordances is None else np.asarray(affordances).reshape(n, N_AFFORDANCES)
    tiles = image.tiles().reshape(n, TILE, TILE, 3)
    samples = SampleSet(
        contexts=all_contexts_u8(image), affordances=aff, edges=edge_maps(tiles), tiles=tiles,
        symbols=np.full(n, "?"), games=np.full(n, game), levels=np.full(n, image.level_id),
        positions=np.stack(np.divmod(np.arange(n), cols), axis=1),
    )
    z = embed_samples(model, samples)
    return EmbeddedLevel(z.reshape(rows, cols, -1), game=game, level_id=image.level_id if level_id is None else level_id,
                         model_version=model.version)


def save_embeddings(bin_path, csv_path, levels):
    """Stack all latents into one container; the CSV maps (game, level, row, col) to a record offset."""
    blocks, offset = [], 0
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["game", "level", "row", "col", "record"])
        for lv in levels:
            for r in range(lv.rows):
                for c in range(lv.cols):
                    wr.writerow([lv.game, lv.level_id, r, c, offset])
                    offset += 1
            blocks.append(lv.latents.reshape(-1, lv.latents.shape[-1]))
    meta = {"kind": "embeddings", "levels": [[lv.game, lv.level_id, lv.rows, lv.cols, lv.model_version] for lv in levels]}
    save_container(bin_path, {"latents": np.concatenate(blocks)}, meta)


def load_embeddings(bin_path):
    arrays, meta = load_container(bin_path)
    flat = arrays["latents"].astype(np.float64)
    out, offset = [], 0
    for game, level_id, rows, cols, version in meta["levels"]:
        n = rows * cols
        out.append(EmbeddedLevel(flat[offset : offset + n].reshape(rows, cols, -1), game, level_id, version))
        offset += n
    return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@torch.no_grad()
def affordance_macro_f1(model, samples, threshold=0.5):
    """Macro F1 over affordances that occur (as truth or prediction) in ``samples``."""
    dtype = _model_dtype(model)
    preds = []
    for start in range(0, len(samples), 256):
        batch = Batch.from_samples(samples, slice(start, start + 256), dtype)
        preds.append((cte_forward(model, batch).recon_affordance >= threshold).cpu().numpy())
    pred = np.concatenate(preds).astype(bool)
    true = np.asarray(samples.affordances).astype(bool)
    scores = []
    for j in range(true.shape[1]):
        tp = np.sum(pred[:, j] & true[:, j])
        fp = np.sum(pred[:, j] & ~true[:, j])
        fn = np.sum(~pred[:, j] & true[:, j])
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 1.0


@torch.no_grad()
def cluster_head_accuracy(model, samples, labels):
    dtype = _model_dtype(model)
    hits = 0
    for start in range(0, len(samples), 256):
        batch = Batch.from_samples(samples, slice(start, start + 256), dtype)
        pred = cte_forward(model, batch).cluster_logits.argmax(dim=1).cpu().numpy()
        hits += int(np.sum(pred == np.asarray(labels)[start : start + 256]))
    return hits / len(samples)


def latent_separation_ratio(latents, labels, sample=2000, seed=0):
    """Mean intra-cluster over mean inter-cluster pairwise latent distance."""
    from scipy.spatial.distance import pdist, squareform

    latents, labels = np.asarray(latents, dtype=np.float64), np.asarray(labels)
    if len(latents) > sample:
        sel = np.sort(np.random.default_rng(seed).choice(len(latents), sample, replace=False))
        latents, labels = latents[sel], labels[sel]
    d = squareform(pdist(latents))
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    intra, inter = d[same & off], d[~same]
    if len(intra) == 0 or len(inter) == 0:
        raise ValueError("need at least two clusters with two members")
    return float(intra.mean() / inter.mean())


def decode_affordances(model, latents, threshold=0.5):
    with torch.no_grad():
        z = torch.as_tensor(np.asarray(latents).reshape(-1, model.config.latent_dim), dtype=_model_dtype(model))
        probs = torch.sigmoid(model.affordance_decoder(z)).cpu().numpy()
    return (probs >= threshold).astype(np.uint8).reshape(np.asarray(latents).shape[:-1] + (N_AFFORDANCES,))
