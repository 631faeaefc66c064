"""Sequence generation over cluster grids and the cluster-to-embedding translator."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import _kernels
from .clustering import first_occurrences
from .corpus import TILE, LevelGrid, LevelImage
from .embedding import EmbeddedLevel
from .errors import DimensionError, FormatError, ModeError
from .neuralkit import (
    DISTRIBUTION,
    REGRESSION,
    Adam,
    AdamHyper,
    SequenceModelConfig,
    SequenceNet,
    categorical_sample,
    check_finite,
    init_module_,
    load_container,
    load_module_state,
    save_container,
    softmax,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# cluster grids and scan order
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ClusterGrid:
    ids: np.ndarray  # (rows, cols) int, top row first
    k: int
    level_id: str = ""
    game: str = ""

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.ndim != 2 or ids.size == 0:
            raise FormatError(f"cluster grid must be a nonempty 2-D array, got {ids.shape}")
        if ids.min() < 0 or ids.max() >= self.k:
            raise FormatError(f"cluster ids must lie in [0, {self.k})")
        self.ids = ids

    @property
    def shape(self):
        return self.ids.shape

    def __eq__(self, other):
        return isinstance(other, ClusterGrid) and self.k == other.k and np.array_equal(self.ids, other.ids)

    def to_text(self):
        rows, cols = self.ids.shape
        lines = [f"K={self.k} rows={rows} cols={cols}"] + [" ".join(str(int(v)) for v in row) for row in self.ids]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, level_id="", game=""):
        lines = text.strip("\n").split("\n")
        try:
            head = dict(part.split("=") for part in lines[0].split())
            k, rows, cols = int(head["K"]), int(head["rows"]), int(head["cols"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad cluster-level header {lines[0]!r}") from exc
        ids = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64)
        if ids.shape != (rows, cols):
            raise FormatError(f"header says {rows}x{cols}, body is {ids.shape}")
        return cls(ids, k, level_id, game)

    def save(self, path):
        Path(path).write_bytes(self.to_text().encode())

    @classmethod
    def load(cls, path, game=""):
        path = Path(path)
        return cls.from_text(path.read_text(), level_id=path.stem, game=game)


def _grid_values(grid):
    if isinstance(grid, ClusterGrid):
        return grid.ids
    if isinstance(grid, LevelGrid):
        return grid.cells
    return np.asarray(grid)


def linearize(grid):
    """Bottom row first, each row left to right."""
    a = _grid_values(grid)
    if a.ndim != 2:
        raise DimensionError("linearize expects a 2-D grid")
    return a[::-1].reshape(-1).copy()


def delinearize(seq, rows, cols):
    seq = np.asarray(seq)
    if seq.shape[0] != rows * cols:
        raise DimensionError(f"sequence of length {seq.shape[0]} cannot fill {rows}x{cols}")
    return seq.reshape((rows, cols) + seq.shape[1:])[::-1].copy()


# ---------------------------------------------------------------------------
# primer
# ---------------------------------------------------------------------------


@dataclass
class GenerationSeed:
    tokens: np.ndarray  # (history,) ids, or (history, d) vectors
    description: str = ""

    def __len__(self):
        return len(self.tokens)


def reference_level(sequences, history):
    """Index of the training sequence whose prefix best matches the position-wise mode.

    The mode prefix is flat ground on platformer corpora; using a real level's
    prefix keeps the same primer available in every representation.
    """
    seqs = [np.asarray(s)[:history] for s in sequences if len(s) >= history]
    if not seqs:
        raise ValueError(f"no training sequence has {history} tokens")
    stack = np.stack(seqs)
    mode = np.empty(history, dtype=stack.dtype)
    for j in range(history):
        vals, counts = np.unique(stack[:, j], return_counts=True)
        mode[j] = vals[np.argmax(counts)]
    dist = (stack != mode).sum(axis=1)
    candidates = [i for i, s in enumerate(sequences) if len(s) >= history]
    return candidates[int(np.argmin(dist))], mode


def seed_from(sequence, history, description=""):
    seq = np.asarray(sequence)
    if len(seq) < history:
        raise ValueError(f"primer needs {history} tokens, sequence has {len(seq)}")
    return GenerationSeed(seq[:history].copy(), description)


# ---------------------------------------------------------------------------
# sequence models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    clip_norm: float = 5.0


class SequenceModel:
    """A trained ``SequenceNet`` plus what is needed to decode its tokens."""

    def __init__(self, net, config, vocab=None, dim=None, kind="cluster"):
        self.net = net
        self.config = config
        self.vocab = vocab  # list of tokens (ints or symbols) for distribution mode
        self.dim = dim  # vector width for regression mode
        self.kind = kind  # "cluster", "symbol" or "embedding"
        self.curves = {}

    @property
    def mode(self):
        return self.config.output_mode

    def encode(self, tokens):
        """Network inputs for a token sequence."""
        if self.mode == REGRESSION:
            return torch.as_tensor(np.asarray(tokens, dtype=np.float64), dtype=torch.float32)
        lookup = {t: i for i, t in enumerate(self.vocab)}
        try:
            idx = np.array([lookup[t.item() if hasattr(t, "item") else t] for t in tokens], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"token {exc.args[0]!r} is not in the model vocabulary") from exc
        return F.one_hot(torch.as_tensor(idx), len(self.vocab)).to(torch.float32)

    def save(self, path, meta=None):
        arrays = {k: v.detach().cpu().numpy() for k, v in self.net.state_dict().items()}
        vocab = None if self.vocab is None else [v.item() if hasattr(v, "item") else v for v in self.vocab]
        save_container(path, arrays, {"kind": "sequence", "token_kind": self.kind, "config": asdict(self.config),
                                      "vocab": vocab, "dim": self.dim, "in": self.net.input_dim,
                                      "out": self.net.output_dim, **(meta or {})})

    @classmethod
    def load(cls, path):
        arrays, meta = load_container(path)
        cfg = SequenceModelConfig(**meta["config"])
        net = load_module_state(SequenceNet(meta["in"], meta["out"], cfg), arrays)
        net.eval()
        return cls(net, cfg, meta["vocab"], meta["dim"], meta["token_kind"])


def _batches_by_length(seqs):
    groups = {}
    for i, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(i)
    return [groups[k] for k in sorted(groups)]


def train_sequence_model(sequences, config=SequenceModelConfig(), seed=0, vocab=None, kind="cluster",
                         train=TrainConfig(), val_sequences=None):
    """Stateful truncated BPTT over whole levels.

    Distribution mode: ``sequences`` are token arrays and the head is a
    softmax over ``vocab``. Regression mode: ``sequences`` are ``(T, d)``
    arrays and the head is linear, trained with MSE.
    """
    sequences = [np.asarray(s) for s in sequences if len(s) > 1]
    if not sequences:
        raise ValueError("empty training corpus")
    torch.manual_seed(seed)
    if config.output_mode == DISTRIBUTION:
        if vocab is None:
            vocab = sorted(set(np.concatenate(sequences).tolist()))
        model = SequenceModel(SequenceNet(len(vocab), len(vocab), config), config, list(vocab), kind=kind)
    else:
        dim = sequences[0].shape[1]
        model = SequenceModel(SequenceNet(dim, dim, config), config, dim=dim, kind="embedding")
    net = model.net
    opt = Adam(net.parameters(), AdamHyper(lr=train.lr))
    encoded = [model.encode(s) for s in sequences]
    targets = [_targets(model, s) for s in sequences]
    groups = _batches_by_length(sequences)
    curve = []
    h = config.history_length
    for epoch in range(train.epochs):
        net.train()
        total, count = 0.0, 0
        for group in groups:
            x = torch.stack([encoded[i] for i in group])
            y = torch.stack([targets[i] for i in group])
            state = None
            T = x.shape[1] - 1
            for start in range(0, T, h):
                end = min(start + h, T)
                out, state = net(x[:, start:end], state)
                state = tuple(s.detach() for s in state)
                loss = _loss(model, out, y[:, start + 1 : end + 1])
                check_finite(loss, "sequence loss")
                opt.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(net.parameters(), train.clip_norm)
                opt.step()
                total += float(loss.detach()) * (end - start) * len(group)
                count += (end - start) * len(group)
        curve.append(total / count)
    model.curves["train_loss"] = curve
    net.eval()
    if val_sequences:
        model.curves["val_loss"] = [sequence_loss(model, val_sequences)]
    return model


def _targets(model, seq):
    if model.mode == REGRESSION:
        return torch.as_tensor(np.asarray(seq, dtype=np.float64), dtype=torch.float32)
    lookup = {t: i for i, t in enumerate(model.vocab)}
    return torch.as_tensor(np.array([lookup[t.item() if hasattr(t, "item") else t] for t in seq]), dtype=torch.long)


def _loss(model, out, y):
    if model.mode == REGRESSION:
        return F.mse_loss(out, y)
    return F.cross_entropy(out.reshape(-1, out.shape[-1]), y.reshape(-1))


@torch.no_grad()
def next_token_probs(model, seq):
    """Predicted next-token distribution after each prefix of ``seq`` (rows 0..T-2 predict 1..T-1)."""
    out, _ = model.net(model.encode(seq)[None])
    return torch.softmax(out[0], dim=-1).numpy().astype(np.float64)


@torch.no_grad()
def sequence_loss(model, sequences):
    """Mean per-token loss: cross-entropy (nats) or MSE."""
    total, count = 0.0, 0
    for s in sequences:
        out, _ = model.net(model.encode(s)[None])
        y = _targets(model, s)[None]
        total += float(_loss(model, out[:, :-1], y[:, 1:])) * (len(s) - 1)
        count += len(s) - 1
    return total / count


def perplexity(model, sequences):
    if model.mode != DISTRIBUTION:
        raise ModeError("perplexity needs a distribution-mode model")
    return float(np.exp(sequence_loss(model, sequences)))


def unigram_perplexity(train_sequences, eval_sequences, vocab):
    """Perplexity of add-one unigram frequencies on the predicted tokens of ``eval_sequences``."""
    lookup = {t: i for i, t in enumerate(vocab)}
    counts = np.ones(len(vocab))
    for s in train_sequences:
        for t in np.asarray(s).tolist():
            counts[lookup[t]] += 1
    logp = np.log(counts / counts.sum())
    nll = [-logp[lookup[t]] for s in eval_sequences for t in np.asarray(s)[1:].tolist()]
    return float(np.exp(np.mean(nll)))


@torch.no_grad()
def _prime(model, seed):
    out, state = model.net(model.encode(seed.tokens)[None])
    return out[0, -1], state


def _emit(model, tokens, rows, cols):
    seq = np.asarray(tokens)
    if model.kind == "symbol":
        return LevelGrid(delinearize(seq, rows, cols).astype("<U1"))
    return ClusterGrid(delinearize(seq.astype(np.int64), rows, cols), k=max(model.vocab) + 1)


@torch.no_grad()
def sample_level(model, seed, rows, cols, temperature=1.0, rng=None):
    """Primer followed by tokens drawn one at a time, filling the grid in scan order."""
    if model.mode != DISTRIBUTION:
        raise ModeError("sampling needs a distribution-mode model")
    rng = np.random.default_rng() if rng is None else rng
    n = rows * cols
    tokens = list(np.asarray(seed.tokens)[:n].tolist())
    if len(tokens) < n:
        logits, state = _prime(model, seed)
        while True:
            probs = softmax(logits.numpy().astype(np.float64))
            tok = model.vocab[categorical_sample(probs, temperature, rng)]
            tokens.append(tok)
            if len(tokens) == n:
                break
            logits, state = model.net.step(model.encode([tok]), state)
            logits = logits[0]
    return _emit(model, tokens, rows, cols)


@torch.no_grad()
def greedy_rollout(model, seed, rows, cols, snap=None):
    """Most-likely continuation.

    In regression mode each predicted vector is replaced by its nearest row of
    ``snap`` (a ``ClusterMemberIndex``) before being fed back; returns the
    snapped ``EmbeddedLevel`` and the member index of each cell.
    """
    n = rows * cols
    if model.mode == DISTRIBUTION:
        tokens = list(np.asarray(seed.tokens)[:n].tolist())
        if len(tokens) < n:
            logits, state = _prime(model, seed)
            while True:
                tok = model.vocab[int(torch.argmax(logits))]
                tokens.append(tok)
                if len(tokens) == n:
                    break
                logits, state = model.net.step(model.encode([tok]), state)
                logits = logits[0]
        return _emit(model, tokens, rows, cols)
    if snap is None:
        raise ValueError("regression rollout needs a snap index")
    prim = np.asarray(seed.tokens, dtype=np.float64)[:n]
    members = list(snap.nearest(prim))
    vecs = [snap.latents[m] for m in members]
    if len(vecs) < n:
        pred, state = _prime(model, seed)
        while True:
            m = int(snap.nearest(pred.numpy()[None].astype(np.float64))[0])
            members.append(m)
            vecs.append(snap.latents[m])
            if len(vecs) == n:
                break
            pred, state = model.net.step(model.encode(snap.latents[m][None]), state)
            pred = pred[0]
    latents = delinearize(np.stack(vecs), rows, cols)
    return EmbeddedLevel(latents), delinearize(np.array(members), rows, cols)


# ---------------------------------------------------------------------------
# member index
# ---------------------------------------------------------------------------


class ClusterMemberIndex:
    """Training tiles grouped by cluster, with their embeddings and sprites."""

    def __init__(self, latents, labels, symbols, tiles, origins=None):
        self.latents = np.asarray(latents, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.symbols = np.asarray(symbols)
        self.tiles = np.asarray(tiles, dtype=np.uint8)
        self.origins = origins if origins is not None else [("", "", 0, 0)] * len(self.labels)
        if not (len(self.latents) == len(self.labels) == len(self.symbols) == len(self.tiles)):
            raise DimensionError("index fields differ in length")
        self.k = int(self.labels.max()) + 1 if len(self.labels) else 0
        # nearest-neighbour searches run over unique rows; ties resolve to the first member
        first, _ = first_occurrences(self.latents)
        self._uniq = first
        self._by_cluster = {c: first[self.labels[first] == c] for c in range(self.k)}
        self._exact = {self.latents[i].tobytes(): int(i) for i in first[::-1]}

    def __len__(self):
        return len(self.labels)

    def clusters(self):
        return sorted(c for c, m in self._by_cluster.items() if len(m))

    def members(self, cluster):
        return np.nonzero(self.labels == cluster)[0]

    def nearest(self, queries, clusters=None):
        """Member index nearest to each query, optionally restricted to a cluster per query."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if clusters is None:
            idx, _ = _kernels.nearest(q, self.latents[self._uniq])
            return self._uniq[idx]
        clusters = np.asarray(clusters, dtype=np.int64)
        out = np.empty(len(q), dtype=np.int64)
        for c in np.unique(clusters):
            cand = self._by_cluster.get(int(c))
            if cand is None or len(cand) == 0:
                raise KeyError(f"cluster {int(c)} has no members in the index")
            sel = clusters == c
            idx, _ = _kernels.nearest(q[sel], self.latents[cand])
            out[sel] = cand[idx]
        return out

    def exact(self, vector):
        return self._exact.get(np.asarray(vector, dtype=np.float64).tobytes())

    def save(self, path):
        origins = [[str(g), str(lv), int(r), int(c)] for g, lv, r, c in self.origins]
        save_container(path, {"latents": self.latents.astype(np.float32), "labels": self.labels.astype(np.int32),
                              "tiles": self.tiles.astype(np.int32)},
                       {"kind": "member_index", "symbols": [str(s) for s in self.symbols], "origins": origins})

    @classmethod
    def load(cls, path):
        arr, meta = load_container(path)
        return cls(arr["latents"].astype(np.float64), arr["labels"], np.array(meta["symbols"], dtype="<U1"),
                   arr["tiles"].astype(np.uint8), [tuple(o) for o in meta["origins"]])


def build_member_index(levels, grids, samples_by_level):
    """Index over embedded training levels; ``grids`` give each tile's cluster.

    ``samples_by_level`` maps level id to its ``SampleSet`` (for sprites and symbols).
    """
    lat, lab, sym, til, org = [], [], [], [], []
    for lv, grid in zip(levels, grids):
        if lv.latents.shape[:2] != grid.shape:
            raise DimensionError(f"level {lv.level_id}: embedding {lv.latents.shape[:2]} vs grid {grid.shape}")
        s = samples_by_level[lv.level_id]
        rows, cols = grid.shape
        lat.append(lv.latents.reshape(rows * cols, -1))
        lab.append(grid.ids.reshape(-1))
        sym.append(s.symbols)
        til.append(s.tiles)
        org += [(lv.game, lv.level_id, r, c) for r in range(rows) for c in range(cols)]
    return ClusterMemberIndex(np.concatenate(lat), np.concatenate(lab), np.concatenate(sym), np.concatenate(til), org)


# ---------------------------------------------------------------------------
# translator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TranslatorConfig:
    hidden_units: int = 256
    layers: int = 1
    epochs: int = 300
    lr: float = 1e-3
    clip_norm: float = 5.0


class TranslatorNet(nn.Module):
    def __init__(self, rows, k, dim, config):
        super().__init__()
        self.rows, self.k, self.dim, self.config = rows, k, dim, config
        self.lstm = nn.LSTM(rows * (2 * k + dim), config.hidden_units, num_layers=config.layers, batch_first=True)
        self.head = nn.Linear(config.hidden_units, rows * dim)
        init_module_(self)

    def forward(self, x, state=None):
        out, state = self.lstm(x, state)
        return self.head(out), state


def _onehot_columns(ids, k):
    """``(rows, cols)`` ids to per-column one-hot vectors ``(cols, rows * k)``."""
    rows, cols = ids.shape
    oh = np.zeros((cols, rows, k))
    oh[np.arange(cols)[None, :], np.arange(rows)[:, None], ids] = 1.0
    return oh.reshape(cols, rows * k)


def translator_inputs(ids, latents, k):
    """Teacher-forced inputs: one-hot columns c and c-1 plus embedding column c-1 (zeros before column 0)."""
    rows, cols = ids.shape
    cur = _onehot_columns(ids, k)
    prev = np.vstack([np.zeros((1, rows * k)), cur[:-1]])
    emb = np.asarray(latents, dtype=np.float64).transpose(1, 0, 2).reshape(cols, -1)
    prev_emb = np.vstack([np.zeros((1, emb.shape[1])), emb[:-1]])
    return np.hstack([cur, prev, prev_emb]), emb


def train_translator(pairs, config=TranslatorConfig(), seed=0):
    """Column-wise LSTM from cluster columns to embedding columns, trained with teacher forcing."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no training pairs")
    rows = pairs[0][0].shape[0]
    k = pairs[0][0].k
    dim = pairs[0][1].latents.shape[2]
    xs, ys = [], []
    for grid, emb in pairs:
        if grid.shape != emb.latents.shape[:2]:
            raise DimensionError(f"cluster grid {grid.shape} and embedding {emb.latents.shape[:2]} differ")
        if grid.shape[0] != rows or grid.k != k:
            raise DimensionError("all translator pairs must share row count and K")
        if grid.shape[1] == 0:
            raise DimensionError("zero-length level")
        x, y = translator_inputs(grid.ids, emb.latents, k)
        xs.append(torch.as_tensor(x, dtype=torch.float32))
        ys.append(torch.as_tensor(y, dtype=torch.float32))
    torch.manual_seed(seed)
    net = TranslatorNet(rows, k, dim, config)
    opt = Adam(net.parameters(), AdamHyper(lr=config.lr))
    groups = _batches_by_length(xs)
    curve = []
    for epoch in range(config.epochs):
        net.train()
        total = 0.0
        for group in groups:
            out, _ = net(torch.stack([xs[i] for i in group]))
            loss = F.mse_loss(out, torch.stack([ys[i] for i in group]))
            check_finite(loss, "translator loss")
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), config.clip_norm)
            opt.step()
            total += float(loss.detach()) * len(group)
        curve.append(total / len(xs))
    net.eval()
    net.curves = {"train_loss": curve}
    return net


@dataclass
class Translation:
    embedded: EmbeddedLevel  # snapped
    members: np.ndarray  # (rows, cols) member index per cell
    raw: np.ndarray  # (rows, cols, d) pre-snap outputs


@torch.no_grad()
def translate_level(translator, grid, index):
    """Translate column by column, snapping each cell to the nearest member of its cluster."""
    ids = grid.ids if isinstance(grid, ClusterGrid) else np.asarray(grid)
    rows, cols = ids.shape
    if rows != translator.rows:
        raise DimensionError(f"translator was trained on {translator.rows} rows, grid has {rows}")
    if cols == 0:
        raise DimensionError("zero-length level")
    missing = set(np.unique(ids).tolist()) - set(index.clusters())
    if missing:
        raise KeyError(f"clusters {sorted(missing)} are absent from the member index")
    if ids.max() >= translator.k:
        raise DimensionError(f"cluster id {int(ids.max())} exceeds the translator's K={translator.k}")
    cur = _onehot_columns(ids, translator.k)
    prev_emb = np.zeros(rows * translator.dim)
    state = None
    members = np.zeros((rows, cols), dtype=np.int64)
    snapped = np.zeros((rows, cols, translator.dim))
    raw = np.zeros((rows, cols, translator.dim))
    for c in range(cols):
        prev = cur[c - 1] if c > 0 else np.zeros(rows * translator.k)
        x = np.concatenate([cur[c], prev, prev_emb])
        out, state = translator(torch.as_tensor(x, dtype=torch.float32)[None, None], state)
        pred = out[0, 0].numpy().astype(np.float64).reshape(rows, translator.dim)
        raw[:, c] = pred
        m = index.nearest(pred, ids[:, c])
        members[:, c] = m
        snapped[:, c] = index.latents[m]
        prev_emb = snapped[:, c].reshape(-1)
    return Translation(EmbeddedLevel(snapped, game=getattr(grid, "game", ""), level_id=getattr(grid, "level_id", "")),
                       members, raw)


def save_translator(path, net):
    arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    save_container(path, arrays, {"kind": "translator", "rows": net.rows, "k": net.k, "dim": net.dim,
                                  "config": asdict(net.config)})


def load_translator(path):
    arrays, meta = load_container(path)
    net = load_module_state(TranslatorNet(meta["rows"], meta["k"], meta["dim"], TranslatorConfig(**meta["config"])), arrays)
    net.eval()
    return net


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


@dataclass
class RenderedLevel:
    image: LevelImage
    grid: LevelGrid  # source symbols of the chosen members
    affordances: np.ndarray | None  # (rows, cols, 13)


def resolve_members(embedded, index):
    """Member index of each embedding: exact match, else nearest member with a warning."""
    rows, cols, _ = embedded.latents.shape
    flat = embedded.latents.reshape(rows * cols, -1)
    out = np.empty(rows * cols, dtype=np.int64)
    misses = []
    for i, v in enumerate(flat):
        m = index.exact(v)
        if m is None:
            misses.append(i)
        else:
            out[i] = m
    if misses:
        log.warning("%d embeddings have no exact index match; using nearest members", len(misses))
        out[misses] = index.nearest(flat[misses])
    return out.reshape(rows, cols)


def render_level(embedded, index, members=None, model=None, level_id=None):
    if members is None:
        members = resolve_members(embedded, index)
    rows, cols = members.shape
    tiles = index.tiles[members]  # (rows, cols, 16, 16, 3)
    px = tiles.transpose(0, 2, 1, 3, 4).reshape(rows * TILE, cols * TILE, 3)
    lid = embedded.level_id if level_id is None else level_id
    grid = LevelGrid(index.symbols[members].astype("<U1"), level_id=lid, game=embedded.game)
    aff = None
    if model is not None:
        from .embedding import decode_affordances

        aff = decode_affordances(model, embedded.latents)
    return RenderedLevel(LevelImage(px, level_id=lid), grid, aff)
