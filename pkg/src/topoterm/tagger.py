"""BIO tagging models: input projections, transformer encoder, training, decoding.

Five feature kinds share one encoder/head stack and differ only in the input
projection.  Models are torch modules; all randomness flows through explicit
seeds so that identical (seed, data order) reproduce identical parameters and
loss histories.
"""

from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .corpus import TermSet, normalize_term
from .features import (
    H1_BIRTH_BINS,
    H1_LIFETIME_BINS,
    H0_BINS,
    TokenFeatures,
)

__all__ = [
    "FEATURE_KINDS",
    "ModelConfig",
    "TrainingConfig",
    "TrainingHistory",
    "TaggerModel",
    "TrainingError",
    "Prediction",
    "build_model",
    "train",
    "tag",
    "decode_spans",
    "prediction_terms",
    "union_predictions",
    "uncertainty_l2",
    "features_to_array",
    "build_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "save_predictions",
    "load_predictions",
    "set_deterministic",
]

FEATURE_KINDS = ("contextual", "mlm", "pimage", "codensity", "wasserstein")

TAGS = ("B", "I", "O")
TAG_TO_ID = {t: i for i, t in enumerate(TAGS)}
PAD_LABEL = -100

CONV_KERNEL = (35, 25)  # (birth axis, persistence axis)
H1_FLAT = H1_BIRTH_BINS * H1_LIFETIME_BINS
CONV_OUT = (H1_BIRTH_BINS - CONV_KERNEL[0] + 1) * (H1_LIFETIME_BINS - CONV_KERNEL[1] + 1)

_ARCH = {
    "pimage": (496, 8),
    "contextual": (496, 8),
    "mlm": (128, 16),
    "codensity": (128, 16),
    "wasserstein": (128, 16),
}
_INPUT_DIMS = {
    "contextual": 768,
    "mlm": 1,
    "codensity": 6,
    "wasserstein": 2,
    "pimage": H0_BINS + H1_FLAT,
}


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    feature_kind: str
    hidden_dim: int = 0
    attention_heads: int = 0
    encoder_layers: int = 2
    dropout: float = 0.1
    max_seq_len: int = 64

    def __post_init__(self) -> None:
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        h, heads = _ARCH[self.feature_kind]
        if self.hidden_dim == 0:
            self.hidden_dim = h
        if self.attention_heads == 0:
            self.attention_heads = heads
        if (self.hidden_dim, self.attention_heads) != (h, heads):
            raise ValueError(
                f"{self.feature_kind} model requires h={h}, heads={heads}"
            )
        if self.hidden_dim % self.attention_heads:
            raise ValueError("hidden_dim must be divisible by attention_heads")

    @property
    def input_dim(self) -> int:
        return _INPUT_DIMS[self.feature_kind]


@dataclass
class TrainingConfig:
    learning_rate: float = 4e-5
    warmup_fraction: float = 0.10
    epochs: int = 15
    early_stop_delta: float = 0.005
    batch_size: int = 128
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if min(self.learning_rate, self.epochs, self.batch_size) < 0:
            raise ValueError("training config values must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")


@dataclass
class TrainingHistory:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = -1


def _sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    freq = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim)
    )
    enc = torch.zeros(length, dim, dtype=torch.float64)
    enc[:, 0::2] = torch.sin(pos * freq)
    enc[:, 1::2] = torch.cos(pos * freq)
    return enc.to(torch.get_default_dtype())


class _PimageProjection(nn.Module):
    """H0 vector passthrough, H1 image through a valid conv, concatenated."""

    def __init__(self) -> None:
        super().__init__()
        self.conv = nn.Conv2d(1, 1, kernel_size=CONV_KERNEL)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h0 = x[..., :H0_BINS]
        batch, seq = x.shape[0], x.shape[1]
        h1 = x[..., H0_BINS:].reshape(batch * seq, 1, H1_BIRTH_BINS, H1_LIFETIME_BINS)
        h1 = self.act(self.conv(h1)).reshape(batch, seq, CONV_OUT)
        return torch.cat([h0, h1], dim=-1)


class TaggerModel(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_dim
        kind = cfg.feature_kind
        if kind == "pimage":
            assert H0_BINS + CONV_OUT == h, "pimage input width must equal hidden dim"
            self.input_projection: nn.Module = _PimageProjection()
        elif kind == "contextual":
            self.input_projection = nn.Linear(cfg.input_dim, h)
        else:
            self.input_projection = nn.Sequential(
                nn.Linear(cfg.input_dim, h), nn.GELU(), nn.Linear(h, h)
            )
        self.register_buffer(
            "positions", _sinusoidal_positions(cfg.max_seq_len, h), persistent=False
        )
        layer = nn.TransformerEncoderLayer(
            d_model=h,
            nhead=cfg.attention_heads,
            dim_feedforward=4 * h,
            dropout=cfg.dropout,
            activation="gelu",
            norm_first=True,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=cfg.encoder_layers, enable_nested_tensor=False
        )
        self.head = nn.Sequential(
            nn.Dropout(cfg.dropout),
            nn.Linear(h, h),
            nn.Dropout(cfg.dropout),
            nn.Tanh(),
            nn.Linear(h, len(TAGS)),
        )
        self.rng_seed: int | None = None

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        """x: (batch, seq, input_dim); pad_mask: (batch, seq) True at padding."""
        z = self.input_projection(x)
        z = z + self.positions[: z.shape[1]].to(z.dtype)
        z = self.encoder(z, src_key_padding_mask=pad_mask)
        return self.head(z)


def build_model(cfg: ModelConfig, seed: int) -> TaggerModel:
    """Deterministically initialized model (torch default fan-in uniform init)."""
    state = torch.random.get_rng_state()  # keep the global RNG untouched
    try:
        torch.manual_seed(seed)
        model = TaggerModel(cfg)
    finally:
        torch.random.set_rng_state(state)
    model.rng_seed = seed
    return model


def features_to_array(kind: str, feats: TokenFeatures) -> np.ndarray:
    if kind == "mlm":
        return np.array([feats.mlm_score])
    if kind == "codensity":
        return np.asarray(feats.codensity, dtype=np.float64)
    if kind == "wasserstein":
        return np.asarray(feats.wasserstein, dtype=np.float64)
    if kind == "pimage":
        return np.concatenate([feats.pimage.h0_vector, feats.pimage.h1_grid.reshape(-1)])
    if kind == "contextual":
        if feats.contextual_embedding is None:
            raise ValueError(f"no contextual embedding for token {feats.word!r}")
        return np.asarray(feats.contextual_embedding, dtype=np.float64)
    raise ValueError(f"unknown feature kind {kind!r}")


def build_dataset(
    pairs: list[tuple[list[TokenFeatures], list[str]]],
    kind: str,
    max_seq_len: int,
    dtype: torch.dtype = torch.float32,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack (features, tags) pairs into padded tensors (X, labels, pad_mask)."""
    if not pairs:
        raise TrainingError("empty data set")
    dim = _INPUT_DIMS[kind]
    seq_len = min(max(len(f) for f, _ in pairs), max_seq_len)
    X = torch.zeros(len(pairs), seq_len, dim, dtype=dtype)
    y = torch.full((len(pairs), seq_len), PAD_LABEL, dtype=torch.long)
    pad = torch.ones(len(pairs), seq_len, dtype=torch.bool)
    for row, (feats, tags) in enumerate(pairs):
        if len(feats) != len(tags):
            raise TrainingError(f"feature/tag length mismatch in row {row}")
        for col in range(min(len(feats), seq_len)):
            X[row, col] = torch.from_numpy(
                np.ascontiguousarray(features_to_array(kind, feats[col]))
            ).to(dtype)
            y[row, col] = TAG_TO_ID[tags[col]]
            pad[row, col] = False
    return X, y, pad


def _epoch_loss(model, X, y, pad, batch_size) -> float:
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD_LABEL, reduction="sum")
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for start in range(0, X.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            logits = model(X[sl], pad_mask=pad[sl])
            total += float(loss_fn(logits.reshape(-1, len(TAGS)), y[sl].reshape(-1)))
            count += int((y[sl] != PAD_LABEL).sum())
    return total / max(count, 1)


def train(
    model: TaggerModel,
    train_data: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    val_data: tuple[torch.Tensor, torch.Tensor, torch.Tensor] | None,
    tcfg: TrainingConfig,
) -> tuple[TaggerModel, TrainingHistory]:
    """AdamW with linear warmup/decay, token cross-entropy, early stopping.

    Stops once the last three validation losses lie within early_stop_delta of
    each other; restores the best-validation-loss parameters before returning.
    Dropout reads the global torch RNG, so that RNG is pinned to the model seed
    for the duration of the call (and restored afterwards): identical inputs
    always train identically.
    """
    state = torch.random.get_rng_state()
    try:
        torch.manual_seed((model.rng_seed or 0) + 2)
        return _train_impl(model, train_data, val_data, tcfg)
    finally:
        torch.random.set_rng_state(state)


def _train_impl(
    model: TaggerModel,
    train_data: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    val_data: tuple[torch.Tensor, torch.Tensor, torch.Tensor] | None,
    tcfg: TrainingConfig,
) -> tuple[TaggerModel, TrainingHistory]:
    X, y, pad = train_data
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    history = TrainingHistory()
    if tcfg.epochs == 0:
        return model, history

    steps_per_epoch = math.ceil(X.shape[0] / tcfg.batch_size)
    total_steps = steps_per_epoch * tcfg.epochs
    warmup = max(1, math.ceil(tcfg.warmup_fraction * total_steps))

    optimizer = torch.optim.AdamW(
        model.parameters(), lr=tcfg.learning_rate, weight_decay=tcfg.weight_decay
    )

    def lr_lambda(step: int) -> float:
        if step < warmup:
            return step / warmup
        if total_steps == warmup:
            return 1.0
        return max(0.0, (total_steps - step) / (total_steps - warmup))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda)
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD_LABEL)
    shuffle_rng = torch.Generator()
    shuffle_rng.manual_seed((model.rng_seed or 0) + 1)

    best_state = None
    best_val = math.inf
    step = 0
    for epoch in range(tcfg.epochs):
        model.train()
        order = torch.randperm(X.shape[0], generator=shuffle_rng)
        epoch_total, epoch_tokens = 0.0, 0
        for start in range(0, X.shape[0], tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            optimizer.zero_grad()
            logits = model(X[idx], pad_mask=pad[idx])
            loss = loss_fn(logits.reshape(-1, len(TAGS)), y[idx].reshape(-1))
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}")
            loss.backward()
            optimizer.step()
            scheduler.step()
            n_tokens = int((y[idx] != PAD_LABEL).sum())
            epoch_total += float(loss.detach()) * n_tokens
            epoch_tokens += n_tokens
            step += 1
        history.train_losses.append(epoch_total / max(epoch_tokens, 1))
        history.stopped_epoch = epoch + 1

        if val_data is not None:
            val_loss = _epoch_loss(model, *val_data, tcfg.batch_size)
            history.val_losses.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_state = copy.deepcopy(model.state_dict())
                history.best_epoch = epoch + 1
            last = history.val_losses[-3:]
            if len(last) == 3 and max(last) - min(last) < tcfg.early_stop_delta:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history


@dataclass
class Prediction:
    utt_id: str
    model_id: str
    probs: np.ndarray  # (n_tokens, 3)
    tags: list[str]
    spans: list[tuple[int, int]]


def decode_spans(tags: list[str]) -> list[tuple[int, int]]:
    """B opens a span, consecutive I extend it; a stray I opens a new span."""
    spans: list[tuple[int, int]] = []
    start = None
    for i, t in enumerate(tags):
        if t == "B":
            if start is not None:
                spans.append((start, i - 1))
            start = i
        elif t == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i - 1))
                start = None
    if start is not None:
        spans.append((start, len(tags) - 1))
    return spans


def tag(
    model: TaggerModel,
    features: list[TokenFeatures],
    utt_id: str = "",
    model_id: str = "",
) -> Prediction:
    """Per-token tag distribution; long inputs run in non-overlapping windows."""
    kind = model.cfg.feature_kind
    window = model.cfg.max_seq_len
    dtype = next(model.parameters()).dtype
    model.eval()
    chunks: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(features), window):
            part = features[start : start + window]
            x = torch.stack(
                [
                    torch.from_numpy(
                        np.ascontiguousarray(features_to_array(kind, f))
                    ).to(dtype)
                    for f in part
                ]
            )[None, :, :]
            logits = model(x)
            chunks.append(torch.softmax(logits[0], dim=-1).double().numpy())
    probs = np.concatenate(chunks) if chunks else np.empty((0, len(TAGS)))
    tags_out = [TAGS[int(i)] for i in probs.argmax(axis=1)]
    return Prediction(
        utt_id=utt_id,
        model_id=model_id,
        probs=probs,
        tags=tags_out,
        spans=decode_spans(tags_out),
    )


def prediction_terms(pred: Prediction, tokens: list[str]) -> TermSet:
    """Normalized unique terms from the decoded spans."""
    out = TermSet()
    for start, end in pred.spans:
        out.add(normalize_term(tokens[start : end + 1]))
    return out


def union_predictions(term_sets: list[TermSet]) -> TermSet:
    out = TermSet()
    for ts in term_sets:
        out = out.union(ts)
    return out


def uncertainty_l2(probs: np.ndarray, gold_tags: list[str]) -> float:
    """Mean Euclidean distance between predicted triples and one-hot gold."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != len(gold_tags):
        raise ValueError("prediction/gold length mismatch")
    onehot = np.zeros_like(probs)
    for i, t in enumerate(gold_tags):
        onehot[i, TAG_TO_ID[t]] = 1.0
    return float(np.mean(np.linalg.norm(probs - onehot, axis=1)))


# Checkpoint container: magic+version, uint32 JSON header length, header JSON
# (config, seed, history, parameter manifest), float32 little-endian blobs.
_CKPT_MAGIC = b"TTCK\x01"


def save_checkpoint(path, model: TaggerModel, history: TrainingHistory | None = None) -> None:
    state = model.state_dict()
    names = sorted(state)
    header = {
        "config": dict(model.cfg.__dict__),
        "seed": model.rng_seed,
        "history": dict(history.__dict__) if history is not None else None,
        "params": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(state[n].detach().to(torch.float32).numpy().astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[TaggerModel, TrainingHistory | None]:
    with open(path, "rb") as fh:
        if fh.read(5) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a tagger checkpoint")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        model = build_model(cfg, int(header["seed"] or 0))
        state = model.state_dict()
        for item in header["params"]:
            shape = tuple(item["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 4)
            arr = np.frombuffer(buf, dtype="<f4").reshape(shape)
            state[item["name"]] = torch.from_numpy(arr.copy())
        model.load_state_dict(state)
    history = TrainingHistory(**header["history"]) if header["history"] else None
    return model, history


def save_predictions(path, preds: list[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(
                json.dumps(
                    {
                        "utt_id": p.utt_id,
                        "model_id": p.model_id,
                        "tags": p.tags,
                        "probs": [[float(v) for v in row] for row in p.probs],
                        "spans": [[s, e] for s, e in p.spans],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_predictions(path) -> list[Prediction]:
    out: list[Prediction] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                Prediction(
                    utt_id=obj["utt_id"],
                    model_id=obj["model_id"],
                    probs=np.asarray(obj["probs"], dtype=np.float64),
                    tags=list(obj["tags"]),
                    spans=[(int(s), int(e)) for s, e in obj["spans"]],
                )
            )
    return out


def set_deterministic(threads: int = 1) -> None:
    """Single-threaded deterministic torch execution for reproducible runs."""
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)
