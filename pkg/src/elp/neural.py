"""Sequence regressors: a joint contextual encoder and a BiLSTM baseline.

Both models share one forward contract (padded token ids + mask in, one
real value per input out) and one training loop: mean squared error,
an adaptive-moment optimizer with decoupled weight decay, and a linear
warmup-then-decay learning-rate schedule. A "tiny-random" profile
(small randomly initialized encoder, vocabulary built from the corpus)
is first-class so every property test and synthetic run works on CPU
without pretrained weights.

The attention blocks are written out explicitly rather than via
``nn.TransformerEncoder`` so training and inference use identical
kernels in every dtype; this keeps finite-difference gradient checks
and the per-seed determinism contract honest.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import featurize
from .corpus import Corpus
from .errors import (
    EmbeddingUnavailable,
    EmptyTraining,
    EncoderUnavailable,
    NonFiniteLoss,
    UnsupportedCacheFormat,
)
from .featurize import InputSetting, WordTokenizer, compose_input, tokenize_for_encoder

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    learning_rate: float = 5e-5
    batch_size: int = 32
    warmup_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainReport:
    train_loss: list[float]
    dev_loss: list[float] | None
    steps: int
    wall_clock_s: float
    checkpoint_path: str | None = None

    def lines(self) -> list[str]:
        out = []
        for i, loss in enumerate(self.train_loss, start=1):
            line = f"epoch={i}\ttrain_loss={loss:.10g}"
            if self.dev_loss is not None:
                line += f"\tdev_loss={self.dev_loss[i - 1]:.10g}"
            out.append(line)
        return out


@dataclass(frozen=True)
class EncoderSpec:
    """Contextual encoder profile: 'tiny-random' or 'pretrained'."""

    kind: str = "tiny-random"
    name: str = "albert-base-v2"  # pretrained only
    hidden: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    dropout: float = 0.1
    max_len: int = 512
    seed: int = 0


@dataclass(frozen=True)
class HeadSpec:
    """Regression head: linear -> tanh -> dropout -> linear -> scalar."""

    hidden: int | None = None  # defaults to the encoder hidden size
    dropout: float = 0.1


@dataclass(frozen=True)
class EmbeddingSpec:
    """Static word-embedding table: 'tiny-random' or 'file' (text word-vector format)."""

    kind: str = "tiny-random"
    dim: int = 50
    path: str | None = None
    seed: int = 0


def warmup_linear_lr(step: int, total_steps: int, warmup_fraction: float) -> float:
    """LR multiplier for optimizer step ``step``: 0 -> 1 over the warmup
    steps, then linear decay to 0 at ``total_steps``."""
    warmup = int(round(total_steps * warmup_fraction))
    if warmup > 0 and step < warmup:
        return step / warmup
    if total_steps <= warmup:
        return 1.0
    return max(0.0, (total_steps - step) / (total_steps - warmup))


class _EncoderBlock(nn.Module):
    """Pre-norm attention + feed-forward block (explicit, no fast paths)."""

    def __init__(self, hidden: int, heads: int, ff_dim: int, dropout: float):
        super().__init__()
        if hidden % heads != 0:
            raise ValueError(f"hidden {hidden} not divisible by heads {heads}")
        self.heads = heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.out = nn.Linear(hidden, hidden)
        self.norm1 = nn.LayerNorm(hidden)
        self.norm2 = nn.LayerNorm(hidden)
        self.ff = nn.Sequential(
            nn.Linear(hidden, ff_dim), nn.GELU(), nn.Linear(ff_dim, hidden)
        )
        self.drop = nn.Dropout(dropout)

    def _attend(self, x: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        b, length, hidden = x.shape
        dh = hidden // self.heads
        q, k, v = self.qkv(x).reshape(b, length, 3, self.heads, dh).permute(2, 0, 3, 1, 4)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(dh)
        mask = ~keep[:, None, None, :]
        scores = scores.masked_fill(mask, float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, length, hidden)
        return self.out(ctx)

    def forward(self, x: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self._attend(self.norm1(x), keep))
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


class TinyEncoder(nn.Module):
    """Small randomly initialized bidirectional contextual encoder."""

    def __init__(self, vocab_size: int, spec: EncoderSpec):
        super().__init__()
        self.spec = spec
        self.tok_emb = nn.Embedding(vocab_size, spec.hidden)
        self.pos_emb = nn.Embedding(spec.max_len, spec.hidden)
        self.drop = nn.Dropout(spec.dropout)
        self.blocks = nn.ModuleList(
            _EncoderBlock(spec.hidden, spec.heads, spec.ff_dim, spec.dropout)
            for _ in range(spec.layers)
        )
        self.final_norm = nn.LayerNorm(spec.hidden)
        self.hidden_size = spec.hidden

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.drop(self.tok_emb(ids) + self.pos_emb(positions)[None])
        keep = mask.bool()
        for block in self.blocks:
            x = block(x, keep)
        return self.final_norm(x)


class _SequenceRegressor(nn.Module):
    """Shared surface: tokenizer + setting + forward to one scalar per input."""

    def __init__(self, setting: InputSetting, tokenizer, max_results: int, budget: int):
        super().__init__()
        self.setting = setting
        self.tokenizer = tokenizer
        self.max_results = max_results
        self.budget = budget

    def encode_corpus(self, corpus: Corpus) -> list[list[int]]:
        return [
            tokenize_for_encoder(
                compose_input(rec, self.setting, self.max_results), self.tokenizer, self.budget
            )
            for rec in corpus
        ]


class EncoderRegressor(_SequenceRegressor):
    """Joint encoder over the composed sequence + two-layer regression head.

    The prediction is read from the last-layer hidden state at the
    classification position (the first token).
    """

    def __init__(self, encoder, setting, tokenizer, head: HeadSpec, max_results, budget):
        super().__init__(setting, tokenizer, max_results, budget)
        self.encoder = encoder
        head_hidden = head.hidden or encoder.hidden_size
        self.head = nn.Sequential(
            nn.Linear(encoder.hidden_size, head_hidden),
            nn.Tanh(),
            nn.Dropout(head.dropout),
            nn.Linear(head_hidden, 1),
        )

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(ids, mask)
        return self.head(hidden[:, 0]).squeeze(-1)


class RecurrentRegressor(_SequenceRegressor):
    """Multi-layer bidirectional LSTM over static word embeddings."""

    def __init__(self, embedding, setting, tokenizer, layers, hidden_size, max_results, budget):
        super().__init__(setting, tokenizer, max_results, budget)
        self.embedding = embedding
        self.lstm = nn.LSTM(
            embedding.embedding_dim,
            hidden_size,
            num_layers=layers,
            bidirectional=True,
            batch_first=True,
        )
        self.head = nn.Linear(2 * hidden_size, 1)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x, _ = self.lstm(self.embedding(ids))
        weights = mask / mask.sum(dim=1, keepdim=True)
        pooled = (x * weights[:, :, None]).sum(dim=1)
        return self.head(pooled).squeeze(-1)


class _HFEncoderAdapter(nn.Module):
    def __init__(self, model):
        super().__init__()
        self.model = model
        self.hidden_size = model.config.hidden_size

    def forward(self, ids, mask):
        return self.model(input_ids=ids, attention_mask=mask).last_hidden_state


class _HFTokenizerAdapter:
    def __init__(self, tokenizer):
        self._tok = tokenizer
        self.cls_id = tokenizer.cls_token_id
        self.sep_id = tokenizer.sep_token_id
        self.pad_id = tokenizer.pad_token_id

    def encode_segment(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)


def build_encoder_regressor(
    setting: InputSetting,
    encoder: EncoderSpec | None = None,
    corpus: Corpus | None = None,
    head: HeadSpec | None = None,
    max_results: int = 10,
) -> EncoderRegressor:
    """Build the joint encoder-regressor.

    ``tiny-random`` needs a corpus (the word vocabulary is built from it);
    ``pretrained`` resolves the named weights and raises
    EncoderUnavailable when they cannot be loaded.
    """
    spec = encoder or EncoderSpec()
    head = head or HeadSpec()
    if spec.kind == "tiny-random":
        if corpus is None:
            raise ValueError("tiny-random encoder needs a corpus for its vocabulary")
        tokenizer = WordTokenizer.fit_corpus(corpus)
        torch.manual_seed(spec.seed)
        module = TinyEncoder(len(tokenizer), spec)
        model = EncoderRegressor(module, setting, tokenizer, head, max_results, spec.max_len)
        model._build_info = {"encoder": "tiny-random", "spec": asdict(spec), "head": asdict(head)}
        return model
    if spec.kind == "pretrained":
        try:
            from transformers import AutoModel, AutoTokenizer

            hf_tok = AutoTokenizer.from_pretrained(spec.name)
            hf_model = AutoModel.from_pretrained(spec.name)
        except Exception as exc:  # missing weights, no network, bad name
            raise EncoderUnavailable(f"cannot load pretrained encoder {spec.name!r}: {exc}")
        torch.manual_seed(spec.seed)  # head initialization
        adapter = _HFEncoderAdapter(hf_model)
        budget = min(spec.max_len, getattr(hf_tok, "model_max_length", spec.max_len))
        model = EncoderRegressor(
            adapter, setting, _HFTokenizerAdapter(hf_tok), head, max_results, budget
        )
        model._build_info = {"encoder": spec.name, "spec": asdict(spec), "head": asdict(head)}
        return model
    raise ValueError(f"unknown encoder kind {spec.kind!r}")


def _load_word_vectors(path: str) -> tuple[list[str], np.ndarray]:
    terms: list[str] = []
    rows: list[list[float]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                terms.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
    except (OSError, ValueError) as exc:
        raise EmbeddingUnavailable(f"cannot read word vectors from {path}: {exc}")
    if not terms:
        raise EmbeddingUnavailable(f"no word vectors in {path}")
    return terms, np.asarray(rows, dtype=np.float32)


def build_bilstm(
    setting: InputSetting,
    embedding: EmbeddingSpec | None = None,
    corpus: Corpus | None = None,
    layers: int = 2,
    hidden_size: int = 64,
    max_results: int = 10,
    budget: int = 512,
) -> RecurrentRegressor:
    """Build the recurrent baseline over a static (frozen) embedding table."""
    spec = embedding or EmbeddingSpec()
    if spec.kind == "tiny-random":
        if corpus is None:
            raise ValueError("tiny-random embeddings need a corpus for their vocabulary")
        tokenizer = WordTokenizer.fit_corpus(corpus)
        torch.manual_seed(spec.seed)
        table = nn.Embedding(len(tokenizer), spec.dim)
    elif spec.kind == "file":
        if spec.path is None:
            raise EmbeddingUnavailable("embedding kind 'file' needs a path")
        terms, matrix = _load_word_vectors(spec.path)
        tokenizer = WordTokenizer(terms)
        torch.manual_seed(spec.seed)
        table = nn.Embedding(len(tokenizer), matrix.shape[1])
        with torch.no_grad():
            table.weight[len(WordTokenizer._SPECIALS) :] = torch.from_numpy(matrix)
    else:
        raise ValueError(f"unknown embedding kind {spec.kind!r}")
    table.weight.requires_grad_(False)  # static table
    torch.manual_seed(spec.seed)
    model = RecurrentRegressor(table, setting, tokenizer, layers, hidden_size, max_results, budget)
    model._build_info = {"embedding": spec.kind, "spec": asdict(spec)}
    return model


def _collate(sequences: list[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    length = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), length), pad_id, dtype=torch.long)
    mask = torch.zeros(len(sequences), length)
    for i, seq in enumerate(sequences):
        ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[i, : len(seq)] = 1.0
    return ids, mask


def train(
    model: _SequenceRegressor,
    train_corpus: Corpus,
    config: TrainConfig | None = None,
    dev_corpus: Corpus | None = None,
    label_scale: float = 1.0,
    checkpoint_path: str | Path | None = None,
) -> TrainReport:
    """MSE training with AdamW and the warmup/linear-decay schedule.

    Performs exactly ``epochs * ceil(N / batch_size)`` optimizer steps,
    with a deterministic batch order per seed.
    """
    config = config or TrainConfig()
    n = len(train_corpus)
    if n == 0:
        raise EmptyTraining("cannot train on an empty corpus")
    start = time.perf_counter()
    sequences = model.encode_corpus(train_corpus)
    targets = torch.tensor(train_corpus.engagements() * label_scale, dtype=torch.float32)

    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    torch.manual_seed(config.seed)
    order_rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.AdamW(
        (p for p in model.parameters() if p.requires_grad), lr=config.learning_rate
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: warmup_linear_lr(step, total_steps, config.warmup_fraction)
    )
    loss_fn = nn.MSELoss(reduction="sum")

    train_losses: list[float] = []
    dev_losses: list[float] | None = [] if dev_corpus is not None else None
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = order_rng.permutation(n)
        sq_err_sum = 0.0
        for b in range(steps_per_epoch):
            batch = order[b * config.batch_size : (b + 1) * config.batch_size]
            ids, mask = _collate([sequences[i] for i in batch], model.tokenizer.pad_id)
            optimizer.zero_grad()
            pred = model(ids, mask)
            loss = loss_fn(pred, targets[batch]) / len(batch)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"loss {value} at epoch {epoch + 1} step {step} "
                    f"(lr={scheduler.get_last_lr()[0]:.3g})"
                )
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            sq_err_sum += value * len(batch)
        train_losses.append(sq_err_sum / n)
        if dev_corpus is not None:
            dev_pred = predict(model, dev_corpus, batch_size=config.batch_size)
            dev_y = dev_corpus.engagements() * label_scale
            dev_losses.append(float(np.mean((dev_pred - dev_y) ** 2)))

    report = TrainReport(
        train_loss=train_losses,
        dev_loss=dev_losses,
        steps=step,
        wall_clock_s=time.perf_counter() - start,
    )
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, config=config)
        report.checkpoint_path = str(checkpoint_path)
    return report


def predict(model: _SequenceRegressor, corpus: Corpus, batch_size: int = 64) -> np.ndarray:
    """One finite scalar per record, in corpus order; dropout disabled."""
    model.eval()
    sequences = model.encode_corpus(corpus)
    out = np.empty(len(sequences), dtype=np.float64)
    with torch.no_grad():
        for lo in range(0, len(sequences), batch_size):
            chunk = sequences[lo : lo + batch_size]
            ids, mask = _collate(chunk, model.tokenizer.pad_id)
            out[lo : lo + len(chunk)] = model(ids, mask).double().numpy()
    return out


def n_parameters(model: nn.Module, trainable_only: bool = False) -> int:
    return sum(
        p.numel() for p in model.parameters() if p.requires_grad or not trainable_only
    )


def gradient_check(
    model: nn.Module,
    ids: torch.Tensor,
    mask: torch.Tensor,
    targets: torch.Tensor,
    n_checks: int = 20,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central finite differences.

    The model should be in double precision; dropout is disabled for the
    check. Coordinates where both gradients are below 1e-8 in magnitude
    count as exact agreement.
    """
    model.eval()
    loss_fn = nn.MSELoss()

    def _loss() -> torch.Tensor:
        return loss_fn(model(ids, mask), targets)

    model.zero_grad()
    loss = _loss()
    loss.backward()
    params = [p for p in model.parameters() if p.requires_grad]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(n_checks, total), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for coord in coords:
        p_idx = int(np.searchsorted(bounds, coord, side="right"))
        offset = int(coord - (bounds[p_idx - 1] if p_idx else 0))
        param = params[p_idx]
        analytic = float(param.grad.reshape(-1)[offset])
        with torch.no_grad():
            original = float(param.reshape(-1)[offset])
            param.reshape(-1)[offset] = original + h
        plus = float(_loss().detach())
        with torch.no_grad():
            param.reshape(-1)[offset] = original - h
        minus = float(_loss().detach())
        with torch.no_grad():
            param.reshape(-1)[offset] = original
        fd = (plus - minus) / (2 * h)
        scale = max(abs(fd), abs(analytic))
        if scale < 1e-8:
            continue
        worst = max(worst, abs(fd - analytic) / scale)
    return worst


def save_checkpoint(
    model: _SequenceRegressor, path: str | Path, config: TrainConfig | None = None
) -> None:
    """Checkpoint container: build info, setting, weights, train config, seed."""
    tokenizer = model.tokenizer
    terms = None
    if isinstance(tokenizer, WordTokenizer):
        specials = len(WordTokenizer._SPECIALS)
        ordered = sorted(tokenizer.vocab.items(), key=lambda kv: kv[1])
        terms = [t for t, i in ordered if i >= specials]
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "encoder" if isinstance(model, EncoderRegressor) else "bilstm",
        "setting": model.setting.value,
        "max_results": model.max_results,
        "budget": model.budget,
        "build_info": getattr(model, "_build_info", {}),
        "train_config": asdict(config) if config is not None else None,
        "tokenizer_terms": terms,
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> _SequenceRegressor:
    payload = torch.load(path, weights_only=False)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise UnsupportedCacheFormat(
            f"{path}: checkpoint format_version {payload.get('format_version')!r}"
        )
    setting = InputSetting.parse(payload["setting"])
    info = payload["build_info"]
    terms = payload["tokenizer_terms"]
    if payload["kind"] == "encoder":
        spec = EncoderSpec(**info["spec"])
        if spec.kind != "tiny-random":
            raise EncoderUnavailable(
                "only tiny-random encoder checkpoints rebuild without external weights"
            )
        tokenizer = WordTokenizer(terms)
        module = TinyEncoder(len(tokenizer), spec)
        head = HeadSpec(**info.get("head", {}))
        model = EncoderRegressor(
            module, setting, tokenizer, head, payload["max_results"], payload["budget"]
        )
    else:
        spec = EmbeddingSpec(**info["spec"])
        tokenizer = WordTokenizer(terms)
        table = nn.Embedding(len(tokenizer), spec.dim)
        table.weight.requires_grad_(False)
        state = payload["state_dict"]
        hidden_size = state["head.weight"].shape[1] // 2
        layers = max(
            int(k.split("_l")[-1].rstrip("_reverse")) for k in state if k.startswith("lstm.weight_ih_l")
        ) + 1
        model = RecurrentRegressor(
            table, setting, tokenizer, layers, hidden_size,
            payload["max_results"], payload["budget"],
        )
    model.load_state_dict(payload["state_dict"])
    model._build_info = info
    return model

