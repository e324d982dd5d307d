"""Ranking controller: token embedding, GRU encoder, GRU ranker, dense head.

The controller embeds each candidate's tuple sequence, encodes it to a feature
vector with a recurrent cell, then a second recurrent cell consumes the
features of the whole candidate set in order and scores each one — so a
candidate's score depends on the candidates seen before it. Two conventional
absolute-score baselines (one- and two-layer recurrent encoders with a dense
head, no cross-candidate state) are provided for comparison harnesses.

Everything is float64 numpy with hand-written backpropagation; training is
plain SGD with momentum and is deterministic given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import NetworkArch, OpKind, canonical_hash

DEFAULT_D_EMB = 100
DEFAULT_D_H = 100
DEFAULT_MAX_CONTEXT = 16
INIT_SCALE = 0.08

CHECKPOINT_VERSION = 1

BLOCK_TOKEN = "<blk>"
CELL_TOKEN = "<cell>"

COMBINE_TOKENS = {"001": "o:001", "010": "o:010", "101": "o:101", "110": "o:110"}


class VocabularyOverflow(Exception):
    """An input slot index exceeds the configured maximum context."""


class NonFiniteLoss(Exception):
    """Training diverged (typically the learning rate is too high)."""


def build_vocab(max_context: int = DEFAULT_MAX_CONTEXT) -> tuple[str, ...]:
    tokens = [BLOCK_TOKEN, CELL_TOKEN]
    tokens += [f"in:{s}" for s in range(1, max_context + 1)]
    tokens += [f"op:{op.value}" for op in OpKind]
    tokens += [COMBINE_TOKENS[code] for code in ("001", "010", "101", "110")]
    return tuple(tokens)


def tokenize(arch: NetworkArch, max_context: int = DEFAULT_MAX_CONTEXT) -> list[int]:
    """Flatten an architecture to token ids: blocks, then cells, then fields."""
    vocab = build_vocab(max_context)
    index = {tok: i for i, tok in enumerate(vocab)}
    ids = []
    for block in arch.blocks:
        ids.append(index[BLOCK_TOKEN])
        for cell in block.cells:
            ids.append(index[CELL_TOKEN])
            for slot in (cell.input1, cell.input2):
                if slot > max_context:
                    raise VocabularyOverflow(f"slot {slot} exceeds max context {max_context}")
                ids.append(index[f"in:{slot}"])
            ids.append(index[f"op:{cell.op1.value}"])
            ids.append(index[f"op:{cell.op2.value}"])
            bits = "".join(str(b) for b in cell.combine.encode())
            ids.append(index[COMBINE_TOKENS[bits]])
    return ids


# ---------------------------------------------------------------------------
# GRU cell

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class GRUParams:
    wz: np.ndarray
    wr: np.ndarray
    wh: np.ndarray
    uz: np.ndarray
    ur: np.ndarray
    uh: np.ndarray
    bz: np.ndarray
    br: np.ndarray
    bh: np.ndarray

    @staticmethod
    def init(rng: np.random.Generator, d_in: int, d_h: int) -> "GRUParams":
        u = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        return GRUParams(
            wz=u(d_in, d_h), wr=u(d_in, d_h), wh=u(d_in, d_h),
            uz=u(d_h, d_h), ur=u(d_h, d_h), uh=u(d_h, d_h),
            bz=u(d_h), br=u(d_h), bh=u(d_h),
        )

    def tensors(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")}

    def copy(self) -> "GRUParams":
        return GRUParams(**{k: v.copy() for k, v in self.__dict__.items()})


def gru_forward(p: GRUParams, x_seq: np.ndarray, mask: np.ndarray | None = None):
    """Run the cell over (B, L, d_in) inputs; returns final and per-step hiddens.

    mask (B, L) freezes the hidden state at padded positions, so the final
    hidden equals the state at each sequence's own length.
    """
    batch, length, _ = x_seq.shape
    d_h = p.uz.shape[0]
    h = np.zeros((batch, d_h))
    h_steps = np.empty((batch, length, d_h))
    caches = []
    for t in range(length):
        x = x_seq[:, t, :]
        z = _sigmoid(x @ p.wz + h @ p.uz + p.bz)
        r = _sigmoid(x @ p.wr + h @ p.ur + p.br)
        hb = np.tanh(x @ p.wh + (r * h) @ p.uh + p.bh)
        h_new = (1.0 - z) * h + z * hb
        if mask is not None:
            m = mask[:, t][:, None]
            h_next = m * h_new + (1.0 - m) * h
        else:
            m = None
            h_next = h_new
        caches.append((x, h, z, r, hb, m))
        h_steps[:, t, :] = h_next
        h = h_next
    return h, h_steps, caches


def gru_backward(
    p: GRUParams,
    caches,
    d_final: np.ndarray | None = None,
    d_steps: np.ndarray | None = None,
):
    """Backpropagate through time; returns (grads dict, d_inputs (B, L, d_in))."""
    batch = caches[0][0].shape[0]
    length = len(caches)
    grads = {k: np.zeros_like(getattr(p, k)) for k in
             ("wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")}
    dx_seq = np.zeros((batch, length, p.wz.shape[0]))
    dh = np.zeros((batch, p.uz.shape[0]))
    if d_final is not None:
        dh = dh + d_final
    for t in range(length - 1, -1, -1):
        if d_steps is not None:
            dh = dh + d_steps[:, t, :]
        x, h_prev, z, r, hb, m = caches[t]
        if m is not None:
            d_new = m * dh
            d_carry = (1.0 - m) * dh
        else:
            d_new = dh
            d_carry = 0.0
        dz = d_new * (hb - h_prev)
        dhb = d_new * z
        dh_prev = d_new * (1.0 - z)
        dah = dhb * (1.0 - hb * hb)
        grads["wh"] += x.T @ dah
        grads["uh"] += (r * h_prev).T @ dah
        grads["bh"] += dah.sum(axis=0)
        drh = dah @ p.uh.T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        dar = dr * r * (1.0 - r)
        grads["wr"] += x.T @ dar
        grads["ur"] += h_prev.T @ dar
        grads["br"] += dar.sum(axis=0)
        dh_prev = dh_prev + dar @ p.ur.T
        daz = dz * z * (1.0 - z)
        grads["wz"] += x.T @ daz
        grads["uz"] += h_prev.T @ daz
        grads["bz"] += daz.sum(axis=0)
        dh_prev = dh_prev + daz @ p.uz.T
        dx_seq[:, t, :] = dah @ p.wh.T + dar @ p.wr.T + daz @ p.wz.T
        dh = dh_prev + d_carry
    return grads, dx_seq


# ---------------------------------------------------------------------------
# Controller parameters

@dataclass
class ControllerParams:
    vocab: tuple[str, ...]
    max_context: int
    embedding: np.ndarray  # (V, d_emb)
    encoder: GRUParams  # d_emb -> d_h
    ranker: GRUParams  # d_h -> d_h
    head_w: np.ndarray  # (d_h,)
    head_b: np.ndarray  # (1,)

    @property
    def d_emb(self) -> int:
        return self.embedding.shape[1]

    @property
    def d_h(self) -> int:
        return self.encoder.uz.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"embedding": self.embedding}
        out.update(self.encoder.tensors("encoder"))
        out.update(self.ranker.tensors("ranker"))
        out["head_w"] = self.head_w
        out["head_b"] = self.head_b
        return out

    def copy(self) -> "ControllerParams":
        return ControllerParams(
            vocab=self.vocab,
            max_context=self.max_context,
            embedding=self.embedding.copy(),
            encoder=self.encoder.copy(),
            ranker=self.ranker.copy(),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


def init_controller(
    seed: int,
    d_emb: int = DEFAULT_D_EMB,
    d_h: int = DEFAULT_D_H,
    max_context: int = DEFAULT_MAX_CONTEXT,
) -> ControllerParams:
    rng = np.random.default_rng(seed)
    vocab = build_vocab(max_context)
    ranker = GRUParams.init(rng, d_h, d_h)
    # positive update-gate bias: a fresh ranker state leans on the current
    # candidate's feature, with set context entering as a residual signal
    # that training can amplify where it helps
    ranker.bz += 4.0
    return ControllerParams(
        vocab=vocab,
        max_context=max_context,
        embedding=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), d_emb)),
        encoder=GRUParams.init(rng, d_emb, d_h),
        ranker=ranker,
        head_w=rng.uniform(-INIT_SCALE, INIT_SCALE, size=d_h),
        head_b=rng.uniform(-INIT_SCALE, INIT_SCALE, size=1),
    )


def _pad_batch(token_lists: list[list[int]]):
    length = max(len(t) for t in token_lists)
    ids = np.zeros((len(token_lists), length), dtype=np.int64)
    mask = np.zeros((len(token_lists), length))
    for i, toks in enumerate(token_lists):
        ids[i, : len(toks)] = toks
        mask[i, : len(toks)] = 1.0
    return ids, mask


def _encode_forward(params: ControllerParams, archs: list[NetworkArch]):
    token_lists = [tokenize(a, params.max_context) for a in archs]
    ids, mask = _pad_batch(token_lists)
    x_seq = params.embedding[ids]
    h, _, caches = gru_forward(params.encoder, x_seq, mask)
    return h, ids, mask, caches


def encode(params: ControllerParams, arch: NetworkArch) -> np.ndarray:
    """Feature vector of one architecture: the encoder's final hidden state."""
    h, _, _, _ = _encode_forward(params, [arch])
    return h[0]


def encode_batch(params: ControllerParams, archs: list[NetworkArch], chunk: int = 256):
    feats = np.empty((len(archs), params.d_h))
    for start in range(0, len(archs), chunk):
        h, _, _, _ = _encode_forward(params, archs[start : start + chunk])
        feats[start : start + len(h)] = h
    return feats


def rank(params: ControllerParams, candidates: list[NetworkArch]) -> np.ndarray:
    """Predicted scores for a candidate set consumed in the given order.

    The ranker is order-sensitive by design; callers wanting reproducible
    results must present candidates in canonical-hash order.
    """
    if not candidates:
        raise ValueError("candidate set must be non-empty")
    feats = encode_batch(params, candidates)
    _, h_steps, _ = gru_forward(params.ranker, feats[None, :, :])
    return h_steps[0] @ params.head_w + params.head_b[0]


# ---------------------------------------------------------------------------
# Training

@dataclass(frozen=True)
class TrainingExample:
    arch: NetworkArch
    target: float


def scc_loss_and_grads(params: ControllerParams, archs: list[NetworkArch], targets: np.ndarray):
    """Mean squared error over one candidate set, with grads for every tensor."""
    n = len(archs)
    feats, ids, mask, enc_caches = _encode_forward(params, archs)
    _, h_steps, rank_caches = gru_forward(params.ranker, feats[None, :, :])
    hidden = h_steps[0]  # (n, d_h)
    preds = hidden @ params.head_w + params.head_b[0]
    err = preds - targets
    loss = float(np.mean(err**2))

    d_pred = 2.0 * err / n
    grads: dict[str, np.ndarray] = {
        "head_w": hidden.T @ d_pred,
        "head_b": np.array([d_pred.sum()]),
    }
    d_hidden = d_pred[:, None] * params.head_w[None, :]
    rank_grads, d_feats = gru_backward(params.ranker, rank_caches, d_steps=d_hidden[None, :, :])
    for k, v in rank_grads.items():
        grads[f"ranker.{k}"] = v
    enc_grads, d_x = gru_backward(params.encoder, enc_caches, d_final=d_feats[0])
    for k, v in enc_grads.items():
        grads[f"encoder.{k}"] = v
    d_emb = np.zeros_like(params.embedding)
    np.add.at(d_emb, ids.ravel(), d_x.reshape(-1, params.d_emb))
    grads["embedding"] = d_emb
    return loss, grads, preds


def scc_eval_loss(
    params: ControllerParams,
    archs: list[NetworkArch],
    targets: np.ndarray,
    set_size: int,
) -> float:
    """Forward-only set-MSE over fixed, canonically ordered chunks."""
    hashes = [canonical_hash(a) for a in archs]
    total = 0.0
    for start in range(0, len(archs), set_size):
        idx = sorted(range(start, min(start + set_size, len(archs))), key=lambda i: hashes[i])
        preds = rank(params, [archs[i] for i in idx])
        total += float(np.sum((preds - targets[idx]) ** 2))
    return total / len(archs)


class _SGD:
    def __init__(self, tensors: dict[str, np.ndarray], lr: float, momentum: float):
        self.tensors = tensors
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, grads: dict[str, np.ndarray]):
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= self.lr * g
            self.tensors[k] += v


def train(
    params: ControllerParams,
    batch: list[TrainingExample],
    lr: float = 0.01,
    epochs: int = 50,
    seed: int = 0,
    set_size: int = 32,
    momentum: float = 0.9,
    standardize_targets: bool = False,
    trace_every: int = 1,
) -> tuple[ControllerParams, list[float]]:
    """SGD on the set-MSE loss; shuffles the history into sets each epoch.

    The ranker state resets at each set boundary. Deterministic given the
    seed. Raises NonFiniteLoss if the loss diverges. The loss trace is
    measured on fixed canonical chunks every `trace_every` epochs (0 falls
    back to the cheap running loss of the shuffled updates).
    """
    if not batch:
        raise ValueError("training batch must be non-empty")
    rng = np.random.default_rng(seed)
    targets = np.array([ex.target for ex in batch], dtype=float)
    if standardize_targets:
        std = targets.std()
        targets = (targets - targets.mean()) / (std if std > 0 else 1.0)
    archs = [ex.arch for ex in batch]
    # set membership is re-shuffled each epoch, but every set is consumed in
    # canonical-hash order, matching how candidate sets are ranked at inference
    hashes = [canonical_hash(a) for a in archs]
    opt = _SGD(params.tensors(), lr, momentum)
    trace = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            order = rng.permutation(len(batch))
            running = 0.0
            for start in range(0, len(batch), set_size):
                idx = sorted(order[start : start + set_size], key=lambda i: hashes[i])
                loss, grads, _ = scc_loss_and_grads(
                    params, [archs[i] for i in idx], targets[idx]
                )
                running += loss * len(idx)
                if lr != 0.0:
                    opt.step(grads)
            if trace_every and (epoch + 1) % trace_every == 0:
                epoch_loss = scc_eval_loss(params, archs, targets, set_size)
            else:
                epoch_loss = running / len(batch)
            if not np.isfinite(epoch_loss):
                raise NonFiniteLoss(f"loss diverged to {epoch_loss}")
            trace.append(epoch_loss)
    return params, trace


# ---------------------------------------------------------------------------
# Absolute-score baselines (one- and two-layer recurrent encoders)

SINGLE_RNN = "single_rnn"
DOUBLE_RNN = "double_rnn"


@dataclass
class BaselineParams:
    variant: str
    vocab: tuple[str, ...]
    max_context: int
    embedding: np.ndarray
    layer1: GRUParams
    layer2: GRUParams | None
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def d_emb(self) -> int:
        return self.embedding.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"embedding": self.embedding}
        out.update(self.layer1.tensors("layer1"))
        if self.layer2 is not None:
            out.update(self.layer2.tensors("layer2"))
        out["head_w"] = self.head_w
        out["head_b"] = self.head_b
        return out

    def copy(self) -> "BaselineParams":
        return BaselineParams(
            variant=self.variant,
            vocab=self.vocab,
            max_context=self.max_context,
            embedding=self.embedding.copy(),
            layer1=self.layer1.copy(),
            layer2=self.layer2.copy() if self.layer2 is not None else None,
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


def init_baseline(
    variant: str,
    seed: int,
    d_emb: int = DEFAULT_D_EMB,
    d_h: int = DEFAULT_D_H,
    max_context: int = DEFAULT_MAX_CONTEXT,
) -> BaselineParams:
    if variant not in (SINGLE_RNN, DOUBLE_RNN):
        raise ValueError(f"unknown baseline variant: {variant}")
    rng = np.random.default_rng(seed)
    vocab = build_vocab(max_context)
    return BaselineParams(
        variant=variant,
        vocab=vocab,
        max_context=max_context,
        embedding=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), d_emb)),
        layer1=GRUParams.init(rng, d_emb, d_h),
        layer2=GRUParams.init(rng, d_h, d_h) if variant == DOUBLE_RNN else None,
        head_w=rng.uniform(-INIT_SCALE, INIT_SCALE, size=d_h),
        head_b=rng.uniform(-INIT_SCALE, INIT_SCALE, size=1),
    )


def _baseline_forward(params: BaselineParams, archs: list[NetworkArch]):
    token_lists = [tokenize(a, params.max_context) for a in archs]
    ids, mask = _pad_batch(token_lists)
    x_seq = params.embedding[ids]
    h1, h1_steps, c1 = gru_forward(params.layer1, x_seq, mask)
    if params.layer2 is None:
        return h1, (ids, mask, c1, None, None)
    h2, _, c2 = gru_forward(params.layer2, h1_steps, mask)
    return h2, (ids, mask, c1, c2, h1_steps)


def baseline_scores(params: BaselineParams, archs: list[NetworkArch]) -> np.ndarray:
    """Absolute per-candidate scores; independent of set order by construction."""
    h, _ = _baseline_forward(params, archs)
    return h @ params.head_w + params.head_b[0]


def baseline_score(params: BaselineParams, arch: NetworkArch) -> float:
    return float(baseline_scores(params, [arch])[0])


def baseline_loss_and_grads(params: BaselineParams, archs: list[NetworkArch], targets: np.ndarray):
    n = len(archs)
    h, (ids, mask, c1, c2, _) = _baseline_forward(params, archs)
    preds = h @ params.head_w + params.head_b[0]
    err = preds - targets
    loss = float(np.mean(err**2))
    d_pred = 2.0 * err / n
    grads: dict[str, np.ndarray] = {
        "head_w": h.T @ d_pred,
        "head_b": np.array([d_pred.sum()]),
    }
    dh = d_pred[:, None] * params.head_w[None, :]
    if params.layer2 is not None:
        g2, dh1_steps = gru_backward(params.layer2, c2, d_final=dh)
        for k, v in g2.items():
            grads[f"layer2.{k}"] = v
        g1, d_x = gru_backward(params.layer1, c1, d_steps=dh1_steps)
    else:
        g1, d_x = gru_backward(params.layer1, c1, d_final=dh)
    for k, v in g1.items():
        grads[f"layer1.{k}"] = v
    d_emb = np.zeros_like(params.embedding)
    np.add.at(d_emb, ids.ravel(), d_x.reshape(-1, params.d_emb))
    grads["embedding"] = d_emb
    return loss, grads, preds


def train_baseline(
    params: BaselineParams,
    batch: list[TrainingExample],
    lr: float = 0.01,
    epochs: int = 50,
    seed: int = 0,
    set_size: int = 32,
    momentum: float = 0.9,
    standardize_targets: bool = False,
) -> tuple[BaselineParams, list[float]]:
    if not batch:
        raise ValueError("training batch must be non-empty")
    rng = np.random.default_rng(seed)
    targets = np.array([ex.target for ex in batch], dtype=float)
    if standardize_targets:
        std = targets.std()
        targets = (targets - targets.mean()) / (std if std > 0 else 1.0)
    archs = [ex.arch for ex in batch]
    opt = _SGD(params.tensors(), lr, momentum)
    trace = []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            order = rng.permutation(len(batch))
            total = 0.0
            for start in range(0, len(batch), set_size):
                idx = order[start : start + set_size]
                loss, grads, _ = baseline_loss_and_grads(
                    params, [archs[i] for i in idx], targets[idx]
                )
                total += loss * len(idx)
                if lr != 0.0:
                    opt.step(grads)
            epoch_loss = total / len(batch)
            if not np.isfinite(epoch_loss):
                raise NonFiniteLoss(f"loss diverged to {epoch_loss}")
            trace.append(epoch_loss)
    return params, trace


# ---------------------------------------------------------------------------
# Checkpoints

def _tensors_to_json(tensors: dict[str, np.ndarray]) -> dict:
    return {
        name: {"shape": list(t.shape), "data": t.ravel().tolist()}
        for name, t in tensors.items()
    }


def save_controller(params: ControllerParams, path: str | Path):
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": "scc",
        "d_emb": params.d_emb,
        "d_h": params.d_h,
        "max_context": params.max_context,
        "vocab": list(params.vocab),
        "tensors": _tensors_to_json(params.tensors()),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_controller(path: str | Path) -> ControllerParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION or payload.get("kind") != "scc":
        raise ValueError(f"unsupported checkpoint: {path}")
    params = init_controller(
        seed=0,
        d_emb=payload["d_emb"],
        d_h=payload["d_h"],
        max_context=payload["max_context"],
    )
    if list(params.vocab) != payload["vocab"]:
        raise ValueError("checkpoint vocabulary does not match this build")
    for name, tensor in params.tensors().items():
        stored = payload["tensors"][name]
        arr = np.array(stored["data"], dtype=float).reshape(stored["shape"])
        if arr.shape != tensor.shape:
            raise ValueError(f"tensor {name} has shape {arr.shape}, expected {tensor.shape}")
        tensor[...] = arr
    return params
