"""Controller-quality metrics (AP@k, NDCG@k) and the comparison harness."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import controller as ctl
from .arch import NetworkArch, canonical_hash
from .evaluate import SyntheticConfig, synthetic_accuracy
from .generate import generate_candidates
from .memory import estimate_memory
from .metric import GOAL_CONSISTENT, MetricInputs, efficiency


class KTooLarge(Exception):
    """k exceeds the size of the ranked set."""


@dataclass(frozen=True)
class RankingPair:
    """A predicted ordering paired with the true ordering (best first)."""

    predicted_order: tuple
    true_order: tuple

    def __post_init__(self):
        if set(self.predicted_order) != set(self.true_order):
            raise ValueError("predicted and true orders must contain the same ids")
        if len(set(self.predicted_order)) != len(self.predicted_order):
            raise ValueError("orders must not contain duplicates")


def ap_at_k(pair: RankingPair, k: int) -> float:
    """Fraction of the predicted top-k that is in the true top-k."""
    if k > len(pair.predicted_order):
        raise KTooLarge(f"k={k} exceeds set size {len(pair.predicted_order)}")
    true_top = set(pair.true_order[:k])
    hits = sum(1 for item in pair.predicted_order[:k] if item in true_top)
    return hits / k


def ndcg_at_k(pair: RankingPair, k: int) -> float:
    """Binary-relevance NDCG over the predicted prefix, discount 1/log2(i+1)."""
    if k > len(pair.predicted_order):
        raise KTooLarge(f"k={k} exceeds set size {len(pair.predicted_order)}")
    true_top = set(pair.true_order[:k])
    dcg = sum(
        1.0 / math.log2(i + 1)
        for i, item in enumerate(pair.predicted_order[:k], start=1)
        if item in true_top
    )
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, k + 1))
    return dcg / ideal


def order_by_score(ids: Sequence, scores: Sequence[float], tiebreak: Sequence) -> tuple:
    """Descending score order with a deterministic tiebreak key."""
    ranked = sorted(zip(ids, scores, tiebreak), key=lambda t: (-t[1], t[2]))
    return tuple(item for item, _, _ in ranked)


# ---------------------------------------------------------------------------
# Comparison harness (controllers scored on a synthetic candidate pool)

@dataclass(frozen=True)
class ControllerScores:
    name: str
    ap: dict[int, float]
    ndcg: dict[int, float]


@dataclass(frozen=True)
class ComparisonResult:
    rows: tuple[ControllerScores, ...]
    pool_size: int
    train_size: int
    ks: tuple[int, ...]


def build_pool(
    base: NetworkArch,
    pool_size: int,
    seed: int,
    lam: float = 0.5,
    synth: SyntheticConfig | None = None,
    sign_mode: str = GOAL_CONSISTENT,
):
    """Seeded candidate pool with measured efficiency targets against the base."""
    synth = synth or SyntheticConfig()
    candidates = [c.arch for c in generate_candidates(base)]
    if len(candidates) > pool_size:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(candidates), size=pool_size, replace=False)
        candidates = [candidates[i] for i in sorted(idx)]
    base_est = estimate_memory(base)
    base_acc = synthetic_accuracy(base, seed, synth)
    targets = []
    for arch in candidates:
        est = estimate_memory(arch)
        acc = synthetic_accuracy(arch, seed, synth)
        targets.append(
            efficiency(
                MetricInputs(
                    accuracy=acc,
                    peak_intermediate=est.peak_intermediate_bytes,
                    param_bytes=est.param_bytes,
                    base_accuracy=base_acc,
                    base_peak=base_est.peak_intermediate_bytes,
                    base_params=base_est.param_bytes,
                    lam=lam,
                ),
                sign_mode,
            )
        )
    return candidates, np.array(targets)


def _pair_from_scores(archs, scores, targets) -> RankingPair:
    hashes = [canonical_hash(a) for a in archs]
    ids = list(range(len(archs)))
    predicted = order_by_score(ids, scores, hashes)
    true = order_by_score(ids, targets, hashes)
    return RankingPair(predicted, true)


def compare_controllers(
    base: NetworkArch,
    seed: int,
    pool_size: int = 200,
    train_size: int = 150,
    ks: tuple[int, ...] = (50, 100),
    lam: float = 0.5,
    epochs: int = 50,
    lr: float = 0.01,
    d_emb: int = ctl.DEFAULT_D_EMB,
    d_h: int = ctl.DEFAULT_D_H,
    synth: SyntheticConfig | None = None,
    train_variants: tuple[str, ...] = (ctl.SINGLE_RNN, ctl.DOUBLE_RNN),
    scc_epochs: int | None = None,
    scc_lr: float = 0.05,
    scc_set_size: int = 64,
) -> ComparisonResult:
    """Train the set-ranking controller and the absolute-score baselines on a
    shared pool split, then score every controller's full-pool ranking.

    Each model gets a regime it converges under: the absolute scorers plateau
    within `epochs` at `lr`; the set ranker optimizes a harder objective and
    takes its own budget (scc_epochs, default 2x) at a larger step size."""
    archs, targets = build_pool(base, pool_size, seed, lam=lam, synth=synth)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(archs))
    train_idx = np.sort(order[:train_size])
    examples = [ctl.TrainingExample(archs[i], float(targets[i])) for i in train_idx]

    hashes = [canonical_hash(a) for a in archs]
    canonical = sorted(range(len(archs)), key=lambda i: hashes[i])
    ranked_archs = [archs[i] for i in canonical]

    def scored(name, scores_by_pool_index):
        pair = _pair_from_scores(archs, scores_by_pool_index, targets)
        return ControllerScores(
            name,
            ap={k: ap_at_k(pair, k) for k in ks},
            ndcg={k: ndcg_at_k(pair, k) for k in ks},
        )

    def scc_scores(params):
        scores = ctl.rank(params, ranked_archs)
        out = np.empty(len(archs))
        for pos, i in enumerate(canonical):
            out[i] = scores[pos]
        return out

    rows = []

    scc = ctl.init_controller(seed, d_emb=d_emb, d_h=d_h)
    rows.append(scored("set_ranker_untrained", scc_scores(scc)))
    ctl.train(
        scc,
        examples,
        lr=scc_lr,
        epochs=scc_epochs if scc_epochs is not None else 2 * epochs,
        seed=seed,
        set_size=scc_set_size,
        trace_every=0,
    )
    rows.append(scored("set_ranker", scc_scores(scc)))

    for variant in (ctl.SINGLE_RNN, ctl.DOUBLE_RNN):
        bl = ctl.init_baseline(variant, seed, d_emb=d_emb, d_h=d_h)
        rows.append(scored(f"{variant}_untrained", baseline_pool_scores(bl, archs)))
        if variant in train_variants:
            ctl.train_baseline(bl, examples, lr=lr, epochs=epochs, seed=seed)
            rows.append(scored(variant, baseline_pool_scores(bl, archs)))

    return ComparisonResult(
        rows=tuple(rows), pool_size=len(archs), train_size=len(examples), ks=ks
    )


def baseline_pool_scores(params: ctl.BaselineParams, archs, chunk: int = 256) -> np.ndarray:
    out = np.empty(len(archs))
    for start in range(0, len(archs), chunk):
        out[start : start + chunk] = ctl.baseline_scores(params, archs[start : start + chunk])
    return out


def comparison_table(result: ComparisonResult) -> str:
    ks = result.ks
    header = ["controller"] + [f"AP@{k}" for k in ks] + [f"NDCG@{k}" for k in ks]
    rows = [header]
    for row in result.rows:
        rows.append(
            [row.name]
            + [f"{row.ap[k]:.3f}" for k in ks]
            + [f"{row.ndcg[k]:.3f}" for k in ks]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
