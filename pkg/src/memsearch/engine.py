"""Round-based search loop: generate, rank, evaluate, select, train, checkpoint."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import controller as ctl
from .arch import NetworkArch, canonical_hash, default_arch, from_json_obj, to_json_obj
from .evaluate import (
    EvalRequest,
    ExternalEvaluator,
    SyntheticConfig,
    SyntheticEvaluator,
)
from .generate import GeneratedCandidate, generate_candidates
from .memory import estimate_memory
from .metric import GOAL_CONSISTENT, SIGN_MODES, MetricInputs, efficiency

CHECKPOINT_VERSION = 1


class EngineError(Exception):
    pass


class NoCandidates(EngineError):
    """The base network produced no valid grow or trim candidates."""


class EvaluatorFailure(EngineError):
    """More than half of the round's evaluations failed."""


class CorruptCheckpoint(EngineError):
    """Checkpoint file is unreadable, has a bad version, or a bad checksum."""


@dataclass(frozen=True)
class SearchConfig:
    lam: float = 0.5
    k: int = 100
    max_rounds: int = 10
    seed: int = 0
    evaluator: str = "synthetic"  # "synthetic" | "external"
    trainer_cmd: tuple[str, ...] = ()
    trainer_timeout: float = 300.0
    parallelism: int = 1
    stop_patience: int = 3
    bytes_per_element: int = 2
    bytes_per_weight: int = 2
    metric_sign_mode: str = GOAL_CONSISTENT
    budget: int = 3
    scc_epochs: int = 50
    scc_lr: float = 0.01
    scc_set_size: int = 32
    scc_reset_each_round: bool = False
    standardize_targets: bool = False
    d_emb: int = ctl.DEFAULT_D_EMB
    d_h: int = ctl.DEFAULT_D_H
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    init_arch: NetworkArch | None = None

    def __post_init__(self):
        if self.k < 1 or self.max_rounds < 1:
            raise ValueError("k and max_rounds must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.metric_sign_mode not in SIGN_MODES:
            raise ValueError(f"metric_sign_mode must be one of {SIGN_MODES}")
        if self.evaluator not in ("synthetic", "external"):
            raise ValueError("evaluator must be 'synthetic' or 'external'")
        if self.evaluator == "external" and not self.trainer_cmd:
            raise ValueError("external evaluator requires trainer_cmd")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        d["trainer_cmd"] = list(self.trainer_cmd)
        d["init_arch"] = to_json_obj(self.init_arch) if self.init_arch else None
        return d

    @staticmethod
    def from_dict(d: dict) -> "SearchConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if d.get("init_arch"):
            d["init_arch"] = from_json_obj(d["init_arch"])
        else:
            d["init_arch"] = None
        if "synth" in d and isinstance(d["synth"], dict):
            d["synth"] = SyntheticConfig(**d["synth"])
        if "trainer_cmd" in d:
            d["trainer_cmd"] = tuple(d["trainer_cmd"])
        return SearchConfig(**d)


@dataclass(frozen=True)
class CandidateRecord:
    arch: NetworkArch
    hash: str
    accuracy: float
    param_bytes: int
    peak_intermediate_bytes: int
    y: float
    provenance: str = ""

    @property
    def total_bytes(self) -> int:
        return self.param_bytes + self.peak_intermediate_bytes

    def to_dict(self) -> dict:
        return {
            "arch": to_json_obj(self.arch),
            "hash": self.hash,
            "accuracy": self.accuracy,
            "param_bytes": self.param_bytes,
            "peak_intermediate_bytes": self.peak_intermediate_bytes,
            "y": self.y,
            "provenance": self.provenance,
        }

    @staticmethod
    def from_dict(d: dict) -> "CandidateRecord":
        return CandidateRecord(
            arch=from_json_obj(d["arch"]),
            hash=d["hash"],
            accuracy=d["accuracy"],
            param_bytes=d["param_bytes"],
            peak_intermediate_bytes=d["peak_intermediate_bytes"],
            y=d["y"],
            provenance=d.get("provenance", ""),
        )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    base: NetworkArch
    evaluated: tuple[CandidateRecord, ...]
    winner: CandidateRecord
    scc_loss_trace: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "base": to_json_obj(self.base),
            "base_hash": canonical_hash(self.base),
            "evaluated": [r.to_dict() for r in self.evaluated],
            "winner_hash": self.winner.hash,
            "winner_y": self.winner.y,
            "scc_loss_trace": list(self.scc_loss_trace),
        }


class SearchEngine:
    """Drives the search; single-writer state, deterministic given the seed."""

    def __init__(self, config: SearchConfig, out_dir: str | Path | None = None):
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.evaluator = self._make_evaluator(config)
        self.rng = np.random.default_rng(config.seed)
        self.controller = ctl.init_controller(config.seed, d_emb=config.d_emb, d_h=config.d_h)
        self.base = config.init_arch or default_arch()
        self.base_accuracy = self._measure_base(self.base)
        self.history: list[CandidateRecord] = []
        self.rounds: list[RoundRecord] = []
        self.round_index = 0
        self.rounds_without_improvement = 0
        if self.out_dir is not None:
            (self.out_dir / "rounds").mkdir(parents=True, exist_ok=True)
            (self.out_dir / "controller").mkdir(parents=True, exist_ok=True)
            self._log(f"search initialized, seed={config.seed}, lambda={config.lam}")

    @staticmethod
    def _make_evaluator(config: SearchConfig):
        if config.evaluator == "synthetic":
            return SyntheticEvaluator(config.synth)
        return ExternalEvaluator(
            list(config.trainer_cmd), config.trainer_timeout, config.parallelism
        )

    def _measure_base(self, base: NetworkArch) -> float:
        outcome = self.evaluator.evaluate(
            [EvalRequest(canonical_hash(base), base, self.config.seed, self.config.budget)]
        )
        if not outcome.results:
            reason = outcome.failures[0] if outcome.failures else None
            raise EvaluatorFailure(f"could not evaluate the base network: {reason}")
        return outcome.results[0].accuracy

    def _log(self, message: str):
        if self.out_dir is None:
            return
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        with open(self.out_dir / "search_log.txt", "a", encoding="utf-8") as fh:
            fh.write(f"[{stamp}] {message}\n")

    def _score(self, accuracy: float, param_bytes: int, peak_bytes: int,
               base_params: int, base_peak: int) -> float:
        return efficiency(
            MetricInputs(
                accuracy=accuracy,
                peak_intermediate=peak_bytes,
                param_bytes=param_bytes,
                base_accuracy=self.base_accuracy,
                base_peak=base_peak,
                base_params=base_params,
                lam=self.config.lam,
            ),
            self.config.metric_sign_mode,
        )

    def _select_top_k(self, candidates: list[GeneratedCandidate]) -> list[GeneratedCandidate]:
        k = min(self.config.k, len(candidates))
        if not self.history:
            # Round one: the controller is untrained. Sample uniformly, but
            # guarantee each action kind is represented (trims are a sliver
            # of the pool and the round-one winner argument needs them seen).
            pools: dict[str, list[int]] = {}
            for i, cand in enumerate(candidates):
                pools.setdefault(cand.action, []).append(i)
            chosen: set[int] = set()
            if k >= len(pools):
                for action in sorted(pools):
                    pool = pools[action]
                    chosen.add(pool[int(self.rng.integers(len(pool)))])
            rest = [i for i in range(len(candidates)) if i not in chosen]
            need = k - len(chosen)
            if need > 0:
                extra = self.rng.choice(len(rest), size=need, replace=False)
                chosen.update(rest[e] for e in extra)
            return [candidates[i] for i in sorted(chosen)]
        scores = ctl.rank(self.controller, [c.arch for c in candidates])
        hashes = [canonical_hash(c.arch) for c in candidates]
        order = sorted(range(len(candidates)), key=lambda i: (-scores[i], hashes[i]))
        chosen = sorted(order[:k])
        return [candidates[i] for i in chosen]

    def run_round(self) -> RoundRecord:
        cfg = self.config
        candidates = generate_candidates(self.base)
        if not candidates:
            raise NoCandidates(f"base {canonical_hash(self.base)[:12]} cannot grow or trim")
        candidates.sort(key=lambda c: canonical_hash(c.arch))
        top = self._select_top_k(candidates)

        requests = [
            EvalRequest(canonical_hash(c.arch), c.arch, cfg.seed, cfg.budget) for c in top
        ]
        outcome = self.evaluator.evaluate(requests)
        if len(outcome.failures) * 2 > len(requests):
            raise EvaluatorFailure(
                f"{len(outcome.failures)}/{len(requests)} evaluations failed"
            )
        accuracy = outcome.accuracy_by_id()

        base_est = estimate_memory(
            self.base, cfg.bytes_per_element, cfg.bytes_per_weight
        )
        records = []
        for cand in top:
            h = canonical_hash(cand.arch)
            if h not in accuracy:
                continue
            est = estimate_memory(cand.arch, cfg.bytes_per_element, cfg.bytes_per_weight)
            y = self._score(
                accuracy[h],
                est.param_bytes,
                est.peak_intermediate_bytes,
                base_est.param_bytes,
                base_est.peak_intermediate_bytes,
            )
            records.append(
                CandidateRecord(
                    arch=cand.arch,
                    hash=h,
                    accuracy=accuracy[h],
                    param_bytes=est.param_bytes,
                    peak_intermediate_bytes=est.peak_intermediate_bytes,
                    y=y,
                    provenance=f"{cand.action}: {cand.detail}",
                )
            )
        winner = min(records, key=lambda r: (-r.y, r.hash))

        self.history.extend(records)
        if cfg.scc_reset_each_round:
            self.controller = ctl.init_controller(cfg.seed, d_emb=cfg.d_emb, d_h=cfg.d_h)
        train_seed = int(self.rng.integers(2**31))
        _, trace = ctl.train(
            self.controller,
            [ctl.TrainingExample(r.arch, r.y) for r in self.history],
            lr=cfg.scc_lr,
            epochs=cfg.scc_epochs,
            seed=train_seed,
            set_size=cfg.scc_set_size,
            standardize_targets=cfg.standardize_targets,
        )

        record = RoundRecord(
            round=self.round_index + 1,
            base=self.base,
            evaluated=tuple(records),
            winner=winner,
            scc_loss_trace=tuple(trace),
        )
        self.rounds.append(record)
        self.round_index += 1
        self.rounds_without_improvement = 0 if winner.y > 0 else self.rounds_without_improvement + 1
        self.base = winner.arch
        self.base_accuracy = winner.accuracy
        self._persist_round(record)
        return record

    def _persist_round(self, record: RoundRecord):
        if self.out_dir is None:
            return
        path = self.out_dir / "rounds" / f"round_{record.round:03d}.json"
        path.write_text(json.dumps(record.to_dict(), sort_keys=True, indent=1), encoding="utf-8")
        ctl.save_controller(
            self.controller, self.out_dir / "controller" / f"ckpt_{record.round:03d}.json"
        )
        (self.out_dir / "best_arch.json").write_text(
            json.dumps(to_json_obj(record.winner.arch), sort_keys=True, indent=1),
            encoding="utf-8",
        )
        self._log(
            f"round {record.round}: evaluated {len(record.evaluated)}, "
            f"winner {record.winner.hash[:12]} y={record.winner.y:.6f}"
        )

    def run_search(self) -> tuple[NetworkArch, list[RoundRecord]]:
        """Iterate rounds until max_rounds or stop_patience rounds with no
        positive-efficiency winner."""
        while self.round_index < self.config.max_rounds:
            self.run_round()
            if self.rounds_without_improvement >= self.config.stop_patience:
                self._log("early stop: no improving winner")
                break
        self._log(f"search finished after {self.round_index} rounds")
        return self.base, list(self.rounds)

    # -- checkpointing --------------------------------------------------

    def checkpoint(self, path: str | Path):
        body = {
            "config": self.config.to_dict(),
            "round_index": self.round_index,
            "base": to_json_obj(self.base),
            "base_accuracy": self.base_accuracy,
            "rounds_without_improvement": self.rounds_without_improvement,
            "history": [r.to_dict() for r in self.history],
            "rng_state": self.rng.bit_generator.state,
            "controller": {
                name: {"shape": list(t.shape), "data": t.ravel().tolist()}
                for name, t in self.controller.tensors().items()
            },
        }
        serialized = json.dumps(body, sort_keys=True)
        payload = {
            "version": CHECKPOINT_VERSION,
            "checksum": hashlib.sha256(serialized.encode()).hexdigest(),
            "body": body,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def restore(cls, path: str | Path, out_dir: str | Path | None = None) -> "SearchEngine":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CorruptCheckpoint(f"unreadable checkpoint {path}: {e}") from e
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CorruptCheckpoint(f"unsupported checkpoint version {payload.get('version')!r}")
        body = payload.get("body")
        if body is None:
            raise CorruptCheckpoint("checkpoint has no body")
        serialized = json.dumps(body, sort_keys=True)
        if hashlib.sha256(serialized.encode()).hexdigest() != payload.get("checksum"):
            raise CorruptCheckpoint("checkpoint checksum mismatch")
        config = SearchConfig.from_dict(body["config"])
        engine = cls.__new__(cls)
        engine.config = config
        engine.out_dir = Path(out_dir) if out_dir is not None else None
        engine.evaluator = cls._make_evaluator(config)
        engine.rng = np.random.default_rng()
        state = body["rng_state"]
        # json turns the inner state dict keys/values into plain ints already
        engine.rng.bit_generator.state = state
        engine.controller = ctl.init_controller(config.seed, d_emb=config.d_emb, d_h=config.d_h)
        for name, tensor in engine.controller.tensors().items():
            stored = body["controller"][name]
            tensor[...] = np.array(stored["data"], dtype=float).reshape(stored["shape"])
        engine.base = from_json_obj(body["base"])
        engine.base_accuracy = body["base_accuracy"]
        engine.history = [CandidateRecord.from_dict(d) for d in body["history"]]
        engine.rounds = []
        engine.round_index = body["round_index"]
        engine.rounds_without_improvement = body["rounds_without_improvement"]
        if engine.out_dir is not None:
            (engine.out_dir / "rounds").mkdir(parents=True, exist_ok=True)
            (engine.out_dir / "controller").mkdir(parents=True, exist_ok=True)
        return engine
