import sys
import time
from pathlib import Path

import numpy as np
import pytest

from memsearch.arch import (
    Block,
    Cell,
    CombineMode,
    CombineSpec,
    NetworkArch,
    OpKind,
    TensorShape,
    canonical_hash,
    default_arch,
    validate,
)
from memsearch.evaluate import (
    MALFORMED,
    TIMEOUT,
    TRAINER_ERROR,
    UNREACHABLE,
    EvalRequest,
    SyntheticConfig,
    SyntheticEvaluator,
    external_evaluate,
    synthetic_accuracy,
)
from memsearch.generate import apply_grow, enumerate_grow_cells

STUB = [sys.executable, str(Path(__file__).parent / "stub_trainer.py")]


def requests_for(archs, prefix="c"):
    return [
        EvalRequest(f"{prefix}{i}-{canonical_hash(a)[:8]}", a, seed=1, budget=1)
        for i, a in enumerate(archs)
    ]


class TestSyntheticOracle:
    def test_deterministic(self):
        arch = default_arch()
        assert synthetic_accuracy(arch, 5) == synthetic_accuracy(arch, 5)
        assert synthetic_accuracy(arch, 5) != synthetic_accuracy(arch, 6)

    def test_pure_function_of_hash_and_seed(self):
        from memsearch.arch import dumps, loads

        arch = default_arch()
        clone = loads(dumps(arch))
        assert synthetic_accuracy(arch, 3) == synthetic_accuracy(clone, 3)

    def test_all_identity_network_sits_at_floor(self):
        cells = (Cell(1, 1, OpKind.IDENTITY, OpKind.IDENTITY, CombineSpec(CombineMode.SUM, True)),)
        arch = NetworkArch(
            blocks=(Block(cells, stride=1),),
            input_shape=TensorShape(8, 8, 3),
            stem_enabled=False,
            num_classes=0,
        )
        assert validate(arch) == []
        cfg = SyntheticConfig(sigma=0.0)
        assert synthetic_accuracy(arch, 0, cfg) == pytest.approx(cfg.a_floor)

    def test_adding_conv_cells_never_decreases_accuracy(self, small_base):
        cfg = SyntheticConfig(sigma=0.0)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            arch = small_base
            acc = synthetic_accuracy(arch, 0, cfg)
            for _ in range(20):
                conv_cells = [
                    c
                    for c in enumerate_grow_cells(arch)
                    if c.op1 is OpKind.CONV3X3 and c.op2 is OpKind.CONV3X3
                ]
                grown = None
                order = rng.permutation(len(conv_cells))
                for j in order:
                    cand = apply_grow(arch, conv_cells[j])
                    if not validate(cand):
                        grown = cand
                        break
                assert grown is not None
                new_acc = synthetic_accuracy(grown, 0, cfg)
                assert new_acc >= acc
                arch, acc = grown, new_acc

    def test_clamped_to_unit_interval(self):
        cfg = SyntheticConfig(a_floor=0.99, a_ceil=3.0, sigma=0.0)
        assert synthetic_accuracy(default_arch(), 0, cfg) <= 1.0

    def test_evaluator_facade(self, small_base):
        evaluator = SyntheticEvaluator(SyntheticConfig(sigma=0.0))
        reqs = requests_for([small_base])
        outcome = evaluator.evaluate(reqs)
        assert len(outcome.results) == 1 and not outcome.failures
        assert outcome.results[0].id == reqs[0].id


class TestExternalProtocol:
    def test_echo_trainer_constant_half(self, small_base):
        reqs = requests_for([small_base] * 3)
        # duplicate archs need distinct ids; requests_for adds an index prefix
        outcome = external_evaluate(reqs, STUB + ["--accuracy", "0.5"], timeout=30)
        assert not outcome.failures
        assert [r.accuracy for r in outcome.results] == [0.5, 0.5, 0.5]
        assert [r.id for r in outcome.results] == [r.id for r in reqs]

    def test_out_of_order_responses_reassociated(self, small_base):
        cells = enumerate_grow_cells(small_base)
        archs = [small_base] + [apply_grow(small_base, c) for c in cells[:5]]
        reqs = requests_for(archs)
        outcome = external_evaluate(reqs, STUB + ["--synthetic", "--shuffle"], timeout=60)
        assert not outcome.failures
        expected = {r.id: synthetic_accuracy(r.arch, r.seed) for r in reqs}
        assert {r.id: r.accuracy for r in outcome.results} == pytest.approx(expected)

    def test_trainer_killed_mid_batch_preserves_partial_results(self, small_base):
        reqs = requests_for([small_base] * 5)
        outcome = external_evaluate(reqs, STUB + ["--die-after", "2"], timeout=30)
        assert len(outcome.results) == 2
        assert len(outcome.failures) == 3
        assert {f.reason for f in outcome.failures} == {UNREACHABLE}

    def test_timeout_is_bounded_and_reported(self, small_base):
        reqs = requests_for([small_base] * 3)
        start = time.monotonic()
        outcome = external_evaluate(reqs, STUB + ["--sleep", "30"], timeout=1.5)
        elapsed = time.monotonic() - start
        assert elapsed < 10
        assert len(outcome.results) == 0
        assert {f.reason for f in outcome.failures} == {TIMEOUT}
        assert len(outcome.failures) == 3

    def test_garbage_lines_skipped_and_bad_accuracy_flagged(self, small_base):
        reqs = requests_for([small_base] * 4)
        cmd = STUB + ["--garbage-first", "--bad-accuracy-every", "2"]
        outcome = external_evaluate(reqs, cmd, timeout=30)
        assert len(outcome.results) == 2
        assert len(outcome.failures) == 2
        assert {f.reason for f in outcome.failures} == {MALFORMED}

    def test_error_replies_mark_only_affected_candidate(self, small_base):
        reqs = requests_for([small_base] * 3)
        cmd = STUB + ["--error-substring", "c1-"]
        outcome = external_evaluate(reqs, cmd, timeout=30)
        assert len(outcome.results) == 2
        assert len(outcome.failures) == 1
        assert outcome.failures[0].reason == TRAINER_ERROR
        assert outcome.failures[0].id == reqs[1].id

    def test_unlaunchable_trainer_is_unreachable(self, small_base):
        reqs = requests_for([small_base] * 2)
        outcome = external_evaluate(reqs, ["/nonexistent/trainer-binary"], timeout=5)
        assert not outcome.results
        assert {f.reason for f in outcome.failures} == {UNREACHABLE}
        assert len(outcome.failures) == 2

    def test_results_plus_failures_cover_requests(self, small_base):
        reqs = requests_for([small_base] * 6)
        cmd = STUB + ["--error-substring", "c3-", "--die-after", "5"]
        outcome = external_evaluate(reqs, cmd, timeout=30)
        assert len(outcome.results) + len(outcome.failures) == len(reqs)

    def test_parallel_shards(self, small_base):
        reqs = requests_for([small_base] * 7)
        outcome = external_evaluate(
            reqs, STUB + ["--accuracy", "0.25"], timeout=60, parallelism=3
        )
        assert not outcome.failures
        assert [r.id for r in outcome.results] == [r.id for r in reqs]
        assert all(r.accuracy == 0.25 for r in outcome.results)

    def test_duplicate_ids_rejected(self, small_base):
        reqs = [EvalRequest("same", small_base, 0), EvalRequest("same", small_base, 0)]
        with pytest.raises(ValueError):
            external_evaluate(reqs, STUB, timeout=5)

    def test_protocol_tracing_env(self, small_base, monkeypatch, caplog):
        import logging

        monkeypatch.setenv("MEMNAS_TRAINER_DEBUG", "1")
        with caplog.at_level(logging.DEBUG, logger="memsearch.evaluate"):
            external_evaluate(requests_for([small_base]), STUB, timeout=30)
        assert any("trainer <-" in r.message for r in caplog.records)
        assert any("trainer ->" in r.message for r in caplog.records)
