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
)
from memsearch.memory import (
    CycleDetected,
    ValueSpec,
    block_value_graph,
    estimate_memory,
    levelized_schedule,
    lifetime_csv,
    param_memory,
    value_lifetimes,
    weight_count,
)

from .oracles import simulate_peak, simulate_per_step

SUM_OUT = CombineSpec(CombineMode.SUM, True)
SUM_IN = CombineSpec(CombineMode.SUM, False)


def random_value_graph(rng, n, p_edge=0.4, max_size=5, p_terminal=0.2):
    specs = []
    for i in range(n):
        parents = tuple(f"v{j}" for j in range(i) if rng.random() < p_edge)
        specs.append(
            ValueSpec(
                f"v{i}",
                parents,
                int(rng.integers(1, max_size + 1)),
                terminal=bool(rng.random() < p_terminal),
            )
        )
    return specs


class TestSchedule:
    def test_chain_of_three_layers(self):
        graph = {"in": (), "l1": ("in",), "l2": ("l1",), "l3": ("l2",)}
        times = levelized_schedule(graph)
        assert times == {"in": 1, "l1": 2, "l2": 3, "l3": 4}

    def test_figure_block_three_consumers_finish_together(self, figure_arch):
        values = block_value_graph(figure_arch, 0)
        times = levelized_schedule({v.name: v.parents for v in values})
        consumers_of_input = [v.name for v in values if "r1" in v.parents]
        assert len(consumers_of_input) == 3
        assert all(times[name] == 2 for name in consumers_of_input)

    def test_cycle_detected(self):
        with pytest.raises(CycleDetected):
            levelized_schedule({"a": ("b",), "b": ("a",)})


class TestFigureBlock:
    def test_per_step_and_peak(self, figure_arch):
        est = estimate_memory(figure_arch, bytes_per_element=1)
        assert est.lifetime.per_step_memory == (1, 3, 2, 4, 2)
        assert est.peak_intermediate_bytes == 4
        assert len(est.lifetime.rows) == 10

    def test_input_discarded_after_step_two(self, figure_arch):
        est = estimate_memory(figure_arch, bytes_per_element=1)
        row = next(r for r in est.lifetime.rows if r.name == "r1")
        assert (row.gen_time, row.last_use_time) == (1, 2)

    def test_matches_event_simulation(self, figure_arch):
        values = block_value_graph(figure_arch, 0)
        assert list(estimate_memory(figure_arch, 1).lifetime.per_step_memory) == (
            simulate_per_step(values)
        )


class TestLifetimes:
    def test_single_layer_peak_one(self):
        values = [ValueSpec("r1", (), 1), ValueSpec("r2", ("r1",), 1, terminal=True)]
        table = value_lifetimes(values)
        assert table.per_step_memory == (1, 1)
        assert table.peak == 1

    def test_unconsumed_value_counts_only_at_generation(self):
        values = [
            ValueSpec("a", (), 1),
            ValueSpec("b", ("a",), 1),
            ValueSpec("c", ("a",), 1, terminal=True),
            ValueSpec("d", ("c",), 1, terminal=True),
        ]
        table = value_lifetimes(values)
        # a dies as its consumers finish at t=2; b is generated at 2 and never
        # used again; c is terminal and stays through t=3
        assert table.per_step_memory == (1, 2, 2)
        assert list(table.per_step_memory) == simulate_per_step(values)

    def test_matches_simulation_on_random_graphs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            values = random_value_graph(rng, int(rng.integers(1, 13)))
            table = value_lifetimes(values)
            assert list(table.per_step_memory) == simulate_per_step(values)

    def test_sandwich_bounds(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            values = random_value_graph(rng, int(rng.integers(1, 13)))
            peak = value_lifetimes(values).peak
            assert max(v.size for v in values) <= peak <= sum(v.size for v in values)

    def test_rename_invariance(self):
        rng = np.random.default_rng(3)
        values = random_value_graph(rng, 10)
        mapping = {f"v{i}": f"x{i * 7 % 31}" for i in range(10)}
        renamed = [
            ValueSpec(mapping[v.name], tuple(mapping[p] for p in v.parents), v.size, v.terminal)
            for v in values
        ]
        assert value_lifetimes(values).per_step_memory == value_lifetimes(renamed).per_step_memory

    def test_extra_earlier_consumer_never_decreases_peak(self):
        rng = np.random.default_rng(19)
        tried = 0
        while tried < 60:
            values = random_value_graph(rng, int(rng.integers(3, 13)))
            times = levelized_schedule({v.name: v.parents for v in values})
            k = int(rng.integers(0, len(values)))
            target = values[k]
            earlier = [
                v.name
                for v in values
                if times[v.name] < times[target.name] and v.name not in target.parents
            ]
            if not earlier:
                continue
            tried += 1
            base_peak = value_lifetimes(values).peak
            extra = earlier[int(rng.integers(0, len(earlier)))]
            patched = list(values)
            patched[k] = ValueSpec(
                target.name, target.parents + (extra,), target.size, target.terminal
            )
            assert value_lifetimes(patched).peak >= base_peak


class TestParamMemory:
    def test_single_conv3x3_weight_bytes(self):
        # one 3x3 conv, 64 -> 64 channels, no bias, 2 bytes per weight
        block = Block(cells=(Cell(1, 1, OpKind.CONV3X3, OpKind.IDENTITY, SUM_OUT),))
        arch = NetworkArch(
            blocks=(block,),
            channel_width=64,
            input_shape=TensorShape(32, 32, 64),
            stem_enabled=False,
            num_classes=0,
        )
        assert param_memory(arch, bytes_per_weight=2) == 3 * 3 * 64 * 64 * 2

    def test_pooling_only_network_has_no_weights(self):
        block = Block(cells=(Cell(1, 1, OpKind.AVGPOOL3X3, OpKind.MAXPOOL3X3, SUM_OUT),))
        arch = NetworkArch(
            blocks=(block,),
            input_shape=TensorShape(32, 32, 3),
            stem_enabled=False,
            num_classes=0,
        )
        assert param_memory(arch) == 0

    def test_stem_and_head_counted_when_enabled(self):
        block = Block(cells=(Cell(1, 1, OpKind.AVGPOOL3X3, OpKind.MAXPOOL3X3, SUM_OUT),))
        arch = NetworkArch(
            blocks=(block,),
            channel_width=64,
            input_shape=TensorShape(32, 32, 3),
            stem_enabled=True,
            num_classes=10,
        )
        assert weight_count(arch) == 9 * 3 * 64 + 64 * 10

    def test_depthwise_separable_counts(self):
        block = Block(cells=(Cell(1, 1, OpKind.DWCONV3X3, OpKind.IDENTITY, SUM_OUT),))
        arch = NetworkArch(
            blocks=(block,),
            channel_width=16,
            input_shape=TensorShape(8, 8, 16),
            stem_enabled=False,
            num_classes=0,
        )
        assert weight_count(arch) == 9 * 16 + 16 * 16

    def test_bias_flag(self):
        block = Block(cells=(Cell(1, 1, OpKind.CONV3X3, OpKind.IDENTITY, SUM_OUT),))
        arch = NetworkArch(
            blocks=(block,),
            channel_width=64,
            input_shape=TensorShape(32, 32, 64),
            stem_enabled=False,
            num_classes=0,
        )
        assert weight_count(arch, include_bias=True) == 9 * 64 * 64 + 64


class TestNetworkEstimate:
    def test_network_peak_is_max_over_blocks(self):
        from memsearch.arch import default_arch

        arch = default_arch(num_blocks=3, strides=(1, 2, 1))
        est = estimate_memory(arch, bytes_per_element=1)
        assert est.peak_intermediate_bytes == max(t.peak for t in est.per_block)
        assert est.lifetime == est.per_block[est.peak_block_index]

    def test_handoff_counted_in_both_blocks(self):
        from memsearch.arch import default_arch

        arch = default_arch(num_blocks=2, strides=(1, 1))
        est = estimate_memory(arch, bytes_per_element=1)
        first, second = est.per_block
        # block 1's included output stays live through its final step, and the
        # same tensor is block 2's r1
        out_row = [r for r in first.rows if r.name == "r4"][0]
        assert out_row.last_use_time == first.depth
        in_row = [r for r in second.rows if r.name == "r1"][0]
        assert in_row.size == out_row.size

    def test_identity_layers_are_free_aliases(self):
        # trimming an op to identity removes its buffer and extends the source
        base_block = Block(cells=(Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_OUT),))
        trimmed_block = Block(cells=(Cell(1, 1, OpKind.IDENTITY, OpKind.CONV3X3, SUM_OUT),))
        mk = lambda blk: NetworkArch(
            blocks=(blk,),
            channel_width=4,
            input_shape=TensorShape(4, 4, 4),
            stem_enabled=False,
            num_classes=0,
        )
        base = estimate_memory(mk(base_block), bytes_per_element=1)
        trimmed = estimate_memory(mk(trimmed_block), bytes_per_element=1)
        assert len(trimmed.lifetime.rows) == len(base.lifetime.rows) - 1
        assert trimmed.peak_intermediate_bytes <= base.peak_intermediate_bytes
        r1 = [r for r in trimmed.lifetime.rows if r.name == "r1"][0]
        assert r1.last_use_time == trimmed.lifetime.depth  # feeds the final sum

    def test_csv_layout(self, figure_arch):
        est = estimate_memory(figure_arch, bytes_per_element=1)
        csv = lifetime_csv(est.lifetime)
        lines = csv.strip().split("\n")
        assert lines[0].startswith("rep,size,gen,last_use,t1")
        assert lines[-1].startswith("memory")
        assert lines[-1].endswith("1,3,2,4,2")

    def test_oracle_agreement_on_generated_archs(self, small_base):
        from memsearch.generate import generate_candidates

        for cand in generate_candidates(small_base)[:30]:
            for b in range(len(cand.arch.blocks)):
                values = block_value_graph(cand.arch, b)
                assert value_lifetimes(values).peak == simulate_peak(values)
