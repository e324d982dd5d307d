"""Parameter memory and lifetime-based peak estimates for intermediate values.

Scheduling model: every materialized layer output takes one unit time; a value
exists from its generation step until its last consumer finishes (terminal
block outputs stay resident through the block's final step). Blocks execute
sequentially, so the network-level peak is the max over block-level peaks,
with the inter-block handoff tensor appearing in both adjacent tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .arch import NetworkArch, OpKind, ShapeInfo, infer_shapes, rep_names


class CycleDetected(Exception):
    """The layer graph is not acyclic."""


@dataclass(frozen=True)
class ValueSpec:
    """One materialized intermediate value: its producers' inputs and its size."""

    name: str
    parents: tuple[str, ...]
    size: int
    terminal: bool = False


@dataclass(frozen=True)
class LifetimeRow:
    name: str
    gen_time: int
    last_use_time: int
    size: int


@dataclass(frozen=True)
class LifetimeTable:
    rows: tuple[LifetimeRow, ...]
    per_step_memory: tuple[int, ...]

    @property
    def peak(self) -> int:
        return max(self.per_step_memory) if self.per_step_memory else 0

    @property
    def depth(self) -> int:
        return len(self.per_step_memory)


def levelized_schedule(parents: Mapping[str, Sequence[str]]) -> dict[str, int]:
    """ASAP unit-time levels: time(v) = 1 + max(time(parents)), sources at 1.

    Raises CycleDetected if the graph has a cycle.
    """
    times: dict[str, int] = {}
    state: dict[str, int] = {}  # 1 = in progress, 2 = done

    def visit(node: str, stack: list[str]):
        if state.get(node) == 2:
            return
        if state.get(node) == 1:
            raise CycleDetected(" -> ".join(stack + [node]))
        state[node] = 1
        preds = parents.get(node, ())
        if not preds:
            times[node] = 1
        else:
            stack.append(node)
            for p in preds:
                visit(p, stack)
            stack.pop()
            times[node] = 1 + max(times[p] for p in preds)
        state[node] = 2

    for node in parents:
        visit(node, [])
    return times


def value_lifetimes(values: Sequence[ValueSpec]) -> LifetimeTable:
    """Interval-based lifetime table and per-step memory for a value graph.

    A value is counted at step t iff it was generated at or before t and
    either some consumer finishes after t, or it was generated exactly at t,
    or it is terminal and t has not passed the final step.
    """
    parents = {v.name: v.parents for v in values}
    times = levelized_schedule(parents)
    final = max(times.values()) if times else 0

    consumers: dict[str, list[int]] = {v.name: [] for v in values}
    for v in values:
        for p in set(v.parents):
            consumers[p].append(times[v.name])

    rows = []
    for v in values:
        gen = times[v.name]
        uses = consumers[v.name]
        last = final if v.terminal else (max(uses) if uses else gen)
        rows.append(LifetimeRow(v.name, gen, max(last, gen), v.size))

    per_step = []
    for t in range(1, final + 1):
        total = 0
        for row, v in zip(rows, values):
            if row.gen_time > t:
                continue
            alive = row.gen_time == t or any(u > t for u in consumers[v.name])
            if v.terminal and t <= final:
                alive = True
            if alive:
                total += row.size
        per_step.append(total)
    return LifetimeTable(rows=tuple(rows), per_step_memory=tuple(per_step))


# ---------------------------------------------------------------------------
# Arch -> block value graphs

def block_value_graph(arch: NetworkArch, block_index: int, shapes: ShapeInfo | None = None):
    """Materialized values of one block, with identity ops elided as aliases."""
    if shapes is None:
        shapes = infer_shapes(arch)
    block = arch.blocks[block_index]
    bs = shapes.blocks[block_index]
    values: list[ValueSpec] = [ValueSpec("r1", (), bs.input.elements)]
    slot_value = ["r1"]  # slot s -> materialized value name, index s-1
    included: set[str] = set()
    for k, cell in enumerate(block.cells, start=1):
        n1, n2, n3 = rep_names(k)
        sides = []
        for slot, op, name in ((cell.input1, cell.op1, n1), (cell.input2, cell.op2, n2)):
            src = slot_value[slot - 1]
            if op.is_identity:
                sides.append(src)
            else:
                values.append(ValueSpec(name, (src,), bs.reps[name].elements))
                sides.append(name)
        values.append(ValueSpec(n3, tuple(sides), bs.reps[n3].elements))
        slot_value.append(n3)
        if cell.combine.included:
            included.add(n3)
    return [
        ValueSpec(v.name, v.parents, v.size, terminal=v.name in included) for v in values
    ]


@dataclass(frozen=True)
class MemoryEstimate:
    param_bytes: int
    peak_intermediate_bytes: int
    lifetime: LifetimeTable  # table of the peak block
    per_block: tuple[LifetimeTable, ...]
    peak_block_index: int

    @property
    def total_bytes(self) -> int:
        return self.param_bytes + self.peak_intermediate_bytes


# ---------------------------------------------------------------------------
# Parameter memory

def _op_weights(op: OpKind, c_in: int, c_out: int, include_bias: bool) -> int:
    if op is OpKind.CONV3X3 or op is OpKind.DILCONV3X3:
        n = 9 * c_in * c_out
    elif op is OpKind.DWCONV3X3:
        n = 9 * c_in + c_in * c_out
    elif op is OpKind.DWCONV5X5:
        n = 25 * c_in + c_in * c_out
    elif op is OpKind.CONV1X7_7X1:
        # 1x7 to c_mid followed by 7x1 to c_out, with c_mid = c_out.
        n = 7 * c_in * c_out + 7 * c_out * c_out
    else:  # pooling and identity carry no weights
        return 0
    if include_bias:
        n += c_out
    return n


def weight_count(arch: NetworkArch, include_bias: bool = False) -> int:
    """Total learnable weights of all op layers plus stem/head where enabled."""
    shapes = infer_shapes(arch)
    total = 0
    if arch.stem_enabled:
        total += 9 * arch.input_shape.channels * arch.channel_width
        if include_bias:
            total += arch.channel_width
    for block, bs in zip(arch.blocks, shapes.blocks):
        for k, cell in enumerate(block.cells, start=1):
            n1, n2, _ = rep_names(k)
            for slot, op, name in ((cell.input1, cell.op1, n1), (cell.input2, cell.op2, n2)):
                c_in = bs.slots[slot - 1].channels
                c_out = bs.reps[name].channels if not op.is_identity else c_in
                total += _op_weights(op, c_in, c_out, include_bias)
    if arch.num_classes > 0 and shapes.head_input is not None:
        total += shapes.head_input.channels * arch.num_classes
        if include_bias:
            total += arch.num_classes
    return total


def param_memory(arch: NetworkArch, bytes_per_weight: int = 2, include_bias: bool = False) -> int:
    return weight_count(arch, include_bias=include_bias) * bytes_per_weight


# ---------------------------------------------------------------------------
# Full estimate

def estimate_memory(
    arch: NetworkArch,
    bytes_per_element: int = 2,
    bytes_per_weight: int = 2,
    include_bias: bool = False,
) -> MemoryEstimate:
    shapes = infer_shapes(arch)
    tables = tuple(
        value_lifetimes(block_value_graph(arch, b, shapes)) for b in range(len(arch.blocks))
    )
    peaks = [t.peak for t in tables]
    peak_idx = max(range(len(peaks)), key=lambda i: peaks[i]) if peaks else 0
    return MemoryEstimate(
        param_bytes=param_memory(arch, bytes_per_weight, include_bias),
        peak_intermediate_bytes=(peaks[peak_idx] if peaks else 0) * bytes_per_element,
        lifetime=tables[peak_idx] if tables else LifetimeTable((), ()),
        per_block=tables,
        peak_block_index=peak_idx,
    )


def peak_intermediate_memory(arch: NetworkArch, bytes_per_element: int = 2) -> MemoryEstimate:
    return estimate_memory(arch, bytes_per_element=bytes_per_element)


def lifetime_csv(table: LifetimeTable) -> str:
    """Render a lifetime table as CSV: one row per value, asterisks over its span."""
    depth = table.depth
    header = ["rep", "size", "gen", "last_use"] + [f"t{t}" for t in range(1, depth + 1)]
    lines = [",".join(header)]
    for row in table.rows:
        marks = [
            "*" if row.gen_time <= t <= row.last_use_time else ""
            for t in range(1, depth + 1)
        ]
        lines.append(
            ",".join([row.name, str(row.size), str(row.gen_time), str(row.last_use_time)] + marks)
        )
    lines.append(",".join(["memory", "", "", ""] + [str(m) for m in table.per_step_memory]))
    return "\n".join(lines) + "\n"
