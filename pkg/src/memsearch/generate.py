"""Grow/trim candidate generation with closed-form search-space counts."""

from __future__ import annotations

from dataclasses import dataclass

from .arch import (
    Block,
    Cell,
    CombineMode,
    CombineSpec,
    NetworkArch,
    OpKind,
    canonical_hash,
    validate,
)

# Enumeration orders are part of the output contract: same base, same list.
GROW_OPS = (
    OpKind.CONV3X3,
    OpKind.DWCONV3X3,
    OpKind.DWCONV5X5,
    OpKind.CONV1X7_7X1,
    OpKind.AVGPOOL3X3,
    OpKind.MAXPOOL3X3,
    OpKind.DILCONV3X3,
)

# All four legal (included, concat, sum) codes, ordered by their 3-bit value.
COMBINE_CODES = (
    CombineSpec(CombineMode.SUM, False),
    CombineSpec(CombineMode.CONCAT, False),
    CombineSpec(CombineMode.SUM, True),
    CombineSpec(CombineMode.CONCAT, True),
)


@dataclass(frozen=True)
class GrowAction:
    cell: Cell


@dataclass(frozen=True)
class TrimAction:
    kind: str  # replace_layer_with_identity | remove_cell | remove_concat_edge
    block_index: int  # 1-based
    cell_index: int  # 1-based
    op_slot: int = 0  # 1 or 2 for layer replacement, else 0

    def describe(self) -> str:
        b, k = self.block_index, self.cell_index
        if self.kind == "replace_layer_with_identity":
            return f"block {b}: op{self.op_slot} of cell {k} -> identity"
        if self.kind == "remove_cell":
            return f"block {b}: remove cell {k}"
        return f"block {b}: drop output edge of cell {k}"


@dataclass(frozen=True)
class GeneratedCandidate:
    arch: NetworkArch
    action: str  # "grow" | "trim"
    detail: str


def available_inputs(base: NetworkArch) -> int:
    """Slots selectable by a cell appended at the tail of every block."""
    if not base.blocks:
        return 0
    return 1 + min(len(b.cells) for b in base.blocks)


def enumerate_grow_cells(base: NetworkArch) -> list[Cell]:
    """Raw grow enumeration, before validation and dedup."""
    n_inputs = available_inputs(base)
    return [
        Cell(i1, i2, op1, op2, combine)
        for i1 in range(1, n_inputs + 1)
        for i2 in range(1, n_inputs + 1)
        for op1 in GROW_OPS
        for op2 in GROW_OPS
        for combine in COMBINE_CODES
    ]


def apply_grow(base: NetworkArch, cell: Cell) -> NetworkArch:
    """Append the same new cell to every block."""
    blocks = tuple(Block(cells=b.cells + (cell,), stride=b.stride) for b in base.blocks)
    return NetworkArch(
        blocks=blocks,
        channel_width=base.channel_width,
        input_shape=base.input_shape,
        stem_enabled=base.stem_enabled,
        num_classes=base.num_classes,
    )


def enumerate_trim_actions(base: NetworkArch) -> list[TrimAction]:
    """Raw trim enumeration: layer replacements, cell removals, edge removals."""
    actions = []
    for b, block in enumerate(base.blocks, start=1):
        for k, cell in enumerate(block.cells, start=1):
            if not cell.op1.is_identity:
                actions.append(TrimAction("replace_layer_with_identity", b, k, 1))
            if not cell.op2.is_identity:
                actions.append(TrimAction("replace_layer_with_identity", b, k, 2))
        for k in range(1, len(block.cells) + 1):
            actions.append(TrimAction("remove_cell", b, k))
        for k, cell in enumerate(block.cells, start=1):
            if cell.combine.included:
                actions.append(TrimAction("remove_concat_edge", b, k))
    return actions


def _cascade(cells: tuple[Cell, ...], removed: set[int]) -> tuple[Cell, ...]:
    """Transitive cleanup after removals, then slot re-indexing.

    A cell goes away if it reads a removed slot (its layer lost the input) or
    if it is not included and nothing reads its output any more.
    """
    alive = [k for k in range(1, len(cells) + 1) if k not in removed]
    changed = True
    while changed:
        changed = False
        for k in list(alive):
            cell = cells[k - 1]
            if any(s > 1 and (s - 1) in removed for s in (cell.input1, cell.input2)):
                alive.remove(k)
                removed.add(k)
                changed = True
        for k in list(alive):
            cell = cells[k - 1]
            if cell.combine.included:
                continue
            feeds = any(
                j > k and (cells[j - 1].input1 == k + 1 or cells[j - 1].input2 == k + 1)
                for j in alive
            )
            if not feeds:
                alive.remove(k)
                removed.add(k)
                changed = True
    slot_map = {1: 1}
    for new_pos, k in enumerate(alive, start=1):
        slot_map[k + 1] = new_pos + 1
    return tuple(
        Cell(
            slot_map[cells[k - 1].input1],
            slot_map[cells[k - 1].input2],
            cells[k - 1].op1,
            cells[k - 1].op2,
            cells[k - 1].combine,
        )
        for k in alive
    )


def apply_trim(base: NetworkArch, action: TrimAction) -> NetworkArch:
    """Apply one trim action (with cascade) to exactly one block."""
    b = action.block_index - 1
    block = base.blocks[b]
    cells = block.cells
    k = action.cell_index
    if action.kind == "replace_layer_with_identity":
        cell = cells[k - 1]
        new_cell = Cell(
            cell.input1,
            cell.input2,
            OpKind.IDENTITY if action.op_slot == 1 else cell.op1,
            OpKind.IDENTITY if action.op_slot == 2 else cell.op2,
            cell.combine,
        )
        new_cells = cells[: k - 1] + (new_cell,) + cells[k:]
    elif action.kind == "remove_cell":
        new_cells = _cascade(cells, {k})
    elif action.kind == "remove_concat_edge":
        cell = cells[k - 1]
        excluded = Cell(
            cell.input1, cell.input2, cell.op1, cell.op2, CombineSpec(cell.combine.mode, False)
        )
        new_cells = _cascade(cells[: k - 1] + (excluded,) + cells[k:], set())
    else:
        raise ValueError(f"unknown trim kind: {action.kind}")
    blocks = list(base.blocks)
    blocks[b] = Block(cells=new_cells, stride=block.stride)
    return NetworkArch(
        blocks=tuple(blocks),
        channel_width=base.channel_width,
        input_shape=base.input_shape,
        stem_enabled=base.stem_enabled,
        num_classes=base.num_classes,
    )


def _emit(base_hash: str, raw: list[tuple[NetworkArch, str, str]]) -> list[GeneratedCandidate]:
    seen = {base_hash}
    out = []
    for arch, action, detail in raw:
        if validate(arch):
            continue
        h = canonical_hash(arch)
        if h in seen:
            continue
        seen.add(h)
        out.append(GeneratedCandidate(arch, action, detail))
    return out


def grow_candidates(base: NetworkArch) -> list[GeneratedCandidate]:
    """All valid, structurally distinct one-cell growths of the base network."""
    raw = [
        (
            apply_grow(base, cell),
            "grow",
            f"append cell (i1={cell.input1}, i2={cell.input2}, "
            f"{cell.op1.value}, {cell.op2.value}, {cell.combine.mode.value}"
            f"{'+out' if cell.combine.included else ''})",
        )
        for cell in enumerate_grow_cells(base)
    ]
    return _emit(canonical_hash(base), raw)


def trim_candidates(base: NetworkArch) -> list[GeneratedCandidate]:
    """All valid, structurally distinct single-action trims of the base network."""
    raw = [
        (apply_trim(base, action), "trim", action.describe())
        for action in enumerate_trim_actions(base)
    ]
    return _emit(canonical_hash(base), raw)


def generate_candidates(base: NetworkArch) -> list[GeneratedCandidate]:
    """Grow then trim candidates, deduplicated across the union."""
    combined = grow_candidates(base) + trim_candidates(base)
    seen = set()
    out = []
    for cand in combined:
        h = canonical_hash(cand.arch)
        if h not in seen:
            seen.add(h)
            out.append(cand)
    return out


@dataclass(frozen=True)
class SearchSpaceSizes:
    """Closed-form pre-validation counts of the per-round search space.

    grow_combine_squared is the alternate form that squares the number of
    combine choices; it is reported alongside because the two disagree (a cell
    makes one combine choice, so the default count uses the plain factor).
    """

    grow: int
    trim: int
    grow_combine_squared: int


def search_space_sizes(base: NetworkArch) -> SearchSpaceSizes:
    n_inputs = available_inputs(base)
    n_ops = len(GROW_OPS)
    n_codes = len(COMBINE_CODES)
    grow = n_inputs**2 * n_ops**2 * n_codes
    trim = 0
    for block in base.blocks:
        layers = sum(
            (0 if c.op1.is_identity else 1) + (0 if c.op2.is_identity else 1)
            for c in block.cells
        )
        cells = len(block.cells)
        edges = sum(1 for c in block.cells if c.combine.included)
        trim += layers + cells + edges
    return SearchSpaceSizes(grow=grow, trim=trim, grow_combine_squared=grow * n_codes)
