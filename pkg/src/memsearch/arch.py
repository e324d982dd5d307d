"""Architecture IR: blocks, cells, tuple encoding, shape inference, validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable


class ArchError(Exception):
    """Base class for IR errors."""


class InvalidContext(ArchError):
    """An input slot index is outside the encoding context."""


class MalformedVector(ArchError):
    """A binary vector does not decode to a legal field."""


class ShapeMismatch(ArchError):
    """Tensor shapes cannot be reconciled (sum/concat/stride constraints)."""


class OpKind(Enum):
    CONV3X3 = "conv3x3"
    DWCONV3X3 = "dwconv3x3"
    DWCONV5X5 = "dwconv5x5"
    CONV1X7_7X1 = "conv1x7_7x1"
    AVGPOOL3X3 = "avgpool3x3"
    MAXPOOL3X3 = "maxpool3x3"
    DILCONV3X3 = "dilconv3x3"
    IDENTITY = "identity"

    @property
    def is_identity(self) -> bool:
        return self is OpKind.IDENTITY

    @property
    def is_pool(self) -> bool:
        return self in (OpKind.AVGPOOL3X3, OpKind.MAXPOOL3X3)


# Bit position (from the least-significant end) of each non-identity op in the
# 7-bit layer vector; identity is the all-zeros vector.
_OP_BIT = {
    OpKind.CONV3X3: 0,
    OpKind.DWCONV3X3: 1,
    OpKind.DWCONV5X5: 2,
    OpKind.CONV1X7_7X1: 3,
    OpKind.AVGPOOL3X3: 4,
    OpKind.MAXPOOL3X3: 5,
    OpKind.DILCONV3X3: 6,
}
_BIT_OP = {v: k for k, v in _OP_BIT.items()}

OP_VECTOR_LEN = 7
COMBINE_VECTOR_LEN = 3


class CombineMode(Enum):
    SUM = "sum"
    CONCAT = "concat"


@dataclass(frozen=True)
class CombineSpec:
    """Combining layer: sum or concat, optionally part of the block output."""

    mode: CombineMode
    included: bool

    def encode(self) -> tuple[int, int, int]:
        # (included, concat, sum) bits, written most-significant first.
        return (
            1 if self.included else 0,
            1 if self.mode is CombineMode.CONCAT else 0,
            1 if self.mode is CombineMode.SUM else 0,
        )

    @staticmethod
    def decode(vector: Iterable[int]) -> "CombineSpec":
        bits = tuple(int(b) for b in vector)
        if len(bits) != COMBINE_VECTOR_LEN or any(b not in (0, 1) for b in bits):
            raise MalformedVector(f"combine vector must be 3 bits of 0/1, got {bits}")
        inc, concat, summ = bits
        if concat + summ != 1:
            raise MalformedVector(f"exactly one of concat/sum bits must be set: {bits}")
        return CombineSpec(CombineMode.CONCAT if concat else CombineMode.SUM, bool(inc))


@dataclass(frozen=True)
class Cell:
    """Two parallel op layers plus a combining layer.

    input1/input2 are 1-based slot indices: slot 1 is the block input, slot
    k+1 is the output of the block's k-th cell.
    """

    input1: int
    input2: int
    op1: OpKind
    op2: OpKind
    combine: CombineSpec

    def __post_init__(self):
        if self.input1 < 1 or self.input2 < 1:
            raise InvalidContext(f"slot indices are 1-based: ({self.input1}, {self.input2})")


@dataclass(frozen=True)
class Block:
    cells: tuple[Cell, ...]
    stride: int = 1

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ArchError(f"block stride must be 1 or 2, got {self.stride}")


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if min(self.height, self.width, self.channels) < 1:
            raise ArchError(f"all dimensions must be >= 1: {self}")

    @property
    def elements(self) -> int:
        return self.height * self.width * self.channels


DEFAULT_STRIDES = (1, 2, 1, 2, 1)


@dataclass(frozen=True)
class NetworkArch:
    """Template network: ordered blocks, stem/head config, channel width."""

    blocks: tuple[Block, ...]
    channel_width: int = 64
    input_shape: TensorShape = TensorShape(32, 32, 3)
    stem_enabled: bool = True
    num_classes: int = 10  # 0 disables the classifier head


# ---------------------------------------------------------------------------
# Tuple encoding


def _one_hot(length: int, bit: int) -> tuple[int, ...]:
    # Written most-significant first: bit 0 is the rightmost position.
    vec = [0] * length
    vec[length - 1 - bit] = 1
    return tuple(vec)


def _from_one_hot(vector: Iterable[int], what: str) -> int:
    bits = tuple(int(b) for b in vector)
    if any(b not in (0, 1) for b in bits) or sum(bits) != 1:
        raise MalformedVector(f"{what} vector must be one-hot, got {bits}")
    return len(bits) - 1 - bits.index(1)


def encode_op(op: OpKind) -> tuple[int, ...]:
    if op.is_identity:
        return (0,) * OP_VECTOR_LEN
    return _one_hot(OP_VECTOR_LEN, _OP_BIT[op])


def decode_op(vector: Iterable[int]) -> OpKind:
    bits = tuple(int(b) for b in vector)
    if len(bits) != OP_VECTOR_LEN or any(b not in (0, 1) for b in bits):
        raise MalformedVector(f"op vector must be 7 bits of 0/1, got {bits}")
    if sum(bits) == 0:
        return OpKind.IDENTITY
    if sum(bits) > 1:
        raise MalformedVector(f"op vector has more than one bit set: {bits}")
    return _BIT_OP[len(bits) - 1 - bits.index(1)]


def encode_tuple(cell: Cell, context_size: int):
    """Encode a cell as the five binary vectors (I1, I2, L1, L2, O).

    The I vectors are one-hot over context_size slots; slot s sets bit s-1
    counting from the least-significant (rightmost) position.
    """
    if cell.input1 > context_size or cell.input2 > context_size:
        raise InvalidContext(
            f"input slots ({cell.input1}, {cell.input2}) exceed context of {context_size}"
        )
    return (
        _one_hot(context_size, cell.input1 - 1),
        _one_hot(context_size, cell.input2 - 1),
        encode_op(cell.op1),
        encode_op(cell.op2),
        cell.combine.encode(),
    )


def decode_tuple(vectors) -> Cell:
    """Inverse of encode_tuple; raises MalformedVector on illegal vectors."""
    i1, i2, l1, l2, o = vectors
    return Cell(
        input1=_from_one_hot(i1, "input1") + 1,
        input2=_from_one_hot(i2, "input2") + 1,
        op1=decode_op(l1),
        op2=decode_op(l2),
        combine=CombineSpec.decode(o),
    )


# ---------------------------------------------------------------------------
# Shape inference


def _op_output_shape(op: OpKind, in_shape: TensorShape, stride: int, width: int) -> TensorShape:
    if op.is_identity:
        if stride != 1:
            raise ShapeMismatch("identity cannot apply stride 2")
        return in_shape
    h = -(-in_shape.height // stride)  # ceil division: same-padding convention
    w = -(-in_shape.width // stride)
    if op.is_pool:
        return TensorShape(h, w, in_shape.channels)
    return TensorShape(h, w, width)


@dataclass
class BlockShapes:
    """Shapes of every representation of one block, keyed r1..r{3n+1}."""

    input: TensorShape
    reps: dict[str, TensorShape] = field(default_factory=dict)
    slots: list = field(default_factory=list)  # slot s shape at index s-1
    output: TensorShape | None = None


@dataclass
class ShapeInfo:
    blocks: list[BlockShapes]
    head_input: TensorShape | None


def rep_names(cell_index: int) -> tuple[str, str, str]:
    """Structural names of cell k's op1 output, op2 output and combine output."""
    k = cell_index
    return (f"r{3 * k - 1}", f"r{3 * k}", f"r{3 * k + 1}")


def _infer_block(block: Block, input_shape: TensorShape, width: int) -> BlockShapes:
    shapes = BlockShapes(input=input_shape)
    shapes.reps["r1"] = input_shape
    shapes.slots = [input_shape]
    for k, cell in enumerate(block.cells, start=1):
        if cell.input1 > k or cell.input2 > k:
            raise InvalidContext(
                f"cell {k} references slot ({cell.input1}, {cell.input2}) not yet defined"
            )
        outs = []
        for slot, op in ((cell.input1, cell.op1), (cell.input2, cell.op2)):
            src = shapes.slots[slot - 1]
            stride = block.stride if slot == 1 else 1
            outs.append(_op_output_shape(op, src, stride, width))
        a, b = outs
        if cell.combine.mode is CombineMode.SUM:
            if a != b:
                raise ShapeMismatch(f"sum combine of cell {k} received {a} and {b}")
            out = a
        else:
            if (a.height, a.width) != (b.height, b.width):
                raise ShapeMismatch(f"concat combine of cell {k} received {a} and {b}")
            out = TensorShape(a.height, a.width, a.channels + b.channels)
        n1, n2, n3 = rep_names(k)
        shapes.reps[n1], shapes.reps[n2], shapes.reps[n3] = a, b, out
        shapes.slots.append(out)
    included = [shapes.slots[k] for k, c in enumerate(block.cells, start=1) if c.combine.included]
    if not included:
        raise ShapeMismatch("block has no included cell output")
    spatial = {(s.height, s.width) for s in included}
    if len(spatial) != 1:
        raise ShapeMismatch(f"included cell outputs disagree on spatial dims: {spatial}")
    h, w = spatial.pop()
    shapes.output = TensorShape(h, w, sum(s.channels for s in included))
    return shapes


def stem_output_shape(arch: NetworkArch) -> TensorShape:
    if not arch.stem_enabled:
        return arch.input_shape
    return TensorShape(arch.input_shape.height, arch.input_shape.width, arch.channel_width)


def infer_shapes(arch: NetworkArch) -> ShapeInfo:
    """Deterministic shape inference for every representation of every block.

    Raises ShapeMismatch (or InvalidContext) on the first inconsistency.
    """
    current = stem_output_shape(arch)
    blocks = []
    for block in arch.blocks:
        bs = _infer_block(block, current, arch.channel_width)
        blocks.append(bs)
        current = bs.output
    return ShapeInfo(blocks=blocks, head_input=current if arch.blocks else None)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind} at {self.where}" + (f": {self.detail}" if self.detail else "")


def validate(arch: NetworkArch) -> list[Violation]:
    """Return all structural violations; an empty list means the arch is valid."""
    violations: list[Violation] = []
    for b, block in enumerate(arch.blocks, start=1):
        for k, cell in enumerate(block.cells, start=1):
            if cell.input1 > k or cell.input2 > k:
                violations.append(
                    Violation(
                        "ForwardReference",
                        f"block {b} cell {k}",
                        f"inputs ({cell.input1}, {cell.input2}) with {k} slots available",
                    )
                )
        if not any(c.combine.included for c in block.cells):
            violations.append(Violation("EmptyBlockOutput", f"block {b}"))
    if not violations:
        try:
            infer_shapes(arch)
        except ShapeMismatch as e:
            violations.append(Violation("ShapeMismatch", "shape inference", str(e)))
        except InvalidContext as e:  # pragma: no cover - caught above structurally
            violations.append(Violation("ForwardReference", "shape inference", str(e)))
    return violations


# ---------------------------------------------------------------------------
# JSON serialization and canonical hashing

SCHEMA_VERSION = 1


def to_json_obj(arch: NetworkArch) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "input_shape": {
            "height": arch.input_shape.height,
            "width": arch.input_shape.width,
            "channels": arch.input_shape.channels,
        },
        "channel_width": arch.channel_width,
        "stem": arch.stem_enabled,
        "num_classes": arch.num_classes,
        "blocks": [
            {
                "stride": block.stride,
                "cells": [
                    {
                        "i1": c.input1,
                        "i2": c.input2,
                        "op1": c.op1.value,
                        "op2": c.op2.value,
                        "combine": {"mode": c.combine.mode.value, "included": c.combine.included},
                    }
                    for c in block.cells
                ],
            }
            for block in arch.blocks
        ],
    }


def from_json_obj(obj: dict) -> NetworkArch:
    if obj.get("version") != SCHEMA_VERSION:
        raise ArchError(f"unsupported schema version: {obj.get('version')!r}")
    shp = obj["input_shape"]
    return NetworkArch(
        blocks=tuple(
            Block(
                cells=tuple(
                    Cell(
                        input1=c["i1"],
                        input2=c["i2"],
                        op1=OpKind(c["op1"]),
                        op2=OpKind(c["op2"]),
                        combine=CombineSpec(
                            CombineMode(c["combine"]["mode"]), bool(c["combine"]["included"])
                        ),
                    )
                    for c in blk["cells"]
                ),
                stride=blk["stride"],
            )
            for blk in obj["blocks"]
        ),
        channel_width=obj["channel_width"],
        input_shape=TensorShape(shp["height"], shp["width"], shp["channels"]),
        stem_enabled=bool(obj["stem"]),
        num_classes=obj["num_classes"],
    )


def dumps(arch: NetworkArch) -> str:
    return json.dumps(to_json_obj(arch), indent=2, sort_keys=True)


def loads(text: str) -> NetworkArch:
    return from_json_obj(json.loads(text))


def canonical_hash(arch: NetworkArch) -> str:
    """SHA-256 of the canonical JSON form; stable across processes and platforms."""
    payload = json.dumps(to_json_obj(arch), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Convenience builders


def default_seed_cell() -> Cell:
    return Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, CombineSpec(CombineMode.SUM, True))


def default_arch(
    num_blocks: int = 5,
    channel_width: int = 64,
    input_shape: TensorShape = TensorShape(32, 32, 3),
    strides: tuple[int, ...] | None = None,
    num_classes: int = 10,
    stem_enabled: bool = True,
) -> NetworkArch:
    """One seed cell per block: both ops conv3x3 on the block input, sum, included."""
    if strides is None:
        strides = tuple(DEFAULT_STRIDES[i % len(DEFAULT_STRIDES)] for i in range(num_blocks))
    if len(strides) != num_blocks:
        raise ArchError("strides length must match num_blocks")
    return NetworkArch(
        blocks=tuple(Block(cells=(default_seed_cell(),), stride=s) for s in strides),
        channel_width=channel_width,
        input_shape=input_shape,
        stem_enabled=stem_enabled,
        num_classes=num_classes,
    )
