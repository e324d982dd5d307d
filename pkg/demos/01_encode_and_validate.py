"""Walk through the cell tuple encoding and architecture validation.

Builds the running three-cell example block, shows how each cell round-trips
through its five binary vectors, and demonstrates what the validator rejects.
"""

from memsearch import (
    Cell,
    CombineMode,
    CombineSpec,
    OpKind,
    decode_tuple,
    encode_tuple,
    validate,
)
from memsearch.arch import Block, NetworkArch, TensorShape, dumps


def vec(bits):
    return "".join(str(b) for b in bits)


def main():
    cells = (
        Cell(1, 1, OpKind.DWCONV3X3, OpKind.CONV1X7_7X1, CombineSpec(CombineMode.SUM, False)),
        Cell(2, 1, OpKind.CONV3X3, OpKind.DWCONV5X5, CombineSpec(CombineMode.SUM, True)),
        Cell(2, 2, OpKind.CONV3X3, OpKind.DILCONV3X3, CombineSpec(CombineMode.SUM, True)),
    )
    print("Tuple encodings in a 4-slot context (slot 1 is the block input):")
    for k, cell in enumerate(cells, start=1):
        i1, i2, l1, l2, o = encode_tuple(cell, 4)
        print(f"  C{k}: I1={vec(i1)} I2={vec(i2)} L1={vec(l1)} L2={vec(l2)} O={vec(o)}")
        assert decode_tuple((i1, i2, l1, l2, o)) == cell
    print("  (each decodes back to the original cell)\n")

    arch = NetworkArch(
        blocks=(Block(cells, stride=1),),
        channel_width=1,
        input_shape=TensorShape(1, 1, 1),
        stem_enabled=False,
        num_classes=0,
    )
    print(f"validate(example block) -> {validate(arch)} (empty list = valid)\n")

    broken = NetworkArch(
        blocks=(Block((Cell(3, 1, OpKind.CONV3X3, OpKind.CONV3X3,
                            CombineSpec(CombineMode.SUM, True)),),),),
    )
    print("A cell referencing a slot that does not exist yet:")
    for violation in validate(broken):
        print(f"  {violation}")

    print("\nArchitecture JSON (the on-disk interchange format):")
    print(dumps(arch))


if __name__ == "__main__":
    main()
