"""Lifetime-based peak-memory estimation, step by step.

Reproduces the unit-size example: ten intermediate representations, one unit
of data each; the lifetime table shows when each value is generated and
discarded, and the per-step totals peak at 4 units.
"""

from memsearch import Cell, CombineMode, CombineSpec, OpKind, estimate_memory
from memsearch.arch import Block, NetworkArch, TensorShape, default_arch
from memsearch.memory import lifetime_csv


def unit_block():
    cells = (
        Cell(1, 1, OpKind.DWCONV3X3, OpKind.CONV1X7_7X1, CombineSpec(CombineMode.SUM, False)),
        Cell(2, 1, OpKind.CONV3X3, OpKind.DWCONV5X5, CombineSpec(CombineMode.SUM, True)),
        Cell(2, 2, OpKind.CONV3X3, OpKind.DILCONV3X3, CombineSpec(CombineMode.SUM, True)),
    )
    return NetworkArch(
        blocks=(Block(cells, stride=1),),
        channel_width=1,
        input_shape=TensorShape(1, 1, 1),
        stem_enabled=False,
        num_classes=0,
    )


def main():
    est = estimate_memory(unit_block(), bytes_per_element=1)
    table = est.lifetime
    depth = table.depth

    print("Lifetime plot (each representation has size 1):")
    print("         " + "".join(f"T{t:<3}" for t in range(1, depth + 1)))
    for row in table.rows:
        marks = "".join(
            " *  " if row.gen_time <= t <= row.last_use_time else " .  "
            for t in range(1, depth + 1)
        )
        print(f"  {row.name:>4} {marks}")
    print("  mem  " + "".join(f"{m:<4}" for m in table.per_step_memory))
    print(f"\nPeak intermediate memory: {est.peak_intermediate_bytes} units")
    print("The block input is read by three layers that all finish at T=2,")
    print("so it is stored at T=1 and discarded once they complete.\n")

    print("CSV rendering (what `memsearch estimate --lifetime-csv` writes):")
    print(lifetime_csv(table))

    arch = default_arch()
    est = estimate_memory(arch)  # 2 bytes per element and per weight
    print(f"Default 5-block network: params {est.param_bytes} B + "
          f"peak intermediates {est.peak_intermediate_bytes} B "
          f"= {est.total_bytes} B total (peak in block {est.peak_block_index + 1})")


if __name__ == "__main__":
    main()
