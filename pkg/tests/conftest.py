import json
from pathlib import Path

import pytest

from memsearch.arch import (
    Block,
    Cell,
    CombineMode,
    CombineSpec,
    NetworkArch,
    OpKind,
    TensorShape,
    default_arch,
    to_json_obj,
)

DATA_DIR = Path(__file__).parent / "data"


def build_figure_block_arch() -> NetworkArch:
    """The running example block: three cells, ten representations, unit sizes.

    Cell 1 feeds both its layers from the block input (dw3x3 and the 1x7/7x1
    factorized conv, summed, not part of the block output); cell 2 reads the
    first cell's output and the block input (dw5x5 on the input), cell 3 reads
    the first cell's output twice. With channel width 1 and a 1x1x1 input all
    representations have size one element.
    """
    return NetworkArch(
        blocks=(
            Block(
                cells=(
                    Cell(1, 1, OpKind.DWCONV3X3, OpKind.CONV1X7_7X1,
                         CombineSpec(CombineMode.SUM, False)),
                    Cell(2, 1, OpKind.CONV3X3, OpKind.DWCONV5X5,
                         CombineSpec(CombineMode.SUM, True)),
                    Cell(2, 2, OpKind.CONV3X3, OpKind.DILCONV3X3,
                         CombineSpec(CombineMode.SUM, True)),
                ),
                stride=1,
            ),
        ),
        channel_width=1,
        input_shape=TensorShape(1, 1, 1),
        stem_enabled=False,
        num_classes=0,
    )


@pytest.fixture
def figure_arch() -> NetworkArch:
    return build_figure_block_arch()


@pytest.fixture
def small_base() -> NetworkArch:
    """A two-block base cheap enough for exhaustive engine tests."""
    return default_arch(
        num_blocks=2,
        channel_width=8,
        input_shape=TensorShape(8, 8, 3),
        strides=(1, 2),
        num_classes=4,
    )


@pytest.fixture(scope="session", autouse=True)
def fig3_json_file():
    DATA_DIR.mkdir(exist_ok=True)
    path = DATA_DIR / "fig3.json"
    path.write_text(
        json.dumps(to_json_obj(build_figure_block_arch()), sort_keys=True, indent=1),
        encoding="utf-8",
    )
    return path
