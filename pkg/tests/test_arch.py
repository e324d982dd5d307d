import itertools

import pytest

from memsearch.arch import (
    Block,
    Cell,
    CombineMode,
    CombineSpec,
    InvalidContext,
    MalformedVector,
    NetworkArch,
    OpKind,
    TensorShape,
    canonical_hash,
    decode_tuple,
    default_arch,
    dumps,
    encode_tuple,
    infer_shapes,
    loads,
    validate,
)

SUM_OUT = CombineSpec(CombineMode.SUM, True)
SUM_IN = CombineSpec(CombineMode.SUM, False)
CAT_OUT = CombineSpec(CombineMode.CONCAT, True)


class TestEncoding:
    def test_block_input_one_hot(self):
        cell = Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_IN)
        i1, i2, _, _, _ = encode_tuple(cell, 4)
        assert i1 == (0, 0, 0, 1)
        assert i2 == (0, 0, 0, 1)

    def test_second_slot_one_hot(self):
        cell = Cell(2, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_IN)
        i1, i2, _, _, _ = encode_tuple(cell, 4)
        assert i1 == (0, 0, 1, 0)
        assert i2 == (0, 0, 0, 1)

    def test_identity_is_all_zero_layer_vector(self):
        cell = Cell(1, 1, OpKind.IDENTITY, OpKind.CONV3X3, SUM_IN)
        _, _, l1, l2, _ = encode_tuple(cell, 2)
        assert l1 == (0,) * 7
        assert l2 == (0, 0, 0, 0, 0, 0, 1)

    def test_op_codes_match_published_bit_layout(self):
        codes = {
            OpKind.CONV3X3: (0, 0, 0, 0, 0, 0, 1),
            OpKind.DWCONV3X3: (0, 0, 0, 0, 0, 1, 0),
            OpKind.DWCONV5X5: (0, 0, 0, 0, 1, 0, 0),
            OpKind.CONV1X7_7X1: (0, 0, 0, 1, 0, 0, 0),
            OpKind.AVGPOOL3X3: (0, 0, 1, 0, 0, 0, 0),
            OpKind.MAXPOOL3X3: (0, 1, 0, 0, 0, 0, 0),
            OpKind.DILCONV3X3: (1, 0, 0, 0, 0, 0, 0),
        }
        for op, expected in codes.items():
            cell = Cell(1, 1, op, op, SUM_IN)
            _, _, l1, _, _ = encode_tuple(cell, 1)
            assert l1 == expected, op

    def test_combine_codes(self):
        assert CombineSpec(CombineMode.SUM, False).encode() == (0, 0, 1)
        assert CombineSpec(CombineMode.CONCAT, True).encode() == (1, 1, 0)
        assert CombineSpec(CombineMode.SUM, True).encode() == (1, 0, 1)
        assert CombineSpec(CombineMode.CONCAT, False).encode() == (0, 1, 0)

    def test_decode_published_example(self):
        cell = decode_tuple(
            ((0, 0, 0, 1), (0, 0, 0, 1), (0, 0, 0, 0, 0, 1, 0), (0, 0, 0, 1, 0, 0, 0), (0, 0, 1))
        )
        assert cell == Cell(1, 1, OpKind.DWCONV3X3, OpKind.CONV1X7_7X1, SUM_IN)

    def test_input_out_of_context(self):
        cell = Cell(5, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_IN)
        with pytest.raises(InvalidContext):
            encode_tuple(cell, 4)

    @pytest.mark.parametrize(
        "o_vec", [(1, 1, 1), (0, 0, 0), (1, 0, 0), (0, 1, 1)]
    )
    def test_illegal_combine_codes(self, o_vec):
        vecs = ((0, 1), (0, 1), (0, 0, 0, 0, 0, 0, 1), (0, 0, 0, 0, 0, 0, 1), o_vec)
        with pytest.raises(MalformedVector):
            decode_tuple(vecs)

    def test_non_one_hot_input_rejected(self):
        vecs = ((1, 1), (0, 1), (0,) * 7, (0,) * 7, (0, 0, 1))
        with pytest.raises(MalformedVector):
            decode_tuple(vecs)

    def test_multi_bit_layer_rejected(self):
        vecs = ((0, 1), (0, 1), (0, 0, 0, 0, 0, 1, 1), (0,) * 7, (0, 0, 1))
        with pytest.raises(MalformedVector):
            decode_tuple(vecs)

    def test_round_trip_small_contexts(self):
        combines = [
            CombineSpec(mode, inc)
            for mode in CombineMode
            for inc in (False, True)
        ]
        for context in (2, 3, 4):
            for i1, i2 in itertools.product(range(1, context + 1), repeat=2):
                for op1, op2 in itertools.product(OpKind, repeat=2):
                    for combine in combines:
                        cell = Cell(i1, i2, op1, op2, combine)
                        assert decode_tuple(encode_tuple(cell, context)) == cell


class TestShapes:
    def test_stride1_block_preserves_spatial(self):
        arch = default_arch(num_blocks=1, strides=(1,))
        info = infer_shapes(arch)
        for shape in info.blocks[0].reps.values():
            assert (shape.height, shape.width) == (32, 32)
            assert shape.channels == 64

    def test_stride2_block_halves_spatial(self):
        arch = default_arch(num_blocks=1, strides=(2,))
        info = infer_shapes(arch)
        out = info.blocks[0].output
        assert (out.height, out.width, out.channels) == (16, 16, 64)

    def test_three_included_cells_concat_channels(self):
        cells = (
            Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_OUT),
            Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_OUT),
            Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_OUT),
        )
        arch = NetworkArch(blocks=(Block(cells, stride=2),))
        out = infer_shapes(arch).blocks[0].output
        assert (out.height, out.width, out.channels) == (16, 16, 192)

    def test_blocks_chain(self):
        arch = default_arch(num_blocks=3, strides=(1, 2, 1))
        info = infer_shapes(arch)
        assert info.blocks[1].input == info.blocks[0].output
        assert info.blocks[2].input == info.blocks[1].output

    def test_inference_is_deterministic_across_reserialization(self):
        arch = default_arch()
        a = infer_shapes(arch)
        b = infer_shapes(loads(dumps(arch)))
        assert [bs.reps for bs in a.blocks] == [bs.reps for bs in b.blocks]


class TestValidate:
    def test_figure_block_is_valid(self, figure_arch):
        assert validate(figure_arch) == []

    def test_forward_reference(self):
        block = Block(cells=(Cell(2, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_OUT),))
        arch = NetworkArch(blocks=(block,))
        kinds = [v.kind for v in validate(arch)]
        assert kinds == ["ForwardReference"]

    def test_empty_block_output(self):
        block = Block(cells=(Cell(1, 1, OpKind.CONV3X3, OpKind.CONV3X3, SUM_IN),))
        arch = NetworkArch(blocks=(block,))
        kinds = [v.kind for v in validate(arch)]
        assert kinds == ["EmptyBlockOutput"]

    def test_sum_shape_mismatch(self):
        # pooling preserves the 3 input channels, conv emits 64: sum must fail
        block = Block(cells=(Cell(1, 1, OpKind.CONV3X3, OpKind.AVGPOOL3X3, SUM_OUT),))
        arch = NetworkArch(blocks=(block,), stem_enabled=False)
        kinds = [v.kind for v in validate(arch)]
        assert kinds == ["ShapeMismatch"]

    def test_identity_cannot_take_stride(self):
        block = Block(cells=(Cell(1, 1, OpKind.IDENTITY, OpKind.IDENTITY, SUM_OUT),), stride=2)
        arch = NetworkArch(blocks=(block,))
        kinds = [v.kind for v in validate(arch)]
        assert kinds == ["ShapeMismatch"]


class TestHashAndJson:
    def test_hash_stable_under_reserialization(self):
        arch = default_arch()
        assert canonical_hash(arch) == canonical_hash(loads(dumps(arch)))

    def test_hash_iff_structural_equality(self, figure_arch):
        from memsearch.generate import generate_candidates

        corpus = [figure_arch, default_arch()] + [
            c.arch for c in generate_candidates(default_arch(num_blocks=2, strides=(1, 2)))[:40]
        ]
        for a, b in itertools.combinations(corpus, 2):
            assert (canonical_hash(a) == canonical_hash(b)) == (a == b)
        for a in corpus:
            assert canonical_hash(a) == canonical_hash(loads(dumps(a)))

    def test_json_round_trip(self, figure_arch):
        assert loads(dumps(figure_arch)) == figure_arch

    def test_bad_version_rejected(self):
        import json

        from memsearch.arch import ArchError, from_json_obj, to_json_obj

        obj = to_json_obj(default_arch())
        obj["version"] = 99
        with pytest.raises(ArchError):
            from_json_obj(json.loads(json.dumps(obj)))


def test_tensor_shape_requires_positive_dims():
    from memsearch.arch import ArchError

    with pytest.raises(ArchError):
        TensorShape(0, 4, 4)
