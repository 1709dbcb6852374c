import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpgacnn import goldmodel, imgproc, softfp
from fpgacnn.assembler import HexFormatError
from fpgacnn.goldmodel import OFFSETS, SHAPES, STAGES, TOTAL_WEIGHTS, WeightBank, compare_traces


@pytest.fixture(scope="module")
def w42():
    return goldmodel.gen_weights(42)


@pytest.fixture(scope="module")
def image0():
    return imgproc.compress_to_image_mem(imgproc.fixture_frame(0))


@pytest.fixture(scope="module")
def soft0(image0, w42):
    return goldmodel.forward_soft(image0, w42)


def zero_bank():
    return WeightBank.from_flat(np.zeros(TOTAL_WEIGHTS, np.uint32))


def test_layout_counts():
    assert SHAPES == {
        "conv1": (6, 1, 5, 5),
        "conv2": (16, 6, 5, 5),
        "fc1": (120, 400),
        "fc2": (84, 120),
        "fc3": (36, 84),
    }
    assert OFFSETS == {"conv1": 0, "conv2": 150, "fc1": 2550, "fc2": 50550, "fc3": 60630}
    assert TOTAL_WEIGHTS == 63654


def test_ascii_mapping():
    assert [goldmodel.ascii_for(i) for i in (0, 9, 10, 35)] == [0x30, 0x39, 0x41, 0x5A]
    with pytest.raises(ValueError):
        goldmodel.ascii_for(36)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def test_gen_weights_deterministic():
    assert goldmodel.gen_weights(42) == goldmodel.gen_weights(42)


def test_gen_weights_seeds_differ():
    a = goldmodel.gen_weights(1).flat()
    b = goldmodel.gen_weights(2).flat()
    assert (a != b).mean() >= 0.99


def test_gen_weights_range(w42):
    f = w42.flat().view(np.float32)
    assert f.min() >= -0.5 and f.max() <= 0.5
    assert f.size == TOTAL_WEIGHTS


def test_gen_weights_stream_order():
    # first words come from the first draws of the named generator, in flat order
    rng = np.random.Generator(np.random.PCG64(42))
    first = (rng.random(3) - 0.5).astype(np.float32)
    assert goldmodel.gen_weights(42).conv1.reshape(-1)[:3].tolist() == first.view(np.uint32).tolist()


def test_weight_bank_views(w42):
    flat = w42.flat()
    assert (w42.fc1.reshape(-1) == flat[2550:50550]).all()
    assert w42.floats("fc3").shape == (36, 84)
    assert WeightBank.from_flat(flat) == w42


def test_weight_bank_rejects_bad_sizes():
    with pytest.raises(ValueError):
        WeightBank.from_flat(np.zeros(TOTAL_WEIGHTS - 1, np.uint32))


def test_weight_hex_roundtrip(w42):
    text = goldmodel.write_weight_hex(w42)
    lines = text.splitlines()
    assert len(lines) == 63654
    assert lines[0].startswith("@0000 ")
    assert goldmodel.read_weight_hex(text) == w42


def test_weight_hex_wrong_count(w42):
    text = "".join(goldmodel.write_weight_hex(w42).splitlines(keepends=True)[:-1])
    with pytest.raises(HexFormatError):
        goldmodel.read_weight_hex(text)


def test_weight_hex_malformed(w42):
    lines = goldmodel.write_weight_hex(w42).splitlines()
    lines[10] = "@000a 3f80"
    with pytest.raises(HexFormatError):
        goldmodel.read_weight_hex("\n".join(lines))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**63))
def test_weight_hex_roundtrip_random_banks(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    bank = WeightBank.from_flat(rng.integers(0, 2**32, TOTAL_WEIGHTS, dtype=np.uint64).astype(np.uint32))
    assert goldmodel.read_weight_hex(goldmodel.write_weight_hex(bank)) == bank


def test_image_hex():
    text = goldmodel.write_image_hex([0] * 1024)
    lines = text.splitlines()
    assert len(lines) == 1024 and all(line.endswith(" 00") for line in lines)
    with pytest.raises(HexFormatError):
        goldmodel.read_image_hex(text.replace("@0005 00", "@0005 000"))


@given(st.lists(st.integers(0, 255), min_size=1024, max_size=1024))
def test_image_hex_roundtrip(image):
    assert goldmodel.read_image_hex(goldmodel.write_image_hex(image)) == image


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def test_zero_image_gives_zero_trace(w42):
    soft = goldmodel.forward_soft([0] * 1024, w42)
    native = goldmodel.forward_native([0] * 1024, w42)
    for name in STAGES:
        assert not soft.stages[name].any()
    assert soft.index == 0 and soft.char == "0"
    assert compare_traces(soft, native).ok


def test_border_must_be_zero(w42):
    image = [0] * 1024
    image[0] = 1
    with pytest.raises(ValueError):
        goldmodel.forward_soft(image, w42)
    with pytest.raises(ValueError):
        goldmodel.forward_soft([0] * 1000, w42)


def test_delta_kernel_copies_interior(image0):
    bank = zero_bank()
    conv1 = np.zeros((6, 1, 5, 5), np.float32)
    conv1[:, 0, 2, 2] = 1.0
    bank.conv1[:] = conv1.view(np.uint32)
    trace = goldmodel.forward_soft(image0, bank)
    interior = np.asarray(image0).reshape(32, 32)[2:30, 2:30].astype(np.float32)
    for ch in range(6):
        assert (trace.stages["conv1"][ch].view(np.float32) == interior).all()


def test_stage_shapes(soft0, image0, w42):
    native = goldmodel.forward_native(image0, w42)
    for trace in (soft0, native):
        for name, dims in STAGES.items():
            assert trace.stages[name].shape == dims


def test_relu_postcondition(soft0):
    for name in ("conv1", "pool1", "conv2", "pool2", "fc1", "fc2"):
        assert not (soft0.stages[name] & 0x80000000).any(), name
    assert (soft0.stages["scores"] & 0x80000000).any()  # fc3 is unclamped


def test_input_stage_is_itf(soft0, image0):
    assert soft0.stages["input"].reshape(-1).tolist() == [softfp.itf(v) for v in image0]


def test_argmax_matches_ascii(soft0, image0, w42):
    scores = soft0.scores_float()
    assert soft0.index == int(np.argmax(scores))
    assert soft0.ascii == goldmodel.ascii_for(soft0.index)
    assert goldmodel.predict(image0, w42) == soft0.char


def test_argmax_ties_keep_lowest_index():
    soft_argmax = goldmodel._argmax_soft
    one = 0x3F800000
    assert soft_argmax([0] * 36) == 0
    assert soft_argmax([0, one, one] + [0] * 33) == 1
    assert soft_argmax([0x80000000] + [0] * 35) == 0  # -0 and +0 tie


def test_soft_vs_native_scores_close(soft0, image0, w42):
    native = goldmodel.forward_native(image0, w42)
    report = compare_traces(soft0, native, mode="tolerance", stages=["scores"])
    assert report.ok, str(report)


def test_positive_homogeneity(w42):
    rng = np.random.Generator(np.random.PCG64(3))
    frame = rng.integers(0, 64, size=(224, 224), dtype=np.uint8)
    base = np.array(imgproc.compress_to_image_mem(frame))
    ref = goldmodel.forward_native(base, w42).scores_float()
    for c in (2, 4):
        scaled = goldmodel.forward_native(base * c, w42).scores_float()
        expect = (ref * np.float32(c)).view(np.uint32).astype(np.int64)
        got = scaled.view(np.uint32).astype(np.int64)
        # same-sign values: bit distance is the ulp distance
        assert np.abs(got - expect).max() <= 4
        assert np.argmax(scaled) == np.argmax(ref)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def test_compare_self(soft0):
    report = compare_traces(soft0, soft0)
    assert report.ok and "PASS" in str(report)


def test_compare_names_stage_and_index(soft0):
    stages = {k: v.copy() for k, v in soft0.stages.items()}
    stages["conv1"].reshape(-1)[1234] ^= 1
    other = goldmodel.PredictionTrace(stages, soft0.index, soft0.ascii)
    report = compare_traces(soft0, other)
    assert not report.ok
    bad = [r for r in report.results if not r.ok]
    assert [(r.stage, r.index, r.mismatches) for r in bad] == [("conv1", 1234, 1)]
    assert "conv1" in str(report)


def test_compare_tolerance_bounds(soft0):
    stages = {k: v.copy() for k, v in soft0.stages.items()}
    scores = stages["scores"].view(np.float32)
    scores[0] = scores[0] * np.float32(1.0005)
    near = goldmodel.PredictionTrace(stages, soft0.index, soft0.ascii)
    assert compare_traces(soft0, near, mode="tolerance").ok
    assert not compare_traces(soft0, near).ok
    scores[0] = scores[0] * np.float32(1.01)
    assert not compare_traces(soft0, near, mode="tolerance").ok


def test_compare_rejects_unknown_mode(soft0):
    with pytest.raises(ValueError):
        compare_traces(soft0, soft0, mode="fuzzy")


def test_dump_roundtrip(soft0):
    text = soft0.dump()
    assert text.splitlines()[0] == f"input 0 {int(soft0.stages['input'].reshape(-1)[0]):08x}"
    back = goldmodel.PredictionTrace.from_dump(text)
    assert compare_traces(soft0, back).ok
    assert back.index == soft0.index


def test_dump_rejects_garbage():
    with pytest.raises(ValueError):
        goldmodel.PredictionTrace.from_dump("input 0 zz\n")
