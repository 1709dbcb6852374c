import shutil

import numpy as np
import pytest

from fpgacnn import firmware, goldmodel, imgproc, softfp
from fpgacnn.assembler import assemble
from fpgacnn.isa import Cond, Opcode, decode
from fpgacnn.machine import Machine

ONE = 0x3F800000


def f32(x):
    return softfp.float_to_bits(x)


def run_routine(driver, dm=None, weights=None, image=None, max_cycles=2_000_000):
    program = firmware.with_driver(driver)
    m = Machine(program, weights, image=image)
    for addr, value in (dm or {}).items():
        m.dm[addr] = value
    rep = m.run(max_cycles=max_cycles)
    assert rep.reason == "halt", rep.reason
    return m


ROM = "LLB R2, 0\nLHB R2, 2\n"


def conv_driver(side, in_ch, out_ch, out_base=500):
    return ROM + f"ADD R3, R0, R0\nLLB R4, {side}\nLLB R6, {in_ch}\nLLB R7, {out_ch}\nLLB R29, {out_base}\nJAL CONV\nHLT"


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------


def test_dm_regions():
    sizes = {name: length for name, (_, length) in firmware.DM_REGIONS.items()}
    assert sizes == {
        "input": 1024, "conv1": 4704, "pool1": 1176, "conv2": 1600, "pool2": 400,
        "fc1": 120, "fc2": 84, "work": 400, "scores": 36,
    }
    for name, (start, length) in firmware.DM_REGIONS.items():
        assert start + length <= 8192, name
    # pool1 must survive conv2 writing over the input and conv1 space
    c2 = firmware.DM_REGIONS["conv2"]
    p1 = firmware.DM_REGIONS["pool1"]
    assert c2[0] + c2[1] <= p1[0]


def test_cnn_fits_instruction_memory():
    image = firmware.build_cnn()
    assert len(image.words) <= 1024
    for label in ("MAIN", "PRE_PROCESS", "CONV", "AVG_POOL", "MATRIX_MUL", "OUTPUT_LAYER"):
        assert label in image.symbols


# ---------------------------------------------------------------------------
# PRE_PROCESS
# ---------------------------------------------------------------------------


PRE = "LLB R3, 0\nLHB R3, 1\nLLB R4, 1024\nJAL PRE_PROCESS\nHLT"


def test_pre_process_zero_image():
    m = run_routine(PRE, dm={5: 123}, image=[0] * 1024)
    assert m.dm[:1024] == [0] * 1024


def test_pre_process_converts_values():
    image = [0] * 1024
    image[66] = 255
    image[500] = 7
    m = run_routine(PRE, image=image)
    assert m.dm[66] == 0x437F0000
    assert m.dm[500] == 0x40E00000
    assert m.dm[0] == 0


# ---------------------------------------------------------------------------
# CONV
# ---------------------------------------------------------------------------


def test_conv_delta_kernel():
    kernel = [0] * 25
    kernel[12] = ONE
    pixels = {i: f32(i + 1) for i in range(25)}
    m = run_routine(conv_driver(5, 1, 1), dm=pixels, weights=kernel)
    assert m.dm[500] == f32(13)  # in[2][2]
    assert m.dm[501] == 0  # only one output pixel


def test_conv_all_ones():
    m = run_routine(conv_driver(5, 1, 1), dm={i: ONE for i in range(25)}, weights=[ONE] * 25)
    assert m.dm[500] == 0x41C80000


def test_conv_relu_clamps_negative():
    kernel = [0] * 25
    kernel[12] = f32(-1.0)
    m = run_routine(conv_driver(5, 1, 1), dm={i: f32(3.0) for i in range(25)}, weights=kernel)
    assert m.dm[500] == 0


def test_conv_matches_goldmodel_order():
    # two input channels, two output channels on a 7x7 grid, random values
    rng = np.random.Generator(np.random.PCG64(0))
    side, in_ch, out_ch = 7, 2, 2
    inp = (rng.random(in_ch * side * side) - 0.3).astype(np.float32).view(np.uint32).tolist()
    kern = (rng.random(out_ch * in_ch * 25) - 0.5).astype(np.float32).view(np.uint32).tolist()
    m = run_routine(conv_driver(side, in_ch, out_ch), dm=dict(enumerate(inp)), weights=kern)
    expected = goldmodel._conv_soft(inp, side, in_ch, kern, out_ch)
    assert m.dm[500:500 + len(expected)] == expected
    assert m.dm[500 + len(expected)] == 0


# ---------------------------------------------------------------------------
# AVG_POOL
# ---------------------------------------------------------------------------


def pool_driver(width, channels, out_base=3000):
    return f"ADD R3, R0, R0\nLLB R4, {width}\nLLB R6, {channels}\nLLB R29, {out_base}\nJAL AVG_POOL\nHLT"


def test_pool_block():
    dm = {0: f32(1.0), 1: f32(2.0), 2: f32(3.0), 3: f32(4.0)}
    m = run_routine(pool_driver(2, 1), dm=dm)
    assert m.dm[3000] == 0x40200000


def test_pool_constant_channel():
    v = f32(0.7)
    m = run_routine(pool_driver(4, 1), dm={i: v for i in range(16)})
    assert m.dm[3000:3004] == [softfp.mul_bits(0x3E800000, softfp.add_bits(softfp.add_bits(softfp.add_bits(v, v), v), v))] * 4


def test_pool_conv1_output_size():
    rng = np.random.Generator(np.random.PCG64(1))
    vals = rng.random(6 * 28 * 28).astype(np.float32).view(np.uint32).tolist()
    m = run_routine(pool_driver(28, 6, out_base=5728), dm=dict(enumerate(vals)))
    expected = goldmodel._pool_soft(vals, 28, 6)
    assert len(expected) == 1176
    assert m.dm[5728:5728 + 1176] == expected
    assert m.dm[5728 + 1176] == 0


# ---------------------------------------------------------------------------
# MATRIX_MUL
# ---------------------------------------------------------------------------


def mm_driver(size):
    return ROM + f"LLB R3, 100\nLLB R4, {size}\nJAL MATRIX_MUL\nHLT"


def test_matrix_mul_single():
    m = run_routine(mm_driver(1), dm={100: f32(3.0)}, weights=[f32(2.0)])
    assert m.rf[28] == 0x40C00000


def test_matrix_mul_zero_vector():
    m = run_routine(mm_driver(50), weights=[f32(0.3)] * 50)
    assert m.rf[28] == 0


def test_matrix_mul_dyadic():
    dm = {100: f32(0.5), 101: f32(0.25), 102: f32(0.25)}
    m = run_routine(mm_driver(3), dm=dm, weights=[ONE] * 3)
    assert m.rf[28] == 0x3F800000
    # the routine never writes DM
    assert {i: v for i, v in enumerate(m.dm) if v} == dm


def test_matrix_mul_left_to_right():
    rng = np.random.Generator(np.random.PCG64(2))
    x = (rng.random(120) * 4).astype(np.float32).view(np.uint32).tolist()
    w = (rng.random(120) - 0.5).astype(np.float32).view(np.uint32).tolist()
    m = run_routine(mm_driver(120), dm={100 + i: v for i, v in enumerate(x)}, weights=w)
    s = 0
    for wv, xv in zip(w, x):
        s = softfp.add_bits(s, softfp.mul_bits(wv, xv))
    assert m.rf[28] == s


# ---------------------------------------------------------------------------
# OUTPUT_LAYER
# ---------------------------------------------------------------------------


OUT = "LLB R30, 0xC000\nLHB R30, 0\nLLB R29, 8000\nJAL OUTPUT_LAYER\nHLT"


def scores_dm(values):
    return {8000 + i: f32(v) for i, v in enumerate(values)}


@pytest.mark.parametrize("index, byte", [(10, 0x41), (9, 0x39), (0, 0x30), (35, 0x5A), (17, 0x48)])
def test_output_layer_mapping(index, byte):
    scores = [-1.0] * 36
    scores[index] = 2.0
    m = run_routine(OUT, dm=scores_dm(scores))
    assert bytes(m.tx) == bytes([byte])


def test_output_layer_all_equal():
    m = run_routine(OUT, dm=scores_dm([0.5] * 36))
    assert bytes(m.tx) == b"0"


def test_output_layer_first_maximum_wins():
    scores = [0.0] * 36
    scores[12] = scores[30] = 3.0
    m = run_routine(OUT, dm=scores_dm(scores))
    assert bytes(m.tx) == b"C"


def test_output_layer_negative_scores():
    scores = [-5.0 - i for i in range(36)]
    scores[20] = -0.25
    m = run_routine(OUT, dm=scores_dm(scores))
    assert bytes(m.tx) == bytes([0x37 + 20])


# ---------------------------------------------------------------------------
# MAIN
# ---------------------------------------------------------------------------


def test_main_zero_frame_sends_zero():
    w = goldmodel.gen_weights(3)
    result = firmware.classify(w, frame=np.zeros((224, 224), np.uint8), latency=1)
    assert result.char == "0"
    assert bytes(result.machine.tx) == b"0"
    assert not result.trace.stages["scores"].any()


def test_main_waits_for_compressor():
    w = goldmodel.gen_weights(3)
    slow = firmware.classify(w, frame=np.zeros((224, 224), np.uint8), latency=50_176)
    fast = firmware.classify(w, frame=np.zeros((224, 224), np.uint8), latency=1)
    assert slow.cycles > fast.cycles + 50_000


def test_main_repeats_per_frame():
    # a second iteration requests a fresh snapshot and sends a second byte
    w = goldmodel.gen_weights(5)
    m = firmware.make_machine(w, frame=imgproc.fixture_frame(1), latency=1)
    rep = m.run(max_cycles=20_000_000, watch=(), stop_after_tx=2)
    assert rep.reason == "tx" and len(rep.tx) == 2 and rep.tx[0] == rep.tx[1]


def test_classify_requires_input():
    with pytest.raises(ValueError):
        firmware.classify(goldmodel.gen_weights(1))


# ---------------------------------------------------------------------------
# self-checking suite
# ---------------------------------------------------------------------------


def test_selftest_suite_passes():
    results = firmware.run_selftests()
    assert len(results) >= 20
    bad = [str(r) for r in results if r.verdict != "PASS"]
    assert bad == []


def test_canary_fails():
    results = firmware.run_selftests(firmware.CANARY_DIR)
    assert [(r.name, r.verdict, r.detail) for r in results] == [("canary_fail.asm", "FAIL", "pc=0x00dd")]


def test_suite_covers_every_instruction_and_condition():
    ops, conds = set(), set()
    for path in firmware.list_tests():
        for word in assemble(path.read_text()).words:
            ins = decode(word)
            ops.add(ins.opcode)
            if ins.opcode is Opcode.B:
                conds.add(ins.cond)
    assert conds == set(Cond)
    assert set(Opcode) - {Opcode.HLT} <= ops


def test_mutated_test_reported_fail(tmp_path):
    src = (firmware.TESTS_DIR / "add_basic.asm").read_text()
    (tmp_path / "add_basic.asm").write_text(src.replace("SUBI R9, R1, 12", "SUBI R9, R1, 13"))
    shutil.copy(firmware.TESTS_DIR / "addf.asm", tmp_path / "addf.asm")
    verdicts = {r.name: r.verdict for r in firmware.run_selftests(tmp_path)}
    assert verdicts == {"add_basic.asm": "FAIL", "addf.asm": "PASS"}


def test_broken_alu_is_caught(monkeypatch):
    # an FP adder that is one ulp off must trip the FP tests
    import fpgacnn.machine as mach

    real = mach.softfp.add_bits
    monkeypatch.setattr(mach.softfp, "add_bits", lambda a, b: real(a, b) ^ 1)
    results = {r.name: r.verdict for r in firmware.run_selftests()}
    assert results["addf.asm"] != "PASS"
    assert results["subf.asm"] != "PASS"


def test_empty_directory(tmp_path):
    assert firmware.run_selftests(tmp_path) == []


def test_assembly_error_reported(tmp_path):
    (tmp_path / "broken.asm").write_text("BOGUS R1\n")
    (r,) = firmware.run_selftests(tmp_path)
    assert r.verdict == "ERROR" and "line 1" in r.detail


def test_timeout_reported(tmp_path):
    (tmp_path / "spin.asm").write_text("L: ADDI R1, R1, 1\nB UNCOND, L\n")
    (r,) = firmware.run_selftests(tmp_path, max_cycles=500)
    assert r.verdict == "ERROR" and "max_cycles" in r.detail
