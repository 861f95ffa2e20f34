import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import VERILOG

from rtlflow.errors import EmptySource, UnbalancedModule
from rtlflow.inspect_rtl import fingerprint, strip_comments

ADDER = (VERILOG / "adder_16bit.v").read_text()
FSM = (VERILOG / "fsm_example.v").read_text()
PIPE = (VERILOG / "pipeline_example.v").read_text()
CLA = (VERILOG / "adder_16bit_cla.v").read_text()

COMB_MUX = """
module mux4 (input [1:0] sel, input [7:0] a, b, c, d, output [7:0] y);
    assign y = (sel == 2'd0) ? a : (sel == 2'd1) ? b : (sel == 2'd2) ? c : d;
endmodule
"""

SYNC_COUNTER = """
module counter (input clk, input rst, output reg [7:0] q);
    always @(posedge clk) begin
        if (rst) q <= 8'd0;
        else q <= q + 8'd1;
    end
endmodule
"""


def test_empty_and_unbalanced():
    with pytest.raises(EmptySource):
        fingerprint("   \n")
    with pytest.raises(UnbalancedModule):
        fingerprint("module m; wire x;")


def test_combinational_mux():
    fp = fingerprint(COMB_MUX)
    assert fp.is_combinational
    assert fp.clocked_always == 0
    assert fp.register_bits == 0
    assert fp.operator_census.get("mux") == 3
    assert fp.operator_census.get("eq") == 3
    assert not fp.fsm_detected


def test_sync_reset_counter():
    fp = fingerprint(SYNC_COUNTER)
    assert not fp.is_combinational
    assert fp.clocked_always == 1
    assert fp.reset_style == "Sync"
    assert fp.register_bits == 8
    assert fp.operator_census.get("add") == 1


def test_async_reset_fsm_fixture():
    fp = fingerprint(FSM)
    assert fp.reset_style == "Async"
    assert fp.fsm_detected
    assert fp.fsm_state_register == "state"
    assert fp.clocked_always >= 1


def test_pipeline_fixture_depth():
    fp = fingerprint(PIPE)
    assert not fp.is_combinational
    assert fp.pipeline_stages == 2


def test_ripple_adder_structure():
    fp = fingerprint(ADDER)
    assert fp.instance_groups == {"full_adder": 16}
    assert fp.carry_chain_detected
    assert fp.is_combinational


def test_cla_flags_generate_warning():
    fp = fingerprint(CLA)
    assert any("generate" in w for w in fp.warnings)


def test_strip_comments_preserves_lines():
    text = "module m; // tail\n/* multi\nline */ wire x;\nendmodule\n"
    stripped = strip_comments(text)
    assert stripped.count("\n") == text.count("\n")
    assert "tail" not in stripped and "multi" not in stripped
    assert "wire x;" in stripped


def test_string_literals_do_not_leak_tokens():
    text = 'module m; initial $display("always @(posedge clk) + error"); endmodule'
    fp = fingerprint(text)
    assert fp.clocked_always == 0
    assert "add" not in fp.operator_census


def _mutate(rng: random.Random, text: str) -> str:
    """Insert comments and whitespace at random line boundaries."""
    lines = text.splitlines()
    out = []
    for line in lines:
        if rng.random() < 0.3:
            out.append(f"// noise {rng.randint(0, 999)} error fail always posedge")
        if rng.random() < 0.2:
            line = line + f"  /* inline {rng.randint(0, 99)} + * / ? */"
        if rng.random() < 0.2:
            line = "    " + line
        out.append(line)
    if rng.random() < 0.5:
        out.append("/* trailing\ncomment with module-looking text:\n endmodule */"
                    .replace("endmodule", "end_module"))
    return "\n".join(out)


@pytest.mark.parametrize("source", [ADDER, FSM, PIPE, COMB_MUX, SYNC_COUNTER],
                         ids=["adder", "fsm", "pipe", "mux", "counter"])
def test_fingerprint_invariant_under_comment_mutations(source):
    base = fingerprint(source).to_dict()
    rng = random.Random(11)
    for _ in range(100):
        mutated = _mutate(rng, source)
        assert fingerprint(mutated).to_dict() == base


@settings(max_examples=60, deadline=None)
@given(extra_adds=st.integers(min_value=0, max_value=5))
def test_operator_census_monotone(extra_adds):
    """Adding assign statements with '+' never decreases the add count."""
    body = "\n".join(
        f"    assign t{i} = a + b;" for i in range(extra_adds)
    )
    decls = "\n".join(f"    wire [7:0] t{i};" for i in range(extra_adds))
    text = (
        "module m (input [7:0] a, b, output [7:0] y);\n"
        f"{decls}\n{body}\n    assign y = a + b;\nendmodule\n"
    )
    fp = fingerprint(text)
    assert fp.operator_census.get("add", 0) == extra_adds + 1


def test_nonblocking_assign_not_counted_as_operator():
    fp = fingerprint(SYNC_COUNTER)
    # two '<=' nonblocking assignments must not appear in the census
    assert "le" not in fp.operator_census
    assert fp.operator_census.get("shl", 0) == 0
