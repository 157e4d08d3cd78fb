import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, DETECTORS, read
from libscan.kb import PatternLabel
from libscan.rules import (
    AnalysisMode,
    SEMANTIC_LABELS,
    detect_p1_wrapper_check,
    detect_p2_unhandled_exceptions,
    detect_p3_inappropriate_extension,
    detect_p5_incomplete_replacement,
    only_checked_arithmetic,
    static_verdict,
)
from libscan.solidity import parse

REQUIRED_SUCCESS_WRAPPER = """
library PaymentLib {
function safeTransfer(address to, uint256 amount) internal {
    (bool success, ) = to.call(abi.encodeWithSignature("receive(uint256)", amount));
    require(success, "Transfer failed");
}
}
"""


def unit(name, folder=CORPUS):
    return parse(read(folder / name), name)


# ---------------------------------------------------------------- P1


def test_p1_conjoined_checks_fire_once_at_first_require():
    u = unit("p1_safeerc20_conjunction.sol")
    found = detect_p1_wrapper_check(u)
    assert len(found) == 1
    assert found[0].evidence.startswith("require((value == 0) && (token.allowance")


def test_p1_disjunction_is_clean():
    assert detect_p1_wrapper_check(unit("p1_safeerc20_disjunction.sol")) == []


def test_p1_wrapper_without_outcome_check():
    found = detect_p1_wrapper_check(unit("p1_wrapper_unchecked_approve.sol", DETECTORS))
    assert [f.evidence for f in found] == ["token.approve(spender, value);"]


# ---------------------------------------------------------------- P2


def test_p2_deleted_require_fires_at_call():
    found = detect_p2_unhandled_exceptions(unit("p2_transfer_unchecked_call.sol"))
    assert len(found) == 1 and "to.call(" in found[0].evidence


def test_p2_required_success_is_clean():
    assert detect_p2_unhandled_exceptions(parse(REQUIRED_SUCCESS_WRAPPER)) == []
    assert detect_p2_unhandled_exceptions(unit("p2_transfer_checked_call.sol")) == []


def test_p2_decode_without_length_check():
    found = detect_p2_unhandled_exceptions(unit("p2_decode_without_length.sol", DETECTORS))
    assert [f.evidence for f in found] == ["abi.decode(result, (bool))"]
    assert detect_p2_unhandled_exceptions(unit("p2_decode_with_length.sol", DETECTORS)) == []


def test_p2_ignores_contracts():
    src = "contract C { function f(address a) public { a.call(\"\"); } }"
    assert detect_p2_unhandled_exceptions(parse(src)) == []


def test_p2_success_consumed_by_if_or_return():
    src = """library L {
        function a(address t) internal { (bool ok, ) = t.call(""); if (!ok) { revert(); } }
        function b(address t) internal returns (bool) { (bool ok, ) = t.call(""); return ok; }
    }"""
    assert detect_p2_unhandled_exceptions(parse(src)) == []


# ---------------------------------------------------------------- P3


def test_p3_signature_branch_fires_at_if():
    found = detect_p3_inappropriate_extension(unit("p3_ecdsa_inline_v.sol"))
    assert [f.evidence for f in found] == ["if (v < 27) { v += 27;}"]


def test_p3_separate_function_is_clean():
    assert detect_p3_inappropriate_extension(unit("p3_ecdsa_separate_v01.sol")) == []


def test_p3_local_from_constant_is_clean():
    assert detect_p3_inappropriate_extension(unit("p3_local_branch_reassign.sol", DETECTORS)) == []


def test_p3_parameter_rewrite_fires():
    src = "library L { function f(uint8 v) internal pure returns (uint8) { if (v < 27) { v += 27; } return v; } }"
    assert len(detect_p3_inappropriate_extension(parse(src))) == 1


# ---------------------------------------------------------------- P5


def test_p5_partial_replacement_flags_raw_call():
    found = detect_p5_incomplete_replacement(unit("p5_partial_safe_transfer.sol"))
    assert [f.evidence for f in found] == ["token.transfer(msg.sender, amount)"]


def test_p5_complete_replacement_is_clean():
    assert detect_p5_incomplete_replacement(unit("p5_complete_safe_transfer.sol")) == []


def test_p5_raw_only_is_clean():
    assert detect_p5_incomplete_replacement(unit("p5_only_raw_transfer.sol", DETECTORS)) == []


def test_p5_library_call_form_matches_member_form():
    src = """contract C {
        function a(IERC20 t) external { SafeERC20.safeApprove(t, s, 1); }
        function b(IERC20 t) external { t.approve(s, 1); }
    }"""
    assert len(detect_p5_incomplete_replacement(parse(src))) == 1


# ---------------------------------------------------------------- verdicts


CORPUS_TRUTH = {
    "p1_safeerc20_conjunction.sol": "P1", "p1_safeerc20_disjunction.sol": "NONE",
    "p2_transfer_unchecked_call.sol": "P2", "p2_transfer_checked_call.sol": "NONE",
    "p3_ecdsa_inline_v.sol": "P3", "p3_ecdsa_separate_v01.sol": "NONE",
    "p4_safemath_int256.sol": "P4", "p4_signed_math_int256.sol": "NONE",
    "p5_partial_safe_transfer.sol": "P5", "p5_complete_safe_transfer.sol": "NONE",
    "p6_bonding_curve_iscontract.sol": "P6", "p6_bonding_curve_allowlist.sol": "NONE",
    "p7_manual_safe_add.sol": "P7", "p7_library_safe_add.sol": "NONE",
    "p8_safemath_on_08.sol": "P8", "p8_safemath_on_06.sol": "NONE",
}


@pytest.mark.parametrize("name, label", sorted(CORPUS_TRUTH.items()))
def test_hcsa_corpus_labels(kb, name, label):
    assert static_verdict(unit(name), kb, AnalysisMode.HCSA).label.value == label


def test_semantic_and_matcher_priority(kb):
    v = static_verdict(unit("p5_and_p8_combined.sol", DETECTORS), kb, "HCSA")
    assert {f.label for f in v.findings} == {PatternLabel.P5, PatternLabel.P8}
    assert v.label is PatternLabel.P5


def test_bare_decode_snippet_bcssm(kb):
    v = static_verdict(unit("p2_bare_decode_snippet.sol", DETECTORS), kb, "BCSSM")
    assert v.label is PatternLabel.P2
    assert v.findings[0].confidence == pytest.approx(1.0)


def test_empty_unit_is_none(kb):
    v = static_verdict(parse("contract A { function f() public {} }"), kb, "HCSA")
    assert v.label is PatternLabel.NONE and v.findings == []


def test_p8_gate_uses_pragma():
    assert only_checked_arithmetic(parse("pragma solidity ^0.8.0;")) is True
    assert only_checked_arithmetic(parse("pragma solidity >=0.6.0;")) is False
    assert only_checked_arithmetic(parse("contract A {}")) is None


ALL = sorted(CORPUS.glob("*.sol")) + sorted(DETECTORS.glob("*.sol"))


@pytest.mark.parametrize("path", ALL, ids=lambda p: p.name)
def test_verdict_invariants(kb, path):
    src = read(path)
    for mode in AnalysisMode:
        v = static_verdict(parse(src), kb, mode)
        again = static_verdict(parse(src), kb, mode)
        assert v.to_dict() == again.to_dict()
        assert (v.label is PatternLabel.NONE) == (not v.findings)
        for f in v.findings:
            assert f.label is not PatternLabel.NONE
            assert f.evidence == src[f.span.start:f.span.end]
            assert 0 < f.confidence <= 1
        if mode is AnalysisMode.HCSA and v.label in SEMANTIC_LABELS:
            assert any(f.label is v.label and f.detector != "tfidf-match" for f in v.findings)


_stmt = st.sampled_from([
    "token.approve(a, 1);", "token.safeApprove(a, 1);", "(bool ok, ) = a.call(d);", "require(ok);",
    "if (v < 27) { v += 27; }", "x = y + 1;", "require(a == 0 && b == 0);", "return abi.decode(r, (bool));",
])


@settings(max_examples=80, deadline=None)
@given(st.lists(_stmt, max_size=6), st.sampled_from(["library", "contract"]))
def test_hcsa_semantic_labels_always_backed(kb, body, kind):
    src = f"pragma solidity ^0.8.0;\n{kind} L {{ function safeApprove(uint8 v, address a) internal {{ {' '.join(body)} }} }}"
    v = static_verdict(parse(src), kb, "HCSA")
    if v.label in SEMANTIC_LABELS:
        assert any(f.detector != "tfidf-match" for f in v.findings)
    for f in v.findings:
        assert f.evidence == src[f.span.start:f.span.end]
