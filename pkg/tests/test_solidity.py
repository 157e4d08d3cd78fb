
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, DETECTORS, read
from libscan.lexer import LexError, lex
from libscan.solidity import (
    DeclKind,
    NoPragma,
    StmtKind,
    VersionConstraint,
    call_sites,
    parse,
    pragma_allows,
    unit_to_dict,
    walk,
)

ALL_FIXTURES = sorted(CORPUS.glob("*.sol")) + sorted(DETECTORS.glob("*.sol"))

FREE_FN_CALL = """
function safeTransfer(address to, uint256 amount) internal {
    (bool success, ) = to.call(abi.encodeWithSignature("receive(uint256)", amount));
    require(success, "Transfer failed");
}
"""


def test_safeerc20_structure():
    unit = parse(read(CORPUS / "p1_safeerc20_conjunction.sol"))
    lib = unit.declaration("SafeERC20")
    assert lib.kind is DeclKind.LIBRARY
    fn = lib.functions[0]
    assert fn.name == "safeApprove"
    assert [s.kind for s in fn.body] == [StmtKind.REQUIRE, StmtKind.REQUIRE]
    assert [p[1] for p in fn.params] == ["IERC20", "address", "uint256"]
    assert fn.visibility == "internal"


def test_empty_file():
    unit = parse("")
    assert unit.declarations == [] and unit.pragma_versions == []


def test_using_for_directive():
    unit = parse("contract C { using SafeMath for int256; using Address for *; }")
    got = [(u.library_name, u.target_type) for u in unit.iter_using_fors()]
    assert got == [("SafeMath", "int256"), ("Address", "*")]


def test_free_function_low_level_call():
    unit = parse(FREE_FN_CALL)
    fn = unit.functions[0]
    call, req = fn.body
    assert call.kind is StmtKind.LOW_LEVEL_CALL and call.targets == ["success", None]
    assert req.kind is StmtKind.REQUIRE and req.condition == "success"


@pytest.mark.parametrize("member", ["call", "delegatecall", "staticcall", "send"])
def test_low_level_call_kinds(member):
    unit = parse(f"library L {{ function f(address a) internal {{ a.{member}(hex\"\"); a.transfer(1); }} }}")
    kinds = [s.kind for s in unit.declarations[0].functions[0].body]
    assert kinds == [StmtKind.LOW_LEVEL_CALL, StmtKind.CALL]


@pytest.mark.parametrize(
    "pragma, version, allowed",
    [
        ("^0.8.0", "0.8.17", True),
        (">=0.4.22 <0.6.0", "0.8.0", False),
        ("^0.6.0", "0.7.0", False),
        ("~0.5.2", "0.5.9", True),
        ("0.7.6", "0.7.6", True),
        ("0.4.1 - 0.4.9", "0.4.5", True),
        ("^0.4.0 || ^0.8.0", "0.8.3", True),
    ],
)
def test_pragma_examples(pragma, version, allowed):
    assert pragma_allows(parse(f"pragma solidity {pragma};"), version) is allowed


def test_conjoined_pragmas_brute_force():
    unit = parse("pragma solidity ^0.8.0;\npragma solidity >=0.8.4;")
    assert pragma_allows(unit, "0.8.2") is False
    admitted = [p for p in range(31) if pragma_allows(unit, (0, 8, p))]
    assert admitted == list(range(4, 31))


def test_no_pragma_raises():
    with pytest.raises(NoPragma):
        pragma_allows(parse("contract A {}"), "0.8.0")


def test_call_sites_exact_segment():
    unit = parse("contract C { function f() public { token.approve(a, 1); token.safeApprove(a, 1); } }")
    sites = call_sites(unit, "approve")
    assert [s.callee for s in sites] == ["token.approve"]
    assert call_sites(unit, "nonexistent") == []
    conjoined = parse(read(CORPUS / "p1_safeerc20_conjunction.sol"))
    assert len(call_sites(conjoined, "approve")) == 1


def test_invalid_utf8_reports_position():
    with pytest.raises(LexError) as err:
        parse(b"contract A {\n  \xff }")
    assert (err.value.line, err.value.column) == (2, 3)


def test_unterminated_constructs():
    with pytest.raises(LexError):
        parse('contract A { string s = "abc; }')
    with pytest.raises(LexError) as err:
        parse("contract A {} /* never closed")
    assert err.value.line == 1


def test_unknown_syntax_is_tolerated():
    src = "contract A { function f() public { ??? weird @@ stuff; x = 1; } } garbage ;"
    unit = parse(src)
    kinds = [s.kind for s in unit.declarations[0].functions[0].body]
    assert StmtKind.OTHER in kinds and StmtKind.ASSIGNMENT in kinds


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.name)
def test_fixture_invariants(path):
    src = read(path)
    unit = parse(src, str(path))
    assert unit_to_dict(unit) == unit_to_dict(parse(src, str(path)))
    for decl in unit.declarations:
        assert 0 <= decl.span.start <= decl.span.end <= len(src)
    for _, fn in unit.iter_functions():
        for stmt in walk(fn.body):
            assert fn.span.contains(stmt.span)
            assert stmt.text == src[stmt.span.start:stmt.span.end]


_solidity_chars = st.text(alphabet=st.sampled_from(list("abcxyz019 (){};=+-<>&|!.,\n\"'/*")), max_size=80)


@settings(max_examples=200, deadline=None)
@given(_solidity_chars)
def test_parse_never_fails_except_lex_errors(text):
    try:
        unit = parse(text)
    except LexError:
        return
    for _, fn in unit.iter_functions():
        for stmt in walk(fn.body):
            assert fn.span.contains(stmt.span)


def test_lexer_skips_comments_and_keeps_offsets():
    src = "a /* b */ + // c\n d"
    toks = lex(src)
    assert [t.text for t in toks] == ["a", "+", "d"]
    assert all(src[t.start:t.end] == t.text for t in toks)


def test_version_constraint_parse():
    c = VersionConstraint.parse(">=0.6.0 <0.8.0")
    assert c.allows("0.7.6") and not c.allows("0.8.0") and not c.allows("0.5.17")
