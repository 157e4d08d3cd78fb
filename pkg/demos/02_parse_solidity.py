"""Parse a contract and look at what the front end recovers."""
import json
from pathlib import Path

from libscan import call_sites, parse, pragma_allows
from libscan.solidity import unit_to_dict

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus"
source = (FIXTURES / "p8_safemath_on_08.sol").read_text()
unit = parse(source, "p8_safemath_on_08.sol")

print("pragmas:", [c.text for c in unit.pragma_versions])
print("compiles on 0.8.20:", pragma_allows(unit, "0.8.20"))
print("compiles on 0.6.12:", pragma_allows(unit, "0.6.12"))

for decl, fn in unit.iter_functions():
    owner = decl.name if decl else "<free>"
    print(f"{owner}.{fn.name}: {len(fn.body)} top-level statements")

for u in unit.iter_using_fors():
    print(f"using {u.library_name} for {u.target_type}")

# Every call to `add`, with the exact source text its span covers.
for stmt in call_sites(unit, "add"):
    print("call:", stmt.span.slice(source).strip())

# The JSON form is what `libscan scan --ast-dump` prints.
print(json.dumps(unit_to_dict(unit), indent=1)[:400], "...")

# Malformed input is tolerated: the parser skips what it cannot read.
broken = parse("contract A { function f() public { x = ; uint y = 1 } function g() public {} }")
print("functions recovered from broken input:", [fn.name for _, fn in broken.iter_functions()])
