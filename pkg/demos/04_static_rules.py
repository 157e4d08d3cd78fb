"""Run the static analyzer in both modes over the fixture corpus.

BCSSM is pure snippet matching. HCSA runs the semantic detectors for the
wrapper, exception, extension and replacement patterns and falls back to the
matcher for the rest.
"""
from pathlib import Path

from libscan import AnalysisMode, load_kb, parse
from libscan.rules import StaticAnalyzer

CORPUS = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus"
analyzer = StaticAnalyzer(load_kb())

print(f"{'contract':<36} {'BCSSM':<6} {'HCSA':<6}")
for path in sorted(CORPUS.glob("*.sol")):
    unit = parse(path.read_text(), path.name)
    bcssm = analyzer.verdict(unit, AnalysisMode.BCSSM)
    hcsa = analyzer.verdict(unit, AnalysisMode.HCSA)
    print(f"{path.name:<36} {bcssm.label.value:<6} {hcsa.label.value:<6}")

# Findings carry a span back into the source.
src = (CORPUS / "p1_safeerc20_conjunction.sol").read_text()
for f in analyzer.verdict(parse(src), "HCSA").findings:
    print(f"\n{f.label} via {f.detector}: {f.span.slice(src).strip()}")
