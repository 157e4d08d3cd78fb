"""Drive the LLM feedback loop with a scripted backend, then replay stored transcripts.

No network access is needed: ScriptedBackend answers from a list, and
ReplayBackend answers from transcripts keyed by the prompt hash.
"""
import json
from pathlib import Path

from libscan import ReplayBackend, ScriptedBackend, load_kb
from libscan.llm import run_session

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
kb = load_kb()
code = (FIXTURES / "corpus" / "p6_bonding_curve_iscontract.sol").read_text()


def reply(label):
    body = {"pattern": label, "name": "", "description": "because", "snippet": "isContract(msg.sender)"}
    return "Step by step...\n```json\n" + json.dumps(body) + "\n```"


# Round one: five samples, majority NONE. Round two and three agree on P6.
script = [reply("NONE")] * 3 + [reply("P6")] * 2 + [reply("P6")] * 10
session = run_session(ScriptedBackend(script), code, kb)
print("iterations:", session.iteration, "final:", session.final.label)
print("round labels:", [v.label.value for v in session.verdicts])

# The second prompt embeds the first verdict verbatim, followed by feedback.
print(session.prompts[1].render()[-600:])

# Replaying a recorded session reproduces it exactly.
replay = run_session(ReplayBackend(FIXTURES / "transcripts"), code, kb)
print("replayed:", [v.label.value for v in replay.verdicts])
