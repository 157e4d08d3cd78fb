"""Browse the bundled pattern knowledge base.

Every pattern has an id, a short name, a description and one or more code
snippets. The same records feed the snippet matcher and the LLM prompt.
"""
from libscan import load_kb
from libscan.kb import dump_kb, kb_by_label

kb = load_kb()
for record in kb:
    print(f"{record.pattern}  {record.name:<40} {len(record.snippets)} snippet(s)")

# Records are keyed by label for lookups.
p4 = kb_by_label(kb)[kb[3].pattern]
print("\nfirst P4 snippet:\n" + p4.snippets[0])

# A custom KB is plain JSON; dump_kb writes the canonical form.
print(dump_kb(kb)[:200] + " ...")
