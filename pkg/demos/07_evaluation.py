"""Evaluate a channel against a labeled manifest."""
import json
from pathlib import Path

from libscan import load_manifest, stratified_sample
from libscan.evaluation import confusion_matrix, evaluate_pairs
from libscan.kb import PatternLabel as L
from libscan.pipeline import RunConfig, Scanner

CORPUS = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus"
manifest = load_manifest(CORPUS / "manifest.csv")

# Score the HCSA static channel on every contract.
scanner = Scanner(RunConfig(mode="static-hcsa"))
pairs = [(c.true_label, L.parse(scanner.scan_path(c.path)["label"])) for c in manifest]
report = evaluate_pairs(pairs, channel="static-hcsa")
summary = {k: v for k, v in report.to_dict().items() if k != "per_class"}
print(json.dumps(summary, indent=1))

# A deliberately imperfect prediction set shows how the binary view differs
# from 9-way accuracy: P4 predicted as P8 is a miss in both.
noisy = [(t, L.P8 if t is L.P4 else p) for t, p in pairs]
noisy_report = evaluate_pairs(noisy)
print("accuracy", noisy_report.accuracy, "binary", noisy_report.binary)
print(confusion_matrix(noisy))

# A stratified subsample keeps the label mix and every label present.
picked = stratified_sample(manifest, 10, seed=3)
print(sorted(c.true_label.value for c in picked))
