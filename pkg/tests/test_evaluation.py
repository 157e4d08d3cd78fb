import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, GOLDEN
from oracles import outcome_rule, tally_metrics
from libscan.evaluation import (
    EmptyEvaluation,
    LabeledContract,
    ManifestError,
    MissingVerdict,
    Outcome,
    SampleTooSmall,
    accuracy,
    classify_outcome,
    evaluate_channel,
    load_manifest,
    macro_metrics,
    stratified_quotas,
    stratified_sample,
)
from libscan.kb import ALL_LABELS, PatternLabel as L

P = lambda *pairs: [(L.parse(t), L.parse(p)) for t, p in pairs]

TABLE_12 = P(("P1", "P1"), ("P1", "P2"), ("P2", "P2"), ("P2", "P2"), ("P2", "NONE"), ("P3", "P3"),
             ("P3", "P1"), ("NONE", "NONE"), ("NONE", "P3"), ("NONE", "NONE"), ("P1", "P1"), ("P3", "NONE"))


@pytest.mark.parametrize("true", ALL_LABELS)
@pytest.mark.parametrize("pred", ALL_LABELS)
def test_outcome_grid(true, pred):
    assert classify_outcome(true, pred).value == outcome_rule(true, pred)


def test_outcome_examples():
    assert classify_outcome(L.P3, L.P3) is Outcome.TP
    assert classify_outcome(L.NONE, L.NONE) is Outcome.TN
    assert classify_outcome(L.NONE, L.P3) is Outcome.FP
    assert classify_outcome(L.P2, L.P3) is Outcome.FN


def test_accuracy_examples():
    assert accuracy(P(("P1", "P1"), ("NONE", "NONE"))) == 1.0
    assert accuracy(P(("P1", "P1"), ("P2", "P3"), ("NONE", "NONE"), ("P4", "NONE"))) == 0.5
    assert accuracy(P(("P1", "P2"), ("NONE", "P8"))) == 0.0
    with pytest.raises(EmptyEvaluation):
        accuracy([])
    with pytest.raises(EmptyEvaluation):
        macro_metrics([])


def test_perfect_and_degenerate_predictors():
    perfect = P(("P1", "P1"), ("P5", "P5"), ("NONE", "NONE"))
    m = macro_metrics(perfect)
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
    only_none = P(("P1", "NONE"), ("P5", "NONE"), ("NONE", "NONE"))
    m = macro_metrics(only_none)
    assert m.recall < 1
    from libscan.evaluation import per_class_counts
    counts = per_class_counts(only_none)
    assert counts[L.P1].recall == 0 and counts[L.P5].recall == 0


@pytest.mark.parametrize("all_classes", [False, True])
def test_twelve_pair_table_against_tally(all_classes):
    expected = tally_metrics(TABLE_12, all_classes)
    m = macro_metrics(TABLE_12, all_classes)
    assert accuracy(TABLE_12) == pytest.approx(expected["accuracy"], abs=1e-9)
    assert m.precision == pytest.approx(expected["precision"], abs=1e-9)
    assert m.recall == pytest.approx(expected["recall"], abs=1e-9)
    assert m.f1 == pytest.approx(expected["f1"], abs=1e-9)
    assert len(m.classes) == (9 if all_classes else 4)


_pairs = st.lists(st.tuples(st.sampled_from(ALL_LABELS), st.sampled_from(ALL_LABELS)), min_size=1, max_size=40)


@settings(max_examples=150, deadline=None)
@given(_pairs, st.randoms())
def test_metrics_match_tally_and_are_order_free(pairs, rnd):
    expected = tally_metrics(pairs)
    m = macro_metrics(pairs)
    assert m.f1 == pytest.approx(expected["f1"], abs=1e-9)
    assert m.precision == pytest.approx(expected["precision"], abs=1e-9)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    again = macro_metrics(shuffled)
    assert (again.precision, again.recall, again.f1) == pytest.approx((m.precision, m.recall, m.f1), abs=1e-12)
    report = evaluate_channel(
        [LabeledContract(str(i), Path("x"), t) for i, (t, _) in enumerate(pairs)],
        {str(i): p for i, (_, p) in enumerate(pairs)},
    )
    b = report.binary
    assert b.tp + b.tn + b.fp + b.fn == len(pairs)
    assert report.accuracy == sum(t == p for t, p in pairs) / len(pairs)


# ---------------------------------------------------------------- sampling


def synthetic_manifest(counts):
    entries = []
    for label, n in counts.items():
        entries += [LabeledContract(f"{label.value}-{i}", Path(f"{label.value}-{i}.sol"), label) for i in range(n)]
    return entries


SIXTY_NONE = {L.NONE: 60, L.P1: 10, L.P2: 10, L.P5: 10, L.P8: 10}


def test_sixty_percent_none_gives_six():
    sample = stratified_sample(synthetic_manifest(SIXTY_NONE), 10, seed=0)
    assert sum(e.true_label is L.NONE for e in sample) == 6
    assert {e.true_label for e in sample} == set(SIXTY_NONE)


def test_full_sample_is_permutation():
    manifest = synthetic_manifest({L.NONE: 5, L.P3: 4, L.P7: 3})
    sample = stratified_sample(manifest, len(manifest), seed=1)
    assert sorted(e.id for e in sample) == sorted(e.id for e in manifest)


def test_sample_is_deterministic():
    manifest = synthetic_manifest(SIXTY_NONE)
    assert stratified_sample(manifest, 17, 5) == stratified_sample(manifest, 17, 5)
    assert stratified_sample(manifest, 17, 5) != stratified_sample(manifest, 17, 6)


def test_quotas_sum_over_many_seeds():
    import random
    for seed in range(200):
        rnd = random.Random(seed)
        counts = {label: rnd.randint(0, 30) for label in ALL_LABELS}
        counts[L.NONE] += 1
        total = sum(counts.values())
        present = sum(1 for c in counts.values() if c)
        n = rnd.randint(present, total)
        quotas = stratified_quotas(counts, n)
        assert sum(quotas.values()) == n
        assert all(1 <= quotas[k] <= counts[k] for k in quotas)
        sample = stratified_sample(synthetic_manifest(counts), n, seed)
        assert len(sample) == n and len({e.id for e in sample}) == n


def test_sample_too_small():
    with pytest.raises(SampleTooSmall):
        stratified_sample(synthetic_manifest(SIXTY_NONE), 3, 0)
    assert len(stratified_sample(synthetic_manifest(SIXTY_NONE), 3, 0, diversity=False)) == 3


# ---------------------------------------------------------------- manifests and reports


def test_manifest_unknown_label_names_row(tmp_path):
    (tmp_path / "a.sol").write_text("")
    (tmp_path / "m.csv").write_text("id,path,label\na,a.sol,P1\nb,a.sol,P9\n")
    with pytest.raises(ManifestError) as err:
        load_manifest(tmp_path / "m.csv")
    assert err.value.row == 3 and "P9" in str(err.value)


def test_manifest_other_errors(tmp_path):
    (tmp_path / "a.sol").write_text("")
    (tmp_path / "m.csv").write_text("id,path\na,a.sol\n")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "m.csv")
    (tmp_path / "m.csv").write_text("id,path,label\na,a.sol,p1\na,a.sol,none\n")
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(tmp_path / "m.csv")
    (tmp_path / "m.csv").write_text("id,path,label\na,missing.sol,P1\n")
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "m.csv")


def test_json_manifest(tmp_path):
    (tmp_path / "a.sol").write_text("")
    (tmp_path / "m.json").write_text('[{"id": "a", "path": "a.sol", "label": "p4"}]')
    assert load_manifest(tmp_path / "m.json")[0].true_label is L.P4


def test_perfect_channel_and_missing_verdict():
    manifest = synthetic_manifest({L.NONE: 1, L.P2: 2})
    report = evaluate_channel(manifest, {e.id: e.true_label for e in manifest})
    assert report.accuracy == 1.0
    assert report.binary.to_dict() == {"tp": 2, "tn": 1, "fp": 0, "fn": 0}
    with pytest.raises(MissingVerdict):
        evaluate_channel(manifest, {manifest[0].id: L.NONE})


@pytest.mark.parametrize("name, channel", [("eval_static_hcsa.json", "static-hcsa"), ("eval_llm.json", "llm")])
def test_golden_reports_agree_with_tally(name, channel):
    report = json.loads((GOLDEN / name).read_text())
    scan = json.loads((GOLDEN / "scan_fused.json").read_text())
    manifest = {e.path.name: e.true_label for e in load_manifest(CORPUS / "manifest.csv")}
    key = "static" if channel == "static-hcsa" else "llm"
    pairs = [(manifest[e["path"]], L.parse(e[key]["label" if key == "static" else "pattern"]))
             for e in scan["entries"]]
    expected = tally_metrics(pairs)
    assert report["channel"] == channel and report["N"] == 16
    assert report["accuracy"] == pytest.approx(expected["accuracy"], abs=1e-12)
    assert report["macro_precision"] == pytest.approx(expected["precision"], abs=1e-12)
    assert report["macro_recall"] == pytest.approx(expected["recall"], abs=1e-12)
    assert report["macro_f1"] == pytest.approx(expected["f1"], abs=1e-12)
    outcomes = [outcome_rule(t, p) for t, p in pairs]
    assert report["binary"] == {k.lower(): outcomes.count(k) for k in ("TP", "TN", "FP", "FN")}
