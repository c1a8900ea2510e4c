"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. Criterion 3 needs either network access to the UCI archive or
OSCAL_ASSURE_GERMAN_CREDIT pointing at a local german.data copy; it skips
otherwise. Criterion 6 additionally validates against the official NIST
JSON schema when OSCAL_ASSURE_NIST_SCHEMA points at a local schema file
(opt-in CI step; the schema is neither shipped nor fetched).
"""

from __future__ import annotations

import io
import json
import math
import os
import random
import time
import urllib.request
from pathlib import Path

import pytest

from conftest import (
    DEMO_DIR,
    SCENARIO_A_DATA,
    SCENARIO_A_PLAN,
    assert_structurally_valid,
    random_bound_table,
    random_plan,
    table_from_rows,
)
from oscal_assure import (
    MetricContext,
    bind_roles,
    class_imbalance_ratio,
    compare,
    default_registry,
    demographic_parity_difference,
    disparate_impact,
    enforce_phase,
    group_reweight,
    load_table,
    open_session,
    record_artifact,
    verify_artifact_records,
)
from oscal_assure.cli import main
from oscal_assure.enforcement import SkipReason, VerdictOutcome
from oscal_assure.plan import (
    EnforcementMode,
    EvaluationWindow,
    LifecyclePhase,
    Operator,
)
from oscal_assure.serialize import poam_to_dict, results_to_dict

GERMAN_CREDIT_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/german/german.data"
)


def _passed(number: int, name: str) -> None:
    print(f"\n[acceptance] criterion {number} ({name}): PASS")


def _enforce_cli(out_dir: Path, *extra: str) -> int:
    return main(
        [
            "enforce",
            str(SCENARIO_A_PLAN),
            str(SCENARIO_A_DATA),
            "--target",
            "class:good",
            "--group",
            "gender",
            "--out",
            str(out_dir),
            *extra,
        ]
    )


def test_criterion_1_audit_verdict_reproduction():
    triples = [
        (0.429, Operator.GT, 0.20, True),
        (0.818, Operator.GT, 0.80, True),
        (0.286, Operator.GT, 0.50, False),
        (0.795, Operator.GE, 0.70, True),
        (0.012, Operator.LT, 0.10, True),
    ]
    started = time.perf_counter()
    verdicts = [compare(value, op, threshold) for value, op, threshold, _ in triples]
    elapsed = time.perf_counter() - started
    assert verdicts == [expected for *_, expected in triples]
    assert elapsed < 1.0
    _passed(1, "audit verdict triples PASS/PASS/FAIL/PASS/PASS, exact, <1s")


def test_criterion_2_scenario_a_artifact_cardinality(scenario_a_plan, scenario_a_ctx):
    registry = default_registry()
    pre = enforce_phase(
        scenario_a_plan, LifecyclePhase.TRAINING, scenario_a_ctx, registry
    )
    pre_block = pre.assessment_results.results[0]
    assert len(pre_block.observations) == 3
    assert len(pre_block.findings) == 3
    assert len(pre_block.risks) == 1
    assert pre.poam is not None and len(pre.poam.poam_items) == 1

    facets = dict(pre_block.risks[0].facets)
    assert facets["metric"] == "disparate_impact"
    assert "actual" in facets and math.isfinite(float(facets["actual"]))
    assert float(facets["threshold"]) == 0.50
    assert facets["operator"] == "gt"

    post = enforce_phase(
        scenario_a_plan, LifecyclePhase.VALIDATION, scenario_a_ctx, registry
    )
    post_block = post.assessment_results.results[0]
    assert len(post_block.findings) == 2
    assert len(post_block.risks) == 0
    _passed(2, "Scenario A: pre {3 obs, 3 findings, 1 risk, 1 POA&M}, post {2 findings, 0 risks}")


def _german_credit_bytes() -> bytes | None:
    local = os.environ.get("OSCAL_ASSURE_GERMAN_CREDIT")
    if local and Path(local).exists():
        return Path(local).read_bytes()
    try:
        with urllib.request.urlopen(GERMAN_CREDIT_URL, timeout=15) as response:
            return response.read()
    except Exception:
        return None


def test_criterion_3_class_imbalance_on_real_german_credit():
    raw = _german_credit_bytes()
    if raw is None:
        pytest.skip(
            "real German Credit dataset unavailable (no network route to the UCI "
            "archive and OSCAL_ASSURE_GERMAN_CREDIT not set)"
        )
    # convert the space-delimited original to CSV (documented conversion)
    out = io.StringIO()
    out.write("class\n")
    rows = 0
    for line in raw.decode("utf-8").splitlines():
        fields = line.split()
        if not fields:
            continue
        out.write(fields[-1] + "\n")
        rows += 1
    assert rows == 1000
    table = load_table(out.getvalue().encode("utf-8"))
    ctx = MetricContext(table, bind_roles(table, "class", "1"))
    value = class_imbalance_ratio(ctx).value
    assert value == pytest.approx(0.4286, abs=0.0005)
    _passed(3, "real German Credit class imbalance = 0.4286 +/- 0.0005")


def test_criterion_4_per_group_breakdown(group_rates_fixture_ctx):
    di = disparate_impact(group_rates_fixture_ctx)
    assert di.per_group == {
        "f": pytest.approx(0.3516, abs=1e-12),
        "m": pytest.approx(0.2768, abs=1e-12),
    }
    assert di.value == pytest.approx(0.787, abs=0.001)
    dp = demographic_parity_difference(group_rates_fixture_ctx)
    assert dp.value == pytest.approx(0.0748, abs=0.0001)
    _passed(4, "group rates 0.3516/0.2768 give DI 0.787 +/- 0.001, DP diff 0.0748 +/- 0.0001")


def _random_all_cells_table(rng: random.Random):
    n_groups = rng.randrange(2, 5)
    groups = [f"g{i}" for i in range(n_groups)]
    max_per_cell = max(1, 200 // (n_groups * 2))
    rows = []
    for group in groups:
        for outcome in ("1", "0"):
            rows.extend([[group, outcome]] * rng.randrange(1, max_per_cell + 1))
    rng.shuffle(rows)
    return rows


def test_criterion_5_reweighting_properties(scenario_a_table):
    rng = random.Random(20260809)
    for _ in range(1000):
        rows = _random_all_cells_table(rng)
        assert len(rows) <= 200
        table = table_from_rows(["g", "y"], rows)
        ctx = MetricContext(table, bind_roles(table, "y", "1", group="g"))
        weights = group_reweight(ctx)

        assert abs(math.fsum(weights) - len(rows)) < 1e-9

        mass: dict[str, float] = {}
        positive: dict[str, float] = {}
        for (group, outcome), weight in zip(rows, weights):
            mass[group] = mass.get(group, 0.0) + weight
            if outcome == "1":
                positive[group] = positive.get(group, 0.0) + weight
        rates = [positive.get(g, 0.0) / m for g, m in mass.items()]
        assert max(rates) - min(rates) < 1e-9

    # Scenario A: reweighting on (gender, class) pushes the weighted
    # demographic parity difference under the 0.10 threshold
    bindings = bind_roles(scenario_a_table, "class", "good", group="gender")
    ctx = MetricContext(scenario_a_table, bindings)
    unweighted_dp = demographic_parity_difference(ctx).value
    assert unweighted_dp > 0.10

    weights = group_reweight(ctx)
    rows = [
        [
            scenario_a_table.column("gender")[i],
            scenario_a_table.column("class")[i],
            repr(weights[i]),
        ]
        for i in range(scenario_a_table.row_count)
    ]
    weighted_table = table_from_rows(["gender", "class", "w"], rows)
    weighted_ctx = MetricContext(
        weighted_table,
        bind_roles(weighted_table, "class", "good", group="gender", weight="w"),
    )
    weighted_dp = demographic_parity_difference(weighted_ctx).value
    assert weighted_dp <= 0.10
    assert weighted_dp < unweighted_dp
    _passed(5, "reweighting: mass conserved, rates equalized (1000 tables), Scenario A DP under threshold")


def test_criterion_6_structural_validity_across_corpus(
    scenario_a_plan, scenario_a_ctx, medical_plan, medical_ctx
):
    registry = default_registry()
    documents = []
    for plan, ctx, phases in (
        (scenario_a_plan, scenario_a_ctx, (LifecyclePhase.TRAINING, LifecyclePhase.VALIDATION)),
        (medical_plan, medical_ctx, (LifecyclePhase.VALIDATION,)),
    ):
        for phase in phases:
            report = enforce_phase(plan, phase, ctx, registry)
            assert_structurally_valid(report.assessment_results, report.poam)
            documents.append((report.assessment_results, report.poam))

    rng = random.Random(66)
    for _ in range(100):
        plan = random_plan(rng)
        ctx = random_bound_table(rng)
        report = enforce_phase(plan, LifecyclePhase.TRAINING, ctx, registry)
        assert_structurally_valid(report.assessment_results, report.poam)
        documents.append((report.assessment_results, report.poam))

    schema_path = os.environ.get("OSCAL_ASSURE_NIST_SCHEMA")
    schema_note = "internal validator only (set OSCAL_ASSURE_NIST_SCHEMA for the official schema)"
    if schema_path:
        import jsonschema

        schema = json.loads(Path(schema_path).read_text(encoding="utf-8"))
        for results, poam in documents[:4]:
            jsonschema.validate(results_to_dict(results), schema)
            if poam is not None:
                jsonschema.validate(poam_to_dict(poam), schema)
        schema_note = "internal validator + official NIST schema"
    _passed(6, f"every emitted document structurally valid; {schema_note}")


def test_criterion_7_enforcement_semantics(tmp_path):
    registry = default_registry()

    # (a) mode changes never alter findings: 500 randomized plans
    rng = random.Random(130_000)
    for _ in range(500):
        plan = random_plan(rng)
        ctx = random_bound_table(rng)
        phase = rng.choice([LifecyclePhase.TRAINING, LifecyclePhase.VALIDATION])
        reference = None
        for override in (None, EnforcementMode.MONITOR, EnforcementMode.WARN, EnforcementMode.BLOCK):
            report = enforce_phase(plan, phase, ctx, registry, mode_override=override)
            snapshot = [
                (v.control_id, v.outcome, v.observed_value, v.finding.status if v.finding else None)
                for v in report.verdicts
            ]
            if reference is None:
                reference = snapshot
            else:
                assert snapshot == reference

    # (b) block -> exit 2; warn/monitor -> exit 0 with identical findings
    blocked_dir = tmp_path / "blocked"
    assert _enforce_cli(blocked_dir, "--deterministic") == 2
    for mode in ("warn", "monitor"):
        mode_dir = tmp_path / mode
        assert _enforce_cli(mode_dir, "--deterministic", "--mode-override", mode) == 0
        assert (mode_dir / "assessment-results.oscal.json").read_bytes() == (
            blocked_dir / "assessment-results.oscal.json"
        ).read_bytes()

    # (c) periodic/sliding windows skip at training and validation
    from conftest import make_control, make_plan

    for window in (EvaluationWindow.PERIODIC, EvaluationWindow.SLIDING):
        spec = make_control(
            "windowed",
            metric_key="accuracy",
            lifecycle_phases=frozenset(
                {LifecyclePhase.TRAINING, LifecyclePhase.VALIDATION}
            ),
            evaluation_window=window,
        )
        ctx = random_bound_table(random.Random(7))
        for phase in (LifecyclePhase.TRAINING, LifecyclePhase.VALIDATION):
            report = enforce_phase(make_plan([spec]), phase, ctx, registry)
            verdict = report.verdicts[0]
            assert verdict.outcome is VerdictOutcome.SKIPPED
            assert verdict.skip_reason is SkipReason.WINDOW_NOT_EXECUTABLE
    _passed(7, "mode flips never change findings (500 plans); block=>2, warn/monitor=>0; windows skip")


def test_criterion_8_cmd_enforce_determinism(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert _enforce_cli(first, "--deterministic") == 2
    assert _enforce_cli(second, "--deterministic") == 2
    for name in ("assessment-results.oscal.json", "poam.oscal.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    _passed(8, "two deterministic cmd_enforce runs byte-identical (results + POA&M)")


def test_criterion_9_evidence_bundle(tmp_path):
    vault = tmp_path / "vault"
    code = main(
        [
            "run",
            "credit-scoring",
            str(SCENARIO_A_PLAN),
            "--data",
            str(SCENARIO_A_DATA),
            "--target",
            "class:good",
            "--group",
            "gender",
            "--prediction",
            "prediction:good",
            "--hash",
            str(DEMO_DIR / "requirements-lock.txt"),
            "--bom",
            str(DEMO_DIR / "requirements-lock.txt"),
            "--vault",
            str(vault),
        ]
    )
    assert code == 2  # the age-DI block control fails on this fixture
    run_dir = vault / "runs" / "credit-scoring"
    assert {p.name for p in run_dir.iterdir()} == {
        "assessment-results.oscal.json",
        "poam.oscal.json",
        "hashes.json",
        "environment.json",
        "bom.json",
        "handshake.json",
    }

    session = open_session("vectors", vault_root=vault)
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    abc = tmp_path / "abc.txt"
    abc.write_bytes(b"abc")
    assert (
        record_artifact(session, empty).sha256
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert (
        record_artifact(session, abc).sha256
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )

    records = list(session.artifacts)
    assert verify_artifact_records(records) == []
    abc.write_bytes(b"abc tampered")
    assert verify_artifact_records(records) == ["abc.txt"]
    _passed(9, "vault files exact; SHA-256 vectors match; tampering detected")
