"""Plan execution for one lifecycle phase: control selection, metric
evaluation, threshold comparison, observation/finding/risk assembly,
enforcement modes, POA&M generation, and traceability chains.

Failures never pass silently: evaluation errors become not-satisfied
findings with an evaluation-error remark and still raise a Risk.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum

from .canonical import Clock, random_uuid, utc_now
from .errors import BlockingControlFailure, OscalAssureError, PolicyDataMismatch
from .metrics import MetricContext, MetricOutcome, MetricRegistry, role_bound
from .plan import (
    AssessmentPlan,
    ControlSpec,
    EnforcementMode,
    EvaluationMethod,
    EvaluationWindow,
    LifecyclePhase,
    Operator,
    TargetType,
)
from .results import (
    AssessmentResults,
    Finding,
    FindingStatus,
    Observation,
    ObservationMethod,
    PoamDocument,
    PoamItem,
    ResultBlock,
    Risk,
    RiskStatus,
)
from .tabular import stratify

logger = logging.getLogger(__name__)


class VerdictOutcome(str, Enum):
    SATISFIED = "satisfied"
    NOT_SATISFIED = "not-satisfied"
    SKIPPED = "skipped"


class SkipReason(str, Enum):
    PHASE_MISMATCH = "phase-mismatch"
    WINDOW_NOT_EXECUTABLE = "window-not-executable"
    MANUAL_ATTESTATION_REQUIRED = "manual-attestation-required"


class EnforcementAction(str, Enum):
    NONE = "none"
    LOGGED = "logged"
    WARNED = "warned"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class Verdict:
    control_id: str
    outcome: VerdictOutcome
    skip_reason: SkipReason | None
    observations: tuple[Observation, ...]
    finding: Finding | None
    risk: Risk | None
    enforcement_action_taken: EnforcementAction

    @property
    def observed_value(self) -> float | None:
        for obs in self.observations:
            if obs.observed_value is not None:
                return obs.observed_value
        return None


@dataclass(frozen=True)
class TraceChain:
    """Upward links from a control, in treatment -> risk -> objective ->
    policy order; absent links are omitted, never fabricated."""

    control_id: str
    treatment_id: str | None = None
    risk_id: str | None = None
    objective_id: str | None = None
    policy_id: str | None = None
    resolved_labels: dict[str, str] = dataclasses.field(default_factory=dict)

    def links(self) -> list[tuple[str, str]]:
        chain = []
        for kind in ("treatment", "risk", "objective", "policy"):
            value = getattr(self, f"{kind}_id")
            if value is not None:
                chain.append((kind, value))
        return chain


@dataclass(frozen=True)
class PhaseReport:
    phase: LifecyclePhase
    verdicts: tuple[Verdict, ...]
    assessment_results: AssessmentResults
    poam: PoamDocument | None
    blocked: bool

    def raise_if_blocked(self) -> None:
        if self.blocked:
            raise BlockingControlFailure(
                [
                    v.control_id
                    for v in self.verdicts
                    if v.enforcement_action_taken is EnforcementAction.BLOCKED
                ]
            )


def compare(value: float, operator: Operator, threshold: float) -> bool:
    """True iff the comparison holds. Exact IEEE comparison, no epsilon."""
    if operator is Operator.GT:
        return value > threshold
    if operator is Operator.GE:
        return value >= threshold
    if operator is Operator.LT:
        return value < threshold
    if operator is Operator.LE:
        return value <= threshold
    if operator is Operator.EQ:
        return value == threshold
    return value != threshold


def select_controls(
    plan: AssessmentPlan,
    phase: LifecyclePhase,
    target_type: TargetType | None = None,
) -> list[ControlSpec]:
    """Controls whose phases contain `phase`, in plan order."""
    return [
        spec
        for spec in plan.controls
        if phase in spec.lifecycle_phases
        and (target_type is None or spec.target_type is target_type)
    ]


def control_context(spec: ControlSpec, ctx: MetricContext) -> MetricContext:
    """Specialize a context for one control: merge metric params and pick
    the evaluation side from target_type."""
    params = dict(ctx.params)
    params.update(spec.metric_params)
    return MetricContext(
        table=ctx.table,
        bindings=ctx.bindings,
        params=params,
        evaluate_on="prediction" if spec.target_type is TargetType.MODEL else "target",
    )


def would_execute(spec: ControlSpec) -> bool:
    """Whether enforcement would actually compute this control's metric
    (as opposed to skipping it)."""
    return (
        spec.evaluation_method is EvaluationMethod.AUTOMATED
        and spec.evaluation_window is EvaluationWindow.PER_RUN
    )


def missing_roles(spec: ControlSpec, ctx: MetricContext, registry: MetricRegistry) -> list[str]:
    """Roles a control needs that the context does not provide."""
    if not would_execute(spec):
        return []
    try:
        required = registry.required_roles(
            spec.metric_key,
            "prediction" if spec.target_type is TargetType.MODEL else "target",
        )
    except OscalAssureError:
        return []  # unknown metric key: surfaces as an evaluation error later
    spec_ctx = control_context(spec, ctx)
    return sorted(role for role in required if not role_bound(spec_ctx, role))


def _skip_verdict(
    spec: ControlSpec,
    reason: SkipReason,
    clock: Clock,
) -> Verdict:
    method = (
        ObservationMethod.EXAMINE
        if reason is SkipReason.MANUAL_ATTESTATION_REQUIRED
        else ObservationMethod.TEST
    )
    observation = Observation(
        uuid=random_uuid(),
        title=f"{spec.metric_key} ({spec.control_id})",
        description=spec.description,
        method=method,
        observed_value=None,
        collected_at=clock(),
        relevant_control_id=spec.control_id,
        remarks=f"skipped: {reason.value}",
    )
    return Verdict(
        control_id=spec.control_id,
        outcome=VerdictOutcome.SKIPPED,
        skip_reason=reason,
        observations=(observation,),
        finding=None,
        risk=None,
        enforcement_action_taken=EnforcementAction.NONE,
    )


def _affected_groups(outcome: MetricOutcome | None) -> str | None:
    if outcome is None or not outcome.per_group:
        return None
    return ", ".join(sorted(outcome.per_group))


def _build_risk(
    spec: ControlSpec,
    finding: Finding,
    failing_value: float | None,
    failing_outcome: MetricOutcome | None,
    failing_stratum: str | None,
) -> Risk:
    facets: list[tuple[str, str]] = [
        ("metric", spec.metric_key),
        ("actual", repr(failing_value) if failing_value is not None else "not-computable"),
        ("threshold", repr(spec.threshold)),
        ("operator", spec.operator.value),
    ]
    affected = _affected_groups(failing_outcome)
    if affected is not None:
        facets.append(("affected-groups", affected))
    if failing_stratum is not None:
        facets.append(("stratum", failing_stratum))
    return Risk(
        uuid=random_uuid(),
        title=f"Control {spec.control_id} not satisfied: {spec.metric_key}",
        status=RiskStatus.OPEN,
        facets=tuple(facets),
        linked_finding_uuid=finding.uuid,
        risk_id_ref=spec.risk_id,
    )


def evaluate_control(
    spec: ControlSpec,
    ctx: MetricContext,
    registry: MetricRegistry,
    phase: LifecyclePhase | None = None,
    clock: Clock | None = None,
    mode_override: EnforcementMode | None = None,
) -> Verdict:
    """Evaluate one control: the metric runs once per stratum when
    stratify_by is set, manual/hybrid and non-per-run controls are skipped,
    and evaluation errors fail closed (not-satisfied + evaluation-error)."""
    clock = clock or utc_now
    if phase is not None and phase not in spec.lifecycle_phases:
        return _skip_verdict(spec, SkipReason.PHASE_MISMATCH, clock)
    if spec.evaluation_method is not EvaluationMethod.AUTOMATED:
        return _skip_verdict(spec, SkipReason.MANUAL_ATTESTATION_REQUIRED, clock)
    if spec.evaluation_window is not EvaluationWindow.PER_RUN:
        return _skip_verdict(spec, SkipReason.WINDOW_NOT_EXECUTABLE, clock)

    spec_ctx = control_context(spec, ctx)
    stratification_error: str | None = None
    if spec.stratify_by is not None:
        try:
            strata = [
                (label, MetricContext(table, spec_ctx.bindings, spec_ctx.params, spec_ctx.evaluate_on))
                for label, table in stratify(spec_ctx.table, spec.stratify_by)
            ]
        except OscalAssureError as exc:
            # fail closed: a broken stratification must not crash the phase
            stratification_error = str(exc)
            strata = []
    else:
        strata = [(None, spec_ctx)]

    observations: list[Observation] = []
    failures: list[tuple[float | None, MetricOutcome | None, str | None]] = []
    evaluation_error = False
    if stratification_error is not None:
        evaluation_error = True
        observations.append(
            Observation(
                uuid=random_uuid(),
                title=f"{spec.metric_key} ({spec.control_id})",
                description=spec.description,
                method=ObservationMethod.TEST,
                observed_value=None,
                collected_at=clock(),
                relevant_control_id=spec.control_id,
                remarks=f"evaluation-error: {stratification_error}",
            )
        )
        failures.append((None, None, None))
    for stratum_label, stratum_ctx in strata:
        outcome: MetricOutcome | None = None
        remarks: str | None = None
        value: float | None = None
        try:
            outcome = registry.evaluate(spec.metric_key, stratum_ctx)
            value = outcome.value
            passed = compare(value, spec.operator, spec.threshold)
        except OscalAssureError as exc:
            passed = False
            evaluation_error = True
            remarks = f"evaluation-error: {exc}"
        if outcome is not None and outcome.excluded_rows:
            note = f"excluded {outcome.excluded_rows} row(s) with missing bound values"
            remarks = f"{remarks}; {note}" if remarks else note
        observations.append(
            Observation(
                uuid=random_uuid(),
                title=f"{spec.metric_key} ({spec.control_id})"
                + (f" [{stratum_label}]" if stratum_label is not None else ""),
                description=spec.description,
                method=ObservationMethod.TEST,
                observed_value=value,
                collected_at=clock(),
                relevant_control_id=spec.control_id,
                per_group=dict(outcome.per_group) if outcome and outcome.per_group else None,
                stratum=stratum_label,
                excluded_rows=outcome.excluded_rows if outcome else 0,
                remarks=remarks,
            )
        )
        if not passed:
            failures.append((value, outcome, stratum_label))

    status = FindingStatus.NOT_SATISFIED if failures else FindingStatus.SATISFIED
    finding = Finding(
        uuid=random_uuid(),
        title=f"{spec.control_id}: {spec.metric_key} {spec.operator.value} "
        f"{spec.threshold!r}",
        target_control_id=spec.control_id,
        status=status,
        related_observation_uuids=tuple(obs.uuid for obs in observations),
        remarks="evaluation-error" if evaluation_error else None,
    )

    risk: Risk | None = None
    mode = mode_override or spec.enforcement_mode
    action = EnforcementAction.NONE
    if failures:
        risk = _build_risk(spec, finding, *failures[0])
        detail = "; ".join(
            f"value {value!r}" + (f" in stratum {stratum!r}" if stratum else "")
            for value, _, stratum in failures
        )
        message = (
            f"control {spec.control_id} not satisfied: {spec.metric_key} "
            f"{spec.operator.value} {spec.threshold!r} ({detail})"
        )
        if mode is EnforcementMode.BLOCK:
            action = EnforcementAction.BLOCKED
            logger.error("%s [block]", message)
        elif mode is EnforcementMode.WARN:
            action = EnforcementAction.WARNED
            logger.warning("%s [warn]", message)
        else:
            action = EnforcementAction.LOGGED
            logger.info("%s [monitor]", message)

    return Verdict(
        control_id=spec.control_id,
        outcome=(
            VerdictOutcome.NOT_SATISFIED if failures else VerdictOutcome.SATISFIED
        ),
        skip_reason=None,
        observations=tuple(observations),
        finding=finding,
        risk=risk,
        enforcement_action_taken=action,
    )


def enforce_phase(
    plan: AssessmentPlan,
    phase: LifecyclePhase,
    ctx: MetricContext,
    registry: MetricRegistry,
    mode_override: EnforcementMode | None = None,
    clock: Clock | None = None,
) -> PhaseReport:
    """Evaluate all controls selected for a phase, in plan order.

    A block-mode failure does not stop evaluation of the remaining
    controls (complete evidence); the report carries blocked=True and the
    caller aborts at the process boundary after the phase.
    """
    clock = clock or utc_now
    selected = select_controls(plan, phase)

    mismatches = []
    for spec in selected:
        missing = missing_roles(spec, ctx, registry)
        if missing:
            mismatches.append(f"{spec.control_id} needs {', '.join(missing)}")
    if mismatches:
        raise PolicyDataMismatch(
            f"phase {phase.value}: bindings do not satisfy selected controls: "
            + "; ".join(mismatches)
        )

    start = clock()
    verdicts = tuple(
        evaluate_control(spec, ctx, registry, phase, clock, mode_override)
        for spec in selected
    )
    end = clock()

    observations = tuple(obs for v in verdicts for obs in v.observations)
    findings = tuple(v.finding for v in verdicts if v.finding is not None)
    risks = tuple(v.risk for v in verdicts if v.risk is not None)
    block = ResultBlock(
        uuid=random_uuid(),
        title=f"{phase.value} phase",
        start=start,
        end=end,
        observations=observations,
        findings=findings,
        risks=risks,
        reviewed_control_ids=tuple(spec.control_id for spec in selected),
    )
    results = AssessmentResults(
        uuid=random_uuid(),
        title=f"Assessment results: {plan.title}" if plan.title else "Assessment results",
        version=plan.version,
        last_modified=end,
        results=(block,),
    )
    poam = generate_poam(results, plan, clock) if risks else None
    blocked = any(
        v.enforcement_action_taken is EnforcementAction.BLOCKED for v in verdicts
    )
    return PhaseReport(
        phase=phase,
        verdicts=verdicts,
        assessment_results=results,
        poam=poam,
        blocked=blocked,
    )


def generate_poam(
    results: AssessmentResults,
    plan: AssessmentPlan,
    clock: Clock | None = None,
) -> PoamDocument:
    """One open POA&M item per open risk, carrying the originating
    control's treatment id when the plan declares one."""
    clock = clock or utc_now
    findings_by_uuid = {f.uuid: f for f in results.all_findings()}
    items = []
    for risk in results.all_risks():
        if risk.status is not RiskStatus.OPEN:
            continue
        treatment = None
        finding = findings_by_uuid.get(risk.linked_finding_uuid)
        if finding is not None:
            try:
                treatment = plan.control(finding.target_control_id).treatment_id
            except KeyError:
                treatment = None
        metric = risk.facet("metric") or "metric"
        actual = risk.facet("actual") or "?"
        threshold = risk.facet("threshold") or "?"
        operator = risk.facet("operator") or "?"
        items.append(
            PoamItem(
                uuid=random_uuid(),
                title=f"Remediate: {risk.title}",
                description=(
                    f"{metric} was {actual}, required {operator} {threshold}."
                ),
                related_risk_uuid=risk.uuid,
                status=RiskStatus.OPEN,
                treatment_id_ref=treatment,
            )
        )
    return PoamDocument(
        uuid=random_uuid(),
        title=f"POA&M: {plan.title}" if plan.title else "POA&M",
        version=plan.version,
        last_modified=clock(),
        poam_items=tuple(items),
    )


def combine_reports(
    reports: list[PhaseReport], clock: Clock | None = None
) -> tuple[AssessmentResults | None, PoamDocument | None]:
    """Merge per-phase reports into one results document (one result block
    per phase) and one POA&M holding every open item."""
    clock = clock or utc_now
    if not reports:
        return None, None
    blocks = tuple(
        block for report in reports for block in report.assessment_results.results
    )
    first = reports[0].assessment_results
    merged = AssessmentResults(
        uuid=random_uuid(),
        title=first.title,
        version=first.version,
        last_modified=clock(),
        results=blocks,
    )
    items = tuple(
        item for report in reports if report.poam is not None for item in report.poam.poam_items
    )
    if not items:
        return merged, None
    first_poam = next(report.poam for report in reports if report.poam is not None)
    poam = PoamDocument(
        uuid=random_uuid(),
        title=first_poam.title,
        version=first_poam.version,
        last_modified=clock(),
        poam_items=items,
    )
    return merged, poam


def trace_chain(
    spec: ControlSpec, labels: dict[str, str] | None = None
) -> TraceChain:
    """Assemble the traceability chain from the control's optional id
    fields, resolving labels from a side-loaded id->label registry."""
    present = {
        "treatment_id": spec.treatment_id,
        "risk_id": spec.risk_id,
        "objective_id": spec.objective_id,
        "policy_id": spec.policy_id,
    }
    resolved = {}
    if labels:
        for value in present.values():
            if value is not None and value in labels:
                resolved[value] = labels[value]
    return TraceChain(
        control_id=spec.control_id,
        treatment_id=present["treatment_id"],
        risk_id=present["risk_id"],
        objective_id=present["objective_id"],
        policy_id=present["policy_id"],
        resolved_labels=resolved,
    )
