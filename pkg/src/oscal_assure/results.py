"""Assessment-results and POA&M document model plus the internal
structural validator (the in-library approximation of schema checking).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from enum import Enum


class ObservationMethod(str, Enum):
    TEST = "TEST"
    EXAMINE = "EXAMINE"


class FindingStatus(str, Enum):
    SATISFIED = "satisfied"
    NOT_SATISFIED = "not-satisfied"


class RiskStatus(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class Observation:
    uuid: str
    title: str
    description: str
    method: ObservationMethod
    observed_value: float | None
    collected_at: datetime
    relevant_control_id: str
    per_group: dict[str, float] | None = None
    stratum: str | None = None
    excluded_rows: int = 0
    remarks: str | None = None


@dataclass(frozen=True)
class Finding:
    uuid: str
    title: str
    target_control_id: str
    status: FindingStatus
    related_observation_uuids: tuple[str, ...]
    remarks: str | None = None


@dataclass(frozen=True)
class Risk:
    uuid: str
    title: str
    status: RiskStatus
    facets: tuple[tuple[str, str], ...]
    linked_finding_uuid: str
    risk_id_ref: str | None = None

    def facet(self, name: str) -> str | None:
        for facet_name, value in self.facets:
            if facet_name == name:
                return value
        return None


@dataclass(frozen=True)
class ResultBlock:
    uuid: str
    title: str
    start: datetime
    end: datetime
    observations: tuple[Observation, ...]
    findings: tuple[Finding, ...]
    risks: tuple[Risk, ...]
    reviewed_control_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class AssessmentResults:
    uuid: str
    title: str
    version: str
    last_modified: datetime
    results: tuple[ResultBlock, ...]

    def all_risks(self) -> list[Risk]:
        return [risk for block in self.results for risk in block.risks]

    def all_findings(self) -> list[Finding]:
        return [finding for block in self.results for finding in block.findings]


@dataclass(frozen=True)
class PoamItem:
    uuid: str
    title: str
    description: str
    related_risk_uuid: str
    status: RiskStatus
    treatment_id_ref: str | None = None


@dataclass(frozen=True)
class PoamDocument:
    uuid: str
    title: str
    version: str
    last_modified: datetime
    poam_items: tuple[PoamItem, ...]


@dataclass(frozen=True)
class StructuralViolation:
    path: str
    rule: str
    message: str


_MANDATORY_FACETS = ("metric", "actual", "threshold", "operator")


def _check_uuid(uuid: str, path: str, violations: list[StructuralViolation]) -> None:
    if not uuid or not str(uuid).strip():
        violations.append(StructuralViolation(path, "uuid-missing", "uuid is empty"))


def _validate_results(doc: AssessmentResults) -> list[StructuralViolation]:
    violations: list[StructuralViolation] = []
    _check_uuid(doc.uuid, "assessment-results", violations)
    for b, block in enumerate(doc.results):
        base = f"results[{b}]"
        _check_uuid(block.uuid, base, violations)
        if block.end < block.start:
            violations.append(
                StructuralViolation(base, "time-order", "end precedes start")
            )
        observation_uuids = set()
        for i, obs in enumerate(block.observations):
            path = f"{base}.observations[{i}]"
            _check_uuid(obs.uuid, path, violations)
            observation_uuids.add(obs.uuid)
            if obs.observed_value is None or not math.isfinite(obs.observed_value):
                if not obs.remarks:
                    violations.append(
                        StructuralViolation(
                            path,
                            "value-not-finite",
                            "observation has no finite value and no explanatory remark",
                        )
                    )
        finding_uuids = set()
        for i, finding in enumerate(block.findings):
            path = f"{base}.findings[{i}]"
            _check_uuid(finding.uuid, path, violations)
            finding_uuids.add(finding.uuid)
            if not finding.related_observation_uuids:
                violations.append(
                    StructuralViolation(
                        path, "reference-missing", "finding references no observation"
                    )
                )
            for ref in finding.related_observation_uuids:
                if ref not in observation_uuids:
                    violations.append(
                        StructuralViolation(
                            path,
                            "reference-missing",
                            f"finding references unknown observation {ref}",
                        )
                    )
        for i, risk in enumerate(block.risks):
            path = f"{base}.risks[{i}]"
            _check_uuid(risk.uuid, path, violations)
            if risk.linked_finding_uuid not in finding_uuids:
                violations.append(
                    StructuralViolation(
                        path,
                        "reference-missing",
                        f"risk references unknown finding {risk.linked_finding_uuid}",
                    )
                )
            present = {name for name, _ in risk.facets}
            for required in _MANDATORY_FACETS:
                if required not in present:
                    violations.append(
                        StructuralViolation(
                            path, "facet-missing", f"risk lacks facet {required!r}"
                        )
                    )
    return violations


def _validate_poam(
    doc: PoamDocument, results: AssessmentResults | None
) -> list[StructuralViolation]:
    violations: list[StructuralViolation] = []
    _check_uuid(doc.uuid, "poam", violations)
    seen_risks: dict[str, int] = {}
    for i, item in enumerate(doc.poam_items):
        path = f"poam-items[{i}]"
        _check_uuid(item.uuid, path, violations)
        if not item.related_risk_uuid:
            violations.append(
                StructuralViolation(path, "reference-missing", "item references no risk")
            )
            continue
        if item.related_risk_uuid in seen_risks:
            violations.append(
                StructuralViolation(
                    path,
                    "poam-cardinality",
                    f"risk {item.related_risk_uuid} already covered by "
                    f"poam-items[{seen_risks[item.related_risk_uuid]}]",
                )
            )
        else:
            seen_risks[item.related_risk_uuid] = i
    if results is not None:
        known = {risk.uuid: risk for risk in results.all_risks()}
        for i, item in enumerate(doc.poam_items):
            if item.related_risk_uuid and item.related_risk_uuid not in known:
                violations.append(
                    StructuralViolation(
                        f"poam-items[{i}]",
                        "reference-missing",
                        f"item references unknown risk {item.related_risk_uuid}",
                    )
                )
        for uuid, risk in known.items():
            if risk.status is RiskStatus.OPEN and uuid not in seen_risks:
                violations.append(
                    StructuralViolation(
                        "poam-items",
                        "poam-cardinality",
                        f"open risk {uuid} has no poam item",
                    )
                )
    return violations


def validate_document_structure(
    doc: AssessmentResults | PoamDocument,
    results: AssessmentResults | None = None,
) -> list[StructuralViolation]:
    """Structural checks: uuid presence, reference integrity, mandatory
    facets, POA&M cardinality. Empty list means the document is valid.

    Passing the paired assessment results alongside a POA&M additionally
    checks the one-item-per-open-risk contract.
    """
    if isinstance(doc, AssessmentResults):
        return _validate_results(doc)
    if isinstance(doc, PoamDocument):
        return _validate_poam(doc, results)
    raise TypeError(f"cannot validate {type(doc).__name__}")
