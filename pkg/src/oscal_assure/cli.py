"""Command-line surface: validate | enforce | run | report | trace.

Exit codes: 0 success, 1 runtime/usage error, 2 a block-mode control
failed, 3 invalid policy document or structurally invalid results.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .enforcement import (
    EnforcementAction,
    PhaseReport,
    VerdictOutcome,
    enforce_phase,
    missing_roles,
    select_controls,
    trace_chain,
)
from .errors import OscalAssureError, PolicyError
from .evidence import (
    ArtifactRole,
    capture_environment,
    finalize_session,
    ingest_dependency_manifest,
    open_session,
    record_artifact,
)
from .metrics import MetricContext, default_registry
from .plan import (
    DEFAULT_PROPERTY_NS,
    AssessmentPlan,
    ControlSpec,
    EnforcementMode,
    LifecyclePhase,
    control_properties,
    parse_plan_document,
)
from .results import validate_document_structure
from .serialize import (
    determinize,
    parse_poam_document,
    parse_results_document,
    serialize_canonical,
)
from .tabular import DataTable, EMPTY_TABLE, RoleBindings, bind_roles, load_table

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOCKED = 2
EXIT_INVALID_POLICY = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; 2 is taken
        raise _UsageError(message)


def _plan_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".json":
        return "json"
    if suffix in (".yaml", ".yml"):
        return "yaml"
    raise _UsageError(f"cannot infer policy format from extension {suffix!r} "
                      "(use .json, .yaml, or .yml)")


def _load_plan(path: str, ns: str) -> AssessmentPlan:
    source = Path(path)
    return parse_plan_document(source.read_bytes(), _plan_format(source), ns=ns)


def _split_binding(value: str, flag: str) -> tuple[str, str]:
    column, sep, positive = value.rpartition(":")
    if not sep or not column or not positive:
        raise _UsageError(
            f"{flag} must look like column:positive-label, got {value!r}"
        )
    return column, positive


def _build_bindings(args, table: DataTable) -> RoleBindings:
    target_col, target_pos = _split_binding(args.target, "--target")
    prediction = prediction_pos = None
    if args.prediction:
        prediction, prediction_pos = _split_binding(args.prediction, "--prediction")
    return bind_roles(
        table,
        target_col,
        target_pos,
        group=args.group,
        prediction=prediction,
        prediction_positive=prediction_pos,
        weight=args.weight,
    )


def _add_binding_flags(parser: argparse.ArgumentParser, target_required: bool) -> None:
    parser.add_argument(
        "--target",
        required=target_required,
        metavar="COL:POS",
        help="target column and its positive label",
    )
    parser.add_argument("--group", metavar="COL", help="group (protected attribute) column")
    parser.add_argument(
        "--prediction", metavar="COL:POS", help="prediction column and its positive label"
    )
    parser.add_argument("--weight", metavar="COL", help="sample weight column")
    parser.add_argument(
        "--ns",
        default=DEFAULT_PROPERTY_NS,
        help="property namespace to accept (default: %(default)s)",
    )


def _default_phase(bindings: RoleBindings) -> LifecyclePhase:
    return (
        LifecyclePhase.VALIDATION
        if bindings.prediction is not None
        else LifecyclePhase.TRAINING
    )


def _print_verdict_table(report: PhaseReport, plan: AssessmentPlan, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"phase: {report.phase.value}", file=stream)
    header = (
        f"{'CONTROL':<24} {'METRIC':<30} {'VALUE':>8} {'OP':<3} "
        f"{'THRESH':>8} {'RESULT':<30} ACTION"
    )
    print(header, file=stream)
    print("-" * len(header), file=stream)
    for verdict in report.verdicts:
        spec = plan.control(verdict.control_id)
        value = verdict.observed_value
        value_text = f"{value:.3f}" if value is not None else "-"
        if verdict.outcome is VerdictOutcome.SATISFIED:
            result = "PASS"
        elif verdict.outcome is VerdictOutcome.NOT_SATISFIED:
            result = "FAIL"
        else:
            result = f"SKIP ({verdict.skip_reason.value})"
        print(
            f"{verdict.control_id:<24} "
            f"{spec.metric_key:<30} "
            f"{value_text:>8} "
            f"{spec.operator.value:<3} "
            f"{spec.threshold:>8.3f} "
            f"{result:<30} "
            f"{verdict.enforcement_action_taken.value}",
            file=stream,
        )
    print(file=stream)


def _write_documents(report: PhaseReport, out_dir: Path, deterministic: bool,
                     seed_namespace: str | None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    results = report.assessment_results
    poam = report.poam
    if deterministic:
        results, mapping = determinize(results, seed_namespace)
        if poam is not None:
            poam, _ = determinize(poam, seed_namespace, reference_map=mapping)
    written = []
    results_path = out_dir / "assessment-results.oscal.json"
    results_path.write_bytes(serialize_canonical(results))
    written.append(results_path)
    if poam is not None:
        poam_path = out_dir / "poam.oscal.json"
        poam_path.write_bytes(serialize_canonical(poam))
        written.append(poam_path)
    return written


# --- subcommands -------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        plan = _load_plan(args.policy, args.ns)
    except PolicyError as exc:
        print(f"invalid policy: {exc}", file=sys.stderr)
        return EXIT_INVALID_POLICY
    except OSError as exc:
        print(f"cannot read policy: {exc}", file=sys.stderr)
        return EXIT_ERROR

    print(f"{args.policy}: valid assessment plan, {len(plan.controls)} control(s)")
    for spec in plan.controls:
        print(f"\ncontrol {spec.control_id}: {spec.description}")
        for entry in control_properties(spec):
            print(f"  {entry.name}: {entry.value}")
    return EXIT_OK


def cmd_enforce(args) -> int:
    try:
        plan = _load_plan(args.policy, args.ns)
    except PolicyError as exc:
        print(f"invalid policy: {exc}", file=sys.stderr)
        return EXIT_INVALID_POLICY
    except OSError as exc:
        print(f"cannot read policy: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        table = load_table(Path(args.data).read_bytes())
        bindings = _build_bindings(args, table)
        phase = (
            LifecyclePhase(args.phase) if args.phase else _default_phase(bindings)
        )
        ctx = MetricContext(table=table, bindings=bindings)
        mode_override = EnforcementMode(args.mode_override) if args.mode_override else None
        report = enforce_phase(
            plan, phase, ctx, default_registry(), mode_override=mode_override
        )
        written = _write_documents(
            report, Path(args.out), args.deterministic, args.seed_namespace
        )
    except (OscalAssureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    _print_verdict_table(report, plan)
    for path in written:
        print(f"wrote {path}")
    if report.blocked:
        print("BLOCKED: a block-mode control failed; aborting.", file=sys.stderr)
        return EXIT_BLOCKED
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        plan = _load_plan(args.policy, args.ns)
    except PolicyError as exc:
        print(f"invalid policy: {exc}", file=sys.stderr)
        return EXIT_INVALID_POLICY
    except OSError as exc:
        print(f"cannot read policy: {exc}", file=sys.stderr)
        return EXIT_ERROR

    registry = default_registry()
    try:
        table = bindings = None
        if args.data:
            table = load_table(Path(args.data).read_bytes())
            if not args.target:
                raise _UsageError("--target is required when --data is given")
            bindings = _build_bindings(args, table)

        session = open_session(args.run_id, args.vault)
        capture_environment(session)
        if args.data:
            record_artifact(session, args.data, role=ArtifactRole.INPUT_DATA)
        for path in args.hash or []:
            record_artifact(session, path, role=ArtifactRole.OTHER)
        if args.bom:
            ingest_dependency_manifest(session, args.bom)

        ctx = MetricContext(
            table=table if table is not None else EMPTY_TABLE,
            bindings=bindings,
        )
        mode_override = EnforcementMode(args.mode_override) if args.mode_override else None

        reports: list[PhaseReport] = []
        blocked = False
        for phase in plan.phases_present():
            selected = select_controls(plan, phase)
            unsatisfied = [
                f"{spec.control_id} ({', '.join(missing)})"
                for spec in selected
                for missing in [missing_roles(spec, ctx, registry)]
                if missing
            ]
            if unsatisfied:
                print(
                    f"phase {phase.value}: skipped, roles not bound for "
                    + "; ".join(unsatisfied),
                    file=sys.stderr,
                )
                continue
            report = enforce_phase(
                plan, phase, ctx, registry, mode_override=mode_override
            )
            reports.append(report)
            _print_verdict_table(report, plan)
            if report.blocked:
                blocked = True
                print(
                    f"phase {phase.value} blocked; remaining phases not evaluated.",
                    file=sys.stderr,
                )
                break

        bundle = finalize_session(
            session, reports, deterministic=args.deterministic,
            seed_namespace=args.seed_namespace,
        )
    except _UsageError:
        raise
    except (OscalAssureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    print(f"vault: {session.run_dir}")
    for name in bundle.written_files:
        print(f"  {name}")
    if not bundle.handshake_ok:
        print(
            "handshake failed: no phase was executable with the given bindings.",
            file=sys.stderr,
        )
        return EXIT_ERROR
    return EXIT_BLOCKED if blocked else EXIT_OK


def cmd_report(args) -> int:
    results_path = Path(args.results)
    try:
        results = parse_results_document(results_path.read_bytes())
    except (OscalAssureError, OSError) as exc:
        print(f"cannot parse results: {exc}", file=sys.stderr)
        return EXIT_ERROR

    violations = validate_document_structure(results)
    if violations:
        for violation in violations:
            print(
                f"structural violation at {violation.path}: "
                f"[{violation.rule}] {violation.message}",
                file=sys.stderr,
            )
        return EXIT_INVALID_POLICY

    poam = None
    poam_path = results_path.parent / "poam.oscal.json"
    if poam_path.exists():
        try:
            poam = parse_poam_document(poam_path.read_bytes())
        except OscalAssureError as exc:
            print(f"note: ignoring sibling POA&M ({exc})", file=sys.stderr)

    if args.format == "json":
        print(json.dumps(_report_payload(results, poam), indent=2))
        return EXIT_OK

    total_findings = results.all_findings()
    if not total_findings:
        print("no findings")
    for block in results.results:
        print(f"== {block.title} ({format_range(block)})")
        for finding in block.findings:
            marker = "PASS" if finding.status.value == "satisfied" else "FAIL"
            print(f"  [{marker}] {finding.title}")
        for obs in block.observations:
            if obs.per_group:
                rates = ", ".join(
                    f"{label}: {rate:.4f}" for label, rate in sorted(obs.per_group.items())
                )
                print(f"    {obs.title}: group rates {rates}")
        for risk in block.risks:
            facets = {name: value for name, value in risk.facets}
            actual = _round_token(facets.get("actual", "?"))
            threshold = _round_token(facets.get("threshold", "?"))
            line = (
                f"  RISK {risk.title}: {facets.get('metric', '?')} {actual} "
                f"{facets.get('operator', '?')} {threshold}"
            )
            if "affected-groups" in facets:
                line += f" (groups: {facets['affected-groups']})"
            print(line)
    if poam is not None and poam.poam_items:
        print("== POA&M")
        for item in poam.poam_items:
            treatment = f" [treatment {item.treatment_id_ref}]" if item.treatment_id_ref else ""
            print(f"  [{item.status.value}] {item.title}{treatment}")
    return EXIT_OK


def format_range(block) -> str:
    return f"{block.start.isoformat()} .. {block.end.isoformat()}"


def _round_token(token: str) -> str:
    try:
        return f"{float(token):.3f}"
    except ValueError:
        return token


def _report_payload(results, poam) -> dict:
    blocks = []
    for block in results.results:
        blocks.append(
            {
                "title": block.title,
                "findings": [
                    {
                        "control_id": f.target_control_id,
                        "status": f.status.value,
                        "title": f.title,
                    }
                    for f in block.findings
                ],
                "observations": [
                    {
                        "control_id": o.relevant_control_id,
                        "value": o.observed_value,
                        "stratum": o.stratum,
                        "per_group": o.per_group,
                        "remarks": o.remarks,
                    }
                    for o in block.observations
                ],
                "risks": [
                    {
                        "title": r.title,
                        "status": r.status.value,
                        "facets": dict(r.facets),
                    }
                    for r in block.risks
                ],
            }
        )
    payload = {"results": blocks}
    if poam is not None:
        payload["poam_items"] = [
            {
                "title": item.title,
                "status": item.status.value,
                "related_risk_uuid": item.related_risk_uuid,
                "treatment_id_ref": item.treatment_id_ref,
            }
            for item in poam.poam_items
        ]
    return payload


def cmd_trace(args) -> int:
    try:
        plan = _load_plan(args.policy, args.ns)
    except PolicyError as exc:
        print(f"invalid policy: {exc}", file=sys.stderr)
        return EXIT_INVALID_POLICY
    except OSError as exc:
        print(f"cannot read policy: {exc}", file=sys.stderr)
        return EXIT_ERROR

    labels = None
    if args.labels:
        try:
            raw = json.loads(Path(args.labels).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read labels registry: {exc}", file=sys.stderr)
            return EXIT_ERROR
        labels = {str(k): str(v) for k, v in raw.items()}

    try:
        spec: ControlSpec = plan.control(args.control_id)
    except KeyError:
        print(f"unknown control {args.control_id!r}", file=sys.stderr)
        return EXIT_ERROR

    chain = trace_chain(spec, labels)
    top_down = list(reversed(chain.links()))
    for kind, identifier in top_down:
        label = chain.resolved_labels.get(identifier)
        suffix = f"  {label}" if label else ""
        print(f"{kind:<10} {identifier}{suffix}")
    print(f"{'control':<10} {spec.control_id}  {spec.description}")
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="oscal-assure", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="show monitor-mode log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a policy and list its properties")
    p.add_argument("policy")
    p.add_argument("--ns", default=DEFAULT_PROPERTY_NS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("enforce", help="evaluate one lifecycle phase against data")
    p.add_argument("policy")
    p.add_argument("data")
    p.add_argument("--phase", choices=[m.value for m in LifecyclePhase])
    _add_binding_flags(p, target_required=True)
    p.add_argument("--out", default=".", help="directory for output documents")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--seed-namespace", default=None)
    p.add_argument(
        "--mode-override", choices=[m.value for m in EnforcementMode], default=None
    )
    p.set_defaults(func=cmd_enforce)

    p = sub.add_parser("run", help="evidence session around enforcement")
    p.add_argument("run_id")
    p.add_argument("policy")
    p.add_argument("--data", default=None)
    _add_binding_flags(p, target_required=False)
    p.add_argument("--hash", action="append", metavar="PATH",
                   help="artifact to hash into the evidence bundle (repeatable)")
    p.add_argument("--bom", default=None, metavar="LOCKFILE",
                   help="dependency manifest to ingest as a CycloneDX-subset BOM")
    p.add_argument("--vault", default=None, help="vault root (overrides OSCAL_ASSURE_VAULT)")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--seed-namespace", default=None)
    p.add_argument(
        "--mode-override", choices=[m.value for m in EnforcementMode], default=None
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render an assessment-results document")
    p.add_argument("results")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("trace", help="print a control's traceability chain")
    p.add_argument("policy")
    p.add_argument("control_id")
    p.add_argument("--labels", default=None, help="JSON file mapping ids to labels")
    p.add_argument("--ns", default=DEFAULT_PROPERTY_NS)
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
