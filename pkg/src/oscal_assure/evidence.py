"""Pre-market evidence probes: artifact hashing, environment fingerprint,
dependency BOM ingestion, and the enforcement handshake, persisted to a
per-run vault directory.

Vault layout under <root>/runs/<run_id>/: assessment-results.oscal.json,
poam.oscal.json (only with risks), hashes.json, environment.json,
bom.json, handshake.json; each file appears only when its part was
collected, handshake.json always.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path

from .canonical import Clock, canonical_json_bytes, format_timestamp, utc_now
from .enforcement import PhaseReport, combine_reports
from .errors import (
    InvalidRunId,
    SessionClosed,
    UnparsableManifest,
    UnwritableVault,
)
from .serialize import determinize, serialize_canonical

DEFAULT_VAULT_ROOT = ".oscal-assure"
VAULT_ENV_VAR = "OSCAL_ASSURE_VAULT"

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_HASH_CHUNK = 1 << 16


class ArtifactRole(str, Enum):
    INPUT_DATA = "input-data"
    OUTPUT_MODEL = "output-model"
    PREDICTIONS = "predictions"
    OTHER = "other"


@dataclass(frozen=True)
class ArtifactRecord:
    logical_name: str
    path: str
    sha256: str
    byte_size: int
    role: ArtifactRole


@dataclass(frozen=True)
class EnvFingerprint:
    os_name: str
    os_version: str
    architecture: str
    logical_cpus: int
    runtime_identifiers: dict[str, str]
    fingerprint_digest: str


@dataclass(frozen=True)
class BomComponent:
    name: str
    version: str
    origin: str = "lockfile"


@dataclass(frozen=True)
class DependencyBom:
    components: tuple[BomComponent, ...]
    source_path: str
    format_label: str = "CycloneDX-1.5-subset"


@dataclass
class RunSession:
    """One evidence-collection run. Single writer; record operations append
    until finalize closes the session."""

    run_id: str
    vault_root: Path
    run_dir: Path
    started_at: datetime
    finished_at: datetime | None = None
    artifacts: list[ArtifactRecord] = field(default_factory=list)
    environment: EnvFingerprint | None = None
    bom: DependencyBom | None = None
    handshake: bool = False
    closed: bool = False

    def _check_open(self) -> None:
        if self.closed:
            raise SessionClosed(f"session {self.run_id!r} is already finalized")


@dataclass(frozen=True)
class EvidenceBundle:
    session: RunSession
    artifacts: tuple[ArtifactRecord, ...]
    environment: EnvFingerprint | None
    bom: DependencyBom | None
    handshake_ok: bool
    written_files: tuple[str, ...]


def resolve_vault_root(vault_root: str | os.PathLike | None = None) -> Path:
    """Flag wins over OSCAL_ASSURE_VAULT, which wins over the default."""
    if vault_root is not None:
        return Path(vault_root)
    env = os.environ.get(VAULT_ENV_VAR)
    return Path(env) if env else Path(DEFAULT_VAULT_ROOT)


def open_session(
    run_id: str | None = None,
    vault_root: str | os.PathLike | None = None,
    clock: Clock | None = None,
) -> RunSession:
    """Create <root>/runs/<run_id>/; an existing run_id gets a numeric
    suffix (credit-scoring -> credit-scoring-2)."""
    clock = clock or utc_now
    root = resolve_vault_root(vault_root)
    started = clock()
    if run_id is None:
        run_id = started.strftime("run-%Y%m%d-%H%M%S")
    elif not _RUN_ID_RE.match(run_id):
        raise InvalidRunId(
            f"run id {run_id!r} is not filesystem-safe ([A-Za-z0-9._-] only)"
        )

    runs_dir = root / "runs"
    try:
        runs_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableVault(f"cannot create vault at {root}: {exc}") from exc

    effective = run_id
    suffix = 2
    while (runs_dir / effective).exists():
        effective = f"{run_id}-{suffix}"
        suffix += 1
    run_dir = runs_dir / effective
    try:
        run_dir.mkdir()
    except OSError as exc:
        raise UnwritableVault(f"cannot create run directory {run_dir}: {exc}") from exc

    return RunSession(
        run_id=effective, vault_root=root, run_dir=run_dir, started_at=started
    )


def record_artifact(
    session: RunSession,
    path: str | os.PathLike,
    logical_name: str | None = None,
    role: ArtifactRole = ArtifactRole.OTHER,
) -> ArtifactRecord:
    """Stream a file, compute its SHA-256, and append the record."""
    session._check_open()
    source = Path(path)
    digest = hashlib.sha256()
    size = 0
    with open(source, "rb") as handle:
        while chunk := handle.read(_HASH_CHUNK):
            digest.update(chunk)
            size += len(chunk)
    record = ArtifactRecord(
        logical_name=logical_name or source.name,
        path=str(source),
        sha256=digest.hexdigest(),
        byte_size=size,
        role=role,
    )
    session.artifacts.append(record)
    return record


def verify_artifact_records(records: list[ArtifactRecord]) -> list[str]:
    """Logical names of records whose file no longer matches its digest."""
    failed = []
    for record in records:
        digest = hashlib.sha256()
        try:
            with open(record.path, "rb") as handle:
                while chunk := handle.read(_HASH_CHUNK):
                    digest.update(chunk)
        except OSError:
            failed.append(record.logical_name)
            continue
        if digest.hexdigest() != record.sha256:
            failed.append(record.logical_name)
    return failed


def canonical_environment_bytes(
    os_name: str,
    os_version: str,
    architecture: str,
    logical_cpus: int,
    runtime_identifiers: dict[str, str],
) -> bytes:
    """Canonical serialization the fingerprint digest is computed over:
    compact JSON, sorted keys, UTF-8."""
    payload = {
        "architecture": architecture,
        "logical_cpus": logical_cpus,
        "os_name": os_name,
        "os_version": os_version,
        "runtime_identifiers": dict(sorted(runtime_identifiers.items())),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def make_fingerprint(
    os_name: str,
    os_version: str,
    architecture: str,
    logical_cpus: int,
    runtime_identifiers: dict[str, str],
) -> EnvFingerprint:
    digest = hashlib.sha256(
        canonical_environment_bytes(
            os_name, os_version, architecture, logical_cpus, runtime_identifiers
        )
    ).hexdigest()
    return EnvFingerprint(
        os_name=os_name,
        os_version=os_version,
        architecture=architecture,
        logical_cpus=logical_cpus,
        runtime_identifiers=dict(runtime_identifiers),
        fingerprint_digest=digest,
    )


def capture_environment(session: RunSession) -> EnvFingerprint:
    """Fingerprint the host; unavailable fields are recorded as 'unknown'."""
    session._check_open()
    fingerprint = make_fingerprint(
        os_name=platform.system() or "unknown",
        os_version=platform.release() or "unknown",
        architecture=platform.machine() or "unknown",
        logical_cpus=os.cpu_count() or 0,
        runtime_identifiers={
            "python": platform.python_version() or "unknown",
            "python-implementation": platform.python_implementation() or "unknown",
        },
    )
    session.environment = fingerprint
    return fingerprint


def ingest_dependency_manifest(
    session: RunSession,
    path: str | os.PathLike,
    kind: str = "generic-lockfile",
) -> DependencyBom:
    """Parse 'name==version' / 'name version' lines into a BOM.

    Blank and '#'-comment lines are skipped. Same name at two versions is
    retained; exact duplicate pairs collapse to one component.
    """
    if kind != "generic-lockfile":
        raise ValueError(f"unsupported manifest kind {kind!r}")
    session._check_open()
    source = Path(path)
    pairs: set[tuple[str, str]] = set()
    for line_number, raw_line in enumerate(
        source.read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "==" in line:
            name, _, version = line.partition("==")
        else:
            parts = line.split()
            if len(parts) != 2:
                raise UnparsableManifest(
                    f"{source}: line {line_number}: expected 'name==version' "
                    f"or 'name version', got {raw_line!r}"
                )
            name, version = parts
        name, version = name.strip(), version.strip()
        if not name or not version:
            raise UnparsableManifest(
                f"{source}: line {line_number}: empty name or version in {raw_line!r}"
            )
        pairs.add((name, version))
    bom = DependencyBom(
        components=tuple(
            BomComponent(name=name, version=version) for name, version in sorted(pairs)
        ),
        source_path=str(source),
    )
    session.bom = bom
    return bom


def bom_to_dict(bom: DependencyBom) -> dict:
    return {
        "bomFormat": "CycloneDX",
        "specVersion": "1.5",
        "version": 1,
        "components": [
            {"type": "library", "name": c.name, "version": c.version}
            for c in bom.components
        ],
    }


def _artifact_to_dict(record: ArtifactRecord) -> dict:
    return {
        "logical_name": record.logical_name,
        "path": record.path,
        "sha256": record.sha256,
        "byte_size": record.byte_size,
        "role": record.role.value,
    }


def _environment_to_dict(fp: EnvFingerprint) -> dict:
    return {
        "os_name": fp.os_name,
        "os_version": fp.os_version,
        "architecture": fp.architecture,
        "logical_cpus": fp.logical_cpus,
        "runtime_identifiers": dict(sorted(fp.runtime_identifiers.items())),
        "fingerprint_digest": fp.fingerprint_digest,
    }


def _write_vault_file(run_dir: Path, name: str, payload: bytes) -> None:
    try:
        (run_dir / name).write_bytes(payload)
    except OSError as exc:
        raise UnwritableVault(f"cannot write {run_dir / name}: {exc}") from exc


def finalize_session(
    session: RunSession,
    phase_reports: list[PhaseReport],
    deterministic: bool = False,
    seed_namespace: str | None = None,
    clock: Clock | None = None,
) -> EvidenceBundle:
    """Write the vault bundle and close the session.

    handshake_ok is true iff at least one enforcement phase report is
    attached (enforce ran within the session)."""
    session._check_open()
    clock = clock or utc_now
    session.finished_at = clock()
    session.handshake = len(phase_reports) >= 1

    written: list[str] = []
    results, poam = combine_reports(list(phase_reports))
    if results is not None:
        if deterministic:
            results, mapping = determinize(results, seed_namespace)
            if poam is not None:
                poam, _ = determinize(poam, seed_namespace, reference_map=mapping)
        _write_vault_file(
            session.run_dir,
            "assessment-results.oscal.json",
            serialize_canonical(results),
        )
        written.append("assessment-results.oscal.json")
        if poam is not None:
            _write_vault_file(
                session.run_dir, "poam.oscal.json", serialize_canonical(poam)
            )
            written.append("poam.oscal.json")

    if session.artifacts:
        _write_vault_file(
            session.run_dir,
            "hashes.json",
            canonical_json_bytes([_artifact_to_dict(r) for r in session.artifacts]),
        )
        written.append("hashes.json")

    if session.environment is not None:
        _write_vault_file(
            session.run_dir,
            "environment.json",
            canonical_json_bytes(_environment_to_dict(session.environment)),
        )
        written.append("environment.json")

    if session.bom is not None:
        _write_vault_file(
            session.run_dir, "bom.json", canonical_json_bytes(bom_to_dict(session.bom))
        )
        written.append("bom.json")

    handshake_payload = {
        "handshake_ok": session.handshake,
        "phase_count": len(phase_reports),
        "run_id": session.run_id,
        "started_at": format_timestamp(session.started_at),
        "finished_at": format_timestamp(session.finished_at),
    }
    _write_vault_file(
        session.run_dir, "handshake.json", canonical_json_bytes(handshake_payload)
    )
    written.append("handshake.json")

    session.closed = True
    return EvidenceBundle(
        session=session,
        artifacts=tuple(session.artifacts),
        environment=session.environment,
        bom=session.bom,
        handshake_ok=session.handshake,
        written_files=tuple(written),
    )
