"""Tournament scoreboard: event-sourced submissions, statuses, frontiers.

Every state change is an event appended to a JSON-lines log; in-memory
indexes (tournaments, submissions, per-tournament frontier caches) are a
pure fold over that log, so a fresh instance replaying the log lands in a
byte-identical canonical state. One lock serializes all writers; queries
take it briefly and never observe a half-applied event.
"""

from __future__ import annotations

import enum
import hashlib
import io
import csv
import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .eventlog import EventLog, LogEvent
from .ids import is_uid, new_uid
from .pareto import (
    DEFAULT_SPACE,
    MetricSpace,
    MetricVector,
    ParetoError,
    ParetoFrontier,
    compute_frontier,
    distance_to_frontier,
    insert_incremental,
    project,
    validate_vector,
)
from .runner import DispersionReport, EnvironmentSnapshot, RunnerError, WorkflowDescriptor
from .registry import InvalidPackageError

ANONYMOUS_TOKEN_HASH = hashlib.sha256(b"").hexdigest()

EVENT_TOURNAMENT_CREATED = "tournament_created"
EVENT_TOURNAMENT_OPENED = "tournament_opened"
EVENT_TOURNAMENT_CLOSED = "tournament_closed"
EVENT_SUBMISSION_RECEIVED = "submission_received"
EVENT_STATUS_CHANGED = "status_changed"

FILTER_KEYS = ("platform_label", "os_family", "program_tag", "model_tag", "dataset_tag")


class ServiceError(Exception):
    """Caller-fault failure with a stable machine code and HTTP status."""

    def __init__(self, code: str, message: str, field: str | None = None, http_status: int = 400):
        super().__init__(message)
        self.code = code
        self.field = field
        self.http_status = http_status

    def to_json(self) -> dict:
        doc = {"code": self.code, "message": str(self)}
        if self.field is not None:
            doc["field"] = self.field
        return doc


class ReplayError(Exception):
    def __init__(self, seq: int, cause: Exception):
        super().__init__(f"log event seq={seq} cannot be applied: {cause}")
        self.seq = seq
        self.cause = cause


def _unknown_tournament(uid: str) -> ServiceError:
    return ServiceError("unknown_tournament", f"no tournament with uid {uid!r}", http_status=404)


def _malformed(message: str, field: str) -> ServiceError:
    return ServiceError("malformed_record", message, field=field)


class TournamentStatus(enum.Enum):
    DRAFT = "draft"
    OPEN = "open"
    CLOSED = "closed"


class ValidationStatus(enum.Enum):
    PENDING = "pending"
    VALIDATED = "validated"
    REJECTED = "rejected"
    UNREPRODUCIBLE = "unreproducible"


# pending is triaged by the evaluation committee; validated results may
# still be demoted by a post-hoc audit. Everything else is final.
ALLOWED_TRANSITIONS = frozenset(
    {
        (ValidationStatus.PENDING, ValidationStatus.VALIDATED),
        (ValidationStatus.PENDING, ValidationStatus.REJECTED),
        (ValidationStatus.PENDING, ValidationStatus.UNREPRODUCIBLE),
        (ValidationStatus.VALIDATED, ValidationStatus.UNREPRODUCIBLE),
    }
)


def _parse_instant(value: str, field: str) -> datetime:
    if not isinstance(value, str):
        raise _malformed(f"{field} must be an ISO-8601 string", field)
    try:
        # plain-stdlib parse; trailing Z is accepted as UTC
        return datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise _malformed(f"{field} is not a valid ISO-8601 timestamp: {value!r}", field) from None


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class Tournament:
    uid: str
    title: str
    space: MetricSpace
    opens_at: str
    closes_at: str
    status: TournamentStatus

    def to_json(self) -> dict:
        return {
            "uid": self.uid,
            "title": self.title,
            "space": self.space.to_json(),
            "opens_at": self.opens_at,
            "closes_at": self.closes_at,
            "status": self.status.value,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Tournament":
        return cls(
            uid=doc["uid"],
            title=doc["title"],
            space=MetricSpace.from_json(doc["space"]),
            opens_at=doc["opens_at"],
            closes_at=doc["closes_at"],
            status=TournamentStatus(doc["status"]),
        )


@dataclass(frozen=True)
class SubmissionRecord:
    uid: str
    tournament_uid: str
    workflow: WorkflowDescriptor
    environment: EnvironmentSnapshot
    metrics: MetricVector
    dispersion: DispersionReport
    submitter_token_hash: str
    validation_status: ValidationStatus
    submitted_at: str
    nonce: str | None = None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "uid": self.uid,
            "tournament_uid": self.tournament_uid,
            "workflow": self.workflow.to_json(),
            "environment": self.environment.to_json(),
            "metrics": self.metrics.to_json(),
            "dispersion": self.dispersion.to_json(),
            "submitter_token_hash": self.submitter_token_hash,
            "validation_status": self.validation_status.value,
            "submitted_at": self.submitted_at,
            "nonce": self.nonce,
            "note": self.note,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "SubmissionRecord":
        return cls(
            uid=doc["uid"],
            tournament_uid=doc["tournament_uid"],
            workflow=WorkflowDescriptor.from_json(doc["workflow"]),
            environment=EnvironmentSnapshot.from_json(doc["environment"]),
            metrics=MetricVector(doc["metrics"]),
            dispersion=DispersionReport.from_json(doc["dispersion"]),
            submitter_token_hash=doc["submitter_token_hash"],
            validation_status=ValidationStatus(doc["validation_status"]),
            submitted_at=doc["submitted_at"],
            nonce=doc.get("nonce"),
            note=doc.get("note", ""),
        )


@dataclass(frozen=True)
class BoardPoint:
    record: SubmissionRecord
    on_frontier: bool
    distance: float


@dataclass(frozen=True)
class ScoreboardView:
    tournament_uid: str
    dim_x: str
    dim_y: str
    filters: Mapping[str, str]
    include_pending: bool
    points: tuple[BoardPoint, ...]
    generated_at: str

    def to_json(self) -> dict:
        return {
            "tournament_uid": self.tournament_uid,
            "dim_x": self.dim_x,
            "dim_y": self.dim_y,
            "filters": dict(self.filters),
            "include_pending": self.include_pending,
            "generated_at": self.generated_at,
            "points": [
                {
                    "uid": p.record.uid,
                    "status": p.record.validation_status.value,
                    "submitted_at": p.record.submitted_at,
                    "x": p.record.metrics[self.dim_x],
                    "y": p.record.metrics[self.dim_y],
                    "metrics": p.record.metrics.to_json(),
                    "dispersion": p.record.dispersion.to_json(),
                    "environment": p.record.environment.to_json(),
                    "workflow": p.record.workflow.to_json(),
                    "on_frontier": p.on_frontier,
                    "distance": p.distance,
                }
                for p in self.points
            ],
        }


def _ref_tags(ref) -> frozenset[str]:
    return ref.tags if ref is not None else frozenset()


def _matches_filters(record: SubmissionRecord, filters: Mapping[str, str]) -> bool:
    for key, value in filters.items():
        if key == "platform_label":
            if value not in record.environment.platform.labels:
                return False
        elif key == "os_family":
            if record.environment.platform.os_family.value != value:
                return False
        elif key == "program_tag":
            if value not in _ref_tags(record.workflow.program_ref):
                return False
        elif key == "model_tag":
            if value not in _ref_tags(record.workflow.model_ref):
                return False
        elif key == "dataset_tag":
            if value not in _ref_tags(record.workflow.dataset_ref):
                return False
        else:
            raise ServiceError("unknown_filter", f"unsupported filter key {key!r}", field=key)
    return True


class ScoreboardService:
    """Single-deployment scoreboard backed by one event log file."""

    def __init__(self, log_path: Path | str, token_hashes: Iterable[str] = ()):
        self._lock = threading.RLock()
        self.token_hashes = frozenset(token_hashes)
        self._tournaments: dict[str, Tournament] = {}
        self._submissions: dict[str, SubmissionRecord] = {}
        self._by_tournament: dict[str, list[str]] = {}
        self._nonce_map: dict[tuple[str, str], str] = {}
        # full-space caches: "live" folds pending+validated, "validated" only the latter
        self._frontier_live: dict[str, ParetoFrontier] = {}
        self._frontier_validated: dict[str, ParetoFrontier] = {}
        self._log = EventLog(log_path)
        for event in self._log.read_all():
            try:
                self._apply(event)
            except Exception as exc:  # noqa: BLE001 - replay surfaces any failure
                raise ReplayError(event.seq, exc) from exc

    # -- event plumbing ----------------------------------------------------

    def _record(self, kind: str, payload: dict) -> LogEvent:
        event = self._log.append(kind, payload)
        self._apply(event)
        return event

    def _apply(self, event: LogEvent) -> None:
        payload = event.payload
        if event.kind == EVENT_TOURNAMENT_CREATED:
            tournament = Tournament.from_json(payload)
            self._tournaments[tournament.uid] = tournament
            self._by_tournament[tournament.uid] = []
            empty = ParetoFrontier(tournament.space, ())
            self._frontier_live[tournament.uid] = empty
            self._frontier_validated[tournament.uid] = empty
        elif event.kind == EVENT_TOURNAMENT_OPENED:
            uid = payload["uid"]
            self._tournaments[uid] = replace(self._tournaments[uid], status=TournamentStatus.OPEN)
        elif event.kind == EVENT_TOURNAMENT_CLOSED:
            uid = payload["uid"]
            self._tournaments[uid] = replace(self._tournaments[uid], status=TournamentStatus.CLOSED)
        elif event.kind == EVENT_SUBMISSION_RECEIVED:
            record = SubmissionRecord.from_json(payload)
            self._submissions[record.uid] = record
            self._by_tournament[record.tournament_uid].append(record.uid)
            if record.nonce is not None:
                self._nonce_map[(record.tournament_uid, record.nonce)] = record.uid
            space = self._tournaments[record.tournament_uid].space
            if record.metrics.ids == space.ids:
                frontier = self._frontier_live[record.tournament_uid]
                frontier, _ = insert_incremental(frontier, record.uid, record.metrics)
                self._frontier_live[record.tournament_uid] = frontier
        elif event.kind == EVENT_STATUS_CHANGED:
            uid = payload["submission_uid"]
            record = replace(
                self._submissions[uid],
                validation_status=ValidationStatus(payload["new_status"]),
                note=payload.get("note", ""),
            )
            self._submissions[uid] = record
            self._recompute_frontiers(record.tournament_uid)
        else:
            raise ValueError(f"unknown event kind {event.kind!r}")

    def _eligible(self, tournament_uid: str, statuses: frozenset[ValidationStatus]):
        space = self._tournaments[tournament_uid].space
        for uid in self._by_tournament[tournament_uid]:
            record = self._submissions[uid]
            if record.validation_status in statuses and record.metrics.ids == space.ids:
                yield uid, record.metrics

    def _recompute_frontiers(self, tournament_uid: str) -> None:
        space = self._tournaments[tournament_uid].space
        live = frozenset({ValidationStatus.PENDING, ValidationStatus.VALIDATED})
        validated = frozenset({ValidationStatus.VALIDATED})
        self._frontier_live[tournament_uid] = compute_frontier(
            self._eligible(tournament_uid, live), space
        )
        self._frontier_validated[tournament_uid] = compute_frontier(
            self._eligible(tournament_uid, validated), space
        )

    # -- tournament lifecycle -----------------------------------------------

    def create_tournament(
        self,
        title: str,
        space: MetricSpace = DEFAULT_SPACE,
        opens_at: str = "",
        closes_at: str = "",
    ) -> Tournament:
        if not isinstance(title, str) or not title.strip():
            raise _malformed("title must be a non-empty string", "title")
        if _parse_instant(opens_at, "opens_at") >= _parse_instant(closes_at, "closes_at"):
            raise ServiceError(
                "invalid_window", f"opens_at {opens_at!r} must precede closes_at {closes_at!r}"
            )
        with self._lock:
            tournament = Tournament(
                uid=new_uid(),
                title=title,
                space=space,
                opens_at=opens_at,
                closes_at=closes_at,
                status=TournamentStatus.DRAFT,
            )
            self._record(EVENT_TOURNAMENT_CREATED, tournament.to_json())
            return tournament

    def open_tournament(self, uid: str) -> Tournament:
        with self._lock:
            tournament = self._get_tournament(uid)
            if tournament.status is not TournamentStatus.DRAFT:
                raise ServiceError(
                    "invalid_transition",
                    f"tournament is {tournament.status.value}; only draft can open",
                    http_status=409,
                )
            self._record(EVENT_TOURNAMENT_OPENED, {"uid": uid})
            return self._tournaments[uid]

    def close_tournament(self, uid: str) -> Tournament:
        with self._lock:
            tournament = self._get_tournament(uid)
            if tournament.status is not TournamentStatus.OPEN:
                raise ServiceError(
                    "invalid_transition",
                    f"tournament is {tournament.status.value}; only open can close",
                    http_status=409,
                )
            self._record(EVENT_TOURNAMENT_CLOSED, {"uid": uid})
            return self._tournaments[uid]

    def get_tournament(self, uid: str) -> Tournament:
        with self._lock:
            return self._get_tournament(uid)

    def _get_tournament(self, uid: str) -> Tournament:
        try:
            return self._tournaments[uid]
        except KeyError:
            raise _unknown_tournament(uid) from None

    def list_tournaments(self) -> list[Tournament]:
        with self._lock:
            return list(self._tournaments.values())

    # -- submissions ---------------------------------------------------------

    def submit(
        self,
        tournament_uid: str,
        record: Mapping,
        submitter_token_hash: str = ANONYMOUS_TOKEN_HASH,
    ) -> str:
        """Ingest one submission; returns its uid.

        `record` is the JSON shape the HTTP API receives: workflow,
        environment, metrics, dispersion, optional nonce. Retrying with the
        same nonce returns the original uid without appending anything.
        """
        if not isinstance(record, Mapping):
            raise _malformed("submission body must be a JSON object", "")
        with self._lock:
            tournament = self._get_tournament(tournament_uid)
            if tournament.status is not TournamentStatus.OPEN:
                raise ServiceError(
                    "tournament_not_open",
                    f"tournament {tournament_uid} is {tournament.status.value}, not open",
                    http_status=409,
                )

            nonce = record.get("nonce")
            if nonce is not None:
                if not (isinstance(nonce, str) and is_uid(nonce)):
                    raise _malformed("nonce must be a 16-hex string", "nonce")
                existing = self._nonce_map.get((tournament_uid, nonce))
                if existing is not None:
                    return existing

            for field in ("workflow", "environment", "metrics", "dispersion"):
                if field not in record:
                    raise _malformed(f"submission lacks {field!r}", field)
            try:
                workflow = WorkflowDescriptor.from_json(record["workflow"])
            except (RunnerError, InvalidPackageError) as exc:
                raise _malformed(str(exc), "workflow") from None
            try:
                environment = EnvironmentSnapshot.from_json(record["environment"])
            except (RunnerError, InvalidPackageError, TypeError, ValueError) as exc:
                raise _malformed(str(exc), "environment") from None
            try:
                metrics = MetricVector(record["metrics"])
                validate_vector(metrics, tournament.space)
            except ParetoError as exc:
                raise ServiceError("metric_mismatch", str(exc), field="metrics") from None
            except (AttributeError, TypeError) as exc:
                raise _malformed(f"metrics must be a JSON object of numbers: {exc}", "metrics") from None
            try:
                dispersion = DispersionReport.from_json(record["dispersion"])
            except (RunnerError, TypeError, ValueError) as exc:
                raise _malformed(str(exc), "dispersion") from None

            submission = SubmissionRecord(
                uid=new_uid(),
                tournament_uid=tournament_uid,
                workflow=workflow,
                environment=environment,
                metrics=metrics,
                dispersion=dispersion,
                submitter_token_hash=submitter_token_hash,
                validation_status=ValidationStatus.PENDING,
                submitted_at=_now_iso(),
                nonce=nonce,
            )
            self._record(EVENT_SUBMISSION_RECEIVED, submission.to_json())
            return submission.uid

    def find_by_nonce(self, tournament_uid: str, nonce: str) -> str | None:
        """Submission uid previously ingested under this nonce, if any."""
        with self._lock:
            return self._nonce_map.get((tournament_uid, nonce))

    def get_submission(self, uid: str) -> SubmissionRecord:
        with self._lock:
            try:
                return self._submissions[uid]
            except KeyError:
                raise ServiceError(
                    "unknown_submission", f"no submission with uid {uid!r}", http_status=404
                ) from None

    def set_validation_status(
        self, submission_uid: str, new_status: ValidationStatus | str, note: str = ""
    ) -> SubmissionRecord:
        try:
            new_status = ValidationStatus(new_status)
        except ValueError:
            raise _malformed(f"unknown status {new_status!r}", "status") from None
        if not isinstance(note, str):
            raise _malformed("note must be a string", "note")
        with self._lock:
            record = self.get_submission(submission_uid)
            if (record.validation_status, new_status) not in ALLOWED_TRANSITIONS:
                raise ServiceError(
                    "invalid_transition",
                    f"{record.validation_status.value} -> {new_status.value} is not allowed",
                    http_status=409,
                )
            self._record(
                EVENT_STATUS_CHANGED,
                {
                    "submission_uid": submission_uid,
                    "old_status": record.validation_status.value,
                    "new_status": new_status.value,
                    "note": note,
                    "changed_at": _now_iso(),
                },
            )
            return self._submissions[submission_uid]

    # -- queries --------------------------------------------------------------

    def query_scoreboard(
        self,
        tournament_uid: str,
        dim_x: str,
        dim_y: str,
        filters: Mapping[str, str] | None = None,
        include_pending: bool = False,
    ) -> ScoreboardView:
        """2-D projected board: frontier flags and distances are computed
        over exactly the points the view shows, so the view is internally
        consistent under any filter combination."""
        filters = dict(filters or {})
        with self._lock:
            tournament = self._get_tournament(tournament_uid)
            try:
                sub = tournament.space.subspace(dim_x, dim_y)
            except ParetoError as exc:
                raise ServiceError("unknown_dimension", str(exc)) from None

            statuses = {ValidationStatus.VALIDATED}
            if include_pending:
                statuses.add(ValidationStatus.PENDING)
            candidates = [
                self._submissions[uid]
                for uid in self._by_tournament[tournament_uid]
                if self._submissions[uid].validation_status in statuses
                and _matches_filters(self._submissions[uid], filters)
            ]
            plottable = [r for r in candidates if {dim_x, dim_y} <= r.metrics.ids]
            frontier = project(
                ((r.uid, r.metrics) for r in plottable), tournament.space, dim_x, dim_y
            )
            points = []
            for record in plottable:
                restricted = record.metrics.restrict((dim_x, dim_y))
                on_frontier = record.uid in frontier.member_ids
                distance = 0.0 if on_frontier else distance_to_frontier(restricted, frontier, sub)
                points.append(BoardPoint(record, on_frontier, distance))
            points.sort(key=lambda p: (p.distance, p.record.uid))
            return ScoreboardView(
                tournament_uid=tournament_uid,
                dim_x=dim_x,
                dim_y=dim_y,
                filters=filters,
                include_pending=include_pending,
                points=tuple(points),
                generated_at=_now_iso(),
            )

    def export(self, tournament_uid: str, format: str) -> bytes:
        """Full dump, one row per submission in (submitted_at, uid) order.

        The on_frontier flag is over the tournament's full metric space and
        counts validated submissions only: exports feed citations, so
        unaudited results never carry the flag.
        """
        if format == "json-lines":
            format = "jsonl"
        if format not in ("csv", "jsonl"):
            raise ServiceError("unknown_format", f"format must be csv or jsonl, got {format!r}")
        with self._lock:
            tournament = self._get_tournament(tournament_uid)
            frontier_ids = self._frontier_validated[tournament_uid].member_ids
            records = sorted(
                (self._submissions[uid] for uid in self._by_tournament[tournament_uid]),
                key=lambda r: (r.submitted_at, r.uid),
            )
            metric_order = [d.metric_id for d in tournament.space.dimensions]

            if format == "jsonl":
                lines = [
                    json.dumps(
                        {
                            "uid": r.uid,
                            "status": r.validation_status.value,
                            "submitted_at": r.submitted_at,
                            "metrics": r.metrics.to_json(),
                            "on_frontier": r.uid in frontier_ids,
                        },
                        separators=(",", ":"),
                        sort_keys=True,
                    )
                    for r in records
                ]
                return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")

            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(["uid", "status", *metric_order, "on_frontier"])
            for r in records:
                row = [r.uid, r.validation_status.value]
                for metric in metric_order:
                    row.append(repr(r.metrics[metric]) if metric in r.metrics else "")
                row.append("true" if r.uid in frontier_ids else "false")
                writer.writerow(row)
            return buffer.getvalue().encode("utf-8")

    # -- reproducibility --------------------------------------------------------

    def frontier_cache(self, tournament_uid: str, validated_only: bool = False) -> ParetoFrontier:
        with self._lock:
            self._get_tournament(tournament_uid)
            cache = self._frontier_validated if validated_only else self._frontier_live
            return cache[tournament_uid]

    def canonical_state(self) -> bytes:
        """Deterministic byte serialization of the folded state.

        Two services are interchangeable iff their canonical states match;
        replaying a log must land exactly here.
        """
        with self._lock:
            doc = {
                "tournaments": {uid: t.to_json() for uid, t in self._tournaments.items()},
                "submissions": {uid: r.to_json() for uid, r in self._submissions.items()},
                "order": dict(self._by_tournament),
                "frontiers": {
                    uid: {
                        "live": sorted(self._frontier_live[uid].member_ids),
                        "validated": sorted(self._frontier_validated[uid].member_ids),
                    }
                    for uid in self._tournaments
                },
            }
        return json.dumps(doc, separators=(",", ":"), sort_keys=True).encode("utf-8")


def replay_log(log_path: Path | str) -> ScoreboardService:
    """Rebuild a service purely from its log; fails loudly on any corruption."""
    return ScoreboardService(log_path)


def hash_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()
