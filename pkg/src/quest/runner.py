"""Benchmark pipeline composition and local execution.

Planning resolves registry packages and binds the entry-command template;
execution runs the child process once per repetition and ingests the
optional ``result.json`` it leaves behind; aggregation folds the raw runs
into a single MetricVector by per-metric median, with dispersion reported
alongside so the reduction hides nothing.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import platform as _platform
import shutil
import socket
import statistics
import string
import subprocess
import shlex
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .ids import new_uid
from .pareto import MetricVector
from .registry import (
    ArtifactPackage,
    DependencyRef,
    Kind,
    OsFamily,
    PlatformDescriptor,
    Repository,
)

RESULT_FILENAME = "result.json"
LOG_EXCERPT_LIMIT = 2000

# result.json keys the runner ingests, with their validity predicate
_RESULT_KEYS = {
    "accuracy": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v <= 1.0,
    "energy_j": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0.0,
    "peak_mem_bytes": lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
}


class RunnerError(Exception):
    """Base class for planning, execution and aggregation failures."""


class PlanningError(RunnerError):
    pass


class UnresolvableRefError(PlanningError):
    pass


class UnboundPlaceholderError(PlanningError):
    def __init__(self, name: str):
        super().__init__(f"entry command placeholder {{{name}}} has no bound parameter")
        self.name = name


class TemplateSyntaxError(PlanningError):
    pass


class PlatformIncompatibleError(PlanningError):
    pass


class NotLaunchableError(RunnerError):
    """The entry command could not be started at all.

    Distinct from a run that launched and then failed: that is a RawRun
    with exit_ok false, not an exception.
    """


class AggregationError(RunnerError):
    pass


class Policy(enum.Enum):
    LENIENT = "lenient"
    STRICT = "strict"


@dataclass(frozen=True)
class WorkflowDescriptor:
    """A runnable composition: program plus optional model/dataset inputs."""

    uid: str
    program_ref: DependencyRef
    model_ref: DependencyRef | None = None
    dataset_ref: DependencyRef | None = None
    parameters: Mapping[str, object] = field(default_factory=dict)
    repetitions: int = 5

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise RunnerError(f"repetitions must be >= 1, got {self.repetitions}")
        for key, value in self.parameters.items():
            if not isinstance(value, (str, int, float, bool)):
                raise RunnerError(f"parameter {key!r} must be a scalar, got {type(value).__name__}")

    def to_json(self) -> dict:
        return {
            "uid": self.uid,
            "program_ref": self.program_ref.to_json(),
            "model_ref": None if self.model_ref is None else self.model_ref.to_json(),
            "dataset_ref": None if self.dataset_ref is None else self.dataset_ref.to_json(),
            "parameters": dict(self.parameters),
            "repetitions": self.repetitions,
        }

    @classmethod
    def from_json(cls, doc: object) -> "WorkflowDescriptor":
        if not isinstance(doc, Mapping):
            raise RunnerError(f"workflow must be an object, got {doc!r}")
        try:
            program_ref = DependencyRef.from_json(doc["program_ref"])
        except KeyError:
            raise RunnerError("workflow lacks a program_ref") from None
        model = doc.get("model_ref")
        dataset = doc.get("dataset_ref")
        parameters = doc.get("parameters", {})
        if not isinstance(parameters, Mapping):
            raise RunnerError("workflow parameters must be an object")
        repetitions = doc.get("repetitions", 5)
        if not isinstance(repetitions, int) or isinstance(repetitions, bool):
            raise RunnerError(f"repetitions must be an integer, got {repetitions!r}")
        return cls(
            uid=str(doc.get("uid", "")) or new_uid(),
            program_ref=program_ref,
            model_ref=None if model is None else DependencyRef.from_json(model),
            dataset_ref=None if dataset is None else DependencyRef.from_json(dataset),
            parameters=dict(parameters),
            repetitions=repetitions,
        )


@dataclass(frozen=True)
class EnvironmentSnapshot:
    os_name: str
    os_version: str
    kernel_version: str
    hostname_hash: str
    dependency_versions: Mapping[str, str]
    timestamp_utc: str
    platform: PlatformDescriptor

    def to_json(self) -> dict:
        return {
            "os_name": self.os_name,
            "os_version": self.os_version,
            "kernel_version": self.kernel_version,
            "hostname_hash": self.hostname_hash,
            "dependency_versions": dict(self.dependency_versions),
            "timestamp_utc": self.timestamp_utc,
            "platform": self.platform.to_json(),
        }

    @classmethod
    def from_json(cls, doc: object) -> "EnvironmentSnapshot":
        if not isinstance(doc, Mapping):
            raise RunnerError(f"environment must be an object, got {doc!r}")
        return cls(
            os_name=str(doc.get("os_name", "unknown")),
            os_version=str(doc.get("os_version", "unknown")),
            kernel_version=str(doc.get("kernel_version", "unknown")),
            hostname_hash=str(doc.get("hostname_hash", "unknown")),
            dependency_versions=dict(doc.get("dependency_versions", {})),
            timestamp_utc=str(doc.get("timestamp_utc", "")),
            platform=PlatformDescriptor.from_json(doc.get("platform", {"os_family": "other"})),
        )


@dataclass(frozen=True)
class RawRun:
    repetition_index: int
    wall_time_s: float
    exit_ok: bool
    log_excerpt: str = ""
    accuracy: float | None = None
    energy_j: float | None = None
    peak_mem_bytes: int | None = None

    def __post_init__(self) -> None:
        if self.exit_ok and self.wall_time_s <= 0:
            raise RunnerError(f"wall_time_s must be > 0 on a successful run, got {self.wall_time_s}")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise RunnerError(f"accuracy out of [0, 1]: {self.accuracy}")
        if self.energy_j is not None and self.energy_j < 0:
            raise RunnerError(f"energy_j must be >= 0, got {self.energy_j}")
        if self.peak_mem_bytes is not None and self.peak_mem_bytes < 0:
            raise RunnerError(f"peak_mem_bytes must be >= 0, got {self.peak_mem_bytes}")

    def metrics(self) -> dict[str, float]:
        """The per-metric readings this run contributes to aggregation."""
        out: dict[str, float] = {}
        if self.exit_ok:
            out["latency_s"] = self.wall_time_s
            if self.accuracy is not None:
                out["accuracy"] = self.accuracy
            if self.energy_j is not None:
                out["energy_j"] = self.energy_j
            if self.peak_mem_bytes is not None:
                out["peak_mem_bytes"] = float(self.peak_mem_bytes)
        return out

    def to_json(self) -> dict:
        return {
            "repetition_index": self.repetition_index,
            "wall_time_s": self.wall_time_s,
            "exit_ok": self.exit_ok,
            "log_excerpt": self.log_excerpt,
            "accuracy": self.accuracy,
            "energy_j": self.energy_j,
            "peak_mem_bytes": self.peak_mem_bytes,
        }


@dataclass(frozen=True)
class ExecutionPlan:
    resolved_packages: tuple[ArtifactPackage, ...]
    entry_command: str
    working_dir: Path
    parameter_bindings: Mapping[str, str]


@dataclass(frozen=True)
class MetricDispersion:
    minimum: float
    maximum: float
    iqr: float

    def to_json(self) -> dict:
        return {"min": self.minimum, "max": self.maximum, "iqr": self.iqr}


@dataclass(frozen=True)
class DispersionReport:
    per_metric: Mapping[str, MetricDispersion]

    def to_json(self) -> dict:
        return {metric: d.to_json() for metric, d in sorted(self.per_metric.items())}

    @classmethod
    def from_json(cls, doc: object) -> "DispersionReport":
        if not isinstance(doc, Mapping):
            raise RunnerError(f"dispersion must be an object, got {doc!r}")
        per_metric = {}
        for metric, entry in doc.items():
            if not isinstance(entry, Mapping) or not {"min", "max", "iqr"} <= set(entry):
                raise RunnerError(f"dispersion entry for {metric!r} needs min/max/iqr")
            per_metric[str(metric)] = MetricDispersion(
                minimum=float(entry["min"]), maximum=float(entry["max"]), iqr=float(entry["iqr"])
            )
        return cls(per_metric)


def _scalar_to_str(value: object) -> str:
    # booleans render JSON-style so commands see "true"/"false"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def bind_template(template: str, parameters: Mapping[str, object]) -> str:
    """Substitute {name} placeholders; every placeholder must be bound."""
    formatter = string.Formatter()
    out: list[str] = []
    try:
        parsed = list(formatter.parse(template))
    except ValueError as exc:
        raise TemplateSyntaxError(f"bad entry command template: {exc}") from None
    for literal, field_name, format_spec, conversion in parsed:
        out.append(literal)
        if field_name is None:
            continue
        if field_name == "" or format_spec or conversion:
            raise TemplateSyntaxError(
                f"entry command template only supports plain {{name}} placeholders, "
                f"got {{{field_name}{'!' + conversion if conversion else ''}"
                f"{':' + format_spec if format_spec else ''}}}"
            )
        if field_name not in parameters:
            raise UnboundPlaceholderError(field_name)
        out.append(_scalar_to_str(parameters[field_name]))
    return "".join(out)


def plan_run(
    workflow: WorkflowDescriptor,
    repository: Repository,
    platform: PlatformDescriptor,
) -> ExecutionPlan:
    """Resolve the workflow against the repository and bind its command.

    Pure: no repository writes, no child processes. Program/platform
    compatibility is rejected here so execute never starts a doomed run.
    """
    program = repository.resolve_ref(workflow.program_ref)
    if program is None:
        raise UnresolvableRefError(f"program ref matches nothing: {workflow.program_ref.describe()}")
    if program.kind is not Kind.PROGRAM:
        raise UnresolvableRefError(
            f"program ref resolved to a {program.kind.value} package ({program.uid})"
        )
    for label, ref in (("model", workflow.model_ref), ("dataset", workflow.dataset_ref)):
        if ref is not None and repository.resolve_ref(ref) is None:
            raise UnresolvableRefError(f"{label} ref matches nothing: {ref.describe()}")

    declared = program.meta.get("os_families")
    if isinstance(declared, list) and platform.os_family.value not in declared:
        raise PlatformIncompatibleError(
            f"program {program.uid} supports os_families {declared}, "
            f"platform is {platform.os_family.value}"
        )

    template = program.meta.get("entry_command")
    if not isinstance(template, str) or not template.strip():
        raise PlanningError(f"program {program.uid} meta lacks an entry_command")
    bindings = {key: _scalar_to_str(value) for key, value in workflow.parameters.items()}
    entry_command = bind_template(template, workflow.parameters)

    resolution = repository.resolve_dependencies(program.uid)
    return ExecutionPlan(
        resolved_packages=resolution.packages,
        entry_command=entry_command,
        working_dir=repository.payload_dir(program),
        parameter_bindings=bindings,
    )


def _ingest_result_file(scratch: Path) -> tuple[dict, str | None]:
    """Read result.json from a finished run. Missing file is fine;
    an unreadable or out-of-range one is a run failure."""
    result_file = scratch / RESULT_FILENAME
    if not result_file.is_file():
        return {}, None
    try:
        with open(result_file, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return {}, f"unreadable {RESULT_FILENAME}: {exc}"
    if not isinstance(doc, dict):
        return {}, f"{RESULT_FILENAME} must hold a JSON object"
    readings: dict = {}
    for key, check in _RESULT_KEYS.items():
        if key in doc:
            if not check(doc[key]):
                return {}, f"{RESULT_FILENAME} key {key!r} has invalid value {doc[key]!r}"
            readings[key] = doc[key]
    return readings, None


def execute(plan: ExecutionPlan, repetitions: int) -> list[RawRun]:
    """Run the plan's entry command `repetitions` times, one at a time.

    Each repetition gets a fresh scratch copy of the program payload so
    output files from one run never leak into the next. A repetition that
    launches and fails is recorded, not raised; remaining repetitions
    still run.
    """
    if repetitions < 1:
        raise RunnerError(f"repetitions must be >= 1, got {repetitions}")
    argv = shlex.split(plan.entry_command)
    if not argv:
        raise NotLaunchableError("entry command is empty")

    runs: list[RawRun] = []
    for index in range(repetitions):
        with tempfile.TemporaryDirectory(prefix="quest-run-") as tmp:
            scratch = Path(tmp) / "work"
            shutil.copytree(plan.working_dir, scratch)
            start = time.monotonic()
            try:
                proc = subprocess.run(
                    argv,
                    cwd=scratch,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT,
                    text=True,
                    errors="replace",
                )
            except (FileNotFoundError, NotADirectoryError, PermissionError) as exc:
                raise NotLaunchableError(f"cannot launch {argv[0]!r}: {exc}") from None
            wall = time.monotonic() - start
            excerpt = (proc.stdout or "")[-LOG_EXCERPT_LIMIT:]

            if proc.returncode != 0:
                runs.append(RawRun(index, wall, exit_ok=False, log_excerpt=excerpt))
                continue
            readings, problem = _ingest_result_file(scratch)
            if problem is not None:
                excerpt = (excerpt + "\n" + problem).strip()[-LOG_EXCERPT_LIMIT:]
                runs.append(RawRun(index, wall, exit_ok=False, log_excerpt=excerpt))
                continue
            runs.append(
                RawRun(
                    index,
                    max(wall, 1e-9),
                    exit_ok=True,
                    log_excerpt=excerpt,
                    accuracy=readings.get("accuracy"),
                    energy_j=readings.get("energy_j"),
                    peak_mem_bytes=readings.get("peak_mem_bytes"),
                )
            )
    return runs


def detect_platform(labels: frozenset[str] = frozenset()) -> PlatformDescriptor:
    """Describe the local machine, falling back to defaults where opaque."""
    system = _platform.system().lower()
    family = {
        "linux": OsFamily.LINUX,
        "windows": OsFamily.WINDOWS,
        "darwin": OsFamily.MACOS,
    }.get(system, OsFamily.OTHER)
    try:
        ram = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        ram = 0
    return PlatformDescriptor(
        cpu=_platform.machine() or "unknown",
        os_family=family,
        ram_bytes=int(ram),
        labels=labels,
    )


def snapshot_environment(
    platform: PlatformDescriptor,
    resolved_packages: Sequence[ArtifactPackage],
) -> EnvironmentSnapshot:
    """Record what the run actually happened on. Unknowns stay the literal
    string "unknown" so downstream consumers never see missing keys."""
    return EnvironmentSnapshot(
        os_name=_platform.system() or "unknown",
        os_version=_platform.version() or "unknown",
        kernel_version=_platform.release() or "unknown",
        hostname_hash=hashlib.sha256(socket.gethostname().encode("utf-8")).hexdigest()[:16],
        dependency_versions={p.uid: p.version for p in resolved_packages},
        timestamp_utc=datetime.now(timezone.utc).isoformat(),
        platform=platform,
    )


def _iqr(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    q1, _, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q3 - q1


def aggregate(
    raw_runs: Sequence[RawRun],
    policy: Policy | str = Policy.LENIENT,
) -> tuple[MetricVector, DispersionReport]:
    """Fold raw runs into one MetricVector by per-metric median.

    Each metric is aggregated over the successful runs that report it;
    a metric no run reports is absent from the vector. Median rather than
    mean: one slow outlier on a busy device should not move the result.
    """
    policy = Policy(policy) if isinstance(policy, str) else policy
    failed = [r for r in raw_runs if not r.exit_ok]
    if policy is Policy.STRICT and failed:
        raise AggregationError(
            f"strict policy: {len(failed)} of {len(raw_runs)} runs failed"
        )
    successes = [r for r in raw_runs if r.exit_ok]
    if not successes:
        raise AggregationError("no successful runs to aggregate")

    by_metric: dict[str, list[float]] = {}
    for run in successes:
        for metric, value in run.metrics().items():
            by_metric.setdefault(metric, []).append(float(value))

    vector = MetricVector({m: statistics.median(vals) for m, vals in by_metric.items()})
    dispersion = DispersionReport(
        {
            m: MetricDispersion(minimum=min(vals), maximum=max(vals), iqr=_iqr(vals))
            for m, vals in by_metric.items()
        }
    )
    return vector, dispersion


def make_workflow(
    program_ref: DependencyRef,
    model_ref: DependencyRef | None = None,
    dataset_ref: DependencyRef | None = None,
    parameters: Mapping[str, object] | None = None,
    repetitions: int = 5,
) -> WorkflowDescriptor:
    """Convenience constructor that mints the workflow uid."""
    return WorkflowDescriptor(
        uid=new_uid(),
        program_ref=program_ref,
        model_ref=model_ref,
        dataset_ref=dataset_ref,
        parameters=dict(parameters or {}),
        repetitions=repetitions,
    )
