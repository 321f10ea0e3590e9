"""UID-addressed artifact packages: storage, metadata validation, resolution.

A repository is a plain directory tree, one package per directory:

    <repo>/<kind>/<uid>/meta.json
    <repo>/<kind>/<uid>/payload/

meta.json is the authoritative record; ``index.json`` at the repository
root is a rebuildable cache only and is never trusted on read. Packages
are immutable snapshots once created. Writes are serialized through a
cross-process file lock so several CLI processes can share one repository.
"""

from __future__ import annotations

import enum
import heapq
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from filelock import FileLock

from .ids import is_uid, new_uid

META_FILENAME = "meta.json"
PAYLOAD_DIRNAME = "payload"
INDEX_FILENAME = "index.json"

_PACKAGE_FIELDS = frozenset(
    {"uid", "kind", "name", "version", "tags", "dependencies", "payload_path", "meta"}
)


class RegistryError(Exception):
    """Base class for repository and package failures."""


class PayloadMissingError(RegistryError):
    pass


class DuplicatePackageError(RegistryError):
    pass


class UnknownPackageError(RegistryError):
    pass


class UnsatisfiableDependencyError(RegistryError):
    pass


class DependencyCycleError(RegistryError):
    def __init__(self, cycle: Sequence[str]):
        super().__init__(f"dependency cycle: {' -> '.join(cycle)} -> {cycle[0]}")
        self.cycle = list(cycle)


class InvalidPackageError(RegistryError):
    pass


class Kind(enum.Enum):
    PROGRAM = "program"
    MODEL = "model"
    DATASET = "dataset"
    LIBRARY = "library"
    PLATFORM = "platform"


class OsFamily(enum.Enum):
    LINUX = "linux"
    WINDOWS = "windows"
    MACOS = "macos"
    ANDROID = "android"
    OTHER = "other"


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    message: str
    severity: Severity


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]

    @property
    def valid(self) -> bool:
        return not any(i.severity is Severity.ERROR for i in self.issues)

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "issues": [
                {"path": i.path, "message": i.message, "severity": i.severity.value}
                for i in self.issues
            ],
        }


@dataclass(frozen=True)
class DependencyRef:
    """Either an explicit uid or a (kind, tags, version-range) selector.

    Version ranges are exact matches ("1.1.2") or dotted prefixes
    ("1.", "1.1."); anything fancier is out of scope.
    """

    uid: str | None = None
    kind: Kind | None = None
    tags: frozenset[str] = frozenset()
    version: str | None = None
    optional: bool = False

    def __post_init__(self) -> None:
        by_uid = self.uid is not None
        by_selector = self.kind is not None
        if by_uid == by_selector:
            raise InvalidPackageError(
                "dependency ref needs exactly one of uid or kind selector"
            )
        if by_uid and not is_uid(self.uid):
            raise InvalidPackageError(f"bad dependency uid: {self.uid!r}")
        if by_uid and (self.tags or self.version):
            raise InvalidPackageError("uid refs cannot also carry selector fields")

    def describe(self) -> str:
        if self.uid is not None:
            return f"uid:{self.uid}"
        parts = [f"kind={self.kind.value}"]
        if self.tags:
            parts.append("tags={%s}" % ",".join(sorted(self.tags)))
        if self.version:
            parts.append(f"version={self.version}")
        return " ".join(parts)

    def to_json(self) -> dict:
        doc: dict = {"optional": self.optional}
        if self.uid is not None:
            doc["uid"] = self.uid
        else:
            doc["kind"] = self.kind.value
            if self.tags:
                doc["tags"] = sorted(self.tags)
            if self.version:
                doc["version"] = self.version
        return doc

    @classmethod
    def from_json(cls, doc: object) -> "DependencyRef":
        if not isinstance(doc, Mapping):
            raise InvalidPackageError(f"dependency ref must be an object, got {doc!r}")
        optional = bool(doc.get("optional", False))
        if "uid" in doc:
            return cls(uid=doc["uid"], optional=optional)
        kind_raw = doc.get("kind")
        try:
            kind = Kind(kind_raw)
        except ValueError:
            raise InvalidPackageError(f"bad dependency kind: {kind_raw!r}") from None
        tags = frozenset(str(t) for t in doc.get("tags", ()))
        version = doc.get("version")
        if version is not None:
            version = str(version)
        return cls(kind=kind, tags=tags, version=version, optional=optional)


@dataclass(frozen=True)
class PlatformDescriptor:
    cpu: str
    os_family: OsFamily
    ram_bytes: int
    accelerator: str | None = None
    price_usd: float | None = None
    labels: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.ram_bytes < 0:
            raise InvalidPackageError(f"ram_bytes must be >= 0, got {self.ram_bytes}")
        if self.price_usd is not None and self.price_usd < 0:
            raise InvalidPackageError(f"price_usd must be >= 0, got {self.price_usd}")

    def to_json(self) -> dict:
        return {
            "cpu": self.cpu,
            "accelerator": self.accelerator,
            "os_family": self.os_family.value,
            "ram_bytes": self.ram_bytes,
            "price_usd": self.price_usd,
            "labels": sorted(self.labels),
        }

    @classmethod
    def from_json(cls, doc: object) -> "PlatformDescriptor":
        if not isinstance(doc, Mapping):
            raise InvalidPackageError(f"platform descriptor must be an object, got {doc!r}")
        try:
            os_family = OsFamily(doc.get("os_family"))
        except ValueError:
            raise InvalidPackageError(
                f"bad os_family: {doc.get('os_family')!r}"
            ) from None
        price = doc.get("price_usd")
        return cls(
            cpu=str(doc.get("cpu", "unknown")),
            accelerator=doc.get("accelerator"),
            os_family=os_family,
            ram_bytes=int(doc.get("ram_bytes", 0)),
            price_usd=None if price is None else float(price),
            labels=frozenset(str(x) for x in doc.get("labels", ())),
        )


@dataclass(frozen=True)
class ArtifactPackage:
    """One immutable, UID-addressed plugin: program, model, dataset, library
    or platform descriptor, with an open JSON meta document."""

    uid: str
    kind: Kind
    name: str
    version: str
    tags: frozenset[str]
    dependencies: tuple[DependencyRef, ...]
    payload_path: str
    meta: dict
    extra: dict = field(default_factory=dict)  # unknown meta.json keys, kept verbatim

    def __post_init__(self) -> None:
        if not is_uid(self.uid):
            raise InvalidPackageError(f"bad package uid: {self.uid!r}")
        if not self.name:
            raise InvalidPackageError("package name must be non-empty")
        for ref in self.dependencies:
            if ref.uid == self.uid:
                raise InvalidPackageError(f"package {self.uid} depends on itself")

    def to_json(self) -> dict:
        doc = {
            "uid": self.uid,
            "kind": self.kind.value,
            "name": self.name,
            "version": self.version,
            "tags": sorted(self.tags),
            "dependencies": [ref.to_json() for ref in self.dependencies],
            "payload_path": self.payload_path,
            "meta": self.meta,
        }
        doc.update(self.extra)
        return doc

    @classmethod
    def from_json(cls, doc: object) -> "ArtifactPackage":
        if not isinstance(doc, Mapping):
            raise InvalidPackageError(f"package record must be an object, got {doc!r}")
        missing = _PACKAGE_FIELDS - {"meta"} - set(doc)
        if missing:
            raise InvalidPackageError(f"package record missing fields: {sorted(missing)}")
        try:
            kind = Kind(doc["kind"])
        except ValueError:
            raise InvalidPackageError(f"bad package kind: {doc['kind']!r}") from None
        meta = doc.get("meta", {})
        if not isinstance(meta, dict):
            raise InvalidPackageError("meta must be a JSON object")
        extra = {k: v for k, v in doc.items() if k not in _PACKAGE_FIELDS}
        return cls(
            uid=doc["uid"],
            kind=kind,
            name=str(doc["name"]),
            version=str(doc["version"]),
            tags=frozenset(str(t) for t in doc["tags"]),
            dependencies=tuple(DependencyRef.from_json(d) for d in doc["dependencies"]),
            payload_path=str(doc["payload_path"]),
            meta=meta,
            extra=extra,
        )


@dataclass(frozen=True)
class Resolution:
    """Topologically ordered dependency closure plus skip notes.

    ``packages`` lists dependencies before dependents, the requested
    package last. ``notes`` records optional dependencies that could not
    be satisfied and were omitted.
    """

    packages: tuple[ArtifactPackage, ...]
    notes: tuple[str, ...]


# Required meta keys per kind, with a light type predicate each.
_META_SCHEMAS: dict[Kind, dict[str, tuple[str, object]]] = {
    Kind.PROGRAM: {
        "entry_command": ("non-empty string", lambda v: isinstance(v, str) and v.strip()),
    },
    Kind.MODEL: {
        "files": (
            "list of file names",
            lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
        ),
    },
    Kind.DATASET: {
        "item_count": (
            "non-negative integer",
            lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
        ),
    },
    Kind.PLATFORM: {
        "cpu": ("string", lambda v: isinstance(v, str)),
        "os_family": ("one of " + ",".join(f.value for f in OsFamily), lambda v: v in {f.value for f in OsFamily}),
        "ram_bytes": (
            "non-negative integer",
            lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
        ),
    },
    Kind.LIBRARY: {},
}

# Optional keys the schema knows about (no warning when present).
_META_OPTIONAL: dict[Kind, frozenset[str]] = {
    Kind.PROGRAM: frozenset({"os_families", "description"}),
    Kind.MODEL: frozenset({"description"}),
    Kind.DATASET: frozenset({"description"}),
    Kind.PLATFORM: frozenset({"accelerator", "price_usd", "labels", "description"}),
    Kind.LIBRARY: frozenset({"description"}),
}


def validate_meta(meta_document: object, kind: Kind) -> ValidationReport:
    """Check a meta document against the kind-specific schema.

    Violations are reported, never raised; unknown extra keys are warnings
    (the schema is deliberately open for extension). The input document is
    never mutated.
    """
    issues: list[ValidationIssue] = []
    if not isinstance(meta_document, Mapping):
        issues.append(
            ValidationIssue("", f"meta must be a JSON object, got {type(meta_document).__name__}", Severity.ERROR)
        )
        return ValidationReport(tuple(issues))

    schema = _META_SCHEMAS[kind]
    for key, (expectation, check) in schema.items():
        if key not in meta_document:
            issues.append(ValidationIssue(key, f"required for kind={kind.value}", Severity.ERROR))
        elif not check(meta_document[key]):
            issues.append(ValidationIssue(key, f"expected {expectation}", Severity.ERROR))

    if kind is Kind.PROGRAM and isinstance(meta_document.get("os_families"), list):
        valid_families = {f.value for f in OsFamily}
        for i, entry in enumerate(meta_document["os_families"]):
            if entry not in valid_families:
                issues.append(
                    ValidationIssue(f"os_families[{i}]", f"unknown os family {entry!r}", Severity.ERROR)
                )

    known = set(schema) | set(_META_OPTIONAL[kind])
    for key in meta_document:
        if key not in known:
            issues.append(ValidationIssue(str(key), "unknown key (kept, not validated)", Severity.WARNING))

    return ValidationReport(tuple(sorted(issues, key=lambda i: (i.path, i.message))))


def version_matches(selector: str | None, version: str) -> bool:
    if selector is None:
        return True
    if selector.endswith("."):
        return version.startswith(selector)
    return version == selector


def _version_key(version: str) -> tuple:
    parts = []
    for chunk in version.split("."):
        if chunk.isdigit():
            parts.append((0, int(chunk), ""))
        else:
            parts.append((1, 0, chunk))
    return tuple(parts)


class Repository:
    """Filesystem-backed package store.

    Concurrent readers are always safe (reads go straight to meta.json
    files); create_package is serialized via a repository-wide file lock.
    Returned packages are immutable snapshots.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".lock"))

    # -- reading ---------------------------------------------------------

    def list_all(self) -> list[ArtifactPackage]:
        packages = []
        for kind in Kind:
            kind_dir = self.root / kind.value
            if not kind_dir.is_dir():
                continue
            for pkg_dir in sorted(kind_dir.iterdir()):
                meta_file = pkg_dir / META_FILENAME
                if meta_file.is_file():
                    packages.append(self._read_package(meta_file))
        return packages

    def get(self, uid: str) -> ArtifactPackage:
        for kind in Kind:
            meta_file = self.root / kind.value / uid / META_FILENAME
            if meta_file.is_file():
                return self._read_package(meta_file)
        raise UnknownPackageError(f"no package with uid {uid!r}")

    def payload_dir(self, package: ArtifactPackage) -> Path:
        return self.root / package.kind.value / package.uid / package.payload_path

    def _read_package(self, meta_file: Path) -> ArtifactPackage:
        with open(meta_file, encoding="utf-8") as fh:
            doc = json.load(fh)
        package = ArtifactPackage.from_json(doc)
        expected_uid = meta_file.parent.name
        if package.uid != expected_uid:
            raise InvalidPackageError(
                f"{meta_file}: uid {package.uid!r} does not match directory {expected_uid!r}"
            )
        return package

    # -- writing ---------------------------------------------------------

    def create_package(
        self,
        kind: Kind,
        name: str,
        version: str,
        tags: Iterable[str] = (),
        dependencies: Sequence[DependencyRef] = (),
        payload_path: Path | str = ".",
        meta: dict | None = None,
    ) -> ArtifactPackage:
        """Register a new package, copying the payload into the repository.

        Tags are normalized to lowercase. The (name, version, kind) triple
        must be unique within the repository. Dependency refs are stored as
        given; they are resolved (and may fail) at resolve time, which is
        what lets mutually dependent packages be registered at all.
        """
        if not name:
            raise RegistryError("package name must be non-empty")
        if not version:
            raise RegistryError("package version must be non-empty")
        source = Path(payload_path)
        if not source.is_dir():
            raise PayloadMissingError(f"payload directory does not exist: {source}")
        meta = dict(meta or {})

        with self._lock:
            # duplicates can only live under the same kind directory
            kind_dir = self.root / kind.value
            if kind_dir.is_dir():
                for meta_file in kind_dir.glob(f"*/{META_FILENAME}"):
                    with open(meta_file, encoding="utf-8") as fh:
                        doc = json.load(fh)
                    if doc.get("name") == name and doc.get("version") == version:
                        raise DuplicatePackageError(
                            f"package {name!r} version {version!r} kind {kind.value} "
                            f"already exists as {doc.get('uid')}"
                        )
            uid = new_uid()
            while (kind_dir / uid).exists():
                uid = new_uid()
            package = ArtifactPackage(
                uid=uid,
                kind=kind,
                name=name,
                version=version,
                tags=frozenset(t.lower() for t in tags),
                dependencies=tuple(dependencies),
                payload_path=PAYLOAD_DIRNAME,
                meta=meta,
            )
            pkg_dir = kind_dir / uid
            pkg_dir.mkdir(parents=True)
            shutil.copytree(source, pkg_dir / PAYLOAD_DIRNAME)
            with open(pkg_dir / META_FILENAME, "w", encoding="utf-8") as fh:
                json.dump(package.to_json(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            self._index_add(package)
            return package

    def _index_add(self, package: ArtifactPackage) -> None:
        """Append one entry to the index cache, rebuilding it if unreadable."""
        index_file = self.root / INDEX_FILENAME
        try:
            with open(index_file, encoding="utf-8") as fh:
                index = json.load(fh)
            entries = index["packages"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError):
            self.rebuild_index()
            return
        entries.append(_index_entry(package))
        with open(index_file, "w", encoding="utf-8") as fh:
            json.dump({"packages": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def rebuild_index(self) -> Path:
        """Regenerate the repository-level index cache. Never authoritative."""
        entries = [_index_entry(p) for p in self.list_all()]
        index_file = self.root / INDEX_FILENAME
        with open(index_file, "w", encoding="utf-8") as fh:
            json.dump({"packages": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return index_file

    # -- queries ---------------------------------------------------------

    def search(
        self,
        kind: Kind | None = None,
        tags: Iterable[str] | None = None,
        name_substring: str | None = None,
    ) -> list[ArtifactPackage]:
        return search_packages(self.list_all(), kind=kind, tags=tags, name_substring=name_substring)

    def resolve_ref(self, ref: DependencyRef) -> ArtifactPackage | None:
        """Resolve one dependency ref, or None if nothing matches."""
        if ref.uid is not None:
            try:
                return self.get(ref.uid)
            except UnknownPackageError:
                return None
        candidates = [
            p
            for p in self.list_all()
            if p.kind == ref.kind
            and ref.tags <= p.tags
            and version_matches(ref.version, p.version)
        ]
        if not candidates:
            return None
        # deterministic choice: newest version wins, then lowest uid
        candidates.sort(key=lambda p: (_version_key(p.version), p.uid))
        best_version = candidates[-1].version
        winners = [p for p in candidates if p.version == best_version]
        return min(winners, key=lambda p: p.uid)

    def resolve_dependencies(self, package_uid: str) -> Resolution:
        """Topologically order the transitive dependency closure of a package.

        Dependencies come before dependents; ties break by ascending uid so
        the order is deterministic for a fixed repository. Unsatisfiable
        optional dependencies are skipped with a note; mandatory ones fail.
        """
        root = self.get(package_uid)

        closure: dict[str, ArtifactPackage] = {}
        depends_on: dict[str, set[str]] = {}
        notes: list[str] = []
        queue = [root]
        while queue:
            package = queue.pop()
            if package.uid in closure:
                continue
            closure[package.uid] = package
            depends_on[package.uid] = set()
            for ref in package.dependencies:
                target = self.resolve_ref(ref)
                if target is None:
                    if ref.optional:
                        notes.append(
                            f"optional dependency of {package.uid} skipped: {ref.describe()}"
                        )
                        continue
                    raise UnsatisfiableDependencyError(
                        f"package {package.uid} requires {ref.describe()}, nothing matches"
                    )
                depends_on[package.uid].add(target.uid)
                if target.uid not in closure:
                    queue.append(target)

        dependents: dict[str, set[str]] = {uid: set() for uid in closure}
        in_degree: dict[str, int] = {}
        for uid, deps in depends_on.items():
            in_degree[uid] = len(deps)
            for dep in deps:
                dependents[dep].add(uid)

        ready = [uid for uid, deg in in_degree.items() if deg == 0]
        heapq.heapify(ready)
        order: list[ArtifactPackage] = []
        while ready:
            uid = heapq.heappop(ready)
            order.append(closure[uid])
            for dependent in dependents[uid]:
                in_degree[dependent] -= 1
                if in_degree[dependent] == 0:
                    heapq.heappush(ready, dependent)

        if len(order) != len(closure):
            remaining = {uid for uid, deg in in_degree.items() if deg > 0}
            raise DependencyCycleError(_find_cycle(depends_on, remaining))

        return Resolution(tuple(order), tuple(notes))


def _find_cycle(depends_on: Mapping[str, set[str]], remaining: set[str]) -> list[str]:
    """Walk dependency edges inside the stuck node set until one repeats."""
    start = min(remaining)
    path: list[str] = []
    seen: dict[str, int] = {}
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = min(dep for dep in depends_on[node] if dep in remaining)
    return path[seen[node]:]


def _index_entry(package: ArtifactPackage) -> dict:
    return {
        "uid": package.uid,
        "kind": package.kind.value,
        "name": package.name,
        "version": package.version,
        "tags": sorted(package.tags),
    }


def resolve_dependencies(package_uid: str, repository: Repository) -> Resolution:
    return repository.resolve_dependencies(package_uid)


def search(
    repository: Repository,
    kind: Kind | None = None,
    tags: Iterable[str] | None = None,
    name_substring: str | None = None,
) -> list[ArtifactPackage]:
    return repository.search(kind=kind, tags=tags, name_substring=name_substring)


def search_packages(
    packages: Iterable[ArtifactPackage],
    kind: Kind | None = None,
    tags: Iterable[str] | None = None,
    name_substring: str | None = None,
) -> list[ArtifactPackage]:
    """All packages matching every provided filter, sorted by (kind, name, version)."""
    wanted_tags = frozenset(tags) if tags is not None else None
    hits = []
    for package in packages:
        if kind is not None and package.kind != kind:
            continue
        if wanted_tags is not None and not wanted_tags <= package.tags:
            continue
        if name_substring is not None and name_substring not in package.name:
            continue
        hits.append(package)
    hits.sort(key=lambda p: (p.kind.value, p.name, _version_key(p.version), p.uid))
    return hits
