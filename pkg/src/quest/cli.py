"""Command-line entry point: pack, run, submit, board, tournament.

Contract for scripting: stdout carries only machine-consumable payload
(uids, JSON documents, the board table); everything diagnostic goes to
stderr. Exit codes are stable: 0 success, 1 validation or planning
failure, 2 aggregation failure (no usable repetitions), 3 network failure.

Configuration precedence is flags > environment (QUEST_REPO,
QUEST_SERVICE, QUEST_TOKEN) > config file > built-in defaults. The config
file is JSON at ``$XDG_CONFIG_HOME/quest/config.json`` with the field
names of CliConfig.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import httpx

from .ids import is_uid, new_uid
from .pareto import MetricSpace, ParetoError
from .registry import (
    DependencyRef,
    Kind,
    RegistryError,
    Repository,
    Severity,
    validate_meta,
)
from .runner import (
    NotLaunchableError,
    AggregationError,
    RunnerError,
    aggregate,
    detect_platform,
    execute,
    make_workflow,
    plan_run,
    snapshot_environment,
)
from .registry import InvalidPackageError, PlatformDescriptor

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_AGGREGATION = 2
EXIT_NETWORK = 3

ENV_REPO = "QUEST_REPO"
ENV_SERVICE = "QUEST_SERVICE"
ENV_TOKEN = "QUEST_TOKEN"


class CLIError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_FAILURE):
        super().__init__(message)
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    # usage problems are ordinary failures (exit 1), not argparse's exit 2,
    # which this tool reserves for aggregation failures
    def error(self, message: str):
        raise CLIError(message)


@dataclass(frozen=True)
class CliConfig:
    repository_path: Path
    service_url: str | None
    token: str | None
    default_repetitions: int = 5


def _config_file_path() -> Path:
    base = os.environ.get("XDG_CONFIG_HOME", "")
    root = Path(base) if base else Path.home() / ".config"
    return root / "quest" / "config.json"


def _default_repo_path() -> Path:
    base = os.environ.get("XDG_DATA_HOME", "")
    root = Path(base) if base else Path.home() / ".local" / "share"
    return root / "quest" / "repo"


def load_config(args: argparse.Namespace) -> CliConfig:
    file_doc: dict = {}
    config_file = _config_file_path()
    if config_file.is_file():
        try:
            file_doc = json.loads(config_file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"unreadable config file {config_file}: {exc}")
        if not isinstance(file_doc, dict):
            raise CLIError(f"config file {config_file} must hold a JSON object")

    def pick(flag_value, env_name, file_key, default):
        if flag_value is not None:
            return flag_value
        if os.environ.get(env_name):
            return os.environ[env_name]
        if file_doc.get(file_key) is not None:
            return file_doc[file_key]
        return default

    repetitions = file_doc.get("default_repetitions", 5)
    if not isinstance(repetitions, int) or repetitions < 1:
        raise CLIError(f"default_repetitions must be a positive integer, got {repetitions!r}")
    return CliConfig(
        repository_path=Path(pick(args.repo, ENV_REPO, "repository_path", _default_repo_path())),
        service_url=pick(args.service, ENV_SERVICE, "service_url", None),
        token=pick(args.token, ENV_TOKEN, "token", None),
        default_repetitions=repetitions,
    )


def _note(message: str) -> None:
    print(message, file=sys.stderr)


# -- service client helpers ----------------------------------------------------


def _client(config: CliConfig) -> httpx.Client:
    if not config.service_url:
        raise CLIError("no service URL configured (use --service or QUEST_SERVICE)")
    headers = {}
    if config.token:
        headers["Authorization"] = f"Bearer {config.token}"
    return httpx.Client(base_url=config.service_url, headers=headers, timeout=30.0)


def _request(client: httpx.Client, method: str, url: str, **kwargs) -> httpx.Response:
    try:
        response = client.request(method, url, **kwargs)
    except httpx.TransportError as exc:
        raise CLIError(f"cannot reach service: {exc}", EXIT_NETWORK) from None
    if response.status_code >= 400:
        raise CLIError(_describe_http_error(response))
    return response


def _describe_http_error(response: httpx.Response) -> str:
    try:
        body = response.json()
        message = body.get("message", response.text)
        field = body.get("field")
        code = body.get("code", response.status_code)
    except json.JSONDecodeError:
        return f"service error {response.status_code}: {response.text}"
    suffix = f" (field: {field})" if field else ""
    return f"service rejected the request [{code}]: {message}{suffix}"


# -- selector / argument parsing ------------------------------------------------


def parse_selector(raw: str, kind: Kind) -> DependencyRef:
    """Either a bare 16-hex uid or `tag[,tag...][@version-range]`."""
    if is_uid(raw):
        return DependencyRef(uid=raw)
    spec, _, version = raw.partition("@")
    tags = frozenset(t.strip() for t in spec.split(",") if t.strip())
    if not tags:
        raise CLIError(f"selector {raw!r} has neither a uid nor tags")
    try:
        return DependencyRef(kind=kind, tags=tags, version=version or None)
    except InvalidPackageError as exc:
        raise CLIError(str(exc))


def _parse_param(raw: str) -> tuple[str, object]:
    key, sep, value = raw.partition("=")
    if not sep or not key:
        raise CLIError(f"--param must look like key=value, got {raw!r}")
    try:
        parsed = json.loads(value)
        if not isinstance(parsed, (str, int, float, bool)):
            parsed = value
    except json.JSONDecodeError:
        parsed = value
    return key, parsed


def _load_json_file(path: str, what: str) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CLIError(f"cannot read {what} {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CLIError(f"{what} {path} is not valid JSON: {exc}")


# -- subcommands -----------------------------------------------------------------


def cmd_pack(args: argparse.Namespace, config: CliConfig) -> int:
    if not os.path.isdir(args.payload):
        raise CLIError(f"payload directory {args.payload} does not exist")
    try:
        kind = Kind(args.kind)
    except ValueError:
        raise CLIError(f"unknown kind {args.kind!r}; expected one of "
                       + ", ".join(k.value for k in Kind))
    meta = {}
    if args.meta:
        doc = _load_json_file(args.meta, "meta file")
        if not isinstance(doc, dict):
            raise CLIError(f"meta file {args.meta} must hold a JSON object")
        meta = doc

    report = validate_meta(meta, kind)
    for issue in report.issues:
        _note(f"meta {issue.severity.value}: {issue.path or '<root>'}: {issue.message}")
    if not report.valid:
        raise CLIError("meta document fails validation (errors above)")

    repository = Repository(config.repository_path)
    deps = []
    for dep in args.dep or []:
        if not is_uid(dep):
            raise CLIError(f"--dep expects a 16-hex package uid, got {dep!r}")
        deps.append(DependencyRef(uid=dep))
    try:
        package = repository.create_package(
            kind,
            args.name,
            args.version,
            tags=args.tag or [],
            dependencies=deps,
            payload_path=args.payload,
            meta=meta,
        )
    except RegistryError as exc:
        raise CLIError(str(exc))
    _note(f"packed {kind.value} {args.name}@{args.version} into {config.repository_path}")
    print(package.uid)
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: CliConfig) -> int:
    repository = Repository(config.repository_path)
    workflow = make_workflow(
        program_ref=parse_selector(args.program, Kind.PROGRAM),
        model_ref=parse_selector(args.model, Kind.MODEL) if args.model else None,
        dataset_ref=parse_selector(args.dataset, Kind.DATASET) if args.dataset else None,
        parameters=dict(_parse_param(p) for p in args.param or []),
        repetitions=args.repetitions or config.default_repetitions,
    )
    if args.platform:
        doc = _load_json_file(args.platform, "platform file")
        try:
            platform = PlatformDescriptor.from_json(doc)
        except InvalidPackageError as exc:
            raise CLIError(str(exc))
    else:
        platform = detect_platform()

    try:
        plan = plan_run(workflow, repository, platform)
    except (RunnerError, RegistryError) as exc:
        raise CLIError(f"planning failed: {exc}")
    _note(f"running: {plan.entry_command}  ({workflow.repetitions} repetitions)")
    try:
        runs = execute(plan, workflow.repetitions)
    except NotLaunchableError as exc:
        raise CLIError(str(exc), EXIT_AGGREGATION)
    environment = snapshot_environment(platform, plan.resolved_packages)
    try:
        metrics, dispersion = aggregate(runs)
    except AggregationError as exc:
        for run in runs:
            if run.log_excerpt:
                _note(f"repetition {run.repetition_index}: {run.log_excerpt.strip()}")
        raise CLIError(f"aggregation failed: {exc}", EXIT_AGGREGATION)

    document = {
        "workflow": workflow.to_json(),
        "metrics": metrics.to_json(),
        "dispersion": dispersion.to_json(),
        "environment": environment.to_json(),
        "raw_runs": [run.to_json() for run in runs],
    }
    print(json.dumps(document, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_submit(args: argparse.Namespace, config: CliConfig) -> int:
    if args.stdin:
        raw = sys.stdin.read()
        try:
            document = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CLIError(f"stdin is not valid JSON: {exc}")
    elif args.input:
        document = _load_json_file(args.input, "result file")
    else:
        raise CLIError("provide a result document via --input FILE or --stdin")
    if not isinstance(document, dict):
        raise CLIError("result document must be a JSON object")
    missing = [k for k in ("workflow", "environment", "metrics", "dispersion") if k not in document]
    if missing:
        raise CLIError(f"result document lacks keys: {', '.join(missing)}")

    nonce = args.nonce or new_uid()
    if not is_uid(nonce):
        raise CLIError(f"--nonce must be a 16-hex string, got {nonce!r}")
    record = {
        "workflow": document["workflow"],
        "environment": document["environment"],
        "metrics": document["metrics"],
        "dispersion": document["dispersion"],
        "nonce": nonce,
    }
    with _client(config) as client:
        response = _request(
            client, "POST", f"/v1/tournaments/{args.tournament}/submissions", json=record
        )
    body = response.json()
    _note(f"submission accepted with status {body.get('status', '?')} (nonce {nonce})")
    print(body["uid"])
    return EXIT_OK


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_board_table(view: dict) -> str:
    """Aligned text table; frontier rows carry a `*` in the margin."""
    header = ["uid", view["dim_x"], view["dim_y"], "distance", "status"]
    rows = [
        [
            point["uid"],
            _format_value(point["x"]),
            _format_value(point["y"]),
            _format_value(point["distance"]),
            point["status"],
        ]
        for point in view["points"]
    ]
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = ["  " + line(header)]
    for row, point in zip(rows, view["points"]):
        marker = "* " if point["on_frontier"] else "  "
        out.append(marker + line(row))
    return "\n".join(out)


def cmd_board(args: argparse.Namespace, config: CliConfig) -> int:
    params: list[tuple[str, str]] = [("x", args.x), ("y", args.y)]
    if args.pending:
        params.append(("pending", "true"))
    for label in args.label or []:
        params.append(("label", label))
    with _client(config) as client:
        response = _request(
            client, "GET", f"/v1/tournaments/{args.tournament}/board", params=params
        )
    if args.format == "json":
        print(response.text)
        return EXIT_OK
    print(render_board_table(response.json()))
    return EXIT_OK


def cmd_tournament(args: argparse.Namespace, config: CliConfig) -> int:
    with _client(config) as client:
        if args.action == "create":
            body = {
                "title": args.title,
                "opens_at": args.opens_at,
                "closes_at": args.closes_at,
            }
            if args.space:
                doc = _load_json_file(args.space, "space file")
                try:
                    MetricSpace.from_json(doc)
                except ParetoError as exc:
                    raise CLIError(f"bad metric space: {exc}")
                body["space"] = doc
            response = _request(client, "POST", "/v1/tournaments", json=body)
            tournament = response.json()
            _note(f"created tournament {tournament['title']!r} in {tournament['status']} status")
            print(tournament["uid"])
        else:
            response = _request(
                client, "POST", f"/v1/tournaments/{args.uid}/{args.action}"
            )
            _note(f"tournament {args.uid} is now {response.json()['status']}")
    return EXIT_OK


# -- wiring ------------------------------------------------------------------------


def build_parser() -> _Parser:
    shared = _Parser(add_help=False)
    shared.add_argument("--repo", metavar="PATH", help="artifact repository directory")
    shared.add_argument("--service", metavar="URL", help="scoreboard service base URL")
    shared.add_argument("--token", metavar="T", help="bearer token for the service")

    parser = _Parser(
        prog="quest",
        description="Pack artifacts, run benchmark workflows, and talk to a scoreboard.",
        parents=[shared],
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    pack = commands.add_parser("pack", parents=[shared],
                               help="register a payload directory as a package")
    pack.add_argument("--kind", required=True, help="program|model|dataset|library|platform")
    pack.add_argument("--name", required=True)
    pack.add_argument("--version", required=True)
    pack.add_argument("--tag", action="append", metavar="TAG")
    pack.add_argument("--dep", action="append", metavar="UID",
                      help="dependency package uid; repeatable")
    pack.add_argument("--meta", metavar="FILE", help="JSON meta document")
    pack.add_argument("payload", metavar="PAYLOAD_DIR")
    pack.set_defaults(func=cmd_pack)

    run = commands.add_parser("run", parents=[shared],
                              help="plan and execute a workflow locally")
    run.add_argument("--program", required=True, metavar="SEL",
                     help="package uid or tag[,tag...][@version]")
    run.add_argument("--model", metavar="SEL")
    run.add_argument("--dataset", metavar="SEL")
    run.add_argument("-n", "--repetitions", type=int, metavar="N")
    run.add_argument("--param", action="append", metavar="K=V")
    run.add_argument("--platform", metavar="FILE",
                     help="platform descriptor JSON; autodetected when omitted")
    run.set_defaults(func=cmd_run)

    submit = commands.add_parser("submit", parents=[shared],
                                 help="post a run result to a tournament")
    submit.add_argument("--tournament", required=True, metavar="UID")
    submit.add_argument("--input", metavar="FILE", help="result JSON from `quest run`")
    submit.add_argument("--stdin", action="store_true", help="read the result JSON from stdin")
    submit.add_argument("--nonce", metavar="HEX16",
                        help="idempotency nonce; reuse to make retries safe")
    submit.set_defaults(func=cmd_submit)

    board = commands.add_parser("board", parents=[shared],
                                help="render a 2-D scoreboard projection")
    board.add_argument("--tournament", required=True, metavar="UID")
    board.add_argument("-x", required=True, metavar="DIM")
    board.add_argument("-y", required=True, metavar="DIM")
    board.add_argument("--pending", action="store_true", help="include pending submissions")
    board.add_argument("--label", action="append", metavar="K:V",
                       help="filter, e.g. platform_label:board-1; repeatable")
    board.add_argument("--format", choices=("text", "json"), default="text")
    board.set_defaults(func=cmd_board)

    tournament = commands.add_parser("tournament", parents=[shared],
                                     help="create or transition a tournament")
    actions = tournament.add_subparsers(dest="action", metavar="ACTION")
    create = actions.add_parser("create", parents=[shared])
    create.add_argument("--title", required=True)
    create.add_argument("--opens-at", required=True, metavar="ISO8601")
    create.add_argument("--closes-at", required=True, metavar="ISO8601")
    create.add_argument("--space", metavar="FILE",
                        help="metric space JSON; canonical six metrics when omitted")
    for action in ("open", "close"):
        sub = actions.add_parser(action, parents=[shared])
        sub.add_argument("uid", metavar="UID")
    tournament.set_defaults(func=cmd_tournament)

    return parser


def entrypoint(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_FAILURE
        if args.command == "tournament" and not getattr(args, "action", None):
            raise CLIError("tournament needs an action: create, open or close")
        config = load_config(args)
        return args.func(args, config)
    except CLIError as exc:
        _note(f"error: {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        _note("interrupted")
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(entrypoint())
