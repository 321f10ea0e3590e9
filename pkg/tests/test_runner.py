"""Workflow planning, child-process execution, and median aggregation."""

import hashlib
import json
import random
import shlex
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quest.pareto import MetricVector
from quest.registry import DependencyRef, Kind, OsFamily, PlatformDescriptor, Repository
from quest.runner import (
    AggregationError,
    DispersionReport,
    NotLaunchableError,
    PlatformIncompatibleError,
    Policy,
    RawRun,
    RunnerError,
    TemplateSyntaxError,
    UnboundPlaceholderError,
    UnresolvableRefError,
    WorkflowDescriptor,
    aggregate,
    bind_template,
    execute,
    make_workflow,
    plan_run,
    snapshot_environment,
)

from .oracle import median_by_sorting

PY = shlex.quote(sys.executable)

LINUX = PlatformDescriptor(cpu="x86_64", os_family=OsFamily.LINUX, ram_bytes=1 << 30)


@pytest.fixture
def repo(tmp_path):
    return Repository(tmp_path / "repo")


def make_program(repo, tmp_path, script: str, name="bench", meta_extra=None, deps=()):
    """Register a program package whose payload is one python script."""
    src = tmp_path / f"src-{name}"
    src.mkdir()
    (src / "run.py").write_text(script)
    meta = {"entry_command": f"{PY} run.py"}
    meta.update(meta_extra or {})
    return repo.create_package(
        Kind.PROGRAM, name, "1.0", dependencies=deps, payload_path=src, meta=meta
    )


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


class TestPlanRun:
    def test_placeholder_substitution(self):
        assert bind_template("run --batch={batch}", {"batch": 1}) == "run --batch=1"

    def test_bool_parameters_render_json_style(self):
        assert bind_template("run --fast={fast}", {"fast": True}) == "run --fast=true"

    def test_unbound_placeholder_is_named(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass",
                            meta_extra={"entry_command": f"{PY} run.py --n={{count}}"})
        wf = make_workflow(DependencyRef(uid=prog.uid))
        with pytest.raises(UnboundPlaceholderError) as exc:
            plan_run(wf, repo, LINUX)
        assert exc.value.name == "count"

    def test_unmatched_brace_is_planning_error(self):
        with pytest.raises(TemplateSyntaxError):
            bind_template("run {oops", {})

    def test_positional_placeholder_rejected(self):
        with pytest.raises(TemplateSyntaxError):
            bind_template("run {}", {})

    def test_android_program_on_linux_platform(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass", meta_extra={"os_families": ["android"]})
        wf = make_workflow(DependencyRef(uid=prog.uid))
        with pytest.raises(PlatformIncompatibleError):
            plan_run(wf, repo, LINUX)

    def test_program_without_declared_families_runs_anywhere(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        wf = make_workflow(DependencyRef(uid=prog.uid))
        plan = plan_run(wf, repo, LINUX)
        assert plan.entry_command == f"{PY} run.py"

    def test_unresolvable_program_ref(self, repo):
        wf = make_workflow(DependencyRef(kind=Kind.PROGRAM, tags=frozenset({"ghost"})))
        with pytest.raises(UnresolvableRefError):
            plan_run(wf, repo, LINUX)

    def test_unresolvable_model_ref(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        wf = make_workflow(
            DependencyRef(uid=prog.uid),
            model_ref=DependencyRef(kind=Kind.MODEL, tags=frozenset({"ghost"})),
        )
        with pytest.raises(UnresolvableRefError, match="model"):
            plan_run(wf, repo, LINUX)

    def test_plan_matches_resolver_order(self, repo, tmp_path):
        lib_src = tmp_path / "libsrc"
        lib_src.mkdir()
        (lib_src / "lib.txt").write_text("x")
        lib = repo.create_package(Kind.LIBRARY, "lib", "1.0", payload_path=lib_src)
        prog = make_program(repo, tmp_path, "pass", deps=[DependencyRef(uid=lib.uid)])
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        resolved = repo.resolve_dependencies(prog.uid)
        assert plan.resolved_packages == resolved.packages

    def test_planning_is_pure(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        wf = make_workflow(DependencyRef(uid=prog.uid), parameters={"x": 1})
        before = tree_digest(repo.root)
        first = plan_run(wf, repo, LINUX)
        second = plan_run(wf, repo, LINUX)
        assert first == second
        assert tree_digest(repo.root) == before

    def test_repetitions_must_be_positive(self):
        with pytest.raises(RunnerError):
            WorkflowDescriptor(uid="0" * 16, program_ref=DependencyRef(uid="1" * 16),
                               repetitions=0)


class TestExecute:
    def test_noop_three_repetitions(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        runs = execute(plan, 3)
        assert [r.repetition_index for r in runs] == [0, 1, 2]
        assert all(r.exit_ok for r in runs)
        assert all(r.wall_time_s > 0 for r in runs)

    def test_nonzero_exit_recorded_not_raised(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "import sys; print('boom'); sys.exit(3)")
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        runs = execute(plan, 2)
        assert len(runs) == 2
        assert all(not r.exit_ok for r in runs)
        assert "boom" in runs[0].log_excerpt
        with pytest.raises(AggregationError):
            aggregate(runs)

    def test_sleep_wall_time_within_tolerance(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "import time; time.sleep(0.2)")
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        for run in execute(plan, 3):
            assert 0.2 <= run.wall_time_s <= 0.5

    def test_not_launchable_distinct_from_failed(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass",
                            meta_extra={"entry_command": "/no/such/binary --flag"})
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        with pytest.raises(NotLaunchableError):
            execute(plan, 1)

    def test_result_file_ingested(self, repo, tmp_path):
        script = (
            "import json\n"
            "json.dump({'accuracy': 0.92, 'energy_j': 1.5, 'peak_mem_bytes': 2048},"
            " open('result.json', 'w'))\n"
        )
        prog = make_program(repo, tmp_path, script)
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        (run,) = execute(plan, 1)
        assert run.exit_ok
        assert run.accuracy == 0.92
        assert run.energy_j == 1.5
        assert run.peak_mem_bytes == 2048

    def test_missing_result_file_keeps_wall_time_only(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        (run,) = execute(plan, 1)
        assert run.exit_ok
        assert run.accuracy is None and run.energy_j is None and run.peak_mem_bytes is None
        assert set(run.metrics()) == {"latency_s"}

    def test_out_of_range_result_is_run_failure(self, repo, tmp_path):
        script = "import json; json.dump({'accuracy': 1.7}, open('result.json', 'w'))"
        prog = make_program(repo, tmp_path, script)
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        (run,) = execute(plan, 1)
        assert not run.exit_ok
        assert "accuracy" in run.log_excerpt

    def test_corrupt_result_json_is_run_failure(self, repo, tmp_path):
        script = "open('result.json', 'w').write('{ nope')"
        prog = make_program(repo, tmp_path, script)
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        (run,) = execute(plan, 1)
        assert not run.exit_ok

    def test_scratch_isolation(self, repo, tmp_path):
        """Output files stay in the per-repetition scratch dir, and one
        repetition's leftovers are invisible to the next."""
        script = (
            "import os, sys\n"
            "if os.path.exists('marker'):\n"
            "    sys.exit(1)\n"
            "open('marker', 'w').write('x')\n"
        )
        prog = make_program(repo, tmp_path, script, name="isolated")
        plan = plan_run(make_workflow(DependencyRef(uid=prog.uid)), repo, LINUX)
        runs = execute(plan, 3)
        assert all(r.exit_ok for r in runs)
        assert not (plan.working_dir / "marker").exists()


class TestSnapshot:
    def test_consecutive_snapshots_differ_only_in_timestamp(self, repo, tmp_path):
        prog = make_program(repo, tmp_path, "pass")
        resolved = repo.resolve_dependencies(prog.uid).packages
        a = snapshot_environment(LINUX, resolved)
        b = snapshot_environment(LINUX, resolved)
        da, db = a.to_json(), b.to_json()
        da["timestamp_utc"] = db["timestamp_utc"] = ""
        assert da == db

    def test_one_dependency_version_per_package(self, repo, tmp_path):
        lib_src = tmp_path / "ls"
        lib_src.mkdir()
        lib = repo.create_package(Kind.LIBRARY, "lib", "2.1", payload_path=lib_src)
        prog = make_program(repo, tmp_path, "pass", deps=[DependencyRef(uid=lib.uid)])
        resolved = repo.resolve_dependencies(prog.uid).packages
        snap = snapshot_environment(LINUX, resolved)
        assert set(snap.dependency_versions) == {p.uid for p in resolved}
        assert snap.dependency_versions[lib.uid] == "2.1"

    def test_fields_populated_on_this_machine(self):
        import platform as plat

        snap = snapshot_environment(LINUX, [])
        assert snap.os_name == plat.system()
        assert snap.kernel_version == plat.release()
        assert snap.os_name and snap.kernel_version

    def test_hostname_is_hashed(self):
        import socket

        snap = snapshot_environment(LINUX, [])
        hostname = socket.gethostname()
        assert snap.hostname_hash != hostname
        assert len(snap.hostname_hash) == 16
        assert hostname not in json.dumps(snap.to_json())


def ok_run(index, wall, **kw):
    return RawRun(index, wall, exit_ok=True, **kw)


class TestAggregate:
    def test_median_of_wall_times(self):
        runs = [ok_run(0, 1.0), ok_run(1, 9.0), ok_run(2, 1.2)]
        vector, _ = aggregate(runs)
        assert vector["latency_s"] == 1.2

    def test_single_run_vector_and_zero_dispersion(self):
        runs = [ok_run(0, 0.7, accuracy=0.9)]
        vector, dispersion = aggregate(runs)
        assert vector == MetricVector({"latency_s": 0.7, "accuracy": 0.9})
        for d in dispersion.per_metric.values():
            assert d.minimum == d.maximum
            assert d.iqr == 0.0

    def test_random_sets_match_sort_oracle(self):
        rng = random.Random(42)
        for _ in range(100):
            n = rng.randint(1, 12)
            runs = [
                ok_run(
                    i,
                    rng.uniform(0.01, 5.0),
                    accuracy=rng.uniform(0, 1) if rng.random() < 0.7 else None,
                    energy_j=rng.uniform(0, 50) if rng.random() < 0.5 else None,
                )
                for i in range(n)
            ]
            vector, _ = aggregate(runs)
            for metric in vector.ids:
                values = [r.metrics()[metric] for r in runs if metric in r.metrics()]
                assert vector[metric] == pytest.approx(median_by_sorting(values), abs=0)

    def test_failed_runs_excluded_under_lenient(self):
        runs = [ok_run(0, 1.0), RawRun(1, 99.0, exit_ok=False), ok_run(2, 3.0)]
        vector, _ = aggregate(runs, Policy.LENIENT)
        assert vector["latency_s"] == 2.0

    def test_strict_rejects_any_failure(self):
        runs = [ok_run(0, 1.0), RawRun(1, 0.5, exit_ok=False)]
        with pytest.raises(AggregationError, match="strict"):
            aggregate(runs, "strict")

    def test_no_successful_runs(self):
        with pytest.raises(AggregationError):
            aggregate([RawRun(0, 1.0, exit_ok=False)])

    def test_metric_absent_everywhere_is_absent(self):
        vector, _ = aggregate([ok_run(0, 1.0)])
        assert "energy_j" not in vector.ids

    def test_iqr_of_one_to_five(self):
        runs = [ok_run(i, float(w)) for i, w in enumerate([1, 2, 3, 4, 5])]
        _, dispersion = aggregate(runs)
        d = dispersion.per_metric["latency_s"]
        assert (d.minimum, d.maximum, d.iqr) == (1.0, 5.0, 2.0)

    @given(
        walls=st.lists(st.floats(min_value=0.001, max_value=100.0), min_size=1, max_size=9)
    )
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariant(self, walls):
        runs = [ok_run(i, w) for i, w in enumerate(walls)]
        base, _ = aggregate(runs)
        shuffled = list(runs)
        random.Random(0).shuffle(shuffled)
        again, _ = aggregate(shuffled)
        assert base == again

    @given(
        walls=st.lists(st.floats(min_value=0.001, max_value=100.0), min_size=1, max_size=9),
        bump=st.floats(min_value=0.0, max_value=10.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_each_metric(self, walls, bump):
        runs = [ok_run(i, w) for i, w in enumerate(walls)]
        bumped = [ok_run(i, w + bump) for i, w in enumerate(walls)]
        low, _ = aggregate(runs)
        high, _ = aggregate(bumped)
        assert high["latency_s"] >= low["latency_s"]

    def test_dispersion_report_json_shape(self):
        _, dispersion = aggregate([ok_run(0, 1.0), ok_run(1, 2.0)])
        doc = dispersion.to_json()
        assert doc == {"latency_s": {"min": 1.0, "max": 2.0, "iqr": pytest.approx(0.5)}}
