import json

import pytest
from hypothesis import given, settings, strategies as st

from cwb.model import validate_definition
from cwb.providers.local import LocalDriver, hash_tree
from cwb.providers.simulated import FaultPlan, SimulatedDriver
from cwb.provisioning import (
    Recipe, RecipeError, RecipeNotFound, RecipeRegistry, RunnerContext, StepFailed,
    apply_recipe, build_workload_doc, deep_merge, parse_recipe, parse_size, resolve,
)
from cwb.store import Store

from conftest import fio_definition_doc
from test_providers import FakeHost, spec


def oracle_merge(defaults, overrides):
    """Independent recursive merge: override wins at every defined leaf."""
    out = {}
    for key in set(defaults) | set(overrides):
        if key in defaults and key in overrides:
            a, b = defaults[key], overrides[key]
            out[key] = oracle_merge(a, b) if isinstance(a, dict) and isinstance(b, dict) else b
        else:
            out[key] = defaults.get(key, overrides.get(key))
    return out


def make_context(execution_id="e-1"):
    return RunnerContext(server_url="http://127.0.0.1:1", execution_id=execution_id,
                         token="tok", role="driver", python="/usr/bin/python3",
                         pythonpath="/tmp")


def registry_with_fio():
    store = Store(":memory:")
    registry = RecipeRegistry(store)
    from pathlib import Path
    import cwb

    data = Path(cwb.__file__).parent / "data" / "fio-benchmark-0.3.0.json"
    registry.add(json.loads(data.read_text()))
    return registry


class TestMerge:
    def test_override_wins_at_leaf(self):
        assert deep_merge({"a": {"x": 1, "y": 2}}, {"a": {"y": 9}}) == {"a": {"x": 1, "y": 9}}

    def test_empty_override_identity(self):
        d = {"a": {"x": 1}, "b": 2}
        assert deep_merge(d, {}) == d

    @settings(max_examples=200, deadline=None)
    @given(st.recursive(st.dictionaries(st.text("ab", min_size=1, max_size=2), st.integers(), max_size=3),
                        lambda c: st.dictionaries(st.text("ab", min_size=1, max_size=2),
                                                  st.one_of(st.integers(), c), max_size=3),
                        max_leaves=6),
           st.recursive(st.dictionaries(st.text("ab", min_size=1, max_size=2), st.integers(), max_size=3),
                        lambda c: st.dictionaries(st.text("ab", min_size=1, max_size=2),
                                                  st.one_of(st.integers(), c), max_size=3),
                        max_leaves=6))
    def test_merge_matches_oracle(self, defaults, overrides):
        assert deep_merge(defaults, overrides) == oracle_merge(defaults, overrides)


class TestRecipeParsing:
    def test_bundled_recipe_parses(self):
        registry = registry_with_fio()
        recipe = registry.get("fio-benchmark", "0.3.0")
        assert isinstance(recipe, Recipe)
        assert recipe.steps[0].kind == "install_package"
        assert recipe.default_attributes["fio"]["config"]["size"] == "1g"

    def test_missing_version_rejected(self):
        with pytest.raises(RecipeError):
            parse_recipe({"name": "x", "steps": [{"kind": "render_runner"}]})

    def test_empty_steps_rejected(self):
        with pytest.raises(RecipeError):
            parse_recipe({"name": "x", "version": "1.0.0", "steps": []})

    def test_shell_without_guard_rejected(self):
        with pytest.raises(RecipeError):
            parse_recipe({"name": "x", "version": "1.0.0",
                          "steps": [{"kind": "shell", "command": "rm -rf /tmp/x"}]})

    def test_unknown_kind_rejected(self):
        with pytest.raises(RecipeError):
            parse_recipe({"name": "x", "version": "1.0.0", "steps": [{"kind": "reboot"}]})

    def test_exact_version_match_only(self):
        registry = registry_with_fio()
        with pytest.raises(RecipeNotFound):
            registry.get("fio-benchmark", "0.3.1")


class TestResolve:
    def test_fio_effective_attributes(self):
        registry = registry_with_fio()
        doc = fio_definition_doc()
        benchmark = validate_definition(doc)
        resolved = resolve(benchmark, "driver", registry)
        assert len(resolved) == 1
        recipe, attrs = resolved[0]
        assert recipe.ref == "fio-benchmark@0.3.0"
        assert attrs["fio"]["config"]["size"] == "1m"  # binding override wins
        assert attrs["fio"]["config"]["refill_buffers"] == "1"
        assert attrs["fio"]["metric_definition_id"] == "seq_write_bandwidth_kbps"

    def test_binding_without_attributes_uses_defaults(self):
        registry = registry_with_fio()
        doc = fio_definition_doc()
        doc["provisioning"][0]["attributes"] = {}
        benchmark = validate_definition(doc)
        (_, attrs), = resolve(benchmark, "driver", registry)
        assert attrs == registry.get("fio-benchmark", "0.3.0").default_attributes

    def test_document_order_preserved(self):
        registry = registry_with_fio()
        registry.add({"name": "warmup", "version": "1.0.0",
                      "steps": [{"kind": "write_file", "path": "/cwb/warm", "content": "1"}]})
        doc = fio_definition_doc()
        doc["provisioning"] = [
            {"role": "driver", "recipe": "warmup@1.0.0", "attributes": {}},
            doc["provisioning"][0],
        ]
        benchmark = validate_definition(doc)
        refs = [r.ref for r, _ in resolve(benchmark, "driver", registry)]
        assert refs == ["warmup@1.0.0", "fio-benchmark@0.3.0"]

    def test_unknown_role(self):
        registry = registry_with_fio()
        benchmark = validate_definition(fio_definition_doc())
        with pytest.raises(KeyError):
            resolve(benchmark, "db", registry)


class TestApply:
    def _fresh_vm(self, tmp_path):
        host = FakeHost()
        driver = LocalDriver(host, root=str(tmp_path))
        (vm,) = driver.acquire(spec(), "e-1")
        host.kernel.pump()
        return driver, vm

    def test_fresh_sandbox_all_changed_then_all_skipped(self, tmp_path):
        registry = registry_with_fio()
        recipe = registry.get("fio-benchmark", "0.3.0")
        driver, vm = self._fresh_vm(tmp_path)
        ctx = make_context()
        first = apply_recipe(recipe, recipe.default_attributes, driver, vm, ctx)
        assert [s.outcome for s in first.steps] == ["changed", "changed", "changed"]
        runner = driver.sandbox_path(vm) / "cwb/runner"
        assert runner.exists() and runner.stat().st_mode & 0o111

        before = hash_tree(driver.sandbox_path(vm))
        second = apply_recipe(recipe, recipe.default_attributes, driver, vm, ctx)
        assert [s.outcome for s in second.steps] == ["skipped", "skipped", "skipped"]
        assert second.changed_steps == 0
        assert hash_tree(driver.sandbox_path(vm)) == before

    def test_deterministic_sandbox_hash(self, tmp_path):
        registry = registry_with_fio()
        recipe = registry.get("fio-benchmark", "0.3.0")
        hashes = []
        for sub in ("one", "two"):
            driver, vm = self._fresh_vm(tmp_path / sub)
            apply_recipe(recipe, recipe.default_attributes, driver, vm, make_context())
            hashes.append(hash_tree(driver.sandbox_path(vm)))
        assert hashes[0] == hashes[1]

    def test_forced_fault_aborts_remaining_steps(self):
        host = FakeHost()
        driver = SimulatedDriver(host, FaultPlan(seed=3, provision_failure_prob=1.0,
                                                 acquire_latency=(0, 0)))
        (vm,) = driver.acquire(spec(), "e-1")
        host.kernel.pump()
        registry = registry_with_fio()
        recipe = registry.get("fio-benchmark", "0.3.0")
        with pytest.raises(StepFailed) as err:
            apply_recipe(recipe, recipe.default_attributes, driver, vm, make_context())
        assert err.value.index == 0
        assert len(err.value.report.steps) == 1
        assert err.value.report.steps[0].outcome == "failed"

    def test_shell_guard_skip_on_local(self, tmp_path):
        recipe = parse_recipe({
            "name": "touchy", "version": "1.0.0",
            "steps": [{"kind": "shell", "command": "touch marker.txt",
                       "guard": "test -f marker.txt"}]})
        driver, vm = self._fresh_vm(tmp_path)
        first = apply_recipe(recipe, {}, driver, vm, make_context())
        assert first.steps[0].outcome == "changed"
        assert (driver.sandbox_path(vm) / "marker.txt").exists()
        second = apply_recipe(recipe, {}, driver, vm, make_context())
        assert second.steps[0].outcome == "skipped"

    def test_failing_shell_step_reports_detail(self, tmp_path):
        recipe = parse_recipe({
            "name": "broken", "version": "1.0.0",
            "steps": [{"kind": "shell", "command": "sh -c 'echo nope >&2; exit 3'",
                       "guard": "test -f never-there"}]})
        driver, vm = self._fresh_vm(tmp_path)
        with pytest.raises(StepFailed) as err:
            apply_recipe(recipe, {}, driver, vm, make_context())
        assert "nope" in str(err.value)


class TestWorkloadDoc:
    def test_parse_size(self):
        assert parse_size("1g") == 1 << 30
        assert parse_size("64m") == 64 << 20
        assert parse_size("4k") == 4096
        assert parse_size(1234) == 1234
        assert parse_size("512") == 512

    def test_build_workload_doc_defaults(self):
        doc = build_workload_doc({"fio": {"config": {"size": "64m"}}})
        assert doc["size_bytes"] == 64 << 20
        assert doc["block_bytes"] == 4096
        assert doc["sample_interval_ms"] == 500
        assert doc["bandwidth_metric"] == "seq_write_bandwidth_kbps"

    def test_runner_config_contains_endpoint_and_token(self, tmp_path):
        registry = registry_with_fio()
        recipe = registry.get("fio-benchmark", "0.3.0")
        host = FakeHost()
        driver = LocalDriver(host, root=str(tmp_path))
        (vm,) = driver.acquire(spec(), "e-9")
        host.kernel.pump()
        apply_recipe(recipe, recipe.default_attributes, driver, vm, make_context("e-9"))
        config = json.loads((driver.sandbox_path(vm) / "cwb/config").read_text())
        assert config == {"server": "http://127.0.0.1:1", "execution_id": "e-9",
                          "token": "tok", "role": "driver"}
