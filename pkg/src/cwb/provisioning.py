"""Recipe registry, attribute merging, and the idempotent step engine.

Recipes are declarative JSON documents with a fixed step vocabulary, not
executable code. Every step knows how to tell whether its desired state
already holds, so re-applying a recipe to a converged sandbox reports
nothing but skips. Versions resolve by exact name@version match only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .model import BenchmarkDefinition
from .providers import Driver, FilePayload, ResourceHandle

STEP_KINDS = ("install_package", "write_file", "render_runner", "shell")

CONFIG_PATH = "/cwb/config"
RUNNER_PATH = "/cwb/runner"
WORKLOAD_PATH = "/cwb/runner.json"
SPOOL_DIR = "/cwb/spool"


class RecipeError(ValueError):
    pass


class RecipeNotFound(KeyError):
    def __init__(self, name: str, version: str):
        super().__init__(f"{name}@{version}")


class StepFailed(Exception):
    def __init__(self, index: int, detail: str, report: "ProvisionReport"):
        self.index = index
        self.detail = detail
        self.report = report
        super().__init__(f"step {index} failed: {detail}")


@dataclass(frozen=True)
class Step:
    kind: str
    doc: dict

    def label(self) -> str:
        if self.kind == "install_package":
            return f"install_package:{self.doc['package']}"
        if self.kind == "write_file":
            return f"write_file:{self.doc['path']}"
        if self.kind == "shell":
            return f"shell:{self.doc['command']}"
        return "render_runner"


@dataclass(frozen=True)
class Recipe:
    name: str
    version: str
    steps: tuple[Step, ...]
    default_attributes: dict = field(default_factory=dict)

    @property
    def ref(self) -> str:
        return f"{self.name}@{self.version}"


def parse_recipe(doc: dict) -> Recipe:
    name = doc.get("name")
    version = doc.get("version")
    if not name or not version:
        raise RecipeError("recipe needs name and version")
    raw_steps = doc.get("steps") or []
    if not raw_steps:
        raise RecipeError(f"{name}@{version}: steps must be non-empty")
    steps = []
    for i, sd in enumerate(raw_steps):
        kind = sd.get("kind")
        if kind not in STEP_KINDS:
            raise RecipeError(f"{name}@{version} step {i}: unknown kind '{kind}'")
        if kind == "install_package" and not sd.get("package"):
            raise RecipeError(f"{name}@{version} step {i}: install_package needs 'package'")
        if kind == "write_file" and (not sd.get("path") or "content" not in sd):
            raise RecipeError(f"{name}@{version} step {i}: write_file needs 'path' and 'content'")
        if kind == "shell":
            if not sd.get("command"):
                raise RecipeError(f"{name}@{version} step {i}: shell needs 'command'")
            if not sd.get("guard"):
                raise RecipeError(
                    f"{name}@{version} step {i}: shell steps must declare a guard command")
        steps.append(Step(kind=kind, doc=dict(sd)))
    return Recipe(name=name, version=version, steps=tuple(steps),
                  default_attributes=doc.get("default_attributes") or {})


class RecipeRegistry:
    """Versioned registry backed by the store's recipes table."""

    def __init__(self, store):
        self._store = store

    def add(self, doc: dict) -> Recipe:
        recipe = parse_recipe(doc)
        self._store.upsert_recipe(recipe.name, recipe.version, doc)
        return recipe

    def get(self, name: str, version: str) -> Recipe:
        doc = self._store.get_recipe(name, version)
        if doc is None:
            raise RecipeNotFound(name, version)
        return parse_recipe(doc)

    def list(self) -> list[tuple[str, str]]:
        return self._store.list_recipes()


def deep_merge(defaults: dict, overrides: dict) -> dict:
    """Leaf-level merge: the override wins wherever it defines a value."""
    merged = dict(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve(benchmark: BenchmarkDefinition, role: str, registry: RecipeRegistry
            ) -> list[tuple[Recipe, dict]]:
    """Bindings for a role in document order, with effective attributes."""
    if role not in benchmark.roles():
        raise KeyError(f"role '{role}' not defined on benchmark")
    resolved = []
    for binding in benchmark.bindings_for(role):
        recipe = registry.get(binding.recipe_name, binding.recipe_version)
        resolved.append((recipe, deep_merge(recipe.default_attributes, binding.attributes)))
    return resolved


# -- runner rendering ---------------------------------------------------------

SIZE_SUFFIX = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}


def parse_size(text) -> int:
    if isinstance(text, (int, float)):
        return int(text)
    text = str(text).strip().lower()
    if text and text[-1] in SIZE_SUFFIX:
        return int(float(text[:-1]) * SIZE_SUFFIX[text[-1]])
    return int(text)


def _truthy(value) -> bool:
    return str(value).lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class RunnerContext:
    """Everything render_runner needs: where the server is and who we are."""

    server_url: str
    execution_id: str
    token: str
    role: str
    python: str
    pythonpath: str


def build_workload_doc(attributes: dict, config_key: str = "fio") -> dict:
    section = attributes.get(config_key) or {}
    config = section.get("config") or {}
    return {
        "workload": "seq_write",
        "size_bytes": parse_size(config.get("size", "1g")),
        "block_bytes": int(config.get("block_bytes", 4096)),
        "refill_buffers": _truthy(config.get("refill_buffers", "0")),
        "flush_each_block": _truthy(config.get("flush_each_block", "1")),
        "rate_limit_kbps": int(config.get("rate_limit_kbps", 0)),
        "sample_interval_ms": int(config.get("sample_interval_ms", 500)),
        "bandwidth_metric": section.get("metric_definition_id", "seq_write_bandwidth_kbps"),
        "cpu_metric": section.get("cpu_metric_id", "cpu_model"),
        "output_file": "cwb/data/seqwrite.bin",
        "log_path": "cwb/results/bandwidth.log",
    }


def render_runner_payloads(attributes: dict, ctx: RunnerContext, config_key: str = "fio"
                           ) -> dict[str, FilePayload]:
    config = {
        "server": ctx.server_url,
        "execution_id": ctx.execution_id,
        "token": ctx.token,
        "role": ctx.role,
    }
    runner = (
        "#!/bin/sh\n"
        "# benchmark callback: invoked as '/cwb/runner run' or '/cwb/runner postprocess'\n"
        f"exec env PYTHONPATH={ctx.pythonpath} {ctx.python} -m cwb.agent \"$1\" --root \"${{CWB_ROOT:-.}}\"\n"
    )
    return {
        CONFIG_PATH: FilePayload(json.dumps(config, sort_keys=True, indent=1) + "\n"),
        WORKLOAD_PATH: FilePayload(
            json.dumps(build_workload_doc(attributes, config_key), sort_keys=True, indent=1) + "\n"),
        RUNNER_PATH: FilePayload(runner, executable=True),
    }


# -- step engine ----------------------------------------------------------------

@dataclass
class StepReport:
    kind: str
    label: str
    outcome: str  # changed | skipped | failed
    detail: str = ""


@dataclass
class ProvisionReport:
    recipe_ref: str
    role: str
    steps: list[StepReport] = field(default_factory=list)

    @property
    def changed_steps(self) -> int:
        return sum(1 for s in self.steps if s.outcome == "changed")

    @property
    def failed(self) -> bool:
        return any(s.outcome == "failed" for s in self.steps)

    def as_dict(self) -> dict:
        return {"recipe": self.recipe_ref, "role": self.role,
                "steps": [vars(s) for s in self.steps]}


def _step_key(step: Step) -> str:
    return hashlib.sha1(json.dumps(step.doc, sort_keys=True).encode()).hexdigest()[:16]


def apply_recipe(recipe: Recipe, attributes: dict, driver: Driver, handle: ResourceHandle,
                 ctx: RunnerContext) -> ProvisionReport:
    """Converge one resource to the recipe's desired state.

    Steps run in order through the driver; the first failure aborts the
    rest. A fully converged sandbox yields a report of nothing but skips.
    """
    report = ProvisionReport(recipe_ref=recipe.ref, role=handle.role)
    for index, step in enumerate(recipe.steps):
        outcome = _apply_step(step, attributes, driver, handle, ctx)
        report.steps.append(outcome)
        if outcome.outcome == "failed":
            raise StepFailed(index, f"{outcome.label}: {outcome.detail}", report)
    return report


def _apply_step(step: Step, attributes: dict, driver: Driver, handle: ResourceHandle,
                ctx: RunnerContext) -> StepReport:
    if step.kind == "install_package":
        package = step.doc["package"]
        if driver.exec(handle, f"pkg-query {package}").exit_code == 0:
            return StepReport(step.kind, step.label(), "skipped", "already installed")
        result = driver.exec(handle, f"pkg-install {package}")
        if result.exit_code != 0:
            return StepReport(step.kind, step.label(), "failed", result.stderr or "install failed")
        return StepReport(step.kind, step.label(), "changed")

    if step.kind == "write_file":
        payload = FilePayload(step.doc["content"], executable=bool(step.doc.get("executable")))
        sync = driver.sync(handle, {step.doc["path"]: payload})
        changed = sync.changed
        return StepReport(step.kind, step.label(), "changed" if changed else "skipped",
                          "" if changed else "content already in place")

    if step.kind == "render_runner":
        payloads = render_runner_payloads(attributes, ctx, step.doc.get("config_key", "fio"))
        sync = driver.sync(handle, payloads)
        changed = sync.changed
        return StepReport(step.kind, step.label(), "changed" if changed else "skipped",
                          "" if changed else "runner already rendered")

    # shell step: declared guard decides the no-op check; a marker records
    # completion for drivers whose shell has no observable filesystem
    key = _step_key(step)
    if driver.exec(handle, step.doc["guard"]).exit_code == 0:
        return StepReport(step.kind, step.label(), "skipped", "guard satisfied")
    if driver.exec(handle, f"step-done {key}").exit_code == 0:
        return StepReport(step.kind, step.label(), "skipped", "already applied")
    result = driver.exec(handle, step.doc["command"])
    if result.exit_code != 0:
        return StepReport(step.kind, step.label(), "failed",
                          result.stderr.strip() or f"exit {result.exit_code}")
    driver.exec(handle, f"step-mark {key}")
    return StepReport(step.kind, step.label(), "changed")
