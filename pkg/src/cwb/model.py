"""Domain entities and the benchmark definition document.

A benchmark definition arrives as a single JSON document:

    {"name", "timeout_minutes", "release_grace_minutes", "schedule",
     "vms": [{"role", "provider", "region", "instance_type", "image",
              "extra_resources": {}}],
     "provisioning": [{"role", "recipe", "attributes": {}}],
     "metrics": [{"name", "scale", "unit"}]}

Validated definitions are immutable value objects; ids are assigned by the
store, never by callers.
"""

from __future__ import annotations

import copy
import enum
import re
from dataclasses import dataclass, field

DEFAULT_TIMEOUT_MINUTES = 360
DEFAULT_RELEASE_GRACE_MINUTES = 30

RECIPE_REF_RE = re.compile(r"^[A-Za-z][A-Za-z0-9._-]*@\d+\.\d+\.\d+$")

SCALAR_TYPES = (str, int, float, bool)


class ScaleType(str, enum.Enum):
    NOMINAL = "nominal"
    ORDINAL = "ordinal"
    INTERVAL = "interval"
    RATIO = "ratio"

    @property
    def numeric(self) -> bool:
        return self is not ScaleType.NOMINAL


@dataclass(frozen=True)
class VmSpec:
    role: str
    provider: str
    region: str = ""
    instance_type: str = ""
    image: str = ""
    extra_resources: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ProvisioningBinding:
    role: str
    recipe_ref: str
    attributes: dict = field(default_factory=dict)

    @property
    def recipe_name(self) -> str:
        return self.recipe_ref.split("@", 1)[0]

    @property
    def recipe_version(self) -> str:
        return self.recipe_ref.split("@", 1)[1]


@dataclass(frozen=True)
class MetricDefinition:
    name: str
    scale_type: ScaleType
    unit: str | None = None


@dataclass(frozen=True)
class BenchmarkDefinition:
    name: str
    vms: tuple[VmSpec, ...]
    provisioning: tuple[ProvisioningBinding, ...]
    metric_definitions: tuple[MetricDefinition, ...]
    schedule: str | None = None
    timeout_minutes: int = DEFAULT_TIMEOUT_MINUTES
    release_grace_minutes: int = DEFAULT_RELEASE_GRACE_MINUTES
    active: bool = True
    id: str | None = None

    def metric(self, name: str) -> MetricDefinition | None:
        for m in self.metric_definitions:
            if m.name == name:
                return m
        return None

    def roles(self) -> tuple[str, ...]:
        return tuple(vm.role for vm in self.vms)

    def bindings_for(self, role: str) -> tuple[ProvisioningBinding, ...]:
        return tuple(b for b in self.provisioning if b.role == role)


@dataclass
class Execution:
    """One run of a benchmark. Snapshot view; the store owns persistence."""

    id: str
    benchmark_id: str
    created_at: float
    deadline_at: float
    trigger_cause: str  # manual | scheduled
    state: str
    dev_mode: bool = False
    terminal: bool = False


class Violation:
    __slots__ = ("code", "path", "message")

    def __init__(self, code: str, path: str, message: str):
        self.code = code
        self.path = path
        self.message = message

    def __repr__(self):
        return f"{self.code}({self.path}: {self.message})"

    def as_dict(self) -> dict:
        return {"code": self.code, "path": self.path, "message": self.message}


class DefinitionError(Exception):
    """Validation failed; carries every violation found, not just the first."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(map(repr, violations)))

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


class InvalidOverridePath(Exception):
    pass


def _check_attribute_map(attrs, path: str, out: list[Violation]) -> None:
    if not isinstance(attrs, dict):
        out.append(Violation("InvalidValue", path, "attributes must be a map"))
        return
    for key, value in attrs.items():
        if not isinstance(key, str) or not key:
            out.append(Violation("InvalidValue", path, "attribute keys must be non-empty strings"))
            continue
        if isinstance(value, dict):
            _check_attribute_map(value, f"{path}.{key}", out)
        elif not isinstance(value, SCALAR_TYPES) or value is None:
            out.append(Violation("InvalidValue", f"{path}.{key}",
                                 "attribute leaves must be scalars (string/number/boolean)"))


def validate_definition(doc: dict, known_providers: tuple[str, ...] = ("simulated", "local")) -> BenchmarkDefinition:
    """Check a definition document and build the immutable definition.

    Collects all violations before failing so an experimenter sees the
    full list at once. Absent timeout and release grace take defaults;
    they are never treated as infinite.
    """
    if not isinstance(doc, dict):
        raise DefinitionError([Violation("MissingField", "", "definition must be a JSON object")])
    out: list[Violation] = []

    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        out.append(Violation("MissingField", "name", "name non-empty"))
        name = ""

    timeout = doc.get("timeout_minutes", DEFAULT_TIMEOUT_MINUTES)
    if timeout is None:
        timeout = DEFAULT_TIMEOUT_MINUTES
    if not isinstance(timeout, int) or isinstance(timeout, bool) or timeout <= 0:
        out.append(Violation("InvalidValue", "timeout_minutes", "timeout must be a positive integer"))
        timeout = DEFAULT_TIMEOUT_MINUTES

    grace = doc.get("release_grace_minutes", DEFAULT_RELEASE_GRACE_MINUTES)
    if grace is None:
        grace = DEFAULT_RELEASE_GRACE_MINUTES
    if not isinstance(grace, int) or isinstance(grace, bool) or grace < 0:
        out.append(Violation("InvalidValue", "release_grace_minutes", "release grace must be >= 0"))
        grace = DEFAULT_RELEASE_GRACE_MINUTES

    schedule = doc.get("schedule")
    if schedule is not None:
        if not isinstance(schedule, str) or not schedule.strip():
            out.append(Violation("BadSchedule", "schedule", "schedule must be a cron string or null"))
            schedule = None
        else:
            from . import scheduler  # local import; scheduler stays model-free

            try:
                scheduler.parse_cron(schedule)
            except scheduler.CronError as exc:
                out.append(Violation("BadSchedule", "schedule", str(exc)))

    vm_docs = doc.get("vms") or []
    if not isinstance(vm_docs, list) or not vm_docs:
        out.append(Violation("MissingField", "vms", "vms non-empty"))
        vm_docs = []
    vms: list[VmSpec] = []
    seen_roles: set[str] = set()
    for i, vd in enumerate(vm_docs):
        path = f"vms.{i}"
        role = (vd.get("role") or "") if isinstance(vd, dict) else ""
        if not role:
            out.append(Violation("MissingField", f"{path}.role", "role non-empty"))
        if role in seen_roles:
            out.append(Violation("DuplicateRole", f"{path}.role", f"role '{role}' defined more than once"))
        seen_roles.add(role)
        provider = (vd.get("provider") or "") if isinstance(vd, dict) else ""
        if provider not in known_providers:
            out.append(Violation("UnknownProvider", f"{path}.provider",
                                 f"provider '{provider}' is not a registered driver"))
        extra = vd.get("extra_resources") or {} if isinstance(vd, dict) else {}
        _check_attribute_map(extra, f"{path}.extra_resources", out)
        if isinstance(vd, dict):
            vms.append(VmSpec(role=role, provider=provider, region=vd.get("region") or "",
                              instance_type=vd.get("instance_type") or "",
                              image=vd.get("image") or "", extra_resources=copy.deepcopy(extra)))

    prov_docs = doc.get("provisioning") or []
    if not isinstance(prov_docs, list) or not prov_docs:
        out.append(Violation("MissingField", "provisioning", "provisioning non-empty"))
        prov_docs = []
    bindings: list[ProvisioningBinding] = []
    for i, pd in enumerate(prov_docs):
        path = f"provisioning.{i}"
        role = (pd.get("role") or "") if isinstance(pd, dict) else ""
        if role not in seen_roles:
            out.append(Violation("DanglingRoleReference", f"{path}.role",
                                 f"binding references undefined role '{role}'"))
        ref = (pd.get("recipe") or "") if isinstance(pd, dict) else ""
        if not RECIPE_REF_RE.match(ref):
            out.append(Violation("BadRecipeRef", f"{path}.recipe",
                                 f"recipe reference '{ref}' must match name@semver"))
        attrs = pd.get("attributes") or {} if isinstance(pd, dict) else {}
        _check_attribute_map(attrs, f"{path}.attributes", out)
        if isinstance(pd, dict):
            bindings.append(ProvisioningBinding(role=role, recipe_ref=ref, attributes=copy.deepcopy(attrs)))

    metric_docs = doc.get("metrics") or []
    if not isinstance(metric_docs, list) or not metric_docs:
        out.append(Violation("MissingField", "metrics", "metrics non-empty"))
        metric_docs = []
    metrics: list[MetricDefinition] = []
    seen_metrics: set[str] = set()
    for i, md in enumerate(metric_docs):
        path = f"metrics.{i}"
        mname = (md.get("name") or "") if isinstance(md, dict) else ""
        if not mname:
            out.append(Violation("MissingField", f"{path}.name", "metric name non-empty"))
        if mname in seen_metrics:
            out.append(Violation("DuplicateMetricName", f"{path}.name",
                                 f"metric '{mname}' defined more than once"))
        seen_metrics.add(mname)
        scale_raw = (md.get("scale") or "") if isinstance(md, dict) else ""
        try:
            scale = ScaleType(scale_raw)
        except ValueError:
            out.append(Violation("InvalidValue", f"{path}.scale",
                                 f"scale '{scale_raw}' must be one of nominal/ordinal/interval/ratio"))
            scale = ScaleType.NOMINAL
        unit = md.get("unit") if isinstance(md, dict) else None
        if isinstance(md, dict):
            metrics.append(MetricDefinition(name=mname, scale_type=scale, unit=unit))

    if out:
        raise DefinitionError(out)

    return BenchmarkDefinition(
        name=name.strip(),
        vms=tuple(vms),
        provisioning=tuple(bindings),
        metric_definitions=tuple(metrics),
        schedule=schedule,
        timeout_minutes=timeout,
        release_grace_minutes=grace,
    )


def to_document(definition: BenchmarkDefinition) -> dict:
    """Canonical document form; inverse of validate_definition for valid docs."""
    return {
        "name": definition.name,
        "timeout_minutes": definition.timeout_minutes,
        "release_grace_minutes": definition.release_grace_minutes,
        "schedule": definition.schedule,
        "vms": [
            {
                "role": vm.role,
                "provider": vm.provider,
                "region": vm.region,
                "instance_type": vm.instance_type,
                "image": vm.image,
                "extra_resources": copy.deepcopy(vm.extra_resources),
            }
            for vm in definition.vms
        ],
        "provisioning": [
            {
                "role": b.role,
                "recipe": b.recipe_ref,
                "attributes": copy.deepcopy(b.attributes),
            }
            for b in definition.provisioning
        ],
        "metrics": [
            {"name": m.name, "scale": m.scale_type.value, "unit": m.unit}
            for m in definition.metric_definitions
        ],
    }


# Map subtrees where overrides may introduce new leaf keys.
_OPEN_MAP_KEYS = ("attributes", "extra_resources")


def _apply_override(doc: dict, path: str, value) -> None:
    parts = path.split(".")
    if not path or any(p == "" for p in parts):
        raise InvalidOverridePath(f"empty segment in override path '{path}'")
    node = doc
    in_open_map = False
    for i, part in enumerate(parts[:-1]):
        if part in _OPEN_MAP_KEYS:
            in_open_map = True
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise InvalidOverridePath(f"'{part}' does not index a list element in '{path}'")
            node = node[int(part)]
        elif isinstance(node, dict):
            if part not in node:
                if in_open_map:
                    node[part] = {}
                else:
                    raise InvalidOverridePath(f"'{part}' is not a declared field in '{path}'")
            node = node[part]
        else:
            raise InvalidOverridePath(f"'{part}' descends into a scalar in '{path}'")
    leaf = parts[-1]
    if isinstance(node, list):
        if not leaf.isdigit() or int(leaf) >= len(node):
            raise InvalidOverridePath(f"'{leaf}' does not index a list element in '{path}'")
        node[int(leaf)] = value
    elif isinstance(node, dict):
        if leaf not in node and not in_open_map and leaf not in _OPEN_MAP_KEYS:
            raise InvalidOverridePath(f"'{leaf}' is not a declared field in '{path}'")
        node[leaf] = value
    else:
        raise InvalidOverridePath(f"'{leaf}' descends into a scalar in '{path}'")


def clone_with_overrides(base: BenchmarkDefinition, overrides: dict,
                         known_providers: tuple[str, ...] = ("simulated", "local")) -> BenchmarkDefinition:
    """Copy a definition, changing only the overridden paths.

    Overrides are dotted document paths ("vms.0.instance_type",
    "provisioning.0.attributes.fio.config.size") mapped to new values.
    The clone gets no id (the store assigns one on save) and, when the
    name is not overridden, a " (copy)" suffix so the pair stays
    distinguishable in listings.
    """
    doc = to_document(base)
    for path, value in (overrides or {}).items():
        _apply_override(doc, path, value)
    if "name" not in (overrides or {}):
        doc["name"] = f"{base.name} (copy)"
    elif doc["name"] == base.name:
        doc["name"] = f"{base.name} (copy)"
    return validate_definition(doc, known_providers)
