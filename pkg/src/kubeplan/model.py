"""Domain types and the JSON document formats for applications, offers and plans.

Units are fixed everywhere: CPU in millicores, memory in MiB, storage in MB,
prices in abstract integer units per billing period. Nothing converts units.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence, Union

log = logging.getLogger(__name__)


class ModelError(ValueError):
    """A document or value violates the data model."""


@dataclass(frozen=True)
class Component:
    id: int
    name: str
    cpu: int
    memory: int
    storage: int = 0
    operating_system: str = ""

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise ModelError(f"component id must be positive, got {self.id}")
        for attr in ("cpu", "memory", "storage"):
            if getattr(self, attr) < 0:
                raise ModelError(f"component {self.id}: negative resource {attr}")

    @property
    def demand(self) -> tuple[int, int, int]:
        return (self.cpu, self.memory, self.storage)


# Restrictions.  Every kind is its own small value type; ``Restriction`` is the union.


@dataclass(frozen=True)
class Conflict:
    """``alpha`` may not share a node with any id in ``others``.

    Listing ``alpha`` inside ``others`` is how an application asks for explicit
    anti-affinity of a component to itself.
    """

    alpha: int
    others: tuple[int, ...]

    @property
    def component_ids(self) -> tuple[int, ...]:
        return (self.alpha, *self.others)

    def partners(self, comp_id: int) -> set[int]:
        if comp_id == self.alpha:
            return {o for o in self.others if o != comp_id}
        if comp_id in self.others:
            return {self.alpha} - {comp_id}
        return set()

    @property
    def self_anti_affinity(self) -> bool:
        return self.alpha in self.others


@dataclass(frozen=True)
class Colocation:
    """Every node hosting one of ``comps`` hosts all of them."""

    comps: tuple[int, ...]

    @property
    def component_ids(self) -> tuple[int, ...]:
        return self.comps


@dataclass(frozen=True)
class ExclusiveDeployment:
    """Exactly one of ``comps`` is deployed (count >= 1); the rest get count 0."""

    comps: tuple[int, ...]

    @property
    def component_ids(self) -> tuple[int, ...]:
        return self.comps


@dataclass(frozen=True)
class RequireProvide:
    """``n * count(consumer) <= m * count(provider)``."""

    consumer: int
    provider: int
    n: int
    m: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ModelError("RequireProvide needs n >= 1 and m >= 1")

    @property
    def component_ids(self) -> tuple[int, ...]:
        return (self.consumer, self.provider)


@dataclass(frozen=True)
class FullDeployment:
    """``comp`` runs on every leased node that hosts none of its conflict partners."""

    comp: int

    @property
    def component_ids(self) -> tuple[int, ...]:
        return (self.comp,)


RELATIONS = ("=", "<=", ">=")


@dataclass(frozen=True)
class Bound:
    """The summed instance count of ``comps`` relates to ``bound``."""

    comps: tuple[int, ...]
    relation: str
    bound: int

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ModelError(f"unknown bound relation {self.relation!r}")
        if self.bound < 0:
            raise ModelError("bound must be non-negative")

    @property
    def component_ids(self) -> tuple[int, ...]:
        return self.comps

    def holds(self, total: int) -> bool:
        if self.relation == "=":
            return total == self.bound
        if self.relation == "<=":
            return total <= self.bound
        return total >= self.bound


Restriction = Union[Conflict, Colocation, ExclusiveDeployment, RequireProvide, FullDeployment, Bound]


@dataclass(frozen=True)
class ApplicationDescription:
    application: str
    components: tuple[Component, ...]
    restrictions: tuple[Restriction, ...] = ()

    def __post_init__(self) -> None:
        if not self.components:
            raise ModelError("application needs at least one component")
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ModelError(f"duplicate component ids in {ids}")
        known = set(ids)
        for r in self.restrictions:
            for cid in r.component_ids:
                if cid not in known:
                    raise ModelError(f"unknown component id {cid} in {type(r).__name__}")

    @property
    def ids(self) -> list[int]:
        return [c.id for c in self.components]

    def index_of(self, comp_id: int) -> int:
        for i, c in enumerate(self.components):
            if c.id == comp_id:
                return i
        raise ModelError(f"unknown component id {comp_id}")

    def component(self, comp_id: int) -> Component:
        return self.components[self.index_of(comp_id)]

    def restrictions_of(self, kind: type) -> list:
        return [r for r in self.restrictions if isinstance(r, kind)]

    def conflict_partners(self, comp_id: int) -> set[int]:
        partners: set[int] = set()
        for r in self.restrictions_of(Conflict):
            partners |= r.partners(comp_id)
        return partners


@dataclass(frozen=True)
class Offer:
    id: int
    type_name: str
    cpu: int
    memory: int
    storage: int
    price: int
    operating_system: str = ""

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise ModelError(f"offer id must be positive, got {self.id}")
        for attr in ("cpu", "memory", "storage", "price"):
            if getattr(self, attr) < 0:
                raise ModelError(f"offer {self.id}: negative {attr}")

    @property
    def capacity(self) -> tuple[int, int, int]:
        return (self.cpu, self.memory, self.storage)


@dataclass(frozen=True)
class OfferCatalog:
    offers: tuple[Offer, ...]

    def __post_init__(self) -> None:
        if not self.offers:
            raise ModelError("catalog must be non-empty")
        ids = [o.id for o in self.offers]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ModelError(f"duplicate offer id {dup}")

    def by_id(self, offer_id: int) -> Offer:
        for o in self.offers:
            if o.id == offer_id:
                return o
        raise ModelError(f"unknown offer id {offer_id}")

    def __iter__(self):
        return iter(self.offers)

    def __len__(self) -> int:
        return len(self.offers)


@dataclass(frozen=True)
class DeploymentPlan:
    """Leased nodes (columns) and the 0/1 component-by-node assignment."""

    min_price: int
    types_of_vms: tuple[int, ...]
    vms_specs: tuple[Offer, ...]
    assign_matrix: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def num_nodes(self) -> int:
        return len(self.types_of_vms)

    def column(self, k: int) -> tuple[int, ...]:
        return tuple(row[k] for row in self.assign_matrix)

    @classmethod
    def from_columns(cls, specs: Sequence[Offer], matrix: Sequence[Sequence[int]]) -> "DeploymentPlan":
        return cls(
            min_price=sum(o.price for o in specs),
            types_of_vms=tuple(o.id for o in specs),
            vms_specs=tuple(specs),
            assign_matrix=tuple(tuple(int(x) for x in row) for row in matrix),
        )


def plan_structure_errors(app: ApplicationDescription, plan: DeploymentPlan) -> list[str]:
    """Structural matrix checks shared by every module.

    Covers dimensions, 0/1 entries, unused columns, price sum and per-node capacity.
    Application restrictions are not looked at here.
    """
    errors: list[str] = []
    k = plan.num_nodes
    if len(plan.vms_specs) != k:
        errors.append(f"dimension mismatch: {k} node types but {len(plan.vms_specs)} specs")
        return errors
    for t, spec in zip(plan.types_of_vms, plan.vms_specs):
        if t != spec.id:
            errors.append(f"types_of_VMs entry {t} does not match spec id {spec.id}")
    if len(plan.assign_matrix) != len(app.components):
        errors.append(
            f"dimension mismatch: {len(app.components)} components but {len(plan.assign_matrix)} matrix rows"
        )
        return errors
    for i, row in enumerate(plan.assign_matrix):
        if len(row) != k:
            errors.append(f"dimension mismatch: row {i} has {len(row)} entries, expected {k}")
            return errors
        for x in row:
            if x not in (0, 1):
                errors.append(f"matrix entry {x!r} in row {i} is not 0 or 1")
    if errors:
        return errors
    if plan.min_price != sum(o.price for o in plan.vms_specs):
        errors.append(
            f"min_price {plan.min_price} differs from sum of node prices {sum(o.price for o in plan.vms_specs)}"
        )
    for col, spec in enumerate(plan.vms_specs):
        hosted = [c for c, row in zip(app.components, plan.assign_matrix) if row[col]]
        if not hosted:
            errors.append(f"node {col} hosts nothing and must not be leased")
            continue
        for dim, name in enumerate(("cpu", "memory", "storage")):
            used = sum(c.demand[dim] for c in hosted)
            if used > spec.capacity[dim]:
                errors.append(f"node {col} ({spec.type_name}) {name} overcommitted: {used} > {spec.capacity[dim]}")
    return errors


# ---------------------------------------------------------------------------
# JSON documents


def _load(document: str) -> Any:
    try:
        return json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed document: {exc}") from exc


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelError(f"{what} must be an integer, got {value!r}")
    return value


def _ints(values: Any, what: str) -> tuple[int, ...]:
    if not isinstance(values, list):
        raise ModelError(f"{what} must be a list")
    return tuple(_int(v, what) for v in values)


def _require(obj: Mapping, key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise ModelError(f"{where} must be an object")
    if key not in obj:
        raise ModelError(f"{where}: missing field {key!r}")
    return obj[key]


def _warn_unknown(obj: Mapping, known: Iterable[str], where: str) -> None:
    for key in obj:
        if key not in known:
            log.warning("ignoring unknown field %r in %s", key, where)


def _component_from_dict(d: Mapping) -> Component:
    where = f"component {d.get('id', '?')}" if isinstance(d, Mapping) else "component"
    _warn_unknown(d, ("id", "name", "Compute", "Storage", "operatingSystem"), where)
    compute = _require(d, "Compute", where)
    storage = d.get("Storage", {})
    return Component(
        id=_int(_require(d, "id", where), f"{where} id"),
        name=str(_require(d, "name", where)),
        cpu=_int(_require(compute, "CPU", where), f"{where} CPU"),
        memory=_int(_require(compute, "Memory", where), f"{where} Memory"),
        storage=_int(storage.get("StorageSize", 0), f"{where} StorageSize"),
        operating_system=str(d.get("operatingSystem", "")),
    )


_RESTRICTION_FIELDS = {
    "Conflicts": ("alphaCompId", "compsIdList"),
    "Colocation": ("compsIdList",),
    "ExclusiveDeployment": ("compsIdList",),
    "RequireProvide": ("consumerCompId", "providerCompId", "requiredInstances", "servedInstances"),
    "FullDeployment": ("alphaCompId",),
    "Bound": ("compsIdList", "relation", "bound"),
}


def _restriction_from_dict(d: Mapping) -> Restriction:
    kind = _require(d, "type", "restriction")
    if kind not in _RESTRICTION_FIELDS:
        raise ModelError(f"unknown restriction type {kind!r}")
    where = f"{kind} restriction"
    fields = _RESTRICTION_FIELDS[kind]
    _warn_unknown(d, ("type", *fields), where)
    get = lambda key: _require(d, key, where)  # noqa: E731
    if kind == "Conflicts":
        return Conflict(_int(get("alphaCompId"), "alphaCompId"), _ints(get("compsIdList"), "compsIdList"))
    if kind == "Colocation":
        return Colocation(_ints(get("compsIdList"), "compsIdList"))
    if kind == "ExclusiveDeployment":
        return ExclusiveDeployment(_ints(get("compsIdList"), "compsIdList"))
    if kind == "RequireProvide":
        return RequireProvide(
            consumer=_int(get("consumerCompId"), "consumerCompId"),
            provider=_int(get("providerCompId"), "providerCompId"),
            n=_int(get("requiredInstances"), "requiredInstances"),
            m=_int(get("servedInstances"), "servedInstances"),
        )
    if kind == "FullDeployment":
        return FullDeployment(_int(get("alphaCompId"), "alphaCompId"))
    return Bound(_ints(get("compsIdList"), "compsIdList"), str(get("relation")), _int(get("bound"), "bound"))


def _restriction_to_dict(r: Restriction) -> dict:
    if isinstance(r, Conflict):
        return {"type": "Conflicts", "alphaCompId": r.alpha, "compsIdList": list(r.others)}
    if isinstance(r, Colocation):
        return {"type": "Colocation", "compsIdList": list(r.comps)}
    if isinstance(r, ExclusiveDeployment):
        return {"type": "ExclusiveDeployment", "compsIdList": list(r.comps)}
    if isinstance(r, RequireProvide):
        return {
            "type": "RequireProvide",
            "consumerCompId": r.consumer,
            "providerCompId": r.provider,
            "requiredInstances": r.n,
            "servedInstances": r.m,
        }
    if isinstance(r, FullDeployment):
        return {"type": "FullDeployment", "alphaCompId": r.comp}
    return {"type": "Bound", "compsIdList": list(r.comps), "relation": r.relation, "bound": r.bound}


def application_from_dict(data: Any) -> ApplicationDescription:
    if not isinstance(data, Mapping):
        raise ModelError("malformed document: top level must be an object")
    _warn_unknown(data, ("application", "components", "restrictions", "output"), "document")
    comps = _require(data, "components", "document")
    if not isinstance(comps, list):
        raise ModelError("components must be a list")
    restrictions = data.get("restrictions", [])
    if not isinstance(restrictions, list):
        raise ModelError("restrictions must be a list")
    return ApplicationDescription(
        application=str(_require(data, "application", "document")),
        components=tuple(_component_from_dict(c) for c in comps),
        restrictions=tuple(_restriction_from_dict(r) for r in restrictions),
    )


def _offer_from_entry(entry: Any) -> Offer:
    if not isinstance(entry, Mapping) or len(entry) != 1:
        raise ModelError("offer entry must be an object with exactly one type-name key")
    (type_name, spec), = entry.items()
    where = f"offer {type_name!r}"
    _warn_unknown(spec, ("cpu", "memory", "storage", "operatingSystem", "price", "id"), where)
    return Offer(
        id=_int(_require(spec, "id", where), f"{where} id"),
        type_name=str(type_name),
        cpu=_int(_require(spec, "cpu", where), f"{where} cpu"),
        memory=_int(_require(spec, "memory", where), f"{where} memory"),
        storage=_int(_require(spec, "storage", where), f"{where} storage"),
        price=_int(_require(spec, "price", where), f"{where} price"),
        operating_system=str(spec.get("operatingSystem", "")),
    )


def _offer_to_entry(o: Offer) -> dict:
    return {
        o.type_name: {
            "cpu": o.cpu,
            "memory": o.memory,
            "storage": o.storage,
            "operatingSystem": o.operating_system,
            "price": o.price,
            "id": o.id,
        }
    }


def parse_application(document: str) -> ApplicationDescription:
    """Read the application part of a plan document; any ``output`` block is ignored."""
    return application_from_dict(_load(document))


def parse_offers(document: str) -> OfferCatalog:
    data = _load(document)
    if not isinstance(data, list):
        raise ModelError("offer catalog must be a list of offer entries")
    return OfferCatalog(tuple(_offer_from_entry(e) for e in data))


def parse_plan(document: str) -> tuple[ApplicationDescription, DeploymentPlan]:
    data = _load(document)
    app = application_from_dict(data)
    out = _require(data, "output", "document")
    _warn_unknown(out, ("min_price", "types_of_VMs", "VMs_specs", "assign_matr"), "output")
    specs = _require(out, "VMs_specs", "output")
    if not isinstance(specs, list):
        raise ModelError("VMs_specs must be a list")
    matrix = _require(out, "assign_matr", "output")
    if not isinstance(matrix, list):
        raise ModelError("assign_matr must be a list of rows")
    plan = DeploymentPlan(
        min_price=_int(_require(out, "min_price", "output"), "min_price"),
        types_of_vms=_ints(_require(out, "types_of_VMs", "output"), "types_of_VMs"),
        vms_specs=tuple(_offer_from_entry(e) for e in specs),
        assign_matrix=tuple(_ints(row, "assign_matr row") for row in matrix),
    )
    errors = plan_structure_errors(app, plan)
    if errors:
        raise ModelError("; ".join(errors))
    return app, plan


def application_to_dict(app: ApplicationDescription) -> dict:
    return {
        "application": app.application,
        "components": [
            {
                "id": c.id,
                "name": c.name,
                "Compute": {"CPU": c.cpu, "Memory": c.memory},
                "Storage": {"StorageSize": c.storage},
                "operatingSystem": c.operating_system,
            }
            for c in app.components
        ],
        "restrictions": [_restriction_to_dict(r) for r in app.restrictions],
    }


_INT_LIST = re.compile(r"\[\s*(-?\d+(?:,\s*-?\d+)*)\s*\]")


def _dumps(data: Any) -> str:
    text = json.dumps(data, indent=4, ensure_ascii=False)
    # keep flat integer lists (id lists, matrix rows) on one line
    return _INT_LIST.sub(lambda m: "[" + ", ".join(x.strip() for x in m.group(1).split(",")) + "]", text) + "\n"


def write_application(app: ApplicationDescription) -> str:
    return _dumps(application_to_dict(app))


def write_offers(catalog: OfferCatalog) -> str:
    return _dumps([_offer_to_entry(o) for o in catalog.offers])


def write_plan(app: ApplicationDescription, plan: DeploymentPlan) -> str:
    errors = plan_structure_errors(app, plan)
    if errors:
        raise ModelError("; ".join(errors))
    doc = application_to_dict(app)
    doc["output"] = {
        "min_price": plan.min_price,
        "types_of_VMs": list(plan.types_of_vms),
        "VMs_specs": [_offer_to_entry(o) for o in plan.vms_specs],
        "assign_matr": [list(row) for row in plan.assign_matrix],
    }
    return _dumps(doc)
