"""Translate a deployment plan into Kubernetes Deployment manifests.

Three flavors come out of one plan:

* ``sage``   - pod (anti-)affinities plus node affinity pinning every replica
               to the nodes the plan chose for it;
* ``k8s``    - the same manifests without node affinity, for the default scheduler;
* ``boreas`` - the ``k8s`` manifests with the custom scheduler's CPU share
               subtracted from each request and ``schedulerName`` set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import yaml

from .model import ApplicationDescription, Colocation, Conflict, DeploymentPlan, FullDeployment
from .optimizer import check_plan

PAUSE_IMAGE = "k8s.gcr.io/pause:2.0"
BOREAS_SCHEDULER = "boreas-scheduler"
BOREAS_RESERVED_CPU = 100
NODE_INDEX_LABEL = "index"
HOSTNAME_TOPOLOGY = "kubernetes.io/hostname"


class ManifestFlavor(str, Enum):
    SAGE = "sage"
    K8S = "k8s"
    BOREAS = "boreas"


class TranslationError(ValueError):
    pass


@dataclass(frozen=True)
class DeploymentManifest:
    name: str
    component_id: int
    replicas: int
    cpu_request: int
    memory_request: int
    storage_request_gi: int
    node_affinity: Optional[tuple[str, ...]] = None
    pod_affinity: tuple[str, ...] = ()
    pod_anti_affinity: tuple[str, ...] = ()
    self_anti_affinity: bool = False
    image: str = PAUSE_IMAGE
    scheduler_name: Optional[str] = None

    @property
    def labels(self) -> dict[str, str]:
        return {"app": self.name, "id": str(self.component_id)}

    @property
    def container_name(self) -> str:
        return f"{self.name}-container"


@dataclass(frozen=True)
class ManifestSet:
    flavor: ManifestFlavor
    manifests: tuple[DeploymentManifest, ...] = field(default=())

    def __iter__(self):
        return iter(self.manifests)

    def __len__(self) -> int:
        return len(self.manifests)

    def get(self, name: str) -> DeploymentManifest:
        for m in self.manifests:
            if m.name == name:
                return m
        raise KeyError(name)


def deployment_name(component_name: str) -> str:
    """Lowercase DNS-label form of a component name (``HDFS.DataNode`` -> ``hdfs-datanode``)."""
    return re.sub(r"[^a-z0-9]+", "-", component_name.lower()).strip("-")


def boreas_cpu_adjust(cpu_request: int, num_deployments: int) -> int:
    """Subtract this deployment's share of the Boreas scheduler's 100m reservation."""
    if num_deployments < 1:
        raise ValueError("num_deployments must be positive")
    adjusted = cpu_request - BOREAS_RESERVED_CPU // num_deployments
    if adjusted <= 0:
        raise ValueError(
            f"cpu request {cpu_request}m leaves nothing after the {BOREAS_RESERVED_CPU // num_deployments}m Boreas share"
        )
    return adjusted


def translate(app: ApplicationDescription, plan: DeploymentPlan, flavor: ManifestFlavor | str) -> ManifestSet:
    flavor = ManifestFlavor(flavor)
    violations = check_plan(app, plan)
    if violations:
        raise TranslationError("plan is infeasible: " + "; ".join(map(str, violations)))

    names = {c.id: deployment_name(c.name) for c in app.components}
    anti: dict[int, list[int]] = {c.id: [] for c in app.components}
    self_anti: set[int] = set()
    for r in app.restrictions_of(Conflict):
        if r.self_anti_affinity:
            self_anti.add(r.alpha)
        for other in r.others:
            if other == r.alpha:
                continue
            for a, b in ((r.alpha, other), (other, r.alpha)):
                if b not in anti[a]:
                    anti[a].append(b)
    for r in app.restrictions_of(FullDeployment):
        self_anti.add(r.comp)
    # co-location: every member follows the first one in application order
    affinity: dict[int, list[int]] = {c.id: [] for c in app.components}
    order = {c.id: i for i, c in enumerate(app.components)}
    for r in app.restrictions_of(Colocation):
        anchor = min(r.comps, key=order.__getitem__)
        for cid in r.comps:
            if cid != anchor and anchor not in affinity[cid]:
                affinity[cid].append(anchor)

    counts = {c.id: sum(row) for c, row in zip(app.components, plan.assign_matrix)}
    deployed = [c for c in app.components if counts[c.id] >= 1]
    manifests = []
    for c, row in zip(app.components, plan.assign_matrix):
        if counts[c.id] == 0:
            continue
        cpu = c.cpu
        if flavor is ManifestFlavor.BOREAS:
            cpu = boreas_cpu_adjust(cpu, len(deployed))
        node_affinity = None
        if flavor is ManifestFlavor.SAGE:
            node_affinity = tuple(str(col) for col, x in enumerate(row) if x)
        manifests.append(
            DeploymentManifest(
                name=names[c.id],
                component_id=c.id,
                replicas=counts[c.id],
                cpu_request=cpu,
                memory_request=c.memory,
                storage_request_gi=c.storage // 1024,
                node_affinity=node_affinity,
                pod_affinity=tuple(names[t] for t in affinity[c.id] if counts[t]),
                pod_anti_affinity=tuple(names[t] for t in anti[c.id] if counts[t]),
                self_anti_affinity=c.id in self_anti,
                scheduler_name=BOREAS_SCHEDULER if flavor is ManifestFlavor.BOREAS else None,
            )
        )
    return ManifestSet(flavor, tuple(manifests))


def strip_node_affinity(m: DeploymentManifest) -> DeploymentManifest:
    return replace(m, node_affinity=None)


# ---------------------------------------------------------------------------
# YAML rendering


def _label_term(labels: list[str]) -> dict:
    return {
        "labelSelector": {"matchExpressions": [{"key": "app", "operator": "In", "values": labels}]},
        "topologyKey": HOSTNAME_TOPOLOGY,
    }


def manifest_to_dict(m: DeploymentManifest) -> dict:
    affinity: dict = {}
    if m.node_affinity is not None:
        affinity["nodeAffinity"] = {
            "requiredDuringSchedulingIgnoredDuringExecution": {
                "nodeSelectorTerms": [
                    {"matchExpressions": [{"key": NODE_INDEX_LABEL, "operator": "In", "values": list(m.node_affinity)}]}
                ]
            }
        }
    if m.pod_affinity:
        affinity["podAffinity"] = {
            "requiredDuringSchedulingIgnoredDuringExecution": [_label_term([t]) for t in m.pod_affinity]
        }
    anti_targets = list(m.pod_anti_affinity) + ([m.name] if m.self_anti_affinity else [])
    if anti_targets:
        affinity["podAntiAffinity"] = {
            "requiredDuringSchedulingIgnoredDuringExecution": [_label_term([t]) for t in anti_targets]
        }
    pod_spec: dict = {}
    if affinity:
        pod_spec["affinity"] = affinity
    pod_spec["containers"] = [
        {
            "image": m.image,
            "name": m.container_name,
            "resources": {
                "requests": {
                    "cpu": f"{m.cpu_request}m",
                    "ephemeral-storage": f"{m.storage_request_gi}Gi",
                    "memory": f"{m.memory_request}Mi",
                }
            },
        }
    ]
    if m.scheduler_name:
        pod_spec["schedulerName"] = m.scheduler_name
    return {
        "apiVersion": "apps/v1",
        "kind": "Deployment",
        "metadata": {"labels": m.labels, "name": m.name},
        "spec": {
            "replicas": m.replicas,
            "selector": {"matchLabels": {"app": m.name}},
            "template": {"metadata": {"labels": m.labels}, "spec": pod_spec},
        },
    }


def render_manifest(m: DeploymentManifest) -> str:
    return yaml.safe_dump(manifest_to_dict(m), sort_keys=False, default_flow_style=False)


def manifest_from_dict(doc: dict) -> DeploymentManifest:
    """Inverse of :func:`manifest_to_dict` for manifests this module wrote."""
    meta = doc["metadata"]
    pod = doc["spec"]["template"]["spec"]
    requests = pod["containers"][0]["resources"]["requests"]
    affinity = pod.get("affinity", {})

    def targets(section: str) -> list[str]:
        terms = affinity.get(section, {}).get("requiredDuringSchedulingIgnoredDuringExecution", [])
        return [v for t in terms for e in t["labelSelector"]["matchExpressions"] for v in e["values"]]

    node_affinity = None
    if "nodeAffinity" in affinity:
        terms = affinity["nodeAffinity"]["requiredDuringSchedulingIgnoredDuringExecution"]["nodeSelectorTerms"]
        node_affinity = tuple(v for t in terms for e in t["matchExpressions"] for v in e["values"])
    name = meta["name"]
    anti = targets("podAntiAffinity")
    return DeploymentManifest(
        name=name,
        component_id=int(meta["labels"]["id"]),
        replicas=int(doc["spec"]["replicas"]),
        cpu_request=int(requests["cpu"].rstrip("m")),
        memory_request=int(requests["memory"].rstrip("Mi")),
        storage_request_gi=int(requests["ephemeral-storage"].rstrip("Gi")),
        node_affinity=node_affinity,
        pod_affinity=tuple(targets("podAffinity")),
        pod_anti_affinity=tuple(t for t in anti if t != name),
        self_anti_affinity=name in anti,
        image=pod["containers"][0]["image"],
        scheduler_name=pod.get("schedulerName"),
    )


def emit_manifests(manifests: ManifestSet, directory: str | Path) -> list[Path]:
    """Write one ``<name>.yaml`` per deployment; returns the paths in manifest order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for m in manifests:
        path = directory / f"{m.name}.yaml"
        path.write_text(render_manifest(m), encoding="utf-8")
        paths.append(path)
    return paths


def provisioning_script(plan: DeploymentPlan, cluster: str = "sage-cluster") -> str:
    """Dry-run shell script that would create the plan's nodes and label them.

    One node-pool per distinct offer (in order of first use) and one label
    command per node, setting the ``index`` label node affinity matches on.
    Nothing is executed here.
    """
    if plan.num_nodes == 0:
        return ""
    pools: dict[int, list[int]] = {}
    for col, offer in enumerate(plan.vms_specs):
        pools.setdefault(offer.id, []).append(col)
    specs = {o.id: o for o in plan.vms_specs}
    lines = [
        "#!/bin/sh",
        f"# {plan.num_nodes} node(s), total price {plan.min_price}",
        "# dry run: review, then execute with DRY_RUN=0",
        "set -eu",
        f'CLUSTER="${{CLUSTER:-{cluster}}}"',
        'run() { if [ "${DRY_RUN:-1}" = 1 ]; then echo "$*"; else "$@"; fi; }',
    ]
    for offer_id, cols in pools.items():
        lines.append(
            f'run doctl kubernetes cluster node-pool create "$CLUSTER" '
            f"--name pool-{offer_id} --size {specs[offer_id].type_name} --count {len(cols)}"
        )
    for offer_id, cols in pools.items():
        for ordinal, col in enumerate(cols):
            lines.append(f"run kubectl label node pool-{offer_id}-{ordinal} {NODE_INDEX_LABEL}={col} --overwrite")
    return "\n".join(lines) + "\n"
