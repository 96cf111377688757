"""Deterministic placement simulators for the three manifest flavors.

* ``schedule_sage``   binds every replica to the node its node affinity names.
* ``schedule_k8s``    models the default scheduler: filter, score by least
                      requested resources over a sampled prefix of nodes, bind.
* ``schedule_boreas`` models a packing scheduler that handles one deployment at
                      a time and keeps its replicas on as few nodes as it can.

Feasibility is shared by all three so that "no binding ever violates a hard
constraint" holds by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .model import ApplicationDescription, DeploymentPlan, Offer
from .predeployer import DeploymentManifest, ManifestSet, deployment_name

PodUid = tuple[str, int]


class ClusterMismatch(ValueError):
    """The Sage manifests and the cluster they were meant for disagree."""


@dataclass(frozen=True)
class Resources:
    cpu: int
    memory: int
    storage: int = 0

    def fits_in(self, other: "Resources") -> bool:
        return self.cpu <= other.cpu and self.memory <= other.memory and self.storage <= other.storage

    def __sub__(self, other: "Resources") -> "Resources":
        return Resources(self.cpu - other.cpu, self.memory - other.memory, self.storage - other.storage)

    def __add__(self, other: "Resources") -> "Resources":
        return Resources(self.cpu + other.cpu, self.memory + other.memory, self.storage + other.storage)


@dataclass
class NodeState:
    index: int
    type_name: str
    allocatable: Resources
    free: Resources = None  # type: ignore[assignment]
    resident_pods: list[tuple[str, PodUid]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.free is None:
            self.free = self.allocatable

    def hosts(self, label: str) -> bool:
        return any(app == label for app, _ in self.resident_pods)


@dataclass(frozen=True)
class PodRequest:
    uid: PodUid
    requests: Resources
    node_affinity: Optional[frozenset[int]] = None
    affinity_to: frozenset[str] = frozenset()
    anti_affinity_to: frozenset[str] = frozenset()
    self_anti_affinity: bool = False
    scheduler_name: Optional[str] = None

    @property
    def app(self) -> str:
        return self.uid[0]

    @property
    def ordinal(self) -> int:
        return self.uid[1]


@dataclass(frozen=True)
class PlacementResult:
    bindings: dict[PodUid, int]
    unschedulable: tuple[PodUid, ...]
    trace: tuple[str, ...]

    @property
    def all_scheduled(self) -> bool:
        return not self.unschedulable


@dataclass(frozen=True)
class K8sSimParams:
    """Sampling knobs of the default-scheduler model.

    The filter stops after ``ceil(percentage * nodes / 100)`` feasible nodes,
    but never below ``min_nodes_to_find`` (kube-scheduler's floor is 100, so a
    small cluster is always scanned in full). Set the floor to 0 for the bare
    prefix model.
    """

    percentage_of_nodes_to_score: int = 50
    min_nodes_to_find: int = 100

    def __post_init__(self) -> None:
        if not 0 < self.percentage_of_nodes_to_score <= 100:
            raise ValueError("percentage_of_nodes_to_score must be in (0, 100]")
        if self.min_nodes_to_find < 0:
            raise ValueError("min_nodes_to_find must be non-negative")

    def candidates_wanted(self, num_nodes: int) -> int:
        if num_nodes <= self.min_nodes_to_find:
            return num_nodes
        sampled = math.ceil(self.percentage_of_nodes_to_score * num_nodes / 100)
        return max(1, self.min_nodes_to_find, sampled)


NodeSpec = Union[Offer, tuple[str, Resources], tuple[str, int, int], tuple[str, int, int, int]]


def build_cluster(source: Union[DeploymentPlan, Sequence[NodeSpec]]) -> list[NodeState]:
    """One fresh node per plan column, or per entry of an explicit node list.

    Explicit entries are offers or ``(type_name, cpu, memory[, storage])``
    tuples, or ``(type_name, Resources)``.
    """
    specs: Sequence = source.vms_specs if isinstance(source, DeploymentPlan) else source
    if not specs:
        raise ValueError("cluster must have at least one node")
    nodes = []
    for i, spec in enumerate(specs):
        if isinstance(spec, Offer):
            name, alloc = spec.type_name, Resources(spec.cpu, spec.memory, spec.storage)
        elif len(spec) == 2:
            name, alloc = spec
        else:
            name, alloc = spec[0], Resources(*spec[1:])
        nodes.append(NodeState(i, name, alloc))
    return nodes


def pods_from_manifests(manifests: Union[ManifestSet, Iterable[DeploymentManifest]]) -> list[PodRequest]:
    """Expand deployments replica by replica, keeping manifest order."""
    pods = []
    for m in manifests:
        for r in range(m.replicas):
            pods.append(
                PodRequest(
                    uid=(m.name, r),
                    requests=Resources(m.cpu_request, m.memory_request, m.storage_request_gi * 1024),
                    node_affinity=None if m.node_affinity is None else frozenset(int(i) for i in m.node_affinity),
                    affinity_to=frozenset(m.pod_affinity),
                    anti_affinity_to=frozenset(m.pod_anti_affinity),
                    self_anti_affinity=m.self_anti_affinity,
                    scheduler_name=m.scheduler_name,
                )
            )
    return pods


def _pod_index(pods: Iterable[PodRequest]) -> dict[PodUid, PodRequest]:
    return {p.uid: p for p in pods}


def feasible(node: NodeState, pod: PodRequest, cluster: dict[PodUid, PodRequest]) -> bool:
    """Hard predicates only; ``cluster`` maps resident uids to their requests."""
    if not pod.requests.fits_in(node.free):
        return False
    if pod.node_affinity is not None and node.index not in pod.node_affinity:
        return False
    for label, uid in node.resident_pods:
        if label in pod.anti_affinity_to:
            return False
        if pod.self_anti_affinity and label == pod.app:
            return False
        resident = cluster.get(uid)
        if resident is not None:
            if pod.app in resident.anti_affinity_to:
                return False
            if resident.self_anti_affinity and label == pod.app:
                return False
    return all(node.hosts(label) for label in pod.affinity_to)


def score_k8s(node: NodeState, pod: PodRequest) -> Fraction:
    """Least-requested score: mean of the cpu and memory fractions left free."""
    alloc, free, req = node.allocatable, node.free, pod.requests
    cpu = Fraction(free.cpu - req.cpu, alloc.cpu) if alloc.cpu else Fraction(0)
    mem = Fraction(free.memory - req.memory, alloc.memory) if alloc.memory else Fraction(0)
    return (cpu + mem) / 2


def _bind(node: NodeState, pod: PodRequest, placed: dict[PodUid, PodRequest], bindings: dict[PodUid, int]) -> None:
    node.free = node.free - pod.requests
    node.resident_pods.append((pod.app, pod.uid))
    placed[pod.uid] = pod
    bindings[pod.uid] = node.index


def _fmt_uid(uid: PodUid) -> str:
    return f"{uid[0]}-{uid[1]}"


def schedule_k8s(
    pods: Sequence[PodRequest], cluster: list[NodeState], params: K8sSimParams = K8sSimParams()
) -> PlacementResult:
    wanted = params.candidates_wanted(len(cluster))
    trace = [
        f"k8s percentage={params.percentage_of_nodes_to_score} floor={params.min_nodes_to_find} "
        f"candidates={wanted} order=manifest"
    ]
    bindings: dict[PodUid, int] = {}
    unschedulable: list[PodUid] = []
    placed: dict[PodUid, PodRequest] = {}
    for pod in pods:
        candidates: list[NodeState] = []
        for node in cluster:
            if feasible(node, pod, placed):
                candidates.append(node)
                if len(candidates) == wanted:
                    break
        if not candidates:
            unschedulable.append(pod.uid)
            trace.append(f"{_fmt_uid(pod.uid)} filtered=[] -> unschedulable")
            continue
        scores = [(score_k8s(n, pod), n) for n in candidates]
        best = max(scores, key=lambda s: (s[0], -s[1].index))[1]
        scored = ", ".join(f"{n.index}:{float(s):.4f}" for s, n in scores)
        trace.append(f"{_fmt_uid(pod.uid)} filtered={[n.index for n in candidates]} scores=[{scored}] -> {best.index}")
        _bind(best, pod, placed, bindings)
    return PlacementResult(bindings, tuple(unschedulable), tuple(trace))


def schedule_boreas(pods: Sequence[PodRequest], cluster: list[NodeState]) -> PlacementResult:
    """One deployment at a time; replicas stick to nodes their siblings already use.

    Among the nodes that pass the filter, a node already hosting a replica of
    the same deployment wins (no new node is opened), then the node with the
    most free CPU, then the lowest index.
    """
    trace = ["boreas order=manifest grouping=deployment"]
    bindings: dict[PodUid, int] = {}
    unschedulable: list[PodUid] = []
    placed: dict[PodUid, PodRequest] = {}
    for pod in pods:
        candidates = [n for n in cluster if feasible(n, pod, placed)]
        if not candidates:
            unschedulable.append(pod.uid)
            trace.append(f"{_fmt_uid(pod.uid)} filtered=[] -> unschedulable")
            continue
        best = min(candidates, key=lambda n: (not n.hosts(pod.app), -n.free.cpu, n.index))
        trace.append(f"{_fmt_uid(pod.uid)} filtered={[n.index for n in candidates]} -> {best.index}")
        _bind(best, pod, placed, bindings)
    return PlacementResult(bindings, tuple(unschedulable), tuple(trace))


def schedule_sage(pods: Sequence[PodRequest], cluster: list[NodeState]) -> PlacementResult:
    """Replica ``r`` of a deployment goes to the ``r``-th smallest index in its node affinity."""
    trace = ["sage order=manifest"]
    bindings: dict[PodUid, int] = {}
    placed: dict[PodUid, PodRequest] = {}
    by_index = {n.index: n for n in cluster}
    for pod in pods:
        if pod.node_affinity is None:
            raise ClusterMismatch(f"pod {_fmt_uid(pod.uid)} carries no node affinity")
        targets = sorted(pod.node_affinity)
        if pod.ordinal >= len(targets):
            raise ClusterMismatch(f"pod {_fmt_uid(pod.uid)} has no node left in its affinity {targets}")
        node = by_index.get(targets[pod.ordinal])
        if node is None:
            raise ClusterMismatch(f"pod {_fmt_uid(pod.uid)} targets node {targets[pod.ordinal]} missing from cluster")
        if not feasible(node, pod, placed):
            raise ClusterMismatch(f"pod {_fmt_uid(pod.uid)} does not fit on node {node.index}")
        trace.append(f"{_fmt_uid(pod.uid)} affinity={targets} -> {node.index}")
        _bind(node, pod, placed, bindings)
    return PlacementResult(bindings, (), tuple(trace))


def verify_placement(result: PlacementResult, pods: Sequence[PodRequest], cluster_spec: Sequence[NodeState]) -> list[str]:
    """Replay bindings on a fresh copy of the cluster and list every broken hard constraint."""
    fresh = [NodeState(n.index, n.type_name, n.allocatable) for n in cluster_spec]
    index = _pod_index(pods)
    problems = []
    uids = set(index)
    seen = set(result.bindings) | set(result.unschedulable)
    if seen != uids or set(result.bindings) & set(result.unschedulable):
        problems.append("bindings and unschedulable do not partition the pod set")
    for n in fresh:
        for uid, idx in result.bindings.items():
            if idx == n.index:
                n.resident_pods.append((uid[0], uid))
                n.free = n.free - index[uid].requests
    for n in fresh:
        if not Resources(0, 0, 0).fits_in(n.free):
            problems.append(f"node {n.index} over capacity")
        for label, uid in n.resident_pods:
            pod = index[uid]
            others = [(l, u) for l, u in n.resident_pods if u != uid]
            if pod.node_affinity is not None and n.index not in pod.node_affinity:
                problems.append(f"{_fmt_uid(uid)} violates node affinity")
            for l, _ in others:
                if l in pod.anti_affinity_to or (pod.self_anti_affinity and l == pod.app):
                    problems.append(f"{_fmt_uid(uid)} shares node {n.index} with {l}")
            for target in pod.affinity_to:
                if not any(l == target for l, _ in others):
                    problems.append(f"{_fmt_uid(uid)} lacks {target} on node {n.index}")
    return problems


def placement_counts(result: PlacementResult, cluster: Sequence[NodeState]) -> dict[str, list[int]]:
    """Replicas per deployment per node index."""
    counts: dict[str, list[int]] = {}
    for (app, _), idx in result.bindings.items():
        counts.setdefault(app, [0] * len(cluster))[idx] += 1
    return counts


def placement_matrix(result: PlacementResult, app: ApplicationDescription, num_nodes: int) -> list[list[int]]:
    """Bindings as an assignment matrix in application row order."""
    rows = []
    for c in app.components:
        row = [0] * num_nodes
        for (label, _), idx in result.bindings.items():
            if label == deployment_name(c.name):
                row[idx] += 1
        rows.append(row)
    return rows


def render_table(result: PlacementResult, cluster: Sequence[NodeState], app: ApplicationDescription) -> str:
    """Components by nodes; a trailing ``unsched.`` column holds X marks for pods left out.

    Components with no pod in ``result`` get no row.
    """
    headers = ["Component"] + [n.type_name for n in cluster] + ["unsched."]
    counts = placement_counts(result, cluster)
    missing: dict[str, int] = {}
    for app_label, _ in result.unschedulable:
        missing[app_label] = missing.get(app_label, 0) + 1
    rows = []
    for c in app.components:
        label = deployment_name(c.name)
        if label not in counts and label not in missing:
            continue
        cells = [str(v) if v else "" for v in counts.get(label, [0] * len(cluster))]
        rows.append([c.name] + cells + ["X" * missing.get(label, 0)])
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = [" | ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    for r in rows:
        lines.append(" | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
