"""The six reference scenarios and the harness that replays them under each policy."""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .model import ApplicationDescription, DeploymentPlan, ModelError, OfferCatalog, parse_application, parse_offers
from .optimizer import Status, solve
from .predeployer import ManifestFlavor, deployment_name, translate
from .scheduler import (
    K8sSimParams,
    NodeState,
    PlacementResult,
    build_cluster,
    pods_from_manifests,
    render_table,
    schedule_boreas,
    schedule_k8s,
    schedule_sage,
    verify_placement,
)

CASE_NAMES = ("secure-billing", "secure-web", "oryx2", "boreas-test-d", "batch", "node")
POLICIES = ("sage", "k8s", "boreas")
FIXTURES_ENV = "KUBEPLAN_FIXTURES"
CASES_FILE = "cases.json"


class UnknownCase(KeyError):
    pass


class MissingFixture(FileNotFoundError):
    pass


# a placement table: one (node type, sorted (component, count) pairs) entry per node
Table = Counter


@dataclass(frozen=True)
class ExpectedOutcome:
    policy: str
    unschedulable: Mapping[str, int]
    tables: tuple[Table, ...] = ()
    co_located: tuple[str, ...] = ()

    def scheduled_counts(self, requested: Mapping[str, int]) -> dict[str, int]:
        return {name: n - self.unschedulable.get(name, 0) for name, n in requested.items()}


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    name: str
    app: ApplicationDescription
    catalog: OfferCatalog
    min_price: int
    expected: Mapping[str, ExpectedOutcome]


@dataclass
class CaseRun:
    case: TestCase
    policy: str
    plan: DeploymentPlan
    cluster: list[NodeState]
    result: PlacementResult
    mismatches: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def table(self) -> str:
        return render_table(self.result, self.cluster, self.case.app)


def fixtures_dir() -> Path:
    override = os.environ.get(FIXTURES_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("kubeplan") / "fixtures"))


def _read(directory: Path, name: str) -> str:
    path = directory / name
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingFixture(f"missing fixture {path}") from exc


def _table(columns: Sequence[Mapping]) -> Table:
    return Counter(
        (col["node"], tuple(sorted((k, v) for k, v in col["pods"].items() if v))) for col in columns
    )


def load_case(name: str, directory: Optional[Path] = None) -> TestCase:
    if name not in CASE_NAMES:
        raise UnknownCase(f"unknown case {name!r}; known: {', '.join(CASE_NAMES)}")
    directory = Path(directory) if directory is not None else fixtures_dir()
    index = json.loads(_read(directory, CASES_FILE))
    if name not in index:
        raise MissingFixture(f"case {name!r} missing from {directory / CASES_FILE}")
    entry = index[name]
    app = parse_application(_read(directory, entry["app"]))
    catalog = parse_offers(_read(directory, entry["catalog"]))
    tables = entry.get("tables", {})
    known = {c.name for c in app.components}
    expected = {}
    for policy in POLICIES:
        raw = entry["expected"][policy]
        for comp in [*raw.get("unschedulable", {}), *raw.get("co_located", [])]:
            if comp not in known:
                raise ModelError(f"case {name}: expected outcome names unknown component {comp!r}")
        alternatives = tables[raw["cells"]] if "cells" in raw else []
        expected[policy] = ExpectedOutcome(
            policy=policy,
            unschedulable=dict(raw.get("unschedulable", {})),
            tables=tuple(_table(t) for t in alternatives),
            co_located=tuple(raw.get("co_located", ())),
        )
    return TestCase(name, app, catalog, int(entry["min_price"]), expected)


def actual_table(result: PlacementResult, cluster: Sequence[NodeState], app: ApplicationDescription) -> Table:
    names = {deployment_name(c.name): c.name for c in app.components}
    per_node: list[Counter] = [Counter() for _ in cluster]
    for (label, _), idx in result.bindings.items():
        per_node[idx][names[label]] += 1
    return Counter((n.type_name, tuple(sorted(per_node[i].items()))) for i, n in enumerate(cluster))


def simulate(
    app: ApplicationDescription, plan: DeploymentPlan, policy: str, params: K8sSimParams = K8sSimParams()
) -> tuple[list[NodeState], PlacementResult]:
    flavor = {"sage": ManifestFlavor.SAGE, "k8s": ManifestFlavor.K8S, "boreas": ManifestFlavor.BOREAS}[policy]
    pods = pods_from_manifests(translate(app, plan, flavor))
    cluster = build_cluster(plan)
    if policy == "sage":
        result = schedule_sage(pods, cluster)
    elif policy == "k8s":
        result = schedule_k8s(pods, cluster, params)
    else:
        result = schedule_boreas(pods, cluster)
    problems = verify_placement(result, pods, build_cluster(plan))
    if problems:  # a simulator bug, never an expected outcome
        raise AssertionError("; ".join(problems))
    return cluster, result


def plan_case(case: TestCase) -> DeploymentPlan:
    report = solve(case.app, case.catalog)
    if report.status is not Status.OPTIMAL:
        raise ModelError(f"case {case.name}: optimizer returned {report.status.value}")
    return report.plan


def run_case(
    case: TestCase | str,
    policy: str,
    params: K8sSimParams = K8sSimParams(),
    plan: Optional[DeploymentPlan] = None,
) -> CaseRun:
    if isinstance(case, str):
        case = load_case(case)
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    plan = plan if plan is not None else plan_case(case)
    cluster, result = simulate(case.app, plan, policy, params)
    run = CaseRun(case, policy, plan, cluster, result)
    exp = case.expected[policy]

    if policy == "sage" and plan.min_price != case.min_price:
        run.mismatches.append(f"plan price {plan.min_price}, expected {case.min_price}")
    requested = {c.name: sum(row) for c, row in zip(case.app.components, plan.assign_matrix)}
    names = {deployment_name(c.name): c.name for c in case.app.components}
    missing = Counter(names[label] for label, _ in result.unschedulable)
    if dict(missing) != {k: v for k, v in exp.unschedulable.items() if v}:
        run.mismatches.append(f"unschedulable {dict(missing)}, expected {dict(exp.unschedulable)}")
    placed = Counter(names[label] for label, _ in result.bindings)
    for comp, n in exp.scheduled_counts(requested).items():
        if placed[comp] != n:
            run.mismatches.append(f"{comp}: {placed[comp]} scheduled, expected {n}")
    if exp.tables and actual_table(result, cluster, case.app) not in exp.tables:
        run.mismatches.append("placement differs from the reference table")
    for comp in exp.co_located:
        label = deployment_name(comp)
        nodes = {idx for (l, _), idx in result.bindings.items() if l == label}
        if len(nodes) != 1:
            run.mismatches.append(f"{comp} replicas spread over nodes {sorted(nodes)}")
    return run


@dataclass(frozen=True)
class BenchSummary:
    text: str
    ok: bool
    runs: tuple[CaseRun, ...] = ()


def compare_all(names: Optional[Sequence[str]] = None, directory: Optional[Path] = None) -> BenchSummary:
    """Run every (case, policy) pair and render a pass/fail grid plus each placement table."""
    names = list(names) if names else list(CASE_NAMES)
    for n in names:
        if n not in CASE_NAMES:
            raise UnknownCase(f"unknown case {n!r}")
    width = max(len(n) for n in names)
    grid = [f"{'case'.ljust(width)}  price  " + "  ".join(p.ljust(6) for p in POLICIES)]
    details: list[str] = []
    runs: list[CaseRun] = []
    ok = True
    for name in names:
        try:
            case = load_case(name, directory)
            plan = plan_case(case)
        except MissingFixture as exc:
            ok = False
            grid.append(f"{name.ljust(width)}  missing case ({exc})")
            continue
        cells = []
        for policy in POLICIES:
            run = run_case(case, policy, plan=plan)
            runs.append(run)
            ok &= run.passed
            cells.append(("pass" if run.passed else "FAIL").ljust(6))
            details.append(f"[{name} / {policy}]")
            details.append(run.table().rstrip("\n"))
            details.extend(f"  mismatch: {m}" for m in run.mismatches)
        grid.append(f"{name.ljust(width)}  {str(plan.min_price).rjust(5)}  " + "  ".join(cells))
    text = "\n".join(grid) + "\n\n" + "\n\n".join(_blocks(details)) + "\n"
    return BenchSummary(text, ok, tuple(runs))


def _blocks(lines: list[str]) -> list[str]:
    blocks: list[list[str]] = []
    for line in lines:
        if line.startswith("["):
            blocks.append([line])
        else:
            blocks[-1].append(line)
    return ["\n".join(b) for b in blocks]
