"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line."""

import random
import time
from collections import Counter

from helpers import GOLDEN, FIXTURES, random_instance, record
from kubeplan.bench import load_case, run_case, simulate
from kubeplan.model import parse_plan, write_plan
from kubeplan.optimizer import Status, brute_force_solve, check_plan, solve
from kubeplan.predeployer import ManifestFlavor, render_manifest, strip_node_affinity, translate
from kubeplan.scheduler import K8sSimParams, build_cluster, placement_matrix, pods_from_manifests, schedule_sage

REFERENCE_MATRIX = ((1, 0, 0, 0, 0), (0, 0, 1, 0, 0), (0, 0, 0, 1, 1), (0, 1, 0, 0, 0), (0, 0, 1, 1, 1))


def columns(types, matrix):
    return Counter((t, tuple(row[k] for row in matrix)) for k, t in enumerate(types))


def check(number, title, failures, detail=""):
    record(number, title, not failures, "; ".join(failures) or detail)
    assert not failures, failures


def test_criterion_1_reference_plan():
    case = load_case("secure-web", FIXTURES)
    start = time.perf_counter()
    report = solve(case.app, case.catalog, 6)
    elapsed = time.perf_counter() - start
    failures = []
    plan = report.plan
    if report.status is not Status.OPTIMAL:
        failures.append(f"status {report.status.value}")
    else:
        if plan.min_price != 3360:
            failures.append(f"price {plan.min_price}")
        if Counter(plan.types_of_vms) != Counter([7, 24, 10, 10, 10]):
            failures.append(f"types {plan.types_of_vms}")
        if columns(plan.types_of_vms, plan.assign_matrix) != columns((7, 24, 10, 10, 10), REFERENCE_MATRIX):
            failures.append("matrix differs beyond same-type column permutation")
    if elapsed >= 10:
        failures.append(f"took {elapsed:.1f}s")
    check(1, "reference plan: 3360, {7,24,10,10,10}, reference matrix", failures, f"{elapsed:.2f}s")


def test_criterion_2_golden_manifests():
    app, plan = parse_plan((FIXTURES / "secure-web-plan.json").read_text())
    failures = []
    for flavor in ManifestFlavor:
        text = render_manifest(translate(app, plan, flavor).get("balancer"))
        if text != (GOLDEN / f"balancer-{flavor.value}.yaml").read_text():
            failures.append(f"{flavor.value} differs from golden file")
    boreas = render_manifest(translate(app, plan, "boreas").get("balancer"))
    k8s = render_manifest(translate(app, plan, "k8s").get("balancer"))
    if "cpu: 980m" not in boreas or "schedulerName: boreas-scheduler" not in boreas:
        failures.append("boreas cpu/scheduler missing")
    if "nodeAffinity" in k8s:
        failures.append("k8s flavor carries nodeAffinity")
    check(2, "Balancer manifests byte-match golden files", failures)


def _expect(run, unscheduled, scheduled_total):
    got = Counter(label for label, _ in run.result.unschedulable)
    out = [] if dict(got) == unscheduled else [f"{run.policy}: unschedulable {dict(got)}"]
    if len(run.result.bindings) != scheduled_total:
        out.append(f"{run.policy}: {len(run.result.bindings)} scheduled, expected {scheduled_total}")
    return out + [f"{run.policy}: {m}" for m in run.mismatches]


def test_criterion_3_secure_web():
    failures = _expect(run_case("secure-web", "k8s"), {"idsserver": 1}, 7)
    failures += _expect(run_case("secure-web", "sage"), {}, 8)  # cell match is one of the run's checks
    failures += _expect(run_case("secure-web", "boreas"), {}, 8)
    check(3, "Secure Web: K8s drops IDSServer, Sage cell-exact, Boreas all 8", failures)


def test_criterion_4_oryx2():
    sage = run_case("oryx2", "sage")
    total = sum(map(sum, sage.plan.assign_matrix))
    failures = _expect(sage, {}, total)
    failures += _expect(run_case("oryx2", "k8s"), {}, total)
    boreas = run_case("oryx2", "boreas")
    failures += _expect(boreas, {"yarn-nodemanager": 1}, total - 1)
    zk = {i for (label, _), i in boreas.result.bindings.items() if label == "zookeeper"}
    if len(zk) != 1:
        failures.append(f"boreas: Zookeeper on nodes {sorted(zk)}")
    check(4, "Oryx2: Sage cell-exact, K8s all, Boreas ZK together and one NodeManager out", failures, f"{total} replicas")


def test_criterion_5_batch():
    failures = []
    for policy, params in (("k8s", K8sSimParams()), ("k8s", K8sSimParams(100)), ("boreas", K8sSimParams())):
        run = run_case("batch", policy, params)
        failures += [f"{policy}@{params.percentage_of_nodes_to_score}: {m}" for m in run.mismatches]
        if [label for label, _ in run.result.unschedulable] != ["p3"]:
            failures.append(f"{policy}@{params.percentage_of_nodes_to_score}: P3 was scheduled")
    sage = run_case("batch", "sage")
    b = sage.result.bindings
    if not sage.result.all_scheduled or b[("p1", 0)] != b[("p2", 0)]:
        failures.append("sage: 500m pods not co-resident or something unschedulable")
    check(5, "Batch: K8s (50% and 100%) and Boreas drop the 1000m pod, Sage packs", failures)


def test_criterion_6_node():
    failures = []
    sage = run_case("node", "sage")
    where = {uid[0]: sage.cluster[i].type_name for uid, i in sage.result.bindings.items()}
    if where != {"p1": "s-2vcpu-2gb", "p2": "s-2vcpu-2gb", "p3": "s-4vcpu-8gb"}:
        failures.append(f"sage placement {where}")
    for policy in ("k8s", "boreas"):
        run = run_case("node", policy)
        failures += [f"{policy}: {m}" for m in run.mismatches]
        if [label for label, _ in run.result.unschedulable] != ["p3"]:
            failures.append(f"{policy}: 2900m pod scheduled")
    k8s = run_case("node", "k8s", K8sSimParams(50))
    big = [n.index for n in k8s.cluster if n.type_name == "s-4vcpu-8gb"]
    if {k8s.result.bindings.get(("p1", 0)), k8s.result.bindings.get(("p2", 0))} != set(big):
        failures.append("k8s: 500m pods not both on the 4vcpu node")
    check(6, "Node test: Sage fits all, K8s/Boreas drop the 2900m pod, K8s cells", failures)


def test_criterion_7_test_d():
    case = load_case("boreas-test-d", FIXTURES)
    failures = []
    for policy in ("sage", "k8s", "boreas"):
        run = run_case(case, policy)  # simulate() raises on any broken constraint
        if len(run.result.bindings) != 14 or not run.result.all_scheduled:
            failures.append(f"{policy}: {len(run.result.bindings)} of 14 scheduled")
        failures += [f"{policy}: {m}" for m in run.mismatches]
    if check_plan(case.app, run.plan):
        failures.append("plan violates the application constraints")
    check(7, "Test D: all 14 replicas under every policy, constraints honored", failures)


def test_criterion_8_oracle_equivalence():
    rng = random.Random(20240801)
    failures, kinds, feasible = [], Counter(), 0
    start = time.perf_counter()
    for i in range(200):
        app, catalog = random_instance(rng, max_components=5, max_offers=3)
        kinds.update(type(r).__name__ for r in app.restrictions)
        a, b = solve(app, catalog, 4), brute_force_solve(app, catalog, 4)
        fa, fb = a.status is Status.OPTIMAL, b.status is Status.OPTIMAL
        feasible += fa
        if fa != fb or a.price != b.price:
            failures.append(f"instance {i}: solve {a.status.value}/{a.price} vs oracle {b.status.value}/{b.price}")
    elapsed = time.perf_counter() - start
    if elapsed >= 60:
        failures.append(f"took {elapsed:.1f}s")
    if len(kinds) < 6:
        failures.append(f"only restriction kinds {sorted(kinds)}")
    check(8, "solver equals brute force on 200 random instances", failures, f"{feasible} feasible, {elapsed:.1f}s")


def _laws(app, plan):
    """Every law that must hold for a solved plan; returns the broken ones."""
    broken = []
    if check_plan(app, plan):
        broken.append("validator")
    sage = translate(app, plan, "sage")
    result = schedule_sage(pods_from_manifests(sage), build_cluster(plan))
    if placement_matrix(result, app, plan.num_nodes) != [list(r) for r in plan.assign_matrix]:
        broken.append("sage round trip")
    k8s = translate(app, plan, "k8s")
    if tuple(strip_node_affinity(m) for m in sage) != k8s.manifests:
        broken.append("flavor law")
    share = 100 // len(k8s)
    try:
        boreas = translate(app, plan, "boreas")
    except ValueError:
        # the adjusted request would be <= 0, which the adjustment rejects by definition
        if all(m.cpu_request > share for m in k8s):
            broken.append("boreas refused a valid request")
    else:
        if [b.cpu_request for b in boreas] != [m.cpu_request - share for m in k8s]:
            broken.append("boreas cpu law")
    return broken


def _render_all(app, plan):
    parts = [write_plan(app, plan)]
    for flavor in ManifestFlavor:
        try:
            parts += [render_manifest(m) for m in translate(app, plan, flavor)]
        except ValueError:
            parts.append(f"{flavor.value}: refused")
    for policy in ("sage", "k8s"):
        parts += list(simulate(app, plan, policy)[1].trace)
    return "\n".join(parts)


def test_criterion_9_property_suite():
    instances = []
    for name in ("secure-billing", "secure-web", "oryx2", "boreas-test-d", "batch", "node"):
        case = load_case(name, FIXTURES)
        instances.append((name, case.app, case.catalog, None))
    rng = random.Random(9)
    for i in range(500):
        app, catalog = random_instance(rng)
        instances.append((f"random-{i}", app, catalog, 4))
    failures, solved = [], 0
    for name, app, catalog, max_nodes in instances:
        first, second = solve(app, catalog, max_nodes).plan, solve(app, catalog, max_nodes).plan
        if first is None:
            if second is not None:
                failures.append(f"{name}: determinism")
            continue
        solved += 1
        broken = _laws(app, first)
        if second is None or _render_all(app, first) != _render_all(app, second):
            broken.append("determinism")
        failures += [f"{name}: {b}" for b in broken]
    check(9, "validator, Sage round trip, flavor and Boreas laws, determinism", failures[:5],
          f"{solved} of {len(instances)} instances solvable")
