"""Cost-minimal placement of component instances onto leased typed nodes.

The search is exact. Type vectors (multisets of offers, one entry per leased
node) are visited in order of total price; for each one a depth-first search
over the 0/1 assignment rows decides feasibility. The first feasible vector is
therefore optimal, and because rows are tried in lexicographic order the
matrix returned is the lexicographically smallest optimum for that vector.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .model import (
    ApplicationDescription,
    Bound,
    Colocation,
    Conflict,
    DeploymentPlan,
    ExclusiveDeployment,
    FullDeployment,
    ModelError,
    Offer,
    OfferCatalog,
    RequireProvide,
    plan_structure_errors,
)

MAX_DEFAULT_NODES = 12


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    HORIZON_EXHAUSTED = "HorizonExhausted"


@dataclass
class SolveReport:
    status: Status
    plan: Optional[DeploymentPlan]
    nodes_explored: int
    elapsed: float

    @property
    def price(self) -> Optional[int]:
        return None if self.plan is None else self.plan.min_price


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


def instance_counts(app: ApplicationDescription, matrix) -> dict[int, int]:
    """Row sums of an assignment matrix (or of ``plan.assign_matrix``), keyed by component id."""
    rows = matrix.assign_matrix if isinstance(matrix, DeploymentPlan) else matrix
    if len(rows) != len(app.components):
        raise ModelError(f"dimension mismatch: {len(app.components)} components but {len(rows)} rows")
    return {c.id: int(sum(row)) for c, row in zip(app.components, rows)}


def os_compatible(component_os: str, offer_os: str) -> bool:
    """Strict matching: a tagged component needs an offer with the same tag."""
    return not component_os or component_os == offer_os


def check_plan(app: ApplicationDescription, plan: DeploymentPlan, strict_os: bool = False) -> list[Violation]:
    """Every violated constraint of ``plan``; an empty list means feasible.

    With ``strict_os`` a component's operating system tag must equal the tag
    of every node it runs on.
    """
    structural = plan_structure_errors(app, plan)
    if any(e.startswith("dimension mismatch") for e in structural):
        raise ModelError(structural[0])
    out = [Violation("Structure", e) for e in structural]
    k = plan.num_nodes
    on = {c.id: [bool(x) for x in row] for c, row in zip(app.components, plan.assign_matrix)}
    counts = instance_counts(app, plan)

    for r in app.restrictions:
        if isinstance(r, Conflict):
            for other in r.others:
                if other == r.alpha:
                    continue  # self anti-affinity: one instance per node is structural
                shared = [col for col in range(k) if on[r.alpha][col] and on[other][col]]
                if shared:
                    out.append(Violation("Conflict", f"{r.alpha} and {other} share node(s) {shared}"))
        elif isinstance(r, Colocation):
            supports = {cid: tuple(on[cid]) for cid in r.comps}
            if len(set(supports.values())) > 1:
                out.append(Violation("Colocation", f"components {list(r.comps)} do not share the same nodes"))
        elif isinstance(r, ExclusiveDeployment):
            deployed = [cid for cid in r.comps if counts[cid] >= 1]
            if len(deployed) != 1:
                out.append(Violation("ExclusiveDeployment", f"{len(deployed)} of {list(r.comps)} deployed"))
        elif isinstance(r, RequireProvide):
            if r.n * counts[r.consumer] > r.m * counts[r.provider]:
                out.append(
                    Violation(
                        "RequireProvide",
                        f"{r.n}*count({r.consumer})={r.n * counts[r.consumer]} > "
                        f"{r.m}*count({r.provider})={r.m * counts[r.provider]}",
                    )
                )
        elif isinstance(r, FullDeployment):
            partners = app.conflict_partners(r.comp)
            for col in range(k):
                if not on[r.comp][col] and not any(on[p][col] for p in partners):
                    out.append(Violation("FullDeployment", f"{r.comp} missing on node {col}"))
        elif isinstance(r, Bound):
            total = sum(counts[cid] for cid in r.comps)
            if not r.holds(total):
                out.append(Violation("Bound", f"count{list(r.comps)}={total} not {r.relation} {r.bound}"))

    exclusive = {cid for r in app.restrictions_of(ExclusiveDeployment) for cid in r.comps}
    for c in app.components:
        if c.id not in exclusive and counts[c.id] < 1:
            out.append(Violation("Deployment", f"component {c.id} is not deployed"))
    if strict_os:
        for c in app.components:
            for col in range(k):
                if on[c.id][col] and not os_compatible(c.operating_system, plan.vms_specs[col].operating_system):
                    out.append(Violation("OperatingSystem", f"component {c.id} needs {c.operating_system!r} on node {col}"))
    return out


# ---------------------------------------------------------------------------
# instance-count bounds


def count_bounds(app: ApplicationDescription, max_nodes: int) -> tuple[list[int], list[int]]:
    """Per-component (lower, upper) instance counts implied by the restrictions.

    Every component outside an exclusive-deployment group must run at least once.
    The upper bound never exceeds ``max_nodes`` since instances sit on distinct nodes.
    """
    idx = {c.id: i for i, c in enumerate(app.components)}
    n = len(app.components)
    exclusive = {cid for r in app.restrictions_of(ExclusiveDeployment) for cid in r.comps}
    lo = [0 if c.id in exclusive else 1 for c in app.components]
    hi = [max_nodes] * n
    for r in app.restrictions_of(Bound):
        if len(r.comps) != 1:
            if r.relation in ("=", "<="):
                for cid in r.comps:
                    hi[idx[cid]] = min(hi[idx[cid]], r.bound)
            continue
        i = idx[r.comps[0]]
        if r.relation in ("=", ">="):
            lo[i] = max(lo[i], r.bound)
        if r.relation in ("=", "<="):
            hi[i] = min(hi[i], r.bound)
    groups = [[idx[c] for c in r.comps] for r in app.restrictions_of(Colocation)]
    rps = app.restrictions_of(RequireProvide)
    for _ in range(4 * n + 4):
        changed = False
        for rp in rps:
            c, p = idx[rp.consumer], idx[rp.provider]
            need = math.ceil(rp.n * lo[c] / rp.m)
            if need > lo[p]:
                lo[p], changed = need, True
            cap = (rp.m * hi[p]) // rp.n
            if cap < hi[c]:
                hi[c], changed = cap, True
        for g in groups:
            glo, ghi = max(lo[i] for i in g), min(hi[i] for i in g)
            for i in g:
                if lo[i] != glo or hi[i] != ghi:
                    lo[i], hi[i], changed = glo, ghi, True
        if not changed:
            break
    return lo, hi


def default_max_nodes(app: ApplicationDescription) -> int:
    """Search horizon when the caller gives none.

    Sum of each component's explicit upper bound, or otherwise its lower bound,
    plus one node per component; capped at 12.
    """
    lo, _ = count_bounds(app, MAX_DEFAULT_NODES)
    upper: dict[int, int] = {}
    for r in app.restrictions_of(Bound):
        if len(r.comps) == 1 and r.relation in ("=", "<="):
            upper[r.comps[0]] = min(upper.get(r.comps[0], r.bound), r.bound)
    total = sum(upper.get(c.id, lo[i]) for i, c in enumerate(app.components)) + len(app.components)
    return max(1, min(MAX_DEFAULT_NODES, total))


def offer_order(catalog: OfferCatalog) -> list[Offer]:
    """Canonical column order: most expensive offers first, then by id."""
    return sorted(catalog.offers, key=lambda o: (-o.price, o.id))


# ---------------------------------------------------------------------------
# exact search


def _fits(demand: Sequence[int], capacity: Sequence[int]) -> bool:
    return all(d <= c for d, c in zip(demand, capacity))


class _Search:
    """Row-wise feasibility search for one fixed type vector."""

    def __init__(self, app: ApplicationDescription, lo: list[int], hi: list[int], strict_os: bool = False):
        self.app = app
        self.strict_os = strict_os
        self.n = len(app.components)
        self.lo, self.hi = lo, hi
        idx = {c.id: i for i, c in enumerate(app.components)}
        self.demand = [c.demand for c in app.components]
        n = self.n
        self.conflicts: list[list[int]] = [[] for _ in range(n)]
        for r in app.restrictions_of(Conflict):
            a = idx[r.alpha]
            for o in r.others:
                b = idx[o]
                if a != b:
                    self.conflicts[max(a, b)].append(min(a, b))
        self.all_partners = [sorted({idx[p] for p in app.conflict_partners(c.id)}) for c in app.components]
        # overlapping co-location groups merge; each group follows its earliest row
        parent = list(range(n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for r in app.restrictions_of(Colocation):
            first = idx[r.comps[0]]
            for c in r.comps[1:]:
                parent[find(idx[c])] = find(first)
        members: dict[int, list[int]] = {}
        for i in range(n):
            members.setdefault(find(i), []).append(i)
        self.groups = {min(g): g for g in members.values() if len(g) > 1}
        self.anchor = list(range(n))
        for a, g in self.groups.items():
            for m in g:
                self.anchor[m] = a
        # full deployment without conflict partners means every column
        self.everywhere = {
            idx[r.comp] for r in app.restrictions_of(FullDeployment) if not self.all_partners[idx[r.comp]]
        }
        # constraints over instance counts or whole rows fire once their last row is placed
        self.triggers: list[list[tuple]] = [[] for _ in range(n)]
        for r in app.restrictions_of(ExclusiveDeployment):
            rows = [idx[c] for c in r.comps]
            self.triggers[max(rows)].append(("excl", rows))
        for r in app.restrictions_of(RequireProvide):
            c, p = idx[r.consumer], idx[r.provider]
            self.triggers[max(c, p)].append(("rp", c, p, r.n, r.m))
        for r in app.restrictions_of(Bound):
            rows = [idx[c] for c in r.comps]
            self.triggers[max(rows)].append(("bound", rows, r))
        for r in app.restrictions_of(FullDeployment):
            f = idx[r.comp]
            rows = [f, *self.all_partners[f]]
            self.triggers[max(rows)].append(("full", f, self.all_partners[f]))
        self.explored = 0

    def run(self, specs: Sequence[Offer], ranks: Sequence[int]) -> Optional[list[int]]:
        k = len(specs)
        self.k = k
        self.full = (1 << k) - 1
        self.bit = [1 << (k - 1 - col) for col in range(k)]
        self.caps = [list(o.capacity) for o in specs]
        self.same_type_pairs = [col for col in range(k - 1) if ranks[col] == ranks[col + 1]]
        self.fit_mask = []
        for c, d in zip(self.app.components, self.demand):
            m = 0
            for col in range(k):
                if _fits(d, self.caps[col]) and (
                    not self.strict_os or os_compatible(c.operating_system, specs[col].operating_system)
                ):
                    m |= self.bit[col]
            self.fit_mask.append(m)
        for i in range(self.n):
            if bin(self.fit_mask[i]).count("1") < self.lo[i]:
                return None
        self.patterns = []
        for i in range(self.n):
            top = min(self.hi[i], k)
            pats = [
                m for m in range(self.full + 1)
                if self.lo[i] <= bin(m).count("1") <= top and m & ~self.fit_mask[i] == 0
            ]
            if not pats:
                return None
            self.patterns.append(pats)
        for i in self.everywhere:
            self.patterns[i] = [m for m in self.patterns[i] if m == self.full]
        self.pattern_sets = [set(p) for p in self.patterns]
        for a, g in self.groups.items():
            need = [sum(self.demand[m][d] for m in g) for d in range(3)]
            fit = 0
            for col in range(k):
                if _fits(need, self.caps[col]):
                    fit |= self.bit[col]
            self.patterns[a] = [
                m for m in self.patterns[a] if m & ~fit == 0 and all(m in self.pattern_sets[x] for x in g)
            ]
            self.pattern_sets[a] = set(self.patterns[a])
        if not all(self.patterns):
            return None
        self.masks = [0] * self.n
        self.used = [[0, 0, 0] for _ in range(k)]
        tied = frozenset(self.same_type_pairs)
        return self._row(0, tied)

    def _row(self, i: int, tied: frozenset) -> Optional[list[int]]:
        if i == self.n:
            union = 0
            for m in self.masks:
                union |= m
            return list(self.masks) if union == self.full else None
        demand = self.demand[i]
        forced = self.masks[self.anchor[i]] if self.anchor[i] != i else None
        candidates = self.patterns[i] if forced is None else (
            [forced] if forced in self.pattern_sets[i] else []
        )
        for mask in candidates:
            self.explored += 1
            if any(mask & self.masks[j] for j in self.conflicts[i]):
                continue
            if any(mask & self.bit[c] and not mask & self.bit[c + 1] for c in tied):
                continue
            cols = [col for col in range(self.k) if mask & self.bit[col]]
            if any(
                self.used[col][d] + demand[d] > self.caps[col][d] for col in cols for d in range(3)
            ):
                continue
            self.masks[i] = mask
            if not self._triggers_ok(i):
                continue
            for col in cols:
                for d in range(3):
                    self.used[col][d] += demand[d]
            if self._forward_ok(i):
                next_tied = frozenset(
                    c for c in tied if bool(mask & self.bit[c]) == bool(mask & self.bit[c + 1])
                )
                found = self._row(i + 1, next_tied)
                if found is not None:
                    return found
            for col in cols:
                for d in range(3):
                    self.used[col][d] -= demand[d]
        self.masks[i] = 0
        return None

    def _count(self, row: int) -> int:
        return bin(self.masks[row]).count("1")

    def _triggers_ok(self, i: int) -> bool:
        for t in self.triggers[i]:
            kind = t[0]
            if kind == "excl":
                if sum(1 for r in t[1] if self.masks[r]) != 1:
                    return False
            elif kind == "rp":
                _, c, p, n, m = t
                if n * self._count(c) > m * self._count(p):
                    return False
            elif kind == "bound":
                if not t[2].holds(sum(self._count(r) for r in t[1])):
                    return False
            elif kind == "full":
                _, f, partners = t
                covered = self.masks[f]
                for p in partners:
                    covered |= self.masks[p]
                if covered != self.full:
                    return False
        return True

    def _forward_ok(self, i: int) -> bool:
        """Each later row must still find enough columns with room for one instance."""
        for r in range(i + 1, self.n):
            need = self.lo[r]
            if need == 0:
                continue
            blocked = 0
            for j in self.conflicts[r]:
                blocked |= self.masks[j]
            d = self.demand[r]
            room = 0
            for col in range(self.k):
                if self.fit_mask[r] & self.bit[col] and not blocked & self.bit[col]:
                    u, cap = self.used[col], self.caps[col]
                    if u[0] + d[0] <= cap[0] and u[1] + d[1] <= cap[1] and u[2] + d[2] <= cap[2]:
                        room += 1
            if room < need:
                return False
        return True


def _node_lower_bound(lo: Sequence[int]) -> int:
    return max([1, *lo])


def _type_vectors(order: Sequence[Offer], max_nodes: int):
    for k in range(1, max_nodes + 1):
        for ranks in itertools.combinations_with_replacement(range(len(order)), k):
            yield ranks


def solve(
    app: ApplicationDescription,
    catalog: OfferCatalog,
    max_nodes: Optional[int] = None,
    strict_os: bool = False,
) -> SolveReport:
    """Exact cost-minimal plan with at most ``max_nodes`` leased nodes.

    Equal-price optima are broken by the smallest (type rank vector, row-major
    matrix) in canonical column order, so results are deterministic and do not
    depend on the order of offers in ``catalog``.
    """
    start = time.perf_counter()
    if max_nodes is None:
        max_nodes = default_max_nodes(app)
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    order = offer_order(catalog)
    lo, hi = count_bounds(app, max_nodes)
    search = _Search(app, lo, hi, strict_os)

    def report(status: Status, plan: Optional[DeploymentPlan] = None) -> SolveReport:
        return SolveReport(status, plan, search.explored, time.perf_counter() - start)

    biggest = [max(o.capacity[d] for o in order) for d in range(3)]
    demand_lo = [sum(l * c.demand[d] for l, c in zip(lo, app.components)) for d in range(3)]
    if _node_lower_bound(lo) > max_nodes or any(demand_lo[d] > max_nodes * biggest[d] for d in range(3)):
        return report(Status.HORIZON_EXHAUSTED)
    if any(l > h for l, h in zip(lo, hi)):
        return report(Status.INFEASIBLE)

    useful = [any(_fits(c.demand, o.capacity) for c in app.components) for o in order]
    min_nodes = _node_lower_bound(lo)
    candidates = []
    for ranks in _type_vectors(order, max_nodes):
        if len(ranks) < min_nodes or not all(useful[r] for r in ranks):
            continue
        cap = [sum(order[r].capacity[d] for r in ranks) for d in range(3)]
        if any(demand_lo[d] > cap[d] for d in range(3)):
            continue
        candidates.append((sum(order[r].price for r in ranks), ranks))
    candidates.sort()

    for price, ranks in candidates:
        specs = [order[r] for r in ranks]
        masks = search.run(specs, ranks)
        if masks is None:
            continue
        k = len(specs)
        matrix = [[1 if m & (1 << (k - 1 - col)) else 0 for col in range(k)] for m in masks]
        return report(Status.OPTIMAL, DeploymentPlan.from_columns(specs, matrix))
    return report(Status.INFEASIBLE)


# ---------------------------------------------------------------------------
# brute-force oracle

ORACLE_MAX_COMPONENTS = 6
ORACLE_MAX_NODES = 5
ORACLE_MAX_OFFERS = 6


def brute_force_solve(
    app: ApplicationDescription, catalog: OfferCatalog, max_nodes: int, strict_os: bool = False
) -> SolveReport:
    """Exhaustive enumeration of every plan with up to ``max_nodes`` columns. Tests only.

    A plan is a multiset of (offer, hosted-component-set) columns, so all of
    them are listed without relying on the row search or the count bounds used
    by :func:`solve`. Each candidate that beats the incumbent is validated with
    :func:`check_plan`.
    """
    if (
        len(app.components) > ORACLE_MAX_COMPONENTS
        or max_nodes > ORACLE_MAX_NODES
        or len(catalog) > ORACLE_MAX_OFFERS
    ):
        raise ValueError(
            f"brute force limited to {ORACLE_MAX_COMPONENTS} components, "
            f"{ORACLE_MAX_NODES} nodes and {ORACLE_MAX_OFFERS} offers"
        )
    start = time.perf_counter()
    comps = app.components
    n = len(comps)
    column_local = {"Structure", "Conflict", "Colocation", "FullDeployment", "OperatingSystem"}
    columns = []
    for offer in catalog.offers:
        for size in range(1, n + 1):
            for subset in itertools.combinations(range(n), size):
                single = DeploymentPlan.from_columns([offer], [[1 if i in subset else 0] for i in range(n)])
                if any(v.kind in column_local for v in check_plan(app, single, strict_os)):
                    continue
                columns.append((offer.price, offer, frozenset(subset)))
    columns.sort(key=lambda c: c[0])
    exclusive = {cid for r in app.restrictions_of(ExclusiveDeployment) for cid in r.comps}
    must_run = {i for i, c in enumerate(comps) if c.id not in exclusive}

    pos = {c.id: i for i, c in enumerate(comps)}
    bounds = [([pos[c] for c in r.comps], r) for r in app.restrictions_of(Bound)]
    needs = [(pos[r.consumer], pos[r.provider], r.n, r.m) for r in app.restrictions_of(RequireProvide)]
    exclusives = [[pos[c] for c in r.comps] for r in app.restrictions_of(ExclusiveDeployment)]

    def counts_ok(chosen: list) -> bool:
        # cheap count-level screen; check_plan still has the final word
        cnt = [sum(1 for c in chosen if i in c[2]) for i in range(n)]
        if any(cnt[i] == 0 for i in must_run):
            return False
        if any(not r.holds(sum(cnt[i] for i in rows)) for rows, r in bounds):
            return False
        if any(nn * cnt[a] > mm * cnt[b] for a, b, nn, mm in needs):
            return False
        return all(sum(1 for i in rows if cnt[i]) == 1 for rows in exclusives)

    best: list = [None, None]  # price, plan
    explored = 0

    def visit(chosen: list) -> None:
        nonlocal explored
        explored += 1
        price = sum(c[0] for c in chosen)
        if best[0] is not None and price >= best[0]:
            return
        if not counts_ok(chosen):
            return
        specs = [c[1] for c in chosen]
        matrix = [[1 if i in c[2] else 0 for c in chosen] for i in range(n)]
        plan = DeploymentPlan.from_columns(specs, matrix)
        if not check_plan(app, plan, strict_os):
            best[0], best[1] = price, plan

    def extend(start_at: int, chosen: list) -> None:
        if chosen:
            visit(chosen)
        if len(chosen) == max_nodes:
            return
        price = sum(c[0] for c in chosen)
        for j in range(start_at, len(columns)):
            if best[0] is not None and price + columns[j][0] >= best[0]:
                break  # columns sorted by price
            chosen.append(columns[j])
            extend(j, chosen)
            chosen.pop()

    extend(0, [])
    status = Status.OPTIMAL if best[1] is not None else Status.INFEASIBLE
    return SolveReport(status, best[1], explored, time.perf_counter() - start)
