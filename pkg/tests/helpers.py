"""Shared builders for tests: fixture paths and a seeded random-instance generator."""

from __future__ import annotations

import random
from pathlib import Path

from kubeplan.model import (
    ApplicationDescription,
    Bound,
    Colocation,
    Component,
    Conflict,
    ExclusiveDeployment,
    FullDeployment,
    Offer,
    OfferCatalog,
    RequireProvide,
)

TESTS = Path(__file__).parent
GOLDEN = TESTS / "golden"
FIXTURES = TESTS.parent / "src" / "kubeplan" / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def random_restriction(rng: random.Random, ids: list[int]):
    kind = rng.choice(["conflict", "conflict", "colocation", "exclusive", "require", "full", "bound", "bound"])
    if kind == "conflict":
        alpha = rng.choice(ids)
        others = rng.sample(ids, rng.randint(1, len(ids)))
        return Conflict(alpha, tuple(others))
    if kind == "colocation" and len(ids) >= 2:
        return Colocation(tuple(rng.sample(ids, 2)))
    if kind == "exclusive" and len(ids) >= 2:
        return ExclusiveDeployment(tuple(rng.sample(ids, 2)))
    if kind == "require" and len(ids) >= 2:
        a, b = rng.sample(ids, 2)
        return RequireProvide(a, b, rng.randint(1, 2), rng.randint(1, 2))
    if kind == "full":
        return FullDeployment(rng.choice(ids))
    comps = tuple(rng.sample(ids, rng.randint(1, min(2, len(ids)))))
    return Bound(comps, rng.choice(["=", "<=", ">="]), rng.randint(0, 3))


def random_instance(
    rng: random.Random, max_components: int = 5, max_offers: int = 3, max_restrictions: int = 3
) -> tuple[ApplicationDescription, OfferCatalog]:
    n = rng.randint(1, max_components)
    comps = tuple(
        Component(i + 1, f"C{i + 1}", rng.choice([100, 300, 500, 800, 1200]), rng.choice([0, 256, 512, 1024]))
        for i in range(n)
    )
    ids = [c.id for c in comps]
    restrictions = tuple(random_restriction(rng, ids) for _ in range(rng.randint(0, max_restrictions)))
    offers = []
    for j in range(rng.randint(1, max_offers)):
        cpu = rng.choice([1000, 1400, 2000, 3000])
        mem = rng.choice([1024, 2048, 4096])
        offers.append(Offer(j + 1, f"t{j + 1}", cpu, mem, 10_000, rng.choice([10, 15, 20, 30, 45])))
    return ApplicationDescription("random", comps, restrictions), OfferCatalog(tuple(offers))


def solved_instance(seed: int, max_nodes: int = 3):
    """(app, plan) for a random instance, or None when it has no plan."""
    from kubeplan.optimizer import solve

    app, catalog = random_instance(random.Random(seed))
    plan = solve(app, catalog, max_nodes).plan
    return None if plan is None else (app, plan)


# acceptance results, printed in the terminal summary by conftest
ACCEPTANCE: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
