import json

import pytest
from hypothesis import given, strategies as st

from helpers import fixture_text
from kubeplan.model import (
    ApplicationDescription,
    Bound,
    Component,
    Conflict,
    DeploymentPlan,
    ModelError,
    Offer,
    OfferCatalog,
    parse_application,
    parse_offers,
    parse_plan,
    write_application,
    write_offers,
    write_plan,
)


def _doc(components, restrictions=()):
    return json.dumps(
        {
            "application": "App",
            "components": [
                {"id": i, "name": f"C{i}", "Compute": {"CPU": 100, "Memory": 64}, "Storage": {"StorageSize": 0}}
                for i in components
            ],
            "restrictions": list(restrictions),
        }
    )


def test_parse_reference_application():
    app = parse_application(fixture_text("secure-web.json"))
    assert app.application == "SecureWebContainer"
    balancer = app.component(1)
    assert (balancer.name, balancer.cpu, balancer.memory) == ("Balancer", 1000, 2048)
    assert Conflict(1, (2, 3, 4, 5)) in app.restrictions


def test_single_component_without_restrictions():
    app = parse_application(_doc([1]))
    assert len(app.components) == 1 and app.restrictions == ()


def test_unknown_component_in_restriction():
    doc = _doc([1, 2, 3, 4, 5], [{"type": "Conflicts", "alphaCompId": 1, "compsIdList": [99]}])
    with pytest.raises(ModelError, match="unknown component id"):
        parse_application(doc)


@pytest.mark.parametrize(
    "document, message",
    [
        ("{not json", "malformed"),
        ("[]", "top level"),
        (json.dumps({"application": "A", "components": []}), "at least one component"),
        (_doc([1, 1]), "duplicate component ids"),
        (_doc([1], [{"type": "Teleport"}]), "unknown restriction type"),
        (_doc([1], [{"type": "Bound", "compsIdList": [1], "relation": "~", "bound": 1}]), "relation"),
    ],
)
def test_bad_application_documents(document, message):
    with pytest.raises(ModelError, match=message):
        parse_application(document)


def test_parse_offer_entry():
    (offer,) = parse_offers(
        json.dumps([{"s-2vcpu-4gb": {"cpu": 1800, "memory": 3150, "storage": 69000, "price": 240, "id": 7}}])
    )
    assert offer == Offer(7, "s-2vcpu-4gb", 1800, 3150, 69000, 240)


def test_empty_catalog():
    with pytest.raises(ModelError, match="catalog must be non-empty"):
        parse_offers("[]")


def test_duplicate_offer_id():
    entry = {"cpu": 1, "memory": 1, "storage": 1, "price": 1, "id": 7}
    with pytest.raises(ModelError, match="duplicate offer id"):
        parse_offers(json.dumps([{"a": entry}, {"b": entry}]))


def test_parse_reference_plan(web_plan):
    app, plan = web_plan
    assert plan.min_price == 3360
    assert plan.types_of_vms == (7, 24, 10, 10, 10)
    assert len(plan.assign_matrix) == 5 and all(len(r) == 5 for r in plan.assign_matrix)
    assert plan.assign_matrix[0] == (1, 0, 0, 0, 0)


def _mutated_plan(mutate):
    data = json.loads(fixture_text("secure-web-plan.json"))
    mutate(data["output"])
    return json.dumps(data)


def test_matrix_entry_must_be_binary():
    doc = _mutated_plan(lambda out: out["assign_matr"][0].__setitem__(0, 2))
    with pytest.raises(ModelError, match="not 0 or 1"):
        parse_plan(doc)


def test_matrix_row_count_must_match():
    doc = _mutated_plan(lambda out: out["assign_matr"].pop())
    with pytest.raises(ModelError, match="dimension mismatch"):
        parse_plan(doc)


def test_overcommitted_node_rejected():
    doc = _mutated_plan(lambda out: out["VMs_specs"][1]["m-4vcpu-32gb"].__setitem__("memory", 100))
    with pytest.raises(ModelError, match="overcommitted"):
        parse_plan(doc)


def test_write_plan_keeps_price(web_plan):
    app, plan = web_plan
    assert json.loads(write_plan(app, plan))["output"]["min_price"] == 3360


def test_write_plan_rejects_wrong_price(web_plan):
    app, plan = web_plan
    bad = DeploymentPlan(3000, plan.types_of_vms, plan.vms_specs, plan.assign_matrix)
    with pytest.raises(ModelError, match="min_price"):
        write_plan(app, bad)


def test_reference_plan_round_trip_is_byte_stable(web_plan):
    app, plan = web_plan
    text = write_plan(app, plan)
    assert text == fixture_text("secure-web-plan.json")
    assert parse_plan(text) == (app, plan)


@pytest.mark.parametrize("name", ["secure-web.json", "oryx2.json", "boreas-test-d.json", "secure-billing.json"])
def test_application_fixture_round_trip(name):
    app = parse_application(fixture_text(name))
    assert parse_application(write_application(app)) == app


@pytest.mark.parametrize("name", ["catalog-do.json", "catalog-batch.json", "catalog-node.json"])
def test_catalog_fixture_round_trip(name):
    cat = parse_offers(fixture_text(name))
    assert write_offers(cat) == fixture_text(name)


def test_bound_multi_component_sum():
    b = Bound((2, 3), ">=", 3)
    assert b.holds(3) and not b.holds(2)


def test_negative_resources_rejected():
    with pytest.raises(ModelError):
        Component(1, "x", -1, 0)
    with pytest.raises(ModelError):
        Offer(1, "x", 1, 1, 1, -5)


# round-trip law over generated plans

offers_st = st.lists(
    st.tuples(st.integers(500, 4000), st.integers(0, 8192), st.integers(1, 500)), min_size=1, max_size=4
).map(lambda specs: [Offer(i + 1, f"t{i + 1}", cpu, mem, 1000, price) for i, (cpu, mem, price) in enumerate(specs)])


@st.composite
def plans(draw):
    offers = draw(offers_st)
    n = draw(st.integers(1, 4))
    comps = tuple(Component(i + 1, f"Comp {i + 1}", 0, 0) for i in range(n))
    cols = draw(st.lists(st.sampled_from(offers), min_size=1, max_size=4))
    matrix = [[draw(st.integers(0, 1)) for _ in cols] for _ in comps]
    for col in range(len(cols)):  # no empty node
        if not any(row[col] for row in matrix):
            matrix[draw(st.integers(0, n - 1))][col] = 1
    app = ApplicationDescription("Gen", comps, (Bound((1,), ">=", 0),))
    return app, DeploymentPlan.from_columns(cols, matrix)


@given(plans())
def test_plan_round_trip(pair):
    app, plan = pair
    assert parse_plan(write_plan(app, plan)) == (app, plan)


@given(offers_st)
def test_catalog_round_trip(offers):
    cat = OfferCatalog(tuple(offers))
    assert parse_offers(write_offers(cat)) == cat
