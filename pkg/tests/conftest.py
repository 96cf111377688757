import os

import pytest
from hypothesis import settings

from helpers import FIXTURES, fixture_text
from kubeplan.bench import load_case
from kubeplan.model import parse_offers, parse_plan

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def web_plan():
    """The reference Secure Web plan document as (app, plan)."""
    return parse_plan(fixture_text("secure-web-plan.json"))


@pytest.fixture(scope="session")
def do_catalog():
    return parse_offers(fixture_text("catalog-do.json"))


@pytest.fixture(scope="session")
def cases():
    return {}


@pytest.fixture
def case(cases):
    def get(name):
        if name not in cases:
            cases[name] = load_case(name, FIXTURES)
        return cases[name]

    return get


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
