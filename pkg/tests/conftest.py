import os

import hypothesis
import numpy as np
import pytest

from churnboost import ingest
from churnboost.temporal import TimePeriod, to_days

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def january():
    return TimePeriod(to_days(2017, 1, 1), to_days(2017, 1, 31), to_days(2017, 1, 31))


@pytest.fixture
def february():
    return TimePeriod(to_days(2017, 2, 1), to_days(2017, 2, 28), to_days(2017, 2, 28))


@pytest.fixture
def worked_user():
    """Registered 2017-01-25, one listening day on 2017-01-30."""
    members = ingest.from_columns(
        "members", user_id=["u1"], registration_date=[to_days(2017, 1, 25)], birth_year=[1990.0],
        gender=["female"], city=[1.0], registered_via=[7.0],
    )
    logs = ingest.from_columns(
        "logs", user_id=["u1"], date=[to_days(2017, 1, 30)], num_unique_songs=[12.0],
        seconds_played=[2400.0], login_count=[1.0],
    )
    return ingest.Dataset(members, logs, ingest.empty_frame("transactions"))


@pytest.fixture
def rng():
    return np.random.default_rng(20170101)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance(request):
    """Call with (criterion number, title, passed, detail) to log one acceptance line."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
