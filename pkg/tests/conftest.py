import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def onion():
    from mtirl.onion_domain import build_onion_mdp, expert_weights
    mdp, features = build_onion_mdp()
    return mdp, features, np.stack(expert_weights())


@pytest.fixture(scope="session")
def chain():
    from mtirl.domains import toy_chain
    return toy_chain()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
