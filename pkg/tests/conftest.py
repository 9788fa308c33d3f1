"""Session fixtures: the desk-scale 3x3 LightsOut models are trained once and
shared by the unit tests and the acceptance suite."""

import time
from dataclasses import dataclass

import pytest

from latentplan import domains, pipeline
from latentplan.ndcore import RngStream

SEED = 0

# Desk-scale SAE for 3x3 LightsOut (512 images).  The full-scale batch of
# 2000 would give one update per epoch on this dataset.
DESK_SAE = dict(epochs=300, batch_size=64)


@dataclass
class Timed:
    value: object
    seconds: float


@pytest.fixture(scope="session")
def lo3():
    return domains.LightsOut(3)


@pytest.fixture(scope="session")
def lo3_data(lo3):
    return pipeline.make_transitions(lo3, RngStream(SEED, counter=1))


@pytest.fixture(scope="session")
def lo3_sae(lo3, lo3_data):
    start = time.perf_counter()
    sae = pipeline.fit_sae(lo3, lo3_data, RngStream(SEED, counter=2), which="all", **DESK_SAE)
    return Timed(sae, time.perf_counter() - start)


@pytest.fixture(scope="session")
def lo3_ama2(lo3_sae, lo3_data):
    sae = lo3_sae.value
    start = time.perf_counter()
    pre, post = pipeline.encode_pairs(sae, lo3_data, "train")
    models = pipeline.fit_ama2(sae, pre, post, RngStream(SEED, counter=3))
    return Timed(models, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    import verdicts

    if verdicts.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(verdicts.RESULTS):
            terminalreporter.write_line(verdicts.line(number))
