"""Acceptance criteria 1-10 at their stated tolerances.

The simulation campaign (calibration plus about a hundred two-hour runs) is
shared by criteria 1-6 and 9 and takes several minutes on one core.
"""

import os

import pytest

from infoshare.labctl import acceptance

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def campaign():
    return acceptance.run_campaign(jobs=os.cpu_count() or 1)


def _check(criterion, log):
    line = criterion.line()
    log[criterion.number] = line
    print(line)
    assert criterion.passed, line


def test_criterion_01_dynamic_beats_static(campaign, acceptance_log):
    _check(acceptance.criterion_1(campaign), acceptance_log)


def test_criterion_02_interior_optimum(campaign, acceptance_log):
    _check(acceptance.criterion_2(campaign), acceptance_log)


def test_criterion_03_low_load_indifference(campaign, acceptance_log):
    _check(acceptance.criterion_3(campaign), acceptance_log)


def test_criterion_04_static_instability(campaign, acceptance_log):
    _check(acceptance.criterion_4(campaign), acceptance_log)


def test_criterion_05_per_class_ordering(campaign, acceptance_log):
    _check(acceptance.criterion_5(campaign), acceptance_log)


def test_criterion_06_update_rate(campaign, acceptance_log):
    _check(acceptance.criterion_6(campaign), acceptance_log)


def test_criterion_07_router_oracle(acceptance_log):
    _check(acceptance.criterion_7(), acceptance_log)


def test_criterion_08_telemetry_oracle(acceptance_log):
    _check(acceptance.criterion_8(), acceptance_log)


def test_criterion_09_simulation_invariants(campaign, acceptance_log):
    _check(acceptance.criterion_9(campaign), acceptance_log)


def test_criterion_10_statistical_contracts(acceptance_log):
    _check(acceptance.criterion_10(), acceptance_log)
