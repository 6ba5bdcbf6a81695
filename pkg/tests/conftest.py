"""Shared fixtures: mechanisms, certificates, and cached heavy evaluations."""

from __future__ import annotations

import numpy as np
import pytest

from crossover_dropout import evaluation, fixtures, q_solver
from crossover_dropout.dropout_model import new_mechanism

import _acceptance_log


def pytest_terminal_summary(terminalreporter):
    lines = _acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def d2():
    return fixtures.get_fixture("d2")


@pytest.fixture(scope="session")
def d8():
    return fixtures.get_fixture("d8")


@pytest.fixture(scope="session")
def d9():
    return fixtures.get_fixture("d9")


@pytest.fixture(scope="session")
def d2_cert(d2):
    return q_solver.solve_minimax(d2.mechanism, d2.design.t)


@pytest.fixture(scope="session")
def d8_cert(d8):
    return q_solver.solve_minimax(d8.mechanism, d8.design.t)


@pytest.fixture(scope="session")
def d9_cert(d9):
    return q_solver.solve_minimax(d9.mechanism, d9.design.t)


@pytest.fixture(scope="session")
def d2_exact_reports(d2, d2_cert):
    """Exact full-criteria evaluation of d2; shared by several suites."""
    import time

    start = time.perf_counter()
    reports = evaluation.evaluate_reports(d2.design, d2.mechanism, "all", d2_cert, "exact")
    elapsed = time.perf_counter() - start
    return {r.criterion: r for r in reports}, elapsed


@pytest.fixture(scope="session")
def d9_exact_reports(d9, d9_cert):
    import time

    start = time.perf_counter()
    reports = evaluation.evaluate_reports(d9.design, d9.mechanism, "all", d9_cert, "exact")
    elapsed = time.perf_counter() - start
    return {r.criterion: r for r in reports}, elapsed


@pytest.fixture(scope="session")
def d8_mc_reports(d8, d8_cert):
    reports = evaluation.evaluate_reports(
        d8.design, d8.mechanism, "all", d8_cert, "mc", seed=0, reps=100_000
    )
    return {r.criterion: r for r in reports}


@pytest.fixture(scope="session")
def regime_iii_case():
    """A mechanism falling in the vertex closed-form regime, found by scan."""
    p, t, n = 4, 4, 12
    for theta in np.linspace(0.35, 0.95, 61):
        mech = new_mechanism(p, n, (0.0, theta, 0.0, 1.0 - theta))
        cert = q_solver.closed_form(mech, t)
        if cert is not None and cert.regime == q_solver.REGIME_III:
            return mech, cert
    pytest.skip("no vertex-regime mechanism found in the scan range")
