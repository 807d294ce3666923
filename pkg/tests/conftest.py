import functools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ibrstab.loadflow import init_dynamic_states, solve_newton_raphson
from ibrstab.netmodel import apply_scenario, bundled_network, parse_network

settings.register_profile("ibrstab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ibrstab"))


@functools.lru_cache(maxsize=None)
def _net():
    return bundled_network()


@functools.lru_cache(maxsize=None)
def _solved(scenario):
    n = apply_scenario(_net(), scenario)
    sol = solve_newton_raphson(n)
    return n, sol, init_dynamic_states(n, sol)


@pytest.fixture
def net():
    return _net()


@pytest.fixture
def solved():
    """scenario id -> (network, load flow, initial states), cached per session."""
    return _solved


def two_bus_doc(p_load=50.0, q_load=0.0, x=0.1, r=0.0, v_slack=1.0, b_shunt=0.0):
    """Slack generator behind a line feeding one PQ load (system base 100 MVA)."""
    return {
        "schema_version": 1, "s_base": 100.0, "f_base": 50.0,
        "zones": [{"id": "z", "v_base": 220.0}],
        "buses": [{"id": "1", "zone": "z", "kind": "slack"}, {"id": "2", "zone": "z", "kind": "pq"}],
        "branches": [{"id": "L", "from": "1", "to": "2", "base_mva": 100.0, "r": r, "x": x,
                      "b_shunt": b_shunt}],
        "loads": [{"id": "D", "bus": "2", "p": p_load, "q": q_load}],
        "machines": {"m": {"rs": 0.002, "xd": 1.8, "xq": 1.7, "xd_t": 0.24, "xq_t": 0.55, "xd_st": 0.2,
                           "xq_st": 0.2, "xl": 0.15, "td0_t": 8.0, "tq0_t": 0.4, "td0_st": 0.03,
                           "tq0_st": 0.05, "h": 6.5, "d": 0.0}},
        "generators": [{"id": "G", "bus": "1", "s_nom": 200.0, "p": 0.0, "v_set": v_slack, "machine": "m"}],
    }


@pytest.fixture
def two_bus():
    return lambda **kw: parse_network(two_bus_doc(**kw))


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines
    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
