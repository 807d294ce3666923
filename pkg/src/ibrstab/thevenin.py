"""Thevenin equivalents of the grid seen from a bus, and their use as grid blocks."""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .components.block import StateSpaceBlock
from .components.passive import rl_block
from .loadflow import PowerFlowSolution, build_ybus, newton_raphson, solve_newton_raphson
from .netmodel import NetworkModel, PerUnitBase, apply_scenario

DEFAULT_UNIT_MVA = 350.0


class TheveninError(ValueError):
    pass


@dataclass(frozen=True)
class TheveninEquivalent:
    z_th: complex
    v_th_phasor: complex
    s_sc: float
    scr: float
    xr: float
    include_loads: bool
    scenario: int | None
    bus: str = ""

    @property
    def v_th(self) -> float:
        return abs(self.v_th_phasor)

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "loads": "Y" if self.include_loads else "N",
            "s_sc_mva": round(self.s_sc, 6),
            "scr": round(self.scr, 6),
            "x_over_r": round(self.xr, 6),
            "v_th_pu": round(self.v_th, 6),
            "z_th_pu": [round(self.z_th.real, 9), round(self.z_th.imag, 9)],
        }


def compute_thevenin(net: NetworkModel, bus: str, include_loads: bool, sol: PowerFlowSolution,
                     include_shunts: bool | None = None, unit_mva: float | None = None) -> TheveninEquivalent:
    """Driving-point impedance and open-circuit voltage at ``bus`` with its own unit removed.

    Other machines appear as their transient EMF behind rs + j x'd; other
    inverters as constant current injections. Compensation shunts and line
    charging follow ``include_shunts`` (default: same as ``include_loads``).
    """
    if bus not in net.bus_ids:
        raise TheveninError(f"unknown bus {bus!r}")
    if include_shunts is None:
        include_shunts = include_loads
    yb = build_ybus(net, include_loads=include_loads, include_shunts=include_shunts)
    Y = yb.matrix.copy()
    idx = net.bus_index()
    src = np.zeros(len(idx), dtype=complex)
    for g in net.generators:
        if g.bus == bus:
            continue
        k = idx[g.bus]
        z = complex(g.machine.rs, g.machine.xd_t) * net.base.s_base / g.s_nom
        e = sol.voltage(g.bus) + z * sol.current(g.id, g.bus)
        Y[k, k] += 1.0 / z
        src[k] += e / z
    for g in net.ibrs:
        if g.bus != bus:
            src[idx[g.bus]] += sol.current(g.id, g.bus)
    k = idx[bus]
    e_k = np.zeros(len(idx), dtype=complex)
    e_k[k] = 1.0
    try:
        if np.linalg.cond(Y) > 1e14:
            raise np.linalg.LinAlgError
        col = np.linalg.solve(Y, e_k)  # Y symmetric: column k of Z equals row k
    except np.linalg.LinAlgError:
        raise TheveninError(f"reduced admittance matrix is singular (bus {bus} islanded?)") from None
    z_th = complex(col[k])
    v_th = complex(col @ src)
    if unit_mva is None:
        unit = net.ibr_at(bus) or net.sg_at(bus)
        unit_mva = unit.s_nom if unit is not None else DEFAULT_UNIT_MVA
    s_sc = net.base.s_base / abs(z_th)
    xr = z_th.imag / z_th.real if z_th.real != 0 else float("inf")
    return TheveninEquivalent(z_th, v_th, s_sc, s_sc / unit_mva, xr, include_loads, net.scenario_id, bus)


def thevenin_grid_block(eq: TheveninEquivalent, base: PerUnitBase, label: str = "thevenin") -> StateSpaceBlock:
    """R-L behind a stiff source: input bus voltage, output current drawn from the bus."""
    if eq.z_th.real < 0:
        raise TheveninError("Thevenin resistance must be >= 0")
    if eq.z_th == 0:
        raise TheveninError("zero Thevenin impedance is an ideal source and cannot face a voltage-source unit")
    return rl_block(label, eq.z_th.real, eq.z_th.imag, base.omega_base, two_terminal=False)


def unit_operating_point(eq: TheveninEquivalent, s_inj: complex, v_set: float | None = None) -> tuple[complex, complex]:
    """Bus voltage and injected current of a unit feeding the equivalent.

    With ``v_set`` the unit holds its voltage magnitude and delivers the
    active part of ``s_inj``; otherwise it delivers ``s_inj`` as given.
    """
    y = 1.0 / eq.z_th
    Y = np.array([[y, -y], [-y, y]])
    p = np.array([0.0, s_inj.real])
    q = np.array([0.0, s_inj.imag])
    v0 = np.array([eq.v_th_phasor, eq.v_th_phasor])
    if v_set is None:
        pv, pq = np.array([], int), np.array([1])
    else:
        v0[1] = v_set * cmath.exp(1j * cmath.phase(eq.v_th_phasor))
        pv, pq = np.array([1]), np.array([], int)
    V, _, _, _ = newton_raphson(Y, v0, p, q, pv, pq)
    v = complex(V[1])
    s = v * (y * (V[1] - V[0])).conjugate()
    return v, (s / v).conjugate()


def table_rows(net: NetworkModel, bus: str, scenarios=None, load_settings=(True, False)) -> list[TheveninEquivalent]:
    """Equivalents for each scenario and load setting, loads-included rows first."""
    scenarios = sorted(net.scenarios) if scenarios is None else list(scenarios)
    rows = []
    sols = {}
    for sc in scenarios:
        n = apply_scenario(net, sc)
        sols[sc] = (n, solve_newton_raphson(n))
    for incl in load_settings:
        for sc in scenarios:
            n, sol = sols[sc]
            rows.append(compute_thevenin(n, bus, incl, sol))
    return rows
