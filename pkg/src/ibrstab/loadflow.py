"""Admittance matrix, Newton-Raphson AC power flow and dynamic-state initialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .components.block import ComponentInit
from .components.inverter import ibr_equilibrium
from .components.machine import sg_equilibrium
from .netmodel import NetworkModel, TransformerSpec

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50


class LoadFlowError(RuntimeError):
    pass


class DivergenceError(LoadFlowError):
    pass


class SingularJacobianError(LoadFlowError):
    pass


@dataclass(frozen=True, eq=False)
class YbusMatrix:
    matrix: np.ndarray
    bus_ids: tuple[str, ...]
    include_loads: bool
    include_shunts: bool

    def index(self, bus: str) -> int:
        try:
            return self.bus_ids.index(bus)
        except ValueError:
            raise KeyError(f"unknown bus {bus!r}") from None


def transformer_pi(spec: TransformerSpec, s_base: float) -> np.ndarray:
    """2x2 terminal admittance of the T-circuit after eliminating the middle node."""
    p = spec.on_base(s_base)
    y1 = 1.0 / complex(p["r1"], p["x1"])
    y2 = 1.0 / complex(p["r2"], p["x2"])
    ym = 0.0
    if not math.isinf(p["r_fe"]):
        ym += 1.0 / p["r_fe"]
    if not math.isinf(p["x_m"]):
        ym += 1.0 / complex(0.0, p["x_m"])
    full = np.array([[y1, 0, -y1], [0, y2, -y2], [-y1, -y2, y1 + y2 + ym]], dtype=complex)
    return full[:2, :2] - np.outer(full[:2, 2], full[2, :2]) / full[2, 2]


def bus_charging(net: NetworkModel) -> dict[str, float]:
    """Total shunt susceptance per bus from line charging (half per end)."""
    out = {b: 0.0 for b in net.bus_ids}
    for br in net.branches:
        out[br.from_bus] += 0.5 * br.b_shunt
        out[br.to_bus] += 0.5 * br.b_shunt
    return out


def build_ybus(net: NetworkModel, include_loads: bool = False, include_shunts: bool = True) -> YbusMatrix:
    """System-base bus admittance matrix.

    ``include_shunts`` covers compensation capacitors and line charging;
    ``include_loads`` folds every load in as a constant admittance at 1 pu.
    """
    idx = net.bus_index()
    n = len(idx)
    Y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
        if include_shunts:
            Y[i, i] += 0.5j * br.b_shunt
            Y[j, j] += 0.5j * br.b_shunt
    for t in net.transformers:
        i, j = idx[t.from_bus], idx[t.to_bus]
        Y[np.ix_([i, j], [i, j])] += transformer_pi(t, net.base.s_base)
    if include_shunts:
        for sh in net.shunts:
            Y[idx[sh.bus], idx[sh.bus]] += 1j * sh.q / net.base.s_base
    if include_loads:
        for ld in net.loads:
            Y[idx[ld.bus], idx[ld.bus]] += complex(ld.p, -ld.q) / net.base.s_base
    isolated = [b for b, k in idx.items() if abs(Y[k, k]) == 0.0]
    if isolated:
        raise LoadFlowError(f"isolated bus(es): {', '.join(isolated)}")
    return YbusMatrix(Y, net.bus_ids, include_loads, include_shunts)


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    bus_ids: tuple[str, ...]
    v: np.ndarray  # complex bus voltages
    s_bus: np.ndarray  # complex net injection per bus
    injections: Mapping[str, complex]  # per generator/IBR id, system base
    iterations: int
    mismatch: float
    log: tuple[float, ...] = ()
    s_base: float = 100.0
    load_p: float = 0.0

    def voltage(self, bus: str) -> complex:
        return complex(self.v[self.bus_ids.index(bus)])

    def injection(self, unit: str) -> complex:
        return complex(self.injections[unit])

    def current(self, unit: str, bus: str) -> complex:
        """Injected current of a unit (system base) at its bus."""
        return (self.injection(unit) / self.voltage(bus)).conjugate()

    @property
    def losses(self) -> float:
        return float(self.s_bus.real.sum())

    def rotated(self, phi: float) -> "PowerFlowSolution":
        """Same operating point seen from a global frame shifted by -phi."""
        return PowerFlowSolution(self.bus_ids, self.v * np.exp(1j * phi), self.s_bus, self.injections,
                                 self.iterations, self.mismatch, self.log, self.s_base, self.load_p)

    def report(self) -> dict:
        return {
            "converged": True,
            "iterations": self.iterations,
            "mismatch_pu": self.mismatch,
            "iteration_log": list(self.log),
            "buses": [
                {"bus": b, "v_pu": float(abs(v)), "angle_deg": float(np.degrees(np.angle(v))),
                 "p_mw": float(s.real * self.s_base), "q_mvar": float(s.imag * self.s_base)}
                for b, v, s in zip(self.bus_ids, self.v, self.s_bus)
            ],
            "injectors": [
                {"id": k, "p_mw": float(s.real * self.s_base), "q_mvar": float(s.imag * self.s_base)}
                for k, s in self.injections.items()
            ],
            "losses_mw": self.losses * self.s_base,
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=1)


def newton_raphson(Y: np.ndarray, v0: np.ndarray, p_spec: np.ndarray, q_spec: np.ndarray,
                   pv: np.ndarray, pq: np.ndarray, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER):
    """Polar Newton-Raphson. Returns (V, iterations, final mismatch, mismatch log)."""
    V = v0.astype(complex).copy()
    pvpq = np.concatenate([pv, pq]).astype(int)
    pq = np.asarray(pq, dtype=int)
    log = []
    for it in range(max_iter + 1):
        I = Y @ V
        S = V * I.conj()
        mis = np.concatenate([p_spec[pvpq] - S.real[pvpq], q_spec[pq] - S.imag[pq]])
        norm = float(np.max(np.abs(mis))) if mis.size else 0.0
        log.append(norm)
        if not math.isfinite(norm):
            raise DivergenceError(f"mismatch not finite at iteration {it}")
        if norm <= tol:
            return V, it, norm, log
        if it == max_iter:
            break
        if it >= 3 and norm > 1e3 * log[0] + 1e3:
            raise DivergenceError(f"mismatch grew to {norm:.3e} at iteration {it}")
        # complex power derivatives w.r.t. angle and magnitude
        Vm = np.abs(V)
        Vn = V / Vm
        dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(I) - Y @ np.diag(V))
        dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vn)) + np.diag(Vn) @ np.conj(np.diag(I))
        J = np.block([
            [dS_dVa.real[np.ix_(pvpq, pvpq)], dS_dVm.real[np.ix_(pvpq, pq)]],
            [dS_dVa.imag[np.ix_(pq, pvpq)], dS_dVm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(J, mis)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(f"singular Jacobian at iteration {it}") from None
        if not np.all(np.isfinite(dx)) or np.linalg.cond(J) > 1e14:
            raise SingularJacobianError(f"singular Jacobian at iteration {it}")
        Va = np.angle(V)
        Va[pvpq] += dx[: len(pvpq)]
        Vm[pq] += dx[len(pvpq):]
        V = Vm * np.exp(1j * Va)
    raise DivergenceError(f"no convergence in {max_iter} iterations (mismatch {log[-1]:.3e})")


def solve_newton_raphson(net: NetworkModel, ybus: YbusMatrix | None = None, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> PowerFlowSolution:
    """Flat-start power flow with constant-PQ loads and pure PV generators."""
    if ybus is None:
        ybus = build_ybus(net)
    idx = net.bus_index()
    n = len(idx)
    sb = net.base.s_base
    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    for ld in net.loads:
        p_spec[idx[ld.bus]] -= ld.p / sb
        q_spec[idx[ld.bus]] -= ld.q / sb
    units = [(g.id, g.bus, g.p, g.v_set, g.s_nom) for g in (*net.generators, *net.ibrs)]
    v_set = {}
    for uid, bus, p, vs, _ in units:
        p_spec[idx[bus]] += p / sb
        if bus in v_set and abs(v_set[bus] - vs) > 1e-12:
            raise LoadFlowError(f"conflicting voltage set points at bus {bus}")
        v_set[bus] = vs
    V0 = np.ones(n, dtype=complex)
    kinds = {b.id: b.kind for b in net.buses}
    pv, pq = [], []
    for b, k in idx.items():
        if kinds[b] == "pv":
            if b not in v_set:
                raise LoadFlowError(f"PV bus {b} has no generator")
            V0[k] = v_set[b]
            pv.append(k)
        elif kinds[b] == "slack":
            V0[k] = v_set[b]
        else:
            pq.append(k)
    V, it, mis, log = newton_raphson(ybus.matrix, V0, p_spec, q_spec, np.array(pv, int),
                                     np.array(pq, int), tol, max_iter)
    S = V * np.conj(ybus.matrix @ V)
    # split each bus's generation among its units by rating
    gen_s = S + np.array([0j] * n)
    for ld in net.loads:
        gen_s[idx[ld.bus]] += complex(ld.p, ld.q) / sb
    injections = {}
    for b, k in idx.items():
        here = [u for u in units if u[1] == b]
        if not here:
            continue
        total = sum(u[4] for u in here)
        for uid, _, p, _, s_nom in here:
            q_share = gen_s[k].imag * s_nom / total
            p_val = gen_s[k].real * s_nom / total if kinds[b] == "slack" else p / sb
            injections[uid] = complex(p_val, q_share)
    return PowerFlowSolution(net.bus_ids, V, S, injections, it, mis, tuple(log), sb,
                             sum(ld.p for ld in net.loads) / sb)


# ---------------------------------------------------------------------------
# dynamic-state initialization


@dataclass(frozen=True, eq=False)
class InitialStateSet:
    """Equilibrium of every dynamic element, keyed by component id."""

    components: Mapping[str, ComponentInit] = field(default_factory=dict)
    branches: Mapping[str, dict] = field(default_factory=dict)

    def __getitem__(self, key: str) -> ComponentInit:
        return self.components[key]

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.components.values()), default=0.0)

    def report(self) -> dict:
        return {"components": {k: c.as_dict() for k, c in self.components.items()},
                "branches": {k: {s: float(v) for s, v in d.items()} for k, d in self.branches.items()}}


def _dq(z: complex, prefix: str) -> dict:
    return {f"{prefix}_d": z.real, f"{prefix}_q": z.imag}


def init_dynamic_states(net: NetworkModel, sol: PowerFlowSolution) -> InitialStateSet:
    """Steady states of all machines, inverters, branches, loads and bus capacitors."""
    comps = {}
    for g in net.generators:
        comps[g.id] = sg_equilibrium(g, sol.voltage(g.bus), sol.current(g.id, g.bus), net.base)
    for g in net.ibrs:
        comps[g.id] = ibr_equilibrium(g, sol.voltage(g.bus), sol.current(g.id, g.bus), net.base)
    branches = {}
    for br in net.branches:
        vf, vt = sol.voltage(br.from_bus), sol.voltage(br.to_bus)
        branches[br.id] = _dq((vf - vt) / complex(br.r, br.x), "i")
    for t in net.transformers:
        vf, vt = sol.voltage(t.from_bus), sol.voltage(t.to_bus)
        p = t.on_base(net.base.s_base)
        y = transformer_pi(t, net.base.s_base)
        i1 = y[0, 0] * vf + y[0, 1] * vt
        i2 = -(y[1, 0] * vf + y[1, 1] * vt)
        vm = vf - complex(p["r1"], p["x1"]) * i1
        if math.isinf(p["r_fe"]) and math.isinf(p["x_m"]):
            st = _dq(i1, "i")  # collapses to one series R-L
        else:
            st = {**_dq(i1, "i1"), **_dq(i2, "i2")}
        if not math.isinf(p["x_m"]):
            st.update(_dq(vm / complex(0.0, p["x_m"]), "im"))
        branches[t.id] = st
    for ld in net.loads:
        v = sol.voltage(ld.bus)
        branches[ld.id] = _dq((complex(ld.p, ld.q) / net.base.s_base / v).conjugate(), "i")
    for b in net.bus_ids:
        branches[f"bus{b}"] = _dq(sol.voltage(b), "v")
    return InitialStateSet(comps, branches)
