"""Block interconnection by named ports and current junctions.

All internal wires are collected into one linear map u = M y + N w from the
stacked block outputs y and external inputs w to the stacked block inputs u,
then eliminated in a single step:

    F    = (I - D M)^-1
    A_ps = A + B M F C          B_ps = B N + B M F D N
    C_ps = P F C                D_ps = P F D N
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .components import passive
from .components.block import Port, PortKind, StateSpaceBlock
from .components.inverter import linearize_ibr
from .components.machine import linearize_sg
from .loadflow import InitialStateSet, PowerFlowSolution, bus_charging
from .netmodel import NetworkModel

WELL_POSED_COND = 1e12

Endpoint = tuple[str, str]  # (block label, port name)


class ConnectionError_(ValueError):
    """Invalid interconnection graph."""


@dataclass(frozen=True)
class Junction:
    """Drives ``target`` with the signed sum of member current ports."""

    target: Endpoint
    members: tuple[tuple[Endpoint, float], ...]


def kcl_junction(target: Endpoint, members: Sequence[tuple[Endpoint, float]]) -> Junction:
    if len(members) < 1:
        raise ConnectionError_("a junction needs at least one member")
    return Junction(tuple(target), tuple((tuple(ep), float(sign)) for ep, sign in members))


@dataclass
class ConnectionGraph:
    wires: list[tuple[Endpoint, Endpoint]] = field(default_factory=list)  # (source out, sink in)
    junctions: list[Junction] = field(default_factory=list)
    external_inputs: list[Endpoint] = field(default_factory=list)
    external_outputs: list[Endpoint] = field(default_factory=list)

    def wire(self, src: Endpoint, dst: Endpoint) -> "ConnectionGraph":
        self.wires.append((tuple(src), tuple(dst)))
        return self

    def junction(self, target: Endpoint, members: Sequence[tuple[Endpoint, float]]) -> "ConnectionGraph":
        self.junctions.append(kcl_junction(target, members))
        return self

    def expose_input(self, ep: Endpoint) -> "ConnectionGraph":
        self.external_inputs.append(tuple(ep))
        return self

    def expose_output(self, ep: Endpoint) -> "ConnectionGraph":
        self.external_outputs.append(tuple(ep))
        return self


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: tuple[tuple[str, str], ...]
    input_labels: tuple[str, ...] = ()
    output_labels: tuple[str, ...] = ()
    rotation_mode: np.ndarray | None = None  # declared structural zero-mode direction

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def transfer(self, s: complex) -> np.ndarray:
        n = self.n_states
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def as_block(self, label: str, inputs: Sequence[Port], outputs: Sequence[Port]) -> StateSpaceBlock:
        return StateSpaceBlock(label, self.A, self.B, self.C, self.D, tuple(inputs), tuple(outputs),
                               tuple(f"{c}.{s}" for c, s in self.state_labels))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "state_labels": [list(s) for s in self.state_labels],
            "A": self.A.tolist(),
            "input_labels": list(self.input_labels),
            "output_labels": list(self.output_labels),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "AssembledSystem":
        A = np.array(d["A"], dtype=float).reshape(d["n_states"], d["n_states"])
        n = A.shape[0]
        return cls(A, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0)),
                   tuple(tuple(s) for s in d["state_labels"]))


def _compatible(out: Port, inp: Port) -> bool:
    return out.kind == inp.kind


def connect(blocks: Iterable[StateSpaceBlock], graph: ConnectionGraph) -> AssembledSystem:
    """Eliminate all internal connections of ``graph`` in one linear solve."""
    blocks = list(blocks)
    by_label = {}
    for b in blocks:
        if b.label in by_label:
            raise ConnectionError_(f"duplicate block label {b.label!r}")
        by_label[b.label] = b
    x_off, u_off, y_off = {}, {}, {}
    nx = nu = ny = 0
    for b in blocks:
        x_off[b.label], u_off[b.label], y_off[b.label] = nx, nu, ny
        nx += b.n_states
        nu += b.n_inputs
        ny += b.n_outputs

    def block(label):
        try:
            return by_label[label]
        except KeyError:
            raise ConnectionError_(f"unknown block {label!r}") from None

    def in_idx(ep):
        b = block(ep[0])
        try:
            sl = b.input_slice(ep[1])
        except KeyError as exc:
            raise ConnectionError_(str(exc)) from None
        return b.input_port(ep[1]), np.arange(sl.start, sl.stop) + u_off[b.label]

    def out_idx(ep):
        b = block(ep[0])
        try:
            sl = b.output_slice(ep[1])
        except KeyError as exc:
            raise ConnectionError_(str(exc)) from None
        return b.output_port(ep[1]), np.arange(sl.start, sl.stop) + y_off[b.label]

    M = np.zeros((nu, ny))
    driven = np.zeros(nu, dtype=int)
    for src, dst in graph.wires:
        po, yi = out_idx(src)
        pi, ui = in_idx(dst)
        if not _compatible(po, pi):
            raise ConnectionError_(f"kind mismatch {src} ({po.kind.value}) -> {dst} ({pi.kind.value})")
        M[ui, yi] += 1.0
        driven[ui] += 1
    for j in graph.junctions:
        pi, ui = in_idx(j.target)
        if pi.kind != PortKind.CURRENT:
            raise ConnectionError_(f"junction target {j.target} is not a current port")
        for ep, sign in j.members:
            po, yi = out_idx(ep)
            if po.kind != PortKind.CURRENT:
                raise ConnectionError_(f"junction member {ep} is not a current port")
            M[ui, yi] += sign
        driven[ui] += 1
    n_ext = 0
    ext_cols = []
    for ep in graph.external_inputs:
        _, ui = in_idx(ep)
        ext_cols.append(ui)
        driven[ui] += 1
        n_ext += len(ui)
    if np.any(driven != 1):
        names = []
        for b in blocks:
            for p in b.inputs:
                sl = b.input_slice(p.name)
                k = driven[u_off[b.label] + sl.start]
                if k != 1:
                    names.append(f"{b.label}.{p.name} ({'dangling' if k == 0 else 'driven twice'})")
        raise ConnectionError_("every input must be driven exactly once: " + ", ".join(names))
    N = np.zeros((nu, n_ext))
    col = 0
    for ui in ext_cols:
        for k in ui:
            N[k, col] = 1.0
            col += 1
    out_rows = [out_idx(ep)[1] for ep in graph.external_outputs]
    P = np.zeros((sum(len(r) for r in out_rows), ny))
    row = 0
    for r in out_rows:
        for k in r:
            P[row, k] = 1.0
            row += 1

    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu))
    C = np.zeros((ny, nx))
    D = np.zeros((ny, nu))
    for b in blocks:
        xs = slice(x_off[b.label], x_off[b.label] + b.n_states)
        us = slice(u_off[b.label], u_off[b.label] + b.n_inputs)
        ys = slice(y_off[b.label], y_off[b.label] + b.n_outputs)
        A[xs, xs] = b.A
        B[xs, us] = b.B
        C[ys, xs] = b.C
        D[ys, us] = b.D
    L = np.eye(ny) - D @ M
    DM = D @ M
    if np.any(DM):
        cond = np.linalg.cond(L)
        if not math.isfinite(cond) or cond > WELL_POSED_COND:
            loop = []
            for b in blocks:
                for p in b.outputs:
                    sl = b.output_slice(p.name)
                    rows = range(y_off[b.label] + sl.start, y_off[b.label] + sl.stop)
                    if any(np.any(DM[r]) for r in rows):
                        loop.append(f"{b.label}.{p.name}")
            raise ConnectionError_(f"ill-posed algebraic loop (cond {cond:.2e}) through: " + ", ".join(loop))
        F = np.linalg.solve(L, np.hstack([C, D @ N]))
        FC, FDN = F[:, :nx], F[:, nx:]
    else:
        FC, FDN = C, D @ N
    BM = B @ M
    A_ps = A + BM @ FC
    B_ps = B @ N + BM @ FDN
    C_ps = P @ FC
    D_ps = P @ FDN
    labels = tuple((b.label, s) for b in blocks for s in b.states)
    in_labels = tuple(f"{lab}.{ch}" for lab, pn in graph.external_inputs
                      for ch in by_label[lab].input_port(pn).channels())
    out_labels = tuple(f"{lab}.{ch}" for lab, pn in graph.external_outputs
                       for ch in by_label[lab].output_port(pn).channels())
    return AssembledSystem(A_ps, B_ps, C_ps, D_ps, labels, in_labels, out_labels)


# ---------------------------------------------------------------------------
# full network


def rotation_direction(labels: Sequence[tuple[str, str]], x0: np.ndarray) -> np.ndarray:
    """State direction of an infinitesimal rotation of the global frame at ``x0``.

    Global dq pairs (x_d, x_q) move along (-x_q, x_d); rotor and PLL angles
    move by one; machine-frame and PLL-frame states stay put.
    """
    r = np.zeros(len(labels))
    pos = {lab: k for k, lab in enumerate(labels)}
    for k, (comp, name) in enumerate(labels):
        if name in ("delta", "theta"):
            r[k] = 1.0
        elif name.endswith("_d"):
            q = pos.get((comp, name[:-2] + "_q"))
            if q is not None and _is_global_pair(name):
                r[k] = -x0[q]
                r[q] = x0[k]
    return r


_LOCAL_PAIRS = ("g_d",)  # current-PI integrators live in the PLL frame


def _is_global_pair(name: str) -> bool:
    return name not in _LOCAL_PAIRS


@dataclass(frozen=True, eq=False)
class GridModel:
    """Blocks and wiring of a network, before elimination."""

    blocks: tuple[StateSpaceBlock, ...]
    graph: ConnectionGraph
    x0: np.ndarray  # equilibrium of all states in block order
    labels: tuple[tuple[str, str], ...]


def _branch_states(init: InitialStateSet, label: str, block: StateSpaceBlock) -> list[float]:
    d = init.branches.get(label, {})
    missing = [s for s in block.states if s not in d]
    if missing:
        raise ConnectionError_(f"{label}: no initial value for state(s) {', '.join(missing)}")
    return [d[s] for s in block.states]


def build_grid(net: NetworkModel, init: InitialStateSet, sol: PowerFlowSolution,
               open_bus: str | None = None) -> GridModel:
    """All component blocks plus their wiring.

    With ``open_bus`` set, the unit at that bus is left out and the bus voltage
    becomes an external input ``("port", "v")`` while the current absorbed by
    the network there becomes the external output ``("port", "i")``.
    """
    base = net.base
    w = base.omega_base
    blocks: list[StateSpaceBlock] = []
    x0: list[float] = []
    # currents absorbed from each bus: list of (endpoint)
    absorbed: dict[str, list[Endpoint]] = {b: [] for b in net.bus_ids}
    voltage_users: dict[str, list[Endpoint]] = {b: [] for b in net.bus_ids}
    g = ConnectionGraph()

    for br in net.branches:
        rl = passive.rl_block(br.id, br.r, br.x, w)
        blocks.append(rl)
        x0 += _branch_states(init, br.id, rl)
        absorbed[br.from_bus].append((br.id, "i_from"))
        absorbed[br.to_bus].append((br.id, "i_to"))
        voltage_users[br.from_bus].append((br.id, "v_from"))
        voltage_users[br.to_bus].append((br.id, "v_to"))
    for t in net.transformers:
        tb = passive.transformer_block(t, base)
        blocks.append(tb)
        x0 += _branch_states(init, t.id, tb)
        absorbed[t.from_bus].append((t.id, "i_from"))
        absorbed[t.to_bus].append((t.id, "i_to"))
        voltage_users[t.from_bus].append((t.id, "v_from"))
        voltage_users[t.to_bus].append((t.id, "v_to"))
    for ld in net.loads:
        lb = passive.load_block(ld, sol, base)
        blocks.append(lb)
        x0 += _branch_states(init, ld.id, lb)
        absorbed[ld.bus].append((ld.id, "i"))
        voltage_users[ld.bus].append((ld.id, "v"))

    sources: dict[str, Endpoint] = {}
    for sg in net.generators:
        if sg.bus == open_bus:
            continue
        ci = init[sg.id]
        blk = linearize_sg(sg, ci, base)
        blocks.append(blk)
        x0 += list(ci.x)
        if sg.bus in sources:
            raise ConnectionError_(f"bus {sg.bus} has more than one voltage-defining unit")
        sources[sg.bus] = (sg.id, "i")
        g.expose_input((sg.id, "p_ref")).expose_input((sg.id, "v_ref"))
        g.junction((sg.id, "i"), [(ep, 1.0) for ep in absorbed[sg.bus]])
        for ep in voltage_users[sg.bus]:
            g.wire((sg.id, "v"), ep)
    for ib in net.ibrs:
        if ib.bus == open_bus:
            continue
        ci = init[ib.id]
        blk = linearize_ibr(ib, ci, base)
        blocks.append(blk)
        x0 += list(ci.x)
        if ib.bus in sources:
            raise ConnectionError_(f"bus {ib.bus} has more than one voltage-defining unit")
        sources[ib.bus] = (ib.id, "i")
        g.expose_input((ib.id, blk.inputs[0].name)).expose_input((ib.id, "q_ref"))
        g.junction((ib.id, "i"), [(ep, 1.0) for ep in absorbed[ib.bus]])
        for ep in voltage_users[ib.bus]:
            g.wire((ib.id, "v"), ep)

    charging = bus_charging(net)
    for sh in net.shunts:
        charging[sh.bus] += sh.q / base.s_base
    port_block = None
    for bus in net.bus_ids:
        if bus in sources:
            continue
        if bus == open_bus:
            port_block = bus
            continue
        if charging[bus] <= 0.0:
            raise ConnectionError_(f"bus {bus} has neither a source nor shunt capacitance")
        label = f"bus{bus}"
        cap = passive.capacitor_block(label, charging[bus], w)
        blocks.append(cap)
        x0 += _branch_states(init, label, cap)
        g.junction((label, "i"), [(ep, -1.0) for ep in absorbed[bus]])
        for ep in voltage_users[bus]:
            g.wire((label, "v"), ep)
    if open_bus is not None:
        if port_block is None:
            raise ConnectionError_(f"bus {open_bus} has no unit to open")
        # identity feedthrough blocks carrying the port signals
        vin = StateSpaceBlock("port_v", np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2),
                              (Port("v", PortKind.VOLTAGE),), (Port("v", PortKind.VOLTAGE),))
        iout = StateSpaceBlock("port_i", np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2),
                               (Port("i", PortKind.CURRENT),), (Port("i", PortKind.CURRENT),))
        blocks += [vin, iout]
        g.expose_input(("port_v", "v"))
        for ep in voltage_users[open_bus]:
            g.wire(("port_v", "v"), ep)
        g.junction(("port_i", "i"), [(ep, 1.0) for ep in absorbed[open_bus]])
        g.expose_output(("port_i", "i"))
    labels = tuple((b.label, s) for b in blocks for s in b.states)
    return GridModel(tuple(blocks), g, np.array(x0, dtype=float), labels)


def assemble_full_grid(net: NetworkModel, init: InitialStateSet, sol: PowerFlowSolution) -> AssembledSystem:
    """Linear model of the complete network with every unit connected."""
    gm = build_grid(net, init, sol)
    sys = connect(gm.blocks, gm.graph)
    r = rotation_direction(gm.labels, gm.x0)
    return AssembledSystem(sys.A, sys.B, sys.C, sys.D, sys.state_labels, sys.input_labels,
                           sys.output_labels, r)


def assemble_rest_of_grid(net: NetworkModel, init: InitialStateSet, sol: PowerFlowSolution,
                          bus: str) -> tuple[StateSpaceBlock, np.ndarray]:
    """Network without the unit at ``bus`` as one block (v at the bus -> absorbed current).

    Returns the block and the rotation direction of its states.
    """
    gm = build_grid(net, init, sol, open_bus=bus)
    sys = connect(gm.blocks, gm.graph)
    # references of the remaining units are held constant
    cols = [sys.input_labels.index(f"port_v.v.{ax}") for ax in "dq"]
    sys = AssembledSystem(sys.A, sys.B[:, cols], sys.C, sys.D[:, cols], sys.state_labels,
                          tuple(sys.input_labels[c] for c in cols), sys.output_labels)
    blk = sys.as_block(f"grid@{bus}", (Port("v", PortKind.VOLTAGE),), (Port("i", PortKind.CURRENT),))
    return blk, rotation_direction(gm.labels, gm.x0)


def connect_unit(unit: StateSpaceBlock, grid: StateSpaceBlock) -> AssembledSystem:
    """Close the loop between a voltage-source unit and a grid block seen from its bus."""
    g = ConnectionGraph()
    g.wire((unit.label, "v"), (grid.label, "v"))
    g.wire((grid.label, "i"), (unit.label, "i"))
    for p in unit.inputs:
        if p.name != "i":
            g.expose_input((unit.label, p.name))
    return connect([unit, grid], g)
