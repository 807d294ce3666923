"""Independent reference computations used by several test modules."""
import cmath
import math
from dataclasses import replace

import numpy as np

from ibrstab.assembly import ConnectionGraph
from ibrstab.components.block import InfeasibleOperatingPoint, Port, PortKind, StateSpaceBlock
from ibrstab.components.inverter import ibr_equilibrium, ibr_model, ibr_parameters
from ibrstab.components.machine import _model_for, sg_equilibrium, sg_parameters
from ibrstab.netmodel import GAIN_NAMES, IbrSpec, PerUnitBase, bundled_network

FD_STEP = 1e-6
BASE = PerUnitBase()
GAIN_BOUNDS = {"kp_pll": 12, "ki_pll": 860, "kp_i": 8, "ki_i": 800, "kp_dc": 6, "ki_dc": 1500,
               "kp_2dc": 6.5, "ki_2dc": 490}


def fd_jacobians(model, x, u, p, h=FD_STEP):
    """Central differences of f and g with respect to states and inputs."""
    x, u = np.asarray(x, float), np.asarray(u, float)

    def cols(fun, z, other, wrt_x):
        out = []
        for k in range(z.size):
            e = np.zeros_like(z)
            e[k] = h
            if wrt_x:
                out.append((fun(z + e, other, p) - fun(z - e, other, p)) / (2 * h))
            else:
                out.append((fun(other, z + e, p) - fun(other, z - e, p)) / (2 * h))
        return np.array(out).T

    return (cols(model.f, x, u, True), cols(model.f, u, x, False),
            cols(model.g, x, u, True), cols(model.g, u, x, False))


def matrix_rel_err(a, b):
    scale = max(np.max(np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b)) / scale)


def two_bus_voltage(p, q, x, v1=1.0):
    """Receiving-end magnitude of a lossless line from the quartic in |V2|."""
    a = v1 * v1 - 2.0 * q * x
    return math.sqrt((a + math.sqrt(a * a - 4.0 * x * x * (p * p + q * q))) / 2.0)


def transfer_error(got, ref):
    """Relative error of a transfer matrix; an exact structural zero is judged
    in absolute terms, since only roundoff can appear there."""
    ref_norm = np.linalg.norm(ref)
    diff = np.linalg.norm(np.asarray(got) - ref)
    if ref_norm == 0.0:
        return diff / 1e-3  # maps an absolute 1e-12 onto the 1e-9 relative bound
    # block data are O(1); a smaller response is a near-structural zero
    return diff / max(ref_norm, 1e-6)


def random_phasor(rng, lo=0.95, hi=1.05):
    return cmath.rect(rng.uniform(lo, hi), rng.uniform(-np.pi, np.pi))


def random_sg_case(rng, controllers=True):
    """(model, x, u, p) at a random feasible steady state of a bundled machine."""
    net = bundled_network()
    g = net.generators[int(rng.integers(len(net.generators)))]
    if not controllers:
        g = replace(g, governor=None, exciter=None)
    while True:
        v = random_phasor(rng)
        s_mach = complex(rng.uniform(0.05, 0.95), rng.uniform(-0.2, 0.5))
        i_inj = (s_mach * g.s_nom / BASE.s_base / v).conjugate()
        try:
            ci = sg_equilibrium(g, v, i_inj, BASE)
        except InfeasibleOperatingPoint:
            continue
        return _model_for(g), ci.x, ci.u, sg_parameters(g, BASE)


def random_gains(rng):
    return {n: float(rng.uniform(0.0, GAIN_BOUNDS[n])) for n in GAIN_NAMES}


def random_ibr_case(rng, version):
    spec = IbrSpec(version=version).with_gains(**random_gains(rng))
    v = random_phasor(rng)
    s_unit = complex(rng.uniform(0.0, 1.0), rng.uniform(-0.4, 0.4))
    i_inj = (s_unit * spec.s_nom / BASE.s_base / v).conjugate()
    ci = ibr_equilibrium(spec, v, i_inj, BASE)
    return ibr_model(version), ci.x, ci.u, ibr_parameters(spec, BASE, abs(v))


# ---------------------------------------------------------------------------
# interconnection oracle

KINDS = (PortKind.P_REF, PortKind.CURRENT)


def random_block(rng, label, max_states=3):
    n = int(rng.integers(0, max_states + 1))
    ins = [Port(f"u{k}", KINDS[int(rng.integers(2))]) for k in range(int(rng.integers(1, 3)))]
    outs = [Port(f"y{k}", KINDS[int(rng.integers(2))]) for k in range(int(rng.integers(1, 3)))]
    m, p = sum(q.size for q in ins), sum(q.size for q in outs)
    A = rng.normal(size=(n, n)) - 2.0 * np.eye(n)
    B = rng.normal(size=(n, m))
    C = rng.normal(size=(p, n))
    D = 0.3 * rng.normal(size=(p, m)) * (rng.uniform() < 0.7)
    return StateSpaceBlock(label, A, B, C, D, ins, outs)


def random_graph(rng, max_blocks=6):
    """Blocks plus a graph in which every input is driven exactly once."""
    blocks = [random_block(rng, f"b{k}") for k in range(int(rng.integers(1, max_blocks + 1)))]
    outs = [(b.label, p.name, p.kind) for b in blocks for p in b.outputs]
    g = ConnectionGraph()
    for b in blocks:
        for p in b.inputs:
            same = [o for o in outs if o[2] == p.kind]
            r = rng.uniform()
            if not same or r < 0.25:
                g.expose_input((b.label, p.name))
            elif p.kind == PortKind.CURRENT and r < 0.6:
                k = int(rng.integers(1, min(3, len(same)) + 1))
                pick = rng.choice(len(same), size=k, replace=False)
                g.junction((b.label, p.name),
                           [((same[j][0], same[j][1]), float(rng.choice([-1.0, 1.0]))) for j in pick])
            else:
                o = same[int(rng.integers(len(same)))]
                g.wire((o[0], o[1]), (b.label, p.name))
    if not g.external_inputs:
        b = blocks[0]
        # re-drive the first input externally so there is something to excite
        p = b.inputs[0]
        g.wires = [w for w in g.wires if w[1] != (b.label, p.name)]
        g.junctions = [j for j in g.junctions if j.target != (b.label, p.name)]
        g.expose_input((b.label, p.name))
    for o in outs:
        if rng.uniform() < 0.5:
            g.expose_output((o[0], o[1]))
    if not g.external_outputs:
        g.expose_output((outs[0][0], outs[0][1]))
    return blocks, g


def eliminate_brute_force(blocks, graph, s):
    """Transfer matrix from exposed inputs to exposed outputs at complex frequency s.

    Unknowns are every block input and output channel; the equations are the
    block transfer relations plus one equation per driven input.
    """
    by = {b.label: b for b in blocks}
    u_pos, y_pos = {}, {}
    k = 0
    for b in blocks:
        for p in b.inputs:
            u_pos[(b.label, p.name)] = list(range(k, k + p.size))
            k += p.size
    nu = k
    for b in blocks:
        for p in b.outputs:
            y_pos[(b.label, p.name)] = list(range(k, k + p.size))
            k += p.size
    n = k
    w_cols = []
    for ep in graph.external_inputs:
        w_cols += u_pos[ep]
    rows, rhs = [], []
    for b in blocks:
        G = b.transfer(s)
        ucols = [c for p in b.inputs for c in u_pos[(b.label, p.name)]]
        ycols = [c for p in b.outputs for c in y_pos[(b.label, p.name)]]
        for r in range(len(ycols)):
            row = np.zeros(n, complex)
            row[ycols[r]] = 1.0
            row[ucols] -= G[r]
            rows.append(row)
            rhs.append(np.zeros(len(w_cols), complex))
    for src, dst in graph.wires:
        for a, c in zip(u_pos[dst], y_pos[src]):
            row = np.zeros(n, complex)
            row[a], row[c] = 1.0, -1.0
            rows.append(row)
            rhs.append(np.zeros(len(w_cols), complex))
    for j in graph.junctions:
        for ch, a in enumerate(u_pos[j.target]):
            row = np.zeros(n, complex)
            row[a] = 1.0
            for ep, sign in j.members:
                row[y_pos[ep][ch]] -= sign
            rows.append(row)
            rhs.append(np.zeros(len(w_cols), complex))
    for col, a in enumerate(w_cols):
        row = np.zeros(n, complex)
        row[a] = 1.0
        e = np.zeros(len(w_cols), complex)
        e[col] = 1.0
        rows.append(row)
        rhs.append(e)
    sol = np.linalg.solve(np.array(rows), np.array(rhs))
    out = [c for ep in graph.external_outputs for c in y_pos[ep]]
    assert nu <= n
    return sol[out]
