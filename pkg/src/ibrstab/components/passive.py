"""Linear network elements in the global dq frame (system base).

Inductive branch:  (x/w) di/dt = v - r i - x J i
Capacitive node:   (b/w) dv/dt = i - b J v
with J the 90 degree rotation, so phasor steady states are v = (r + jx) i and
i = jb v.
"""
from __future__ import annotations

import math

import numpy as np

from ..netmodel import BranchSpec, LoadSpec, PerUnitBase, TransformerSpec
from .block import J, Port, PortKind, StateSpaceBlock

I2 = np.eye(2)
Z2 = np.zeros((2, 2))


def _v(name):
    return Port(name, PortKind.VOLTAGE)


def _i(name):
    return Port(name, PortKind.CURRENT)


def _dq(prefix: str) -> tuple[str, str]:
    return (f"{prefix}_d", f"{prefix}_q")


def rl_block(label: str, r: float, x: float, omega_b: float, two_terminal: bool = True) -> StateSpaceBlock:
    """Series R-L. Two-terminal form: inputs v_from, v_to; outputs the currents
    absorbed at each end. One-terminal form (to ground): input v, output i."""
    if x < 0:
        raise ValueError(f"{label}: negative reactance")
    if x == 0.0:
        if r <= 0:
            raise ValueError(f"{label}: zero impedance")
        g = I2 / r
        if two_terminal:
            D = np.block([[g, -g], [-g, g]])
            return StateSpaceBlock(label, np.zeros((0, 0)), np.zeros((0, 4)), np.zeros((4, 0)), D,
                                   (_v("v_from"), _v("v_to")), (_i("i_from"), _i("i_to")), ())
        return StateSpaceBlock(label, np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), g,
                               (_v("v"),), (_i("i"),), ())
    A = -(omega_b * r / x) * I2 - omega_b * J
    k = omega_b / x
    if two_terminal:
        B = np.hstack([k * I2, -k * I2])
        C = np.vstack([I2, -I2])
        return StateSpaceBlock(label, A, B, C, np.zeros((4, 4)), (_v("v_from"), _v("v_to")),
                               (_i("i_from"), _i("i_to")), _dq("i"))
    return StateSpaceBlock(label, A, k * I2, I2, np.zeros((2, 2)), (_v("v"),), (_i("i"),), _dq("i"))


def capacitor_block(label: str, b: float, omega_b: float) -> StateSpaceBlock:
    """Shunt capacitor to ground: input net current into the node, output node voltage."""
    if not b > 0:
        raise ValueError(f"{label}: capacitor susceptance must be > 0")
    A = -omega_b * J
    B = (omega_b / b) * I2
    return StateSpaceBlock(label, A, B, I2, np.zeros((2, 2)), (_i("i"),), (_v("v"),), _dq("v"))


def line_blocks(spec: BranchSpec, base: PerUnitBase):
    """Pi-line as (series RL, capacitor at from end, capacitor at to end); absent capacitors are None."""
    rl = rl_block(spec.id, spec.r, spec.x, base.omega_base)
    if spec.b_shunt <= 0.0:
        return rl, None, None
    half = 0.5 * spec.b_shunt
    return (rl, capacitor_block(f"{spec.id}.c_from", half, base.omega_base),
            capacitor_block(f"{spec.id}.c_to", half, base.omega_base))


def transformer_block(spec: TransformerSpec, base: PerUnitBase) -> StateSpaceBlock:
    """T-circuit: winding halves i1 (from side into the middle node), i2 (middle node
    to the to side) and magnetizing current im through x_m; r_fe carries the rest."""
    p = spec.on_base(base.s_base)
    w = base.omega_base
    r1, x1, r2, x2, rfe, xm = p["r1"], p["x1"], p["r2"], p["x2"], p["r_fe"], p["x_m"]
    if math.isinf(rfe) and math.isinf(xm):
        return rl_block(spec.id, r1 + r2, x1 + x2, w)
    if math.isinf(rfe):
        raise ValueError(f"{spec.id}: a magnetizing reactance needs a finite r_fe")
    # v_mid = rfe (i1 - i2 - im)
    Vm = rfe * np.hstack([I2, -I2, -I2])
    if math.isinf(xm):
        Vm = rfe * np.hstack([I2, -I2])
    n = Vm.shape[1]
    A = np.zeros((n, n))
    B = np.zeros((n, 4))
    A[0:2, 0:2] = -(w * r1 / x1) * I2 - w * J
    A[0:2] -= (w / x1) * Vm
    B[0:2, 0:2] = (w / x1) * I2
    A[2:4, 2:4] = -(w * r2 / x2) * I2 - w * J
    A[2:4] += (w / x2) * Vm
    B[2:4, 2:4] = -(w / x2) * I2
    states = [*_dq("i1"), *_dq("i2")]
    if n == 6:
        A[4:6, 4:6] = -w * J
        A[4:6] += (w / xm) * Vm
        states += _dq("im")
    C = np.zeros((4, n))
    C[0:2, 0:2] = I2
    C[2:4, 2:4] = -I2
    return StateSpaceBlock(spec.id, A, B, C, np.zeros((4, 4)), (_v("v_from"), _v("v_to")),
                           (_i("i_from"), _i("i_to")), tuple(states))


def load_impedance(spec: LoadSpec, v_mag: float, s_base: float) -> complex:
    """Series R + jX drawing the load's (P, Q) at voltage magnitude v_mag."""
    if spec.q < 0:
        raise ValueError(f"{spec.id}: capacitive load is outside the series R-L model class")
    s = complex(spec.p, spec.q) / s_base
    return v_mag * v_mag / s.conjugate()


def load_block(spec: LoadSpec, sol, base: PerUnitBase) -> StateSpaceBlock:
    """Constant R-L load sized at the load-flow voltage (``sol`` may be a solution or a magnitude)."""
    v_mag = float(sol) if isinstance(sol, (int, float)) else abs(sol.voltage(spec.bus))
    z = load_impedance(spec, v_mag, base.s_base)
    return rl_block(spec.id, z.real, z.imag, base.omega_base, two_terminal=False)
