"""Aggregated grid-following inverter with LC filter, SRF-PLL, dq current control
and, for versions 2 and 3, a dc-link voltage loop.

Per-unit on the plant rating. The filter states are global-frame; the control
acts in the PLL frame. Version 1 takes the active-power reference as an input;
versions 2 and 3 take the dc source current instead and generate the
active-power reference from a PI on v_dc (version 2) or v_dc^2 (version 3).
"""
from __future__ import annotations

import cmath
import functools
import math
import warnings

import numpy as np
import sympy as sp

from ..netmodel import IbrSpec, PerUnitBase
from ._symbolic import CompiledModel
from .block import ComponentInit, NonEquilibriumError, Port, PortKind, StateSpaceBlock

RESIDUAL_TOL = 1e-8
DC_STATES = ("v_dc", "x_dc")


@functools.lru_cache(maxsize=None)
def ibr_model(version: int) -> CompiledModel:
    if version not in (1, 2, 3):
        raise ValueError(f"unknown IBR version {version!r}")
    pnames = ("r", "l", "c_f", "r_f", "kp_pll", "ki_pll", "kp_i", "ki_i", "kp_dc", "ki_dc",
              "tau_dc", "k_base", "w_b", "v_pcc")
    P = {n: sp.Symbol(n) for n in pnames}
    names = ["iL_d", "iL_q", "vc_d", "vc_q", "theta", "x_pll", "g_d", "g_q"]
    if version > 1:
        names += list(DC_STATES)
    X = {n: sp.Symbol(n) for n in names}
    first = "p_ref" if version == 1 else "i_dc"
    U = [sp.Symbol(n) for n in (first, "q_ref", "i_d", "i_q")]
    u0, q_ref, i_d, i_q = U

    w, xl, bf, rf = P["w_b"], P["l"], P["c_f"], P["r_f"]
    iod, ioq = P["k_base"] * i_d, P["k_base"] * i_q
    iLd, iLq, vcd, vcq = X["iL_d"], X["iL_q"], X["vc_d"], X["vc_q"]
    vod = vcd + rf * (iLd - iod)
    voq = vcq + rf * (iLq - ioq)
    c, s = sp.cos(X["theta"]), sp.sin(X["theta"])
    vld, vlq = c * vod + s * voq, -s * vod + c * voq
    ild, ilq = c * iLd + s * iLq, -s * iLd + c * iLq

    if version == 1:
        p_ref = u0
    elif version == 2:
        p_ref = P["kp_dc"] * (X["v_dc"] - 1) + X["x_dc"]
    else:
        p_ref = P["kp_dc"] * (X["v_dc"] ** 2 - 1) + X["x_dc"]
    # power-to-current transformation on the stiff (constant) PCC amplitude
    ed = p_ref / P["v_pcc"] - ild
    eq = -q_ref / P["v_pcc"] - ilq
    ucd = P["kp_i"] * ed + X["g_d"] + vld - xl * ilq
    ucq = P["kp_i"] * eq + X["g_q"] + vlq + xl * ild
    vcv_d, vcv_q = c * ucd - s * ucq, s * ucd + c * ucq

    f = [
        w / xl * (vcv_d - P["r"] * iLd - vod + xl * iLq),
        w / xl * (vcv_q - P["r"] * iLq - voq - xl * iLd),
        w / bf * (iLd - iod + bf * vcq),
        w / bf * (iLq - ioq - bf * vcd),
        w * (P["kp_pll"] * vlq + X["x_pll"]),
        P["ki_pll"] * vlq,
        P["ki_i"] * ed,
        P["ki_i"] * eq,
    ]
    if version > 1:
        p_cv = vcv_d * iLd + vcv_q * iLq
        f.append((u0 * X["v_dc"] - p_cv) / (P["tau_dc"] * X["v_dc"]))
        err = X["v_dc"] - 1 if version == 2 else X["v_dc"] ** 2 - 1
        f.append(P["ki_dc"] * err)
    g = [vod, voq]
    return CompiledModel([X[n] for n in names], U, list(P.values()), f, g)


def ibr_parameters(spec: IbrSpec, base: PerUnitBase, v_pcc: float) -> list[float]:
    kp_dc, ki_dc = (spec.kp_2dc, spec.ki_2dc) if spec.version == 3 else (spec.kp_dc, spec.ki_dc)
    vals = {
        "r": spec.r, "l": spec.l, "c_f": spec.c_f, "r_f": spec.r_f,
        "kp_pll": spec.kp_pll, "ki_pll": spec.ki_pll, "kp_i": spec.kp_i, "ki_i": spec.ki_i,
        "kp_dc": kp_dc, "ki_dc": ki_dc, "tau_dc": spec.dc_time_constant(),
        "k_base": base.s_base / spec.s_nom, "w_b": base.omega_base, "v_pcc": v_pcc,
    }
    return ibr_model(spec.version).params(vals)


def ibr_equilibrium(spec: IbrSpec, v: complex, i_inj: complex, base: PerUnitBase) -> ComponentInit:
    """Steady state delivering ``i_inj`` (system base) at terminal voltage ``v``.

    The PLL locks on v, so the local q-axis voltage is zero. The power
    references are those that reproduce the injection at this point, and the
    power-to-current transformation uses |v| as its constant PCC amplitude.
    """
    k = base.s_base / spec.s_nom
    io = k * i_inj
    vc = v / complex(1.0, spec.c_f * spec.r_f)
    iL = io + 1j * spec.c_f * vc
    theta = cmath.phase(v)
    rot = cmath.exp(-1j * theta)
    vl, il = v * rot, iL * rot
    vcv = v + complex(spec.r, spec.l) * iL
    ucl = vcv * rot
    p_ref = vl.real * il.real
    q_ref = -vl.real * il.imag
    x = {
        "iL_d": iL.real, "iL_q": iL.imag, "vc_d": vc.real, "vc_q": vc.imag,
        "theta": theta, "x_pll": 0.0,
        "g_d": ucl.real - vl.real + spec.l * il.imag,
        "g_q": ucl.imag - vl.imag - spec.l * il.real,
        "v_dc": 1.0, "x_dc": p_ref,
    }
    model = ibr_model(spec.version)
    p_cv = (vcv * iL.conjugate()).real
    first = p_ref if spec.version == 1 else p_cv
    xv = np.array([x[n] for n in model.state_names])
    uv = np.array([first, q_ref, i_inj.real, i_inj.imag])
    p = ibr_parameters(spec, base, abs(v))
    res = float(np.max(np.abs(model.f(xv, uv, p))))
    y = model.g(xv, uv, p)
    res = max(res, abs(complex(y[0], y[1]) - v))
    if res > RESIDUAL_TOL:
        raise NonEquilibriumError(f"{spec.id}: steady-state residual {res:.3e}")
    return ComponentInit(spec.id, model.state_names, xv, model.input_names, uv, v, i_inj, res)


def linearize_ibr(spec: IbrSpec, init: ComponentInit, base: PerUnitBase) -> StateSpaceBlock:
    spec.validate()
    model = ibr_model(spec.version)
    p = ibr_parameters(spec, base, abs(init.v))
    if tuple(init.states) != model.state_names:
        raise NonEquilibriumError(f"{spec.id}: initial state set does not match version {spec.version}")
    res = float(np.max(np.abs(model.f(init.x, init.u, p))))
    if res > RESIDUAL_TOL:
        raise NonEquilibriumError(f"{spec.id}: linearization point is not an equilibrium ({res:.3e})")
    A, B, C, D = model.jacobians(init.x, init.u, p)
    first = Port("p_ref", PortKind.P_REF) if spec.version == 1 else Port("i_dc", PortKind.I_DC)
    ports_in = (first, Port("q_ref", PortKind.Q_REF), Port("i", PortKind.CURRENT))
    return StateSpaceBlock(spec.id, A, B, C, D, ports_in, (Port("v", PortKind.VOLTAGE),),
                           model.state_names, {"kind": "ibr", "version": spec.version})


def modulus_optimum_gains(spec: IbrSpec, tau: float, base: PerUnitBase | None = None) -> tuple[float, float]:
    """Current-loop PI gains k_p = L/tau, k_i = R/tau with L in henries, in pu.

    Converting L [H] / tau [s] (ohm) to pu divides by the impedance base, so
    k_p = l_pu / (omega_base * tau) while k_i = r_pu / tau keeps 1/s.
    """
    if not 0.5e-3 <= tau <= 5e-3:
        warnings.warn(f"tau = {tau:g} s outside the usual 0.5-5 ms range", stacklevel=2)
    if not tau > 0:
        raise ValueError("tau must be > 0")
    omega_b = base.omega_base if base is not None else 2.0 * math.pi * 50.0
    return spec.l / (omega_b * tau), spec.r / tau
