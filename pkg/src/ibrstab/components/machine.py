"""Synchronous generator: two-axis flux model with damper windings, steam
governor/turbine and IEEE type 1 exciter.

Machine quantities are pu on the machine rating; the terminal current input is
the injected current on the system base in the global frame, the output is the
terminal voltage in the global frame. The machine frame sits at
exp(j(delta - pi/2)) relative to the global frame.
"""
from __future__ import annotations

import functools
import math

import numpy as np
import sympy as sp

from ..netmodel import PerUnitBase, SgSpec
from ._symbolic import CompiledModel
from .block import ComponentInit, InfeasibleOperatingPoint, NonEquilibriumError, Port, PortKind, StateSpaceBlock

RESIDUAL_TOL = 1e-8

MACHINE_PARAMS = ("rs", "xd", "xq", "xd_t", "xq_t", "xd_st", "xq_st", "xl",
                  "td0_t", "tq0_t", "td0_st", "tq0_st", "h", "d")
GOVERNOR_PARAMS = ("droop", "t_sr", "t_sm", "t_ch", "t_rh", "f_hp")
EXCITER_PARAMS = ("ka", "ta", "ke", "te", "kf", "tf")


@functools.lru_cache(maxsize=None)
def sg_model(governor: bool, exciter: bool) -> CompiledModel:
    P = {n: sp.Symbol(n) for n in (*MACHINE_PARAMS, *GOVERNOR_PARAMS, *EXCITER_PARAMS, "k_base", "w_b")}
    names = ["delta", "omega", "eq_t", "ed_t", "psi1d", "psi2q"]
    if governor:
        names += ["x_sr", "x_sm", "x_ch", "x_rh"]
    if exciter:
        names += ["efd", "vr", "rf"]
    X = {n: sp.Symbol(n) for n in names}
    U = [sp.Symbol(n) for n in ("p_ref", "v_ref", "i_d", "i_q")]
    p_ref, v_ref, i_gd, i_gq = U

    delta, omega = X["delta"], X["omega"]
    s, c = sp.sin(delta), sp.cos(delta)
    a, b = P["k_base"] * i_gd, P["k_base"] * i_gq
    Id = a * s - b * c
    Iq = a * c + b * s

    xd, xq, xdt, xqt, xst, xl = (P[n] for n in ("xd", "xq", "xd_t", "xq_t", "xd_st", "xl"))
    kd1 = (xst - xl) / (xdt - xl)
    kd2 = (xdt - xst) / (xdt - xl)
    kq1 = (P["xq_st"] - xl) / (xqt - xl)
    kq2 = (xqt - P["xq_st"]) / (xqt - xl)
    psi_d = kd1 * X["eq_t"] + kd2 * X["psi1d"]
    psi_q = -kq1 * X["ed_t"] + kq2 * X["psi2q"]
    vd = -P["rs"] * Id + xst * Iq - psi_q
    vq = -P["rs"] * Iq - xst * Id + psi_d
    te = psi_d * Iq - psi_q * Id
    vt = sp.sqrt(vd**2 + vq**2)

    if governor:
        pm = P["f_hp"] * X["x_ch"] + (1 - P["f_hp"]) * X["x_rh"]
    else:
        pm = p_ref
    efd = X["efd"] if exciter else v_ref

    t1 = (xdt - xst) / (xdt - xl) ** 2
    t2 = (xqt - P["xq_st"]) / (xqt - xl) ** 2
    f = [
        P["w_b"] * (omega - 1),
        (pm - te - P["d"] * (omega - 1)) / (2 * P["h"]),
        (-X["eq_t"] - (xd - xdt) * (Id - t1 * (X["psi1d"] + (xdt - xl) * Id - X["eq_t"])) + efd) / P["td0_t"],
        (-X["ed_t"] + (xq - xqt) * (Iq - t2 * (X["psi2q"] + (xqt - xl) * Iq + X["ed_t"]))) / P["tq0_t"],
        (-X["psi1d"] + X["eq_t"] - (xdt - xl) * Id) / P["td0_st"],
        (-X["psi2q"] - X["ed_t"] - (xqt - xl) * Iq) / P["tq0_st"],
    ]
    if governor:
        f += [
            (p_ref - (omega - 1) / P["droop"] - X["x_sr"]) / P["t_sr"],
            (X["x_sr"] - X["x_sm"]) / P["t_sm"],
            (X["x_sm"] - X["x_ch"]) / P["t_ch"],
            (X["x_ch"] - X["x_rh"]) / P["t_rh"],
        ]
    if exciter:
        ka, kf, tf = P["ka"], P["kf"], P["tf"]
        f += [
            (-P["ke"] * X["efd"] + X["vr"]) / P["te"],
            (-X["vr"] + ka * X["rf"] - ka * kf / tf * X["efd"] + ka * (v_ref - vt)) / P["ta"],
            (-X["rf"] + kf / tf * X["efd"]) / tf,
        ]
    g = [vd * s + vq * c, vq * s - vd * c]
    return CompiledModel([X[n] for n in names], U, list(P.values()), f, g)


def _model_for(spec: SgSpec) -> CompiledModel:
    return sg_model(spec.governor is not None, spec.exciter is not None)


def _param_values(spec: SgSpec, base: PerUnitBase) -> dict:
    vals = {n: getattr(spec.machine, n) for n in MACHINE_PARAMS}
    for n in GOVERNOR_PARAMS:
        vals[n] = getattr(spec.governor, n) if spec.governor else 1.0
    for n in EXCITER_PARAMS:
        vals[n] = getattr(spec.exciter, n) if spec.exciter else 1.0
    vals["k_base"] = base.s_base / spec.s_nom
    vals["w_b"] = base.omega_base
    return vals


def sg_parameters(spec: SgSpec, base: PerUnitBase) -> list[float]:
    return _model_for(spec).params(_param_values(spec, base))


def sg_equilibrium(spec: SgSpec, v: complex, i_inj: complex, base: PerUnitBase) -> ComponentInit:
    """Steady state from the terminal voltage and injected current (system base, global frame)."""
    m = spec.machine
    k = base.s_base / spec.s_nom
    im = k * i_inj
    e_q = v + complex(m.rs, m.xq) * im
    delta = math.atan2(e_q.imag, e_q.real)
    to_machine = complex(math.sin(delta), math.cos(delta))  # exp(-j(delta - pi/2))
    I = im * to_machine
    V = v * to_machine
    Id, Iq, Vd, Vq = I.real, I.imag, V.real, V.imag
    ed_t = (m.xq - m.xq_t) * Iq
    eq_t = Vq + m.rs * Iq + m.xd_t * Id
    psi1d = eq_t - (m.xd_t - m.xl) * Id
    psi2q = -ed_t - (m.xq_t - m.xl) * Iq
    efd = eq_t + (m.xd - m.xd_t) * Id
    kd1 = (m.xd_st - m.xl) / (m.xd_t - m.xl)
    kq1 = (m.xq_st - m.xl) / (m.xq_t - m.xl)
    psi_d = kd1 * eq_t + (1 - kd1) * psi1d
    psi_q = -kq1 * ed_t + (1 - kq1) * psi2q
    te = psi_d * Iq - psi_q * Id
    x = {"delta": delta, "omega": 1.0, "eq_t": eq_t, "ed_t": ed_t, "psi1d": psi1d, "psi2q": psi2q}
    if spec.governor:
        x.update(x_sr=te, x_sm=te, x_ch=te, x_rh=te)
    if spec.exciter:
        e = spec.exciter
        vr = e.ke * efd
        if not e.vr_min <= vr <= e.vr_max:
            raise InfeasibleOperatingPoint(
                f"{spec.id}: regulator output {vr:.4f} pu outside [{e.vr_min}, {e.vr_max}]")
        x.update(efd=efd, vr=vr, rf=e.kf / e.tf * efd)
        v_ref = abs(v) + e.ke * efd / e.ka
    else:
        v_ref = efd
    model = _model_for(spec)
    xv = np.array([x[n] for n in model.state_names])
    uv = np.array([te, v_ref, i_inj.real, i_inj.imag])
    p = sg_parameters(spec, base)
    res = float(np.max(np.abs(model.f(xv, uv, p))))
    y = model.g(xv, uv, p)
    res = max(res, abs(complex(y[0], y[1]) - v))
    if res > RESIDUAL_TOL:
        raise NonEquilibriumError(f"{spec.id}: steady-state residual {res:.3e}")
    return ComponentInit(spec.id, model.state_names, xv, model.input_names, uv, v, i_inj, res)


def linearize_sg(spec: SgSpec, init: ComponentInit, base: PerUnitBase) -> StateSpaceBlock:
    """Jacobian block with inputs (p_ref, v_ref, i) and output v, all global-frame."""
    model = _model_for(spec)
    p = sg_parameters(spec, base)
    res = float(np.max(np.abs(model.f(init.x, init.u, p))))
    if res > RESIDUAL_TOL:
        raise NonEquilibriumError(f"{spec.id}: linearization point is not an equilibrium ({res:.3e})")
    A, B, C, D = model.jacobians(init.x, init.u, p)
    ports_in = (Port("p_ref", PortKind.P_REF), Port("v_ref", PortKind.V_REF), Port("i", PortKind.CURRENT))
    ports_out = (Port("v", PortKind.VOLTAGE),)
    return StateSpaceBlock(spec.id, A, B, C, D, ports_in, ports_out, model.state_names,
                           {"kind": "sg"})
