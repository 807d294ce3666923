"""Eigenvalue analysis and the multi-scenario stability oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .assembly import AssembledSystem, assemble_rest_of_grid, connect_unit, rotation_direction
from .components.block import ComponentInit, InfeasibleOperatingPoint, NonEquilibriumError, StateSpaceBlock
from .components.inverter import ibr_equilibrium, linearize_ibr
from .loadflow import LoadFlowError, init_dynamic_states, solve_newton_raphson
from .netmodel import GAIN_NAMES, IbrSpec, NetworkModel, apply_scenario, replace_sg_with_ibr
from .thevenin import compute_thevenin, thevenin_grid_block, unit_operating_point

DEFAULT_EPS = 1e-8
GRIDS = ("full", "thev-loads", "thev-noloads")


class EigenError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Mode:
    eigenvalue: complex
    freq_hz: float
    damping: float
    participation: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict:
        return {
            "re": self.eigenvalue.real, "im": self.eigenvalue.imag, "freq_hz": self.freq_hz,
            "damping": self.damping,
            "participation": [{"state": s, "factor": f} for s, f in self.participation],
        }


@dataclass(frozen=True, eq=False)
class EigenReport:
    eigenvalues: np.ndarray
    modes: tuple[Mode, ...]
    deflated: tuple[complex, ...] = ()

    @property
    def max_real(self) -> float:
        """Largest real part after removing declared structural modes."""
        return max(m.eigenvalue.real for m in self.modes) if self.modes else -math.inf

    def as_dict(self) -> dict:
        return {"n_states": int(self.eigenvalues.size), "max_real": self.max_real,
                "deflated": [[z.real, z.imag] for z in self.deflated],
                "modes": [m.as_dict() for m in self.modes]}


def _check_finite(A: np.ndarray):
    if not np.all(np.isfinite(A)):
        raise EigenError("system matrix has non-finite entries")


def _rotation_holds(A: np.ndarray, r: np.ndarray | None, eps: float) -> bool:
    if r is None or not np.any(r):
        return False
    scale = np.linalg.norm(A, ord=np.inf) * np.linalg.norm(r)
    return np.linalg.norm(A @ r) <= eps * max(scale, 1.0)


def deflated_matrix(A: np.ndarray, r: np.ndarray | None, eps: float = DEFAULT_EPS):
    """Restrict A to the orthogonal complement of a declared null direction r.

    When A r = 0 the spectrum of A is {0} plus that of Q^T A Q with Q an
    orthonormal basis of r's complement. Returns (matrix, basis or None).
    """
    if not _rotation_holds(A, r, eps):
        return A, None
    Q = scipy.linalg.null_space((r / np.linalg.norm(r))[None, :])
    return Q.T @ A @ Q, Q


def spectrum(sys: AssembledSystem | np.ndarray, eps: float = DEFAULT_EPS) -> tuple[np.ndarray, tuple[complex, ...]]:
    """Eigenvalues used for the verdict and the deflated structural zeros."""
    A = sys if isinstance(sys, np.ndarray) else sys.A
    r = None if isinstance(sys, np.ndarray) else sys.rotation_mode
    _check_finite(A)
    M, Q = deflated_matrix(A, r, eps)
    try:
        ev = scipy.linalg.eigvals(M, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenError(f"eigensolver failed: {exc}") from None
    return ev, ((0j,) if Q is not None else ())


def eigenvalues(sys: AssembledSystem | np.ndarray, top: int = 3, eps: float = DEFAULT_EPS) -> EigenReport:
    """Full spectrum with frequency, damping and the dominant states of each mode."""
    A = sys if isinstance(sys, np.ndarray) else sys.A
    labels = (tuple(f"x{i}" for i in range(A.shape[0])) if isinstance(sys, np.ndarray)
              else tuple(f"{c}.{s}" for c, s in sys.state_labels))
    _check_finite(A)
    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenError(f"eigensolver failed: {exc}") from None
    order = np.lexsort((w.imag, -w.real))
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    _, deflated = spectrum(sys, eps)
    skip = None
    if deflated:
        skip = int(np.argmin(np.abs(w)))
    modes = []
    for k in range(w.size):
        if k == skip:
            continue
        p = np.abs(vl[:, k].conj() * vr[:, k])
        tot = p.sum()
        p = p / tot if tot > 0 else p
        best = np.argsort(-p, kind="stable")[:top]
        lam = complex(w[k])
        mag = abs(lam)
        modes.append(Mode(lam, abs(lam.imag) / (2 * math.pi), -lam.real / mag if mag > 0 else 1.0,
                          tuple((labels[i], float(p[i])) for i in best)))
    return EigenReport(w, tuple(modes), deflated)


def is_stable(sys: AssembledSystem | np.ndarray, eps: float = DEFAULT_EPS) -> bool:
    """True iff every eigenvalue, apart from a declared structural zero, has Re < 0."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    ev, _ = spectrum(sys, eps)
    return bool(np.all(ev.real < 0))


# ---------------------------------------------------------------------------
# scenario-sweeping oracle


@dataclass(frozen=True)
class StabilityVerdict:
    s: int
    worst: Mapping[int, float]
    failing: tuple[int, ...]
    infeasible: bool = False
    reason: str = ""

    def as_dict(self) -> dict:
        return {"s": self.s, "worst": {str(k): v for k, v in self.worst.items()},
                "failing": list(self.failing), "infeasible": self.infeasible, "reason": self.reason}


@dataclass(frozen=True, eq=False)
class _ScenarioCase:
    scenario: int
    spec: IbrSpec
    init: ComponentInit
    grid: StateSpaceBlock
    rotation: np.ndarray | None  # over (unit states, grid states)


@dataclass(frozen=True, eq=False)
class SweepContext:
    """Everything is_ps_stable needs besides the gains under study."""

    net: NetworkModel
    bus: str
    grid: str
    scenarios: tuple[int, ...]
    base_spec: IbrSpec
    names: tuple[str, ...]
    cases: tuple[_ScenarioCase, ...] = ()
    failures: Mapping[int, str] = field(default_factory=dict)
    eps: float = DEFAULT_EPS

    @property
    def fixed_gains(self) -> dict:
        return {n: getattr(self.base_spec, n) for n in GAIN_NAMES}


def build_context(net: NetworkModel, grid: str = "full", scenarios: Sequence[int] | None = None,
                  bus: str = "10", ibr: IbrSpec | None = None, names: Sequence[str] = (),
                  eps: float = DEFAULT_EPS) -> SweepContext:
    """Load flows, equilibria and grid blocks per scenario, computed once per sweep.

    ``net`` may hold a machine or an inverter at ``bus``; a machine is swapped
    for ``ibr`` (default parameters when omitted). Gains do not move the
    equilibrium, so only the unit's Jacobian is recomputed per point.
    """
    if grid not in GRIDS:
        raise ValueError(f"unknown grid representation {grid!r}; choose from {', '.join(GRIDS)}")
    unknown = set(names) - set(GAIN_NAMES)
    if unknown:
        raise ValueError(f"unknown gain name(s): {', '.join(sorted(unknown))}")
    if net.sg_at(bus) is not None:
        net = replace_sg_with_ibr(net, bus, ibr or IbrSpec())
    elif ibr is not None:
        cur = net.ibr_at(bus)
        if cur is None:
            raise ValueError(f"no unit at bus {bus}")
        net = replace(net, ibrs=tuple(replace(ibr, id=g.id, bus=g.bus, s_nom=g.s_nom, unit_count=g.unit_count,
                                              p=g.p, v_set=g.v_set) if g.bus == bus else g for g in net.ibrs))
    scenarios = tuple(sorted(net.scenarios)) if scenarios is None else tuple(scenarios)
    cases, failures = [], {}
    for sc in scenarios:
        n = apply_scenario(net, sc)
        spec = n.ibr_at(bus)
        try:
            sol = solve_newton_raphson(n)
            if grid == "full":
                init = init_dynamic_states(n, sol)
                gblk, r_grid = assemble_rest_of_grid(n, init, sol, bus)
                ci = init[spec.id]
                r_unit = rotation_direction(tuple((spec.id, s) for s in ci.states), ci.x)
                rot = np.concatenate([r_unit, r_grid])
            else:
                eq = compute_thevenin(n, bus, grid == "thev-loads", sol)
                v, i = unit_operating_point(eq, sol.injection(spec.id))
                ci = ibr_equilibrium(spec, v, i, n.base)
                gblk = thevenin_grid_block(eq, n.base)
                rot = None
        except (LoadFlowError, InfeasibleOperatingPoint, NonEquilibriumError) as exc:
            failures[sc] = f"{type(exc).__name__}: {exc}"
            continue
        cases.append(_ScenarioCase(sc, spec, ci, gblk, rot))
    return SweepContext(net, bus, grid, scenarios, net.ibr_at(bus), tuple(names), tuple(cases), failures, eps)


def scenario_system(ctx: SweepContext, case: _ScenarioCase, gains: Mapping[str, float]) -> AssembledSystem:
    spec = case.spec.with_gains(**gains)
    unit = linearize_ibr(spec, case.init, ctx.net.base)
    sys = connect_unit(unit, case.grid)
    return replace(sys, rotation_mode=case.rotation)


def gains_of(ctx: SweepContext, rho: Sequence[float] | Mapping[str, float]) -> dict:
    if isinstance(rho, Mapping):
        return dict(rho)
    rho = list(rho)
    if len(rho) != len(ctx.names):
        raise ValueError(f"expected {len(ctx.names)} parameters ({', '.join(ctx.names)}), got {len(rho)}")
    return dict(zip(ctx.names, map(float, rho)))


def is_ps_stable(rho, ctx: SweepContext) -> StabilityVerdict:
    """Stable (s=1) iff the linearized system is stable in every scenario of the context."""
    if ctx.failures:
        return StabilityVerdict(0, {}, tuple(sorted(ctx.failures)), True,
                                "; ".join(f"scenario {k}: {v}" for k, v in sorted(ctx.failures.items())))
    gains = gains_of(ctx, rho)
    worst, failing = {}, []
    for case in ctx.cases:
        sys = scenario_system(ctx, case, gains)
        try:
            ev, _ = spectrum(sys, ctx.eps)
        except EigenError as exc:
            return StabilityVerdict(0, worst, (case.scenario,), True, str(exc))
        m = float(ev.real.max())
        worst[case.scenario] = m
        if not m < 0:
            failing.append(case.scenario)
    return StabilityVerdict(int(not failing), worst, tuple(failing))
