"""Immutable LTI block with named, dimensioned ports."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class PortKind(str, enum.Enum):
    VOLTAGE = "voltage"
    CURRENT = "current"
    P_REF = "p_ref"
    Q_REF = "q_ref"
    V_REF = "v_ref"
    I_DC = "i_dc"


_DQ_KINDS = (PortKind.VOLTAGE, PortKind.CURRENT)


@dataclass(frozen=True)
class Port:
    name: str
    kind: PortKind
    units: str = "pu"

    def __post_init__(self):
        object.__setattr__(self, "kind", PortKind(self.kind))

    @property
    def size(self) -> int:
        return 2 if self.kind in _DQ_KINDS else 1

    def channels(self) -> list[str]:
        if self.size == 2:
            return [f"{self.name}.d", f"{self.name}.q"]
        return [self.name]


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


def _offsets(ports: Sequence[Port]) -> dict[str, slice]:
    out, k = {}, 0
    for p in ports:
        out[p.name] = slice(k, k + p.size)
        k += p.size
    return out


@dataclass(frozen=True, eq=False)
class StateSpaceBlock:
    """x' = A x + B u, y = C x + D u around an operating point."""

    label: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    inputs: tuple[Port, ...]
    outputs: tuple[Port, ...]
    states: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inputs = tuple(self.inputs)
        outputs = tuple(self.outputs)
        m = sum(p.size for p in inputs)
        p = sum(q.size for q in outputs)
        n = np.asarray(self.A).shape[0] if np.size(self.A) else 0
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "A", _frozen(self.A, (n, n)))
        object.__setattr__(self, "B", _frozen(self.B, (n, m)))
        object.__setattr__(self, "C", _frozen(self.C, (p, n)))
        object.__setattr__(self, "D", _frozen(self.D, (p, m)))
        states = tuple(self.states) or tuple(f"x{i}" for i in range(n))
        if len(states) != n:
            raise ValueError(f"{self.label}: {len(states)} state names for {n} states")
        object.__setattr__(self, "states", states)
        for group, ports in (("input", inputs), ("output", outputs)):
            names = [q.name for q in ports]
            if len(set(names)) != len(names):
                raise ValueError(f"{self.label}: duplicate {group} port name")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def input_slice(self, name: str) -> slice:
        try:
            return _offsets(self.inputs)[name]
        except KeyError:
            raise KeyError(f"{self.label} has no input port {name!r}") from None

    def output_slice(self, name: str) -> slice:
        try:
            return _offsets(self.outputs)[name]
        except KeyError:
            raise KeyError(f"{self.label} has no output port {name!r}") from None

    def input_port(self, name: str) -> Port:
        return next(p for p in self.inputs if p.name == name)

    def output_port(self, name: str) -> Port:
        return next(p for p in self.outputs if p.name == name)

    def transfer(self, s: complex) -> np.ndarray:
        """Frequency response C (sI - A)^-1 B + D."""
        n = self.n_states
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def dc_gain(self) -> np.ndarray:
        return self.transfer(0.0).real

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n_states else np.empty(0, complex)

    def relabel(self, label: str) -> "StateSpaceBlock":
        return StateSpaceBlock(label, self.A, self.B, self.C, self.D, self.inputs,
                               self.outputs, self.states, dict(self.meta))

    def without_states(self, names: Iterable[str]) -> "StateSpaceBlock":
        """Delete states (rows and columns) by name."""
        drop = set(names)
        keep = [i for i, s in enumerate(self.states) if s not in drop]
        return StateSpaceBlock(
            self.label, self.A[np.ix_(keep, keep)], self.B[keep], self.C[:, keep], self.D,
            self.inputs, self.outputs, tuple(self.states[i] for i in keep), dict(self.meta),
        )

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        def port(p: Port):
            return {"name": p.name, "kind": p.kind.value, "units": p.units}

        return {
            "label": self.label,
            "states": list(self.states),
            "inputs": [port(p) for p in self.inputs],
            "outputs": [port(p) for p in self.outputs],
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceBlock":
        n = len(d["states"])
        ports_in = tuple(Port(p["name"], p["kind"], p.get("units", "pu")) for p in d["inputs"])
        ports_out = tuple(Port(p["name"], p["kind"], p.get("units", "pu")) for p in d["outputs"])
        m = sum(p.size for p in ports_in)
        q = sum(p.size for p in ports_out)

        def mat(key, shape):
            a = np.array(d[key], dtype=float)
            return a.reshape(shape)

        return cls(d["label"], mat("A", (n, n)), mat("B", (n, m)), mat("C", (q, n)), mat("D", (q, m)),
                   ports_in, ports_out, tuple(d["states"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "StateSpaceBlock":
        return cls.from_dict(json.loads(text))


def rotation(theta: float) -> np.ndarray:
    """dq rotation: (x_d + j x_q) * exp(j theta) as a 2x2 real matrix."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


J = np.array([[0.0, -1.0], [1.0, 0.0]])  # multiplication by j


@dataclass(frozen=True, eq=False)
class ComponentInit:
    """Equilibrium of one nonlinear component: states, input values and the terminal phasors."""

    label: str
    states: tuple[str, ...]
    x: np.ndarray
    inputs: tuple[str, ...]
    u: np.ndarray
    v: complex = 0j
    i: complex = 0j
    residual: float = 0.0

    def state(self, name: str) -> float:
        return float(self.x[self.states.index(name)])

    def as_dict(self) -> dict:
        return {
            "states": dict(zip(self.states, map(float, self.x))),
            "inputs": dict(zip(self.inputs, map(float, self.u))),
            "residual": self.residual,
        }


class NonEquilibriumError(ValueError):
    """A linearization point is not a steady state of the component."""


class InfeasibleOperatingPoint(ValueError):
    """No admissible steady state exists for a component (e.g. exciter limits)."""
