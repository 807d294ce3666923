"""Compile nonlinear component equations once into numeric residuals and exact Jacobians."""
from __future__ import annotations

import numpy as np
import sympy as sp


class CompiledModel:
    """dx/dt = f(x, u; p), y = g(x, u; p) with Jacobians derived symbolically."""

    def __init__(self, states, inputs, params, f, g):
        self.state_names = tuple(str(s) for s in states)
        self.input_names = tuple(str(s) for s in inputs)
        self.param_names = tuple(str(s) for s in params)
        f = sp.Matrix(f)
        g = sp.Matrix(g)
        xs, us = sp.Matrix(states), sp.Matrix(inputs)
        args = [list(states), list(inputs), list(params)]
        self._f = sp.lambdify(args, f, modules="numpy", cse=True)
        self._g = sp.lambdify(args, g, modules="numpy", cse=True)
        jac = [f.jacobian(xs), f.jacobian(us), g.jacobian(xs), g.jacobian(us)]
        self._jac = sp.lambdify(args, jac, modules="numpy", cse=True)

    def params(self, values: dict) -> list[float]:
        return [float(values[n]) for n in self.param_names]

    def f(self, x, u, p) -> np.ndarray:
        return np.asarray(self._f(list(x), list(u), p), dtype=float).ravel()

    def g(self, x, u, p) -> np.ndarray:
        return np.asarray(self._g(list(x), list(u), p), dtype=float).ravel()

    def jacobians(self, x, u, p):
        return [np.atleast_2d(np.asarray(m, dtype=float)) for m in self._jac(list(x), list(u), p)]
