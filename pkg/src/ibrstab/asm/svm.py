"""RBF support vector classifier with Platt-calibrated probabilities.

Inputs are mapped onto the unit cube of the parameter domain before
fitting. The sigmoid is fitted on out-of-fold decision values so the
probabilities are not fitted to the same scores the classifier was
trained on.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..netmodel import ParameterDomain
from ._backend import BACKEND, kernels

DEFAULT_C = 1000.0
DEFAULT_TOL = 1e-4
DEFAULT_FOLDS = 5
FOLD_SEED = 20240


class SvmError(ValueError):
    pass


class DegenerateLabelsError(SvmError):
    def __init__(self, msg: str = "degenerate labels: both stable and unstable samples are required"):
        super().__init__(msg)


class ConvergenceError(SvmError, ArithmeticError):
    pass


class ExtrapolationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained classifier. ``sv`` are support vectors in unit-cube coordinates
    and ``coef`` the matching alpha_i * y_i."""

    domain: ParameterDomain
    gamma: float
    C: float
    sv: np.ndarray
    coef: np.ndarray
    bias: float
    platt_a: float
    platt_b: float
    n_train: int
    info: dict = field(default_factory=dict)

    def decision(self, rho) -> np.ndarray:
        z = self.domain.to_unit(np.atleast_2d(np.asarray(rho, dtype=float)))
        return decision_unit(self, z)

    def to_dict(self) -> dict:
        return {
            "kind": "rbf-svc",
            "domain": {"names": list(self.domain.names), "lo": list(self.domain.lo), "hi": list(self.domain.hi)},
            "gamma": self.gamma, "C": self.C,
            "sv": self.sv.tolist(), "coef": self.coef.tolist(), "bias": self.bias,
            "platt": {"a": self.platt_a, "b": self.platt_b},
            "n_train": self.n_train, "info": self.info,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("kind") != "rbf-svc":
            raise SvmError("not a saved SVM model")
        dom = ParameterDomain(tuple(d["domain"]["names"]), tuple(d["domain"]["lo"]), tuple(d["domain"]["hi"]))
        sv = np.asarray(d["sv"], dtype=float).reshape(-1, dom.dim)
        return cls(dom, float(d["gamma"]), float(d["C"]), sv, np.asarray(d["coef"], dtype=float),
                   float(d["bias"]), float(d["platt"]["a"]), float(d["platt"]["b"]), int(d["n_train"]),
                   dict(d.get("info", {})))

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return cls.from_dict(json.loads(text))


def decision_unit(model: SvmModel, z: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(np.atleast_2d(z), dtype=np.float64)
    if model.sv.shape[0] == 0:
        return np.full(z.shape[0], model.bias)
    return kernels.rbf_decision(z, model.sv, model.coef, model.bias, model.gamma)


def _fit_dual(Z: np.ndarray, y: np.ndarray, C: float, gamma: float, tol: float, max_iter: int):
    K = kernels.rbf_matrix(Z, Z, gamma)
    alpha, bias, iters, ok = kernels.smo_solve(K, y, float(C), float(tol), int(max_iter))
    if not ok:
        raise ConvergenceError(f"SMO did not converge within {max_iter} iterations")
    keep = alpha > 0
    return Z[keep].copy(), (alpha * y)[keep].copy(), float(bias), int(iters)


def fit_platt(f: np.ndarray, y: np.ndarray, smooth_targets: bool = False, ridge: float = 1e-6,
              max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid p = 1 / (1 + exp(-(a f + b))) by Newton's method with backtracking.

    Targets are the labels themselves; ``smooth_targets`` uses Platt's
    (n+ + 1)/(n+ + 2) and 1/(n- + 2) instead. ``ridge`` keeps the slope
    finite when the decision values separate the classes.
    """
    f = np.asarray(f, dtype=float)
    pos = np.asarray(y) > 0
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if smooth_targets:
        t = np.where(pos, (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0))
    else:
        t = pos.astype(float)
    A, B = 0.0, math.log((n0 + 1.0) / (n1 + 1.0))

    def objective(A, B):
        z = f * A + B
        soft = np.log1p(np.exp(-np.abs(z)))
        return float(np.sum(np.where(z >= 0, t * z + soft, (t - 1.0) * z + soft))) + 0.5 * ridge * A * A

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = expit(-z)  # 1/(1+exp(z))
        d2 = p * (1.0 - p)
        h11 = 1e-12 + ridge + float(np.sum(f * f * d2))
        h22 = 1e-12 + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1, g2 = float(np.sum(f * d1)) + ridge * A, float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return -A, -B


def _canonical_order(Z: np.ndarray, s: np.ndarray) -> np.ndarray:
    # by coordinates first so that swapping the labels keeps the order
    keys = [s] + [Z[:, k] for k in range(Z.shape[1] - 1, -1, -1)]
    return np.lexsort(keys[1:] + keys[:1])


def _stratified_folds(s: np.ndarray, k: int) -> np.ndarray:
    """Fold index per sample, balanced within each class.

    Each class is shuffled by a stream keyed on its size alone, so the
    assignment does not depend on which class carries which label.
    """
    fold = np.empty(s.size, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(s == cls)
        idx = idx[np.random.default_rng([FOLD_SEED, idx.size]).permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    return fold


def default_gamma(dim: int) -> float:
    return 6.0 / dim


def train_svm(points, labels, domain: ParameterDomain, C: float = DEFAULT_C, gamma: float | None = None,
              folds: int = DEFAULT_FOLDS, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> SvmModel:
    """Fit the classifier on labeled points (domain coordinates, labels in {0, 1}).

    The fit is independent of sample order: samples are put in a canonical
    order first. ``gamma`` defaults to 6/dim, the reciprocal of the mean
    squared distance between uniform points of the unit cube.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.asarray(labels).astype(int).ravel()
    if X.shape[0] != s.size or X.shape[1] != domain.dim:
        raise SvmError(f"expected {domain.dim}-dimensional points with one label each")
    if not np.all(np.isin(s, (0, 1))):
        raise SvmError("labels must be 0 or 1")
    if s.min() == s.max():
        raise DegenerateLabelsError()
    if not C > 0:
        raise SvmError("C must be > 0")
    gamma = default_gamma(domain.dim) if gamma is None else float(gamma)
    if not gamma > 0:
        raise SvmError("gamma must be > 0")
    Z = domain.to_unit(X)
    order = _canonical_order(Z, s)
    Z, s = np.ascontiguousarray(Z[order]), s[order]
    y = np.where(s == 1, 1.0, -1.0)
    n = s.size
    max_iter = max(100_000, 200 * n) if max_iter is None else int(max_iter)

    sv, coef, bias, iters = _fit_dual(Z, y, C, gamma, tol, max_iter)
    k = min(folds, int(min((s == 0).sum(), (s == 1).sum())))
    oof = np.empty(n)
    calibration = "out-of-fold"
    if k >= 2:
        fold = _stratified_folds(s, k)
        for j in range(k):
            tr, te = fold != j, fold == j
            fsv, fcoef, fbias, _ = _fit_dual(Z[tr], y[tr], C, gamma, tol, max_iter)
            oof[te] = kernels.rbf_decision(Z[te], fsv, fcoef, fbias, gamma) if fsv.size else fbias
    else:
        calibration = "in-sample"
        oof = kernels.rbf_decision(Z, sv, coef, bias, gamma)
    a, b = fit_platt(oof, y)
    info = {"iterations": iters, "folds": k if k >= 2 else 0, "calibration": calibration,
            "tol": tol, "backend": BACKEND}
    return SvmModel(domain, gamma, float(C), sv, coef, bias, float(a), float(b), n, info)


def predict_probability(model: SvmModel, rho, warn: bool = True):
    """Calibrated probability of stability. Scalar for one point, array otherwise."""
    arr = np.asarray(rho, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if warn and not np.all(model.domain.contains(pts)):
        warnings.warn("prediction outside the trained parameter domain", ExtrapolationWarning, stacklevel=2)
    p = expit(model.platt_a * model.decision(pts) + model.platt_b)
    return float(p[0]) if single else p
