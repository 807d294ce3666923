"""Adaptive sampling of a stability region with an SVM surrogate.

A uniform seed set is labeled by an expensive oracle and a classifier is
trained on it. A large pool of random candidates is scored by the
classifier, the ones closest to the probability threshold are labeled too,
and the classifier is retrained on the union.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from ..netmodel import ParameterDomain
from ..stability import StabilityVerdict, SweepContext, is_ps_stable
from .svm import DEFAULT_C, DegenerateLabelsError, SvmModel, predict_probability, train_svm


class AsmConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AsmConfig:
    n_init: int = 100
    n_r: int = 20_000
    n_a: int = 250
    p_th: float = 0.8
    rng_seed: int = 0
    rounds: int = 1
    C: float = DEFAULT_C
    gamma: float | None = None

    def __post_init__(self):
        if self.n_init < 2:
            raise AsmConfigError("n_init must be >= 2")
        if self.n_r < 10 * self.n_init:
            raise AsmConfigError(f"n_r must be at least 10 * n_init ({10 * self.n_init})")
        if not 1 <= self.n_a <= self.n_r:
            raise AsmConfigError("n_a must lie in [1, n_r]")
        if not 0.0 < self.p_th < 1.0:
            raise AsmConfigError(f"p_th must lie strictly between 0 and 1, got {self.p_th}")
        if self.rounds < 0:
            raise AsmConfigError("rounds must be >= 0")

    def as_dict(self) -> dict:
        return {"n_init": self.n_init, "n_r": self.n_r, "n_a": self.n_a, "p_th": self.p_th,
                "rng_seed": self.rng_seed, "rounds": self.rounds, "C": self.C, "gamma": self.gamma}


@dataclass(frozen=True)
class LabeledSample:
    index: int
    rho: tuple[float, ...]
    s: int
    provenance: str
    worst: float | None = None
    failing: tuple[int, ...] = ()


@dataclass(frozen=True)
class InfeasibleSample:
    index: int
    rho: tuple[float, ...]
    provenance: str
    reason: str


# ---------------------------------------------------------------------------
# oracles


@dataclass(frozen=True)
class DiskOracle:
    """Stable iff the point lies in a closed ball; the worst value is the
    signed distance to its boundary."""

    radius: float = 1.0
    center: tuple[float, ...] | None = None

    def __call__(self, rho) -> StabilityVerdict:
        x = np.asarray(rho, dtype=float)
        c = np.zeros_like(x) if self.center is None else np.asarray(self.center, dtype=float)
        d = float(np.linalg.norm(x - c)) - self.radius
        return StabilityVerdict(int(d <= 0), {0: d}, () if d <= 0 else (0,))


@dataclass(frozen=True, eq=False)
class PowerSystemOracle:
    """The multi-scenario eigenvalue verdict for gains named by the context."""

    ctx: SweepContext

    def __call__(self, rho) -> StabilityVerdict:
        return is_ps_stable(tuple(float(v) for v in rho), self.ctx)


def _as_verdict(out) -> StabilityVerdict:
    if isinstance(out, StabilityVerdict):
        return out
    s = int(bool(out))
    return StabilityVerdict(s, {}, () if s else (0,))


def _evaluate(oracle, rho):
    try:
        return _as_verdict(oracle(rho))
    except Exception as exc:  # recorded per point, never aborts the batch
        return StabilityVerdict(0, {}, (), True, f"{type(exc).__name__}: {exc}")


def _evaluate_chunk(args):
    oracle, pts = args
    return [_evaluate(oracle, p) for p in pts]


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# steps


def sample_uniform(domain: ParameterDomain, n: int, rng_seed=0) -> np.ndarray:
    """``n`` i.i.d. uniform points in the box, shape (n, dim)."""
    if n < 1:
        raise AsmConfigError("n must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.uniform(np.asarray(domain.lo), np.asarray(domain.hi), size=(n, domain.dim))


def label_set(points, oracle: Callable, provenance: str = "seed", start: int = 0,
              workers: int | None = None) -> tuple[list[LabeledSample], list[InfeasibleSample]]:
    """Label every point. Evaluations run in parallel; results keep point order."""
    pts = [tuple(float(v) for v in p) for p in np.atleast_2d(np.asarray(points, dtype=float))]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(pts) < 2:
        verdicts = [_evaluate(oracle, p) for p in pts]
    else:
        size = max(1, -(-len(pts) // (4 * workers)))
        chunks = [(oracle, pts[k:k + size]) for k in range(0, len(pts), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            verdicts = [v for part in pool.map(_evaluate_chunk, chunks) for v in part]
    good, bad = [], []
    for k, (p, v) in enumerate(zip(pts, verdicts)):
        if v.infeasible:
            bad.append(InfeasibleSample(start + k, p, provenance, v.reason))
        else:
            worst = max(v.worst.values()) if v.worst else None
            good.append(LabeledSample(start + k, p, int(v.s), provenance, worst, tuple(v.failing)))
    return good, bad


def refine(model: SvmModel, domain: ParameterDomain, cfg: AsmConfig, rng) -> np.ndarray:
    """The ``n_a`` of ``n_r`` random candidates whose probability is closest
    to ``p_th``; ties go to the earlier candidate."""
    cands = sample_uniform(domain, cfg.n_r, rng)
    p = predict_probability(model, cands, warn=False)
    order = np.argsort(np.abs(p - cfg.p_th), kind="stable")[: cfg.n_a]
    return cands[order]


@dataclass(eq=False)
class AsmHistory:
    domain: ParameterDomain
    config: AsmConfig
    samples: list[LabeledSample] = field(default_factory=list)
    infeasible: list[InfeasibleSample] = field(default_factory=list)
    models: list[SvmModel] = field(default_factory=list)

    def arrays(self, provenance: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        sel = [s for s in self.samples if provenance is None or s.provenance == provenance]
        X = np.array([s.rho for s in sel], dtype=float).reshape(-1, self.domain.dim)
        return X, np.array([s.s for s in sel], dtype=int)

    def records(self) -> Iterable[dict]:
        rows = [(s.index, {"rho": dict(zip(self.domain.names, s.rho)), "s": s.s, "provenance": s.provenance,
                           "worst_real": s.worst, "failing": list(s.failing)}) for s in self.samples]
        rows += [(s.index, {"rho": dict(zip(self.domain.names, s.rho)), "s": None, "provenance": s.provenance,
                            "infeasible": True, "reason": s.reason}) for s in self.infeasible]
        for idx, rec in sorted(rows, key=lambda r: r[0]):
            yield {"index": idx, **rec}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def _train(hist: AsmHistory, cfg: AsmConfig, stage: str) -> SvmModel:
    X, s = hist.arrays()
    try:
        return train_svm(X, s, hist.domain, C=cfg.C, gamma=cfg.gamma)
    except DegenerateLabelsError:
        kind = "stable" if s.size and s[0] == 1 else "unstable"
        raise DegenerateLabelsError(
            f"degenerate labels at the {stage} stage: all {s.size} feasible samples are {kind}; "
            "adjust the parameter domain so it straddles the stability boundary") from None


def run_asm(domain: ParameterDomain, oracle: Callable, cfg: AsmConfig = AsmConfig(),
            workers: int | None = None) -> tuple[SvmModel, AsmHistory]:
    """Seed, label, train, then ``cfg.rounds`` refinement rounds of ``n_a`` points.

    The seed set and the candidate pools come from separate streams derived
    from ``cfg.rng_seed``, so the run is reproducible.
    """
    seed_ss, cand_ss = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    cand_rng = np.random.default_rng(cand_ss)
    hist = AsmHistory(domain, cfg)
    pts = sample_uniform(domain, cfg.n_init, np.random.default_rng(seed_ss))
    good, bad = label_set(pts, oracle, "seed", 0, workers)
    hist.samples += good
    hist.infeasible += bad
    model = _train(hist, cfg, "seed")
    hist.models.append(model)
    start = cfg.n_init
    for r in range(1, cfg.rounds + 1):
        new = refine(model, domain, cfg, cand_rng)
        good, bad = label_set(new, oracle, f"refinement-{r}", start, workers)
        start += len(new)
        hist.samples += good
        hist.infeasible += bad
        model = _train(hist, cfg, f"refinement-{r}")
        hist.models.append(model)
    return model, hist


# ---------------------------------------------------------------------------
# tuning and maps


@dataclass(frozen=True)
class ArgmaxResult:
    rho: tuple[float, ...]
    probability: float
    strategy: dict

    def as_dict(self, names: Sequence[str]) -> dict:
        return {"rho": dict(zip(names, self.rho)), "probability": self.probability, "strategy": self.strategy}


def unit_grid(dim: int, per_dim: int) -> np.ndarray:
    """Regular grid on [0, 1]^dim in C order, first point at the origin."""
    axes = [np.linspace(0.0, 1.0, per_dim)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def argmax_probability(model: SvmModel, domain: ParameterDomain | None = None, per_dim: int | None = None,
                       starts: int = 8, budget: int = 20_000) -> ArgmaxResult:
    """Maximize the calibrated probability: regular grid, then bounded
    quasi-Newton refinement from the best grid points.

    A start only moves if refinement improves it, so a flat model returns the
    first grid point (the lower corner of the domain).
    """
    domain = domain or model.domain
    d = domain.dim
    if per_dim is None:
        per_dim = max(2, min(201, int(np.floor(budget ** (1.0 / d) + 1e-9))))
    grid = unit_grid(d, per_dim)
    prob = predict_probability(model, domain.from_unit(grid), warn=False)
    top = np.argsort(-prob, kind="stable")[:starts]

    def neg(z):
        return -float(predict_probability(model, domain.from_unit(z), warn=False))

    best_z, best_p = grid[top[0]], float(prob[top[0]])
    for k in top:
        z0, p0 = grid[k], float(prob[k])
        res = minimize(neg, z0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
        z, p = (np.clip(res.x, 0.0, 1.0), -float(res.fun)) if -res.fun > p0 + 1e-12 else (z0, p0)
        if p > best_p + 1e-12:
            best_z, best_p = z, p
    rho = tuple(float(v) for v in domain.from_unit(best_z))
    return ArgmaxResult(rho, best_p, {"method": "grid+L-BFGS-B", "per_dim": per_dim,
                                      "grid_points": int(grid.shape[0]), "starts": int(min(starts, grid.shape[0]))})


def probability_map(model: SvmModel, domain: ParameterDomain | None = None, per_dim: int = 101,
                    oracle: Callable | None = None, workers: int | None = None):
    """Probability on a regular grid; with an oracle, the true labels as well."""
    domain = domain or model.domain
    pts = domain.from_unit(unit_grid(domain.dim, per_dim))
    prob = predict_probability(model, pts, warn=False)
    labels = None
    if oracle is not None:
        good, bad = label_set(pts, oracle, "map", 0, workers)
        labels = np.full(len(pts), -1, dtype=int)
        for smp in good:
            labels[smp.index] = smp.s
    return pts, prob, labels


def map_csv(domain: ParameterDomain, pts: np.ndarray, prob: np.ndarray, labels: np.ndarray | None = None) -> str:
    """CSV with the parameter columns sorted by name, then probability and
    the optional label (empty when the oracle found the point infeasible)."""
    order = sorted(range(domain.dim), key=lambda k: domain.names[k])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([domain.names[k] for k in order] + ["probability"] + (["label"] if labels is not None else []))
    for i in range(len(pts)):
        row = [repr(float(pts[i, k])) for k in order] + [repr(float(prob[i]))]
        if labels is not None:
            row.append("" if labels[i] < 0 else str(int(labels[i])))
        w.writerow(row)
    return buf.getvalue()
