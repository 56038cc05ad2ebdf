"""Bias-free soft-margin SVM on pairwise difference vectors.

Each labelled difference (d, lam) becomes the oriented point z = lam * d; identical points are
merged and carry box bound (multiplicity * C). The kernel seen by the solver is the odd part
K_odd(a, b) = (K(a, b) - K(-a, b)) / 2, so the decision function f(d) = sum_k a_k K_odd(z_k, d)
satisfies f(-d) = -f(d) exactly. On antisymmetric pair sets this is the same optimisation
problem as the standard pairwise dual with per-pair multipliers a_k / multiplicity.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .._backend import kernel_dual_cd, linear_dual_cd

FORMAT_VERSION = 1
KKT_TOL = 1e-3
MAX_PASSES = 100_000


class Kernel(enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class SvmHyperparams:
    C: float = 1.0
    kernel: Kernel = Kernel.LINEAR
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


class IterationCapWarning(RuntimeWarning):
    pass


@dataclass
class SvmModel:
    hp: SvmHyperparams
    support: np.ndarray  # oriented points z_k with a_k > 0, in standardised units
    coef: np.ndarray  # a_k
    scale: np.ndarray  # per-feature divisor applied to difference vectors
    w: np.ndarray | None = None  # primal weights (linear kernel only)
    bias: float = 0.0
    passes: int = 0
    kkt_residual: float = 0.0
    converged: bool = True
    objective: float = 0.0
    history: list = field(default_factory=list)
    pair_alpha: np.ndarray | None = None  # per-input-pair multipliers, not persisted

    @property
    def status(self) -> str:
        return "CONVERGED" if self.converged else "ITERATION_CAP"

    def decision(self, D) -> np.ndarray:
        """Decision values for difference vectors (rows of D, raw feature units)."""
        D = np.atleast_2d(np.asarray(D, dtype=float)) / self.scale
        if self.hp.kernel is Kernel.LINEAR:
            return D @ self.w
        return odd_rbf(D, self.support, self.hp.gamma) @ self.coef

    def save(self, path) -> None:
        rec = {
            "format": "mazing-svm",
            "version": FORMAT_VERSION,
            "kernel": self.hp.kernel.value,
            "C": self.hp.C,
            "gamma": self.hp.gamma,
            "bias": self.bias,
            "scale": self.scale.tolist(),
            "w": None if self.w is None else self.w.tolist(),
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
            "passes": self.passes,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "objective": self.objective,
        }
        Path(path).write_text(json.dumps(rec) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> SvmModel:
        rec = json.loads(Path(path).read_text(encoding="utf-8"))
        if rec.get("format") != "mazing-svm" or rec.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model file")
        d = len(rec["scale"])
        return cls(
            hp=SvmHyperparams(rec["C"], Kernel(rec["kernel"]), rec["gamma"]),
            support=np.array(rec["support"], dtype=float).reshape(-1, d),
            coef=np.array(rec["coef"], dtype=float),
            scale=np.array(rec["scale"], dtype=float),
            w=None if rec["w"] is None else np.array(rec["w"], dtype=float),
            bias=rec["bias"], passes=rec["passes"], kkt_residual=rec["kkt_residual"],
            converged=rec["converged"], objective=rec["objective"],
        )


def odd_rbf(A: np.ndarray, B: np.ndarray, gamma: float, chunk: int = 1 << 22) -> np.ndarray:
    """K_odd(a_i, b_j) for the Gaussian kernel, from explicit differences so that sign flips are exact."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, chunk // max(1, B.shape[0] * A.shape[1]))
    for s in range(0, A.shape[0], step):
        a = A[s:s + step, None, :]
        minus = ((a - B[None]) ** 2).sum(-1)
        plus = ((a + B[None]) ** 2).sum(-1)
        out[s:s + step] = 0.5 * (np.exp(-gamma * minus) - np.exp(-gamma * plus))
    return out


def odd_rbf_gram(Z: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.einsum("ij,ij->i", Z, Z)
    cross = Z @ Z.T
    minus = np.maximum(sq[:, None] + sq[None, :] - 2.0 * cross, 0.0)
    plus = np.maximum(sq[:, None] + sq[None, :] + 2.0 * cross, 0.0)
    Q = 0.5 * (np.exp(-gamma * minus) - np.exp(-gamma * plus))
    return np.ascontiguousarray((Q + Q.T) * 0.5)


def fit_scale(X: np.ndarray) -> np.ndarray:
    """Per-feature standard deviation of training rows; constant features get 1."""
    sd = np.asarray(X, dtype=float).std(axis=0)
    return np.where(sd > 1e-12, sd, 1.0)


def train_svm(X, y, hp: SvmHyperparams = SvmHyperparams(), scale=None, tol: float = KKT_TOL,
              max_passes: int = MAX_PASSES, seed: int = 1) -> SvmModel:
    """Fit on difference vectors X (rows) with labels y in {+1, -1}."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    if X.shape[0] != y.size:
        raise ValueError("one label per difference vector is required")
    if y.size < 2:
        raise ValueError("at least two labelled pairs are required")
    if not np.isin(y, (-1, 1)).all():
        raise ValueError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise ValueError("both labels must be present")
    scale = np.ones(X.shape[1]) if scale is None else np.asarray(scale, dtype=float)
    Z = (y[:, None] * X) / scale
    Zu, inverse, counts = np.unique(Z, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    Zu = np.ascontiguousarray(Zu)
    U = counts.astype(float) * hp.C
    if hp.kernel is Kernel.LINEAR:
        a, w, passes, resid, history = linear_dual_cd(Zu, U, tol, max_passes, seed)
        a = np.asarray(a)
        w = np.asarray(w)
    else:
        Q = odd_rbf_gram(Zu, hp.gamma)
        a, passes, resid, history = kernel_dual_cd(Q, U, tol, max_passes)
        a = np.asarray(a)
        w = None
    converged = resid <= tol
    if not converged:
        warnings.warn(f"solver stopped at the pass cap with KKT residual {resid:.3g}", IterationCapWarning,
                      stacklevel=2)
    sv = a > 0
    return SvmModel(
        hp=hp, support=Zu[sv], coef=a[sv], scale=scale, w=w, passes=int(passes),
        kkt_residual=float(resid), converged=bool(converged),
        objective=float(history[-1]) if history else 0.0, history=list(history),
        pair_alpha=(a / counts)[inverse],
    )


def dual_objective(model: SvmModel) -> float:
    """Dual value recomputed from the stored support set."""
    Z, a = model.support, model.coef
    if model.hp.kernel is Kernel.LINEAR:
        w = a @ Z
        return float(a.sum() - 0.5 * w @ w)
    return float(a.sum() - 0.5 * a @ odd_rbf_gram(Z, model.hp.gamma) @ a)


class Order(NamedTuple):
    i_over_j: bool
    tie: bool
    value: float


def predict_order(model: SvmModel, x_i, x_j) -> Order:
    """Which of two items ranks higher; a zero decision value falls back to i over j and is flagged."""
    v = float(model.decision(np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float))[0])
    if v == 0.0 or math.isnan(v):
        return Order(True, True, v)
    return Order(v > 0, False, v)


def pair_accuracy(model: SvmModel, D, y) -> float:
    """Fraction of difference vectors whose sign prediction matches the label; zero counts as +1."""
    y = np.asarray(y)
    if y.size == 0:
        return math.nan
    pred = np.where(model.decision(D) >= 0.0, 1, -1)
    return float(np.mean(pred == y))
