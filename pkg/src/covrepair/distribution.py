"""Data-distribution gate: one-class SVM over tuple embeddings.

The catalog's real tuples are treated as iid samples of the distribution the
synthetic tuples must follow.  A one-class SVM is trained on their
embeddings; a candidate embedding is acceptable when its decision value
f(v) = sum_i alpha_i K(sv_i, v) - rho is nonnegative (boundary inclusive).

The trainer solves the standard dual

    minimize    (1/2) a' K a
    subject to  0 <= a_i <= 1/(nu n),   sum_i a_i = 1

by pairwise coordinate (SMO-style) updates.  The equality constraint is
preserved exactly by moving mass between the two working coordinates; the
pair is always the one with the largest KKT violation, so the violation
max_{a_j>0} g_j - min_{a_i<C} g_i (g = K a) decreases to the tolerance.
nu upper-bounds the fraction of training points left outside the boundary
and lower-bounds the support-vector fraction.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import Degenerate, DimensionMismatch

MAX_PAIR_UPDATES = 10**6


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "linear" | "rbf"
    gamma: float | None = None  # rbf only; None = scale heuristic at training

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if spec.kind == "linear":
        return float(a @ b)
    d = a - b
    return float(np.exp(-spec.gamma * (d @ d)))


def _gram(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    if spec.kind == "linear":
        return X @ X.T
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-spec.gamma * d2)


def _cross(spec: KernelSpec, X: np.ndarray, v: np.ndarray) -> np.ndarray:
    if spec.kind == "linear":
        return X @ v
    d = X - v[None, :]
    return np.exp(-spec.gamma * np.sum(d * d, axis=1))


def default_gamma(X: np.ndarray) -> float:
    """Scale heuristic: 1 / (dim * mean per-coordinate variance), clamped."""
    k = X.shape[1]
    var = float(np.var(X, axis=0).mean())
    if var <= 0:
        return 1e6
    return float(np.clip(1.0 / (k * var), 1e-6, 1e6))


@dataclass
class EmbeddingStats:
    """Sample mean of the catalog embeddings. Diagnostic only; the gate is
    the trained boundary, not mean proximity."""

    mean_vector: np.ndarray
    n: int


def embedding_stats(embeddings: np.ndarray) -> EmbeddingStats:
    X = np.asarray(embeddings, dtype=float)
    return EmbeddingStats(X.mean(axis=0), X.shape[0])


@dataclass
class OcsvmModel:
    alphas: np.ndarray
    support_vectors: np.ndarray
    rho: float
    nu: float
    kernel: KernelSpec
    n_train: int
    converged: bool = True
    n_updates: int = 0

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.kind,
            "gamma": self.kernel.gamma,
            "nu": self.nu,
            "alphas": [float(a) for a in self.alphas],
            "support_vectors": [[float(x) for x in sv] for sv in self.support_vectors],
            "rho": float(self.rho),
            "n_train": self.n_train,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OcsvmModel":
        return cls(
            alphas=np.asarray(doc["alphas"], dtype=float),
            support_vectors=np.asarray(doc["support_vectors"], dtype=float),
            rho=float(doc["rho"]),
            nu=float(doc["nu"]),
            kernel=KernelSpec(doc["kernel"], doc.get("gamma")),
            n_train=int(doc["n_train"]),
            converged=bool(doc.get("converged", True)),
        )


def save_model(model: OcsvmModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def load_model(path: str | Path) -> OcsvmModel:
    with open(path) as fh:
        return OcsvmModel.from_dict(json.load(fh))


def train_ocsvm(
    embeddings: np.ndarray,
    nu: float = 0.3,
    kernel: KernelSpec = KernelSpec("rbf"),
    tol: float = 1e-6,
    max_pair_updates: int = MAX_PAIR_UPDATES,
) -> OcsvmModel:
    """Fit the boundary by SMO over the equality-constrained box.

    rho is the mean of g_i over free support vectors (0 < a_i < C); with no
    free vector it falls back to the midpoint of the box-boundary bounds
    max_{a=C} g and min_{a=0} g.  Hitting the update cap degrades the fit
    and is reported through a warning plus model.converged=False.
    """
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a nonempty 2-D embedding array")
    if not np.all(np.isfinite(X)):
        raise Degenerate("embeddings contain NaN or inf")
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")

    if kernel.kind == "rbf" and kernel.gamma is None:
        kernel = KernelSpec("rbf", default_gamma(X))

    n = X.shape[0]
    C = 1.0 / (nu * n)
    K = _gram(kernel, X)
    alpha = np.full(n, 1.0 / n)
    g = K @ alpha

    box_eps = 1e-12 + 1e-10 * C
    updates = 0
    converged = True
    while True:
        can_up = alpha < C - box_eps
        can_down = alpha > box_eps
        if not can_up.any() or not can_down.any():
            break
        i = int(np.argmin(np.where(can_up, g, np.inf)))
        j = int(np.argmax(np.where(can_down, g, -np.inf)))
        if g[j] - g[i] <= tol:
            break
        if updates >= max_pair_updates:
            converged = False
            warnings.warn(
                f"one-class SVM stopped at the {max_pair_updates} pair-update cap "
                f"with violation {g[j] - g[i]:.3e}",
                RuntimeWarning,
            )
            break
        denom = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step_max = min(C - alpha[i], alpha[j])
        if denom > 1e-15:
            t = min((g[j] - g[i]) / denom, step_max)
        else:
            t = step_max
        alpha[i] += t
        alpha[j] -= t
        g += t * (K[:, i] - K[:, j])
        updates += 1

    free = (alpha > box_eps) & (alpha < C - box_eps)
    if free.any():
        rho = float(g[free].mean())
    else:
        at_c = alpha >= C - box_eps
        at_zero = alpha <= box_eps
        lo = float(g[at_c].max()) if at_c.any() else None
        hi = float(g[at_zero].min()) if at_zero.any() else None
        if lo is not None and hi is not None:
            rho = 0.5 * (lo + hi)
        else:
            rho = lo if lo is not None else hi

    return OcsvmModel(
        alphas=alpha,
        support_vectors=X,
        rho=rho,
        nu=nu,
        kernel=kernel,
        n_train=n,
        converged=converged,
        n_updates=updates,
    )


def decision(model: OcsvmModel, v: np.ndarray) -> float:
    """f(v) = sum_i alpha_i K(sv_i, v) - rho."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.support_vectors.shape[1],):
        raise DimensionMismatch(
            f"candidate has dimension {v.shape}, model expects "
            f"({model.support_vectors.shape[1]},)"
        )
    return float(model.alphas @ _cross(model.kernel, model.support_vectors, v) - model.rho)


@dataclass(frozen=True)
class DistributionVerdict:
    accept: bool
    score: float


def distribution_test(model: OcsvmModel, candidate_embedding: np.ndarray) -> DistributionVerdict:
    """Accept iff the decision value is nonnegative (boundary inclusive)."""
    score = decision(model, candidate_embedding)
    return DistributionVerdict(accept=score >= 0.0, score=score)


def kkt_residuals(model: OcsvmModel) -> np.ndarray:
    """Complementary-slackness residual per training point, for diagnostics.

    Free vectors should sit on g_i = rho; zero-alpha points must not fall
    below rho, capped points must not exceed it.
    """
    K = _gram(model.kernel, model.support_vectors)
    g = K @ model.alphas
    C = 1.0 / (model.nu * model.n_train)
    box_eps = 1e-12 + 1e-10 * C
    res = np.empty_like(g)
    for idx, (a, gi) in enumerate(zip(model.alphas, g)):
        if a <= box_eps:
            res[idx] = max(0.0, model.rho - gi)
        elif a >= C - box_eps:
            res[idx] = max(0.0, gi - model.rho)
        else:
            res[idx] = abs(gi - model.rho)
    return res
