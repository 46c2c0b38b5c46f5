"""Covariance functions: ARD RBF, ARD Matern (half-integer nu), sums of kernels,
Gram matrices, analytic log-space hyperparameter gradients, and jitter-stabilized
Cholesky factorization.

Every kernel works on a scaled squared distance r^2 = sum_d (x_d - x'_d)^2 / l_d^2
with one lengthscale per input dimension (ARD) and an output variance per leaf.
Matern kernels are restricted to the closed-form nu in {1/2, 3/2, 5/2}; the
general Bessel-function form is deliberately out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError, ValidationError

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

DEFAULT_JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)  # multiples of the mean diagonal

MATERN_NUS = (0.5, 1.5, 2.5)


def _check_leaf(lengthscales: np.ndarray, variance: float):
    if lengthscales.ndim != 1 or lengthscales.size == 0:
        raise ValidationError("lengthscales must be a non-empty 1-D array")
    if not np.all(np.isfinite(lengthscales)) or np.any(lengthscales <= 0):
        raise ValidationError("lengthscales must be finite and > 0")
    if not math.isfinite(variance) or variance <= 0:
        raise ValidationError("variance must be finite and > 0")


@dataclass
class RbfKernel:
    """Squared-exponential kernel: v * exp(-r^2 / 2)."""

    lengthscales: np.ndarray
    variance: float = 1.0

    def __post_init__(self):
        self.lengthscales = np.asarray(self.lengthscales, dtype=float)
        _check_leaf(self.lengthscales, self.variance)

    def value_from_r2(self, r2: np.ndarray) -> np.ndarray:
        return self.variance * np.exp(-0.5 * r2)

    def grad_prefactor(self, r2: np.ndarray, k: np.ndarray) -> np.ndarray:
        # dK/dln(l_d) = P * s_d with s_d the per-dimension scaled squared distance
        return k


@dataclass
class MaternKernel:
    """Half-integer Matern kernel on r = sqrt(r^2):
    nu=1/2: v*exp(-r); nu=3/2: v*(1+sqrt3 r)*exp(-sqrt3 r);
    nu=5/2: v*(1+sqrt5 r+5r^2/3)*exp(-sqrt5 r)."""

    lengthscales: np.ndarray
    variance: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        self.lengthscales = np.asarray(self.lengthscales, dtype=float)
        _check_leaf(self.lengthscales, self.variance)
        if self.nu not in MATERN_NUS:
            raise ValidationError(f"nu must be one of {MATERN_NUS}, got {self.nu}")

    def value_from_r2(self, r2: np.ndarray) -> np.ndarray:
        r = np.sqrt(r2)
        if self.nu == 0.5:
            return self.variance * np.exp(-r)
        if self.nu == 1.5:
            return self.variance * (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
        return self.variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)

    def grad_prefactor(self, r2: np.ndarray, k: np.ndarray) -> np.ndarray:
        r = np.sqrt(r2)
        if self.nu == 0.5:
            # s_d / r -> 0 as r -> 0, so a zero-filled inverse is the correct limit
            inv_r = np.zeros_like(r)
            np.divide(1.0, r, out=inv_r, where=r > 0)
            return self.variance * np.exp(-r) * inv_r
        if self.nu == 1.5:
            return 3.0 * self.variance * np.exp(-SQRT3 * r)
        return (5.0 / 3.0) * self.variance * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)


@dataclass
class SumKernel:
    """Sum of two kernels; carries no hyperparameters of its own."""

    left: "KernelSpec"
    right: "KernelSpec"


KernelSpec = RbfKernel | MaternKernel | SumKernel
LeafKernel = RbfKernel | MaternKernel


def leaves(spec: KernelSpec) -> list[LeafKernel]:
    """Leaf kernels in pre-order; leaf index k in parameter names refers here."""
    if isinstance(spec, SumKernel):
        return leaves(spec.left) + leaves(spec.right)
    return [spec]


def ard_dim(spec: KernelSpec) -> int:
    dims = {leaf.lengthscales.size for leaf in leaves(spec)}
    if len(dims) != 1:
        raise ValidationError("sum components disagree on ARD dimension")
    return dims.pop()


def param_names(spec: KernelSpec) -> list[str]:
    """Log-space hyperparameter ids, ordered leaf by leaf."""
    names = []
    for i, leaf in enumerate(leaves(spec)):
        names += [f"k{i}.log_lengthscale.{d}" for d in range(leaf.lengthscales.size)]
        names.append(f"k{i}.log_variance")
    return names


def get_log_params(spec: KernelSpec) -> np.ndarray:
    parts = []
    for leaf in leaves(spec):
        parts.append(np.log(leaf.lengthscales))
        parts.append([math.log(leaf.variance)])
    return np.concatenate(parts)


def set_log_params(spec: KernelSpec, values: np.ndarray) -> KernelSpec:
    """New spec with hyperparameters taken from a packed log-space vector."""
    values = np.asarray(values, dtype=float)
    expected = sum(leaf.lengthscales.size + 1 for leaf in leaves(spec))
    if values.ndim != 1 or values.size != expected:
        raise ValidationError(f"expected {expected} packed parameters, got {values.size}")

    def rebuild(node, offset):
        if isinstance(node, SumKernel):
            left, offset = rebuild(node.left, offset)
            right, offset = rebuild(node.right, offset)
            return SumKernel(left, right), offset
        d = node.lengthscales.size
        ls = np.exp(values[offset:offset + d])
        var = math.exp(values[offset + d])
        offset += d + 1
        if isinstance(node, MaternKernel):
            return MaternKernel(ls, var, node.nu), offset
        return RbfKernel(ls, var), offset

    rebuilt, _ = rebuild(spec, 0)
    return rebuilt


def scaled_sq_dist(X: np.ndarray, Xp: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """r^2 matrix, accumulated per dimension to keep exact symmetry and zeros."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    if X.shape[1] != Xp.shape[1]:
        raise ValidationError(f"input dimensions differ: {X.shape[1]} vs {Xp.shape[1]}")
    if lengthscales.size != X.shape[1]:
        raise ValidationError(
            f"ARD lengthscale count {lengthscales.size} != input dimension {X.shape[1]}")
    r2 = np.zeros((X.shape[0], Xp.shape[0]))
    for d in range(X.shape[1]):
        diff = (X[:, d, None] - Xp[None, :, d]) / lengthscales[d]
        r2 += diff * diff
    return r2


def eval_kernel(x: np.ndarray, xp: np.ndarray, spec: KernelSpec) -> float:
    """Covariance between two input vectors."""
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    if x.size != xp.size:
        raise ValidationError(f"input dimensions differ: {x.size} vs {xp.size}")
    total = 0.0
    for leaf in leaves(spec):
        if leaf.lengthscales.size != x.size:
            raise ValidationError(
                f"ARD lengthscale count {leaf.lengthscales.size} != input dimension {x.size}")
        r2 = float(np.sum(((x - xp) / leaf.lengthscales) ** 2))
        total += float(leaf.value_from_r2(np.array(r2)))
    return total


def gram(X: np.ndarray, Xp: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Gram matrix K[i, j] = k(X_i, Xp_j). Exactly symmetric when X is Xp."""
    K = None
    for leaf in leaves(spec):
        r2 = scaled_sq_dist(X, Xp, leaf.lengthscales)
        k = leaf.value_from_r2(r2)
        K = k if K is None else K + k
    return K


def _parse_param(spec: KernelSpec, param: str) -> tuple[int, str, int]:
    try:
        leaf_part, rest = param.split(".", 1)
        leaf_idx = int(leaf_part[1:])
        if rest == "log_variance":
            return leaf_idx, "variance", -1
        kind, dim = rest.rsplit(".", 1)
        if kind == "log_lengthscale":
            return leaf_idx, "lengthscale", int(dim)
    except (ValueError, IndexError):
        pass
    raise ValidationError(f"unknown hyperparameter id {param!r}")


def gram_grad(X: np.ndarray, spec: KernelSpec, param: str) -> np.ndarray:
    """Analytic dK/d(theta) for one log-space hyperparameter over a single input set."""
    leaf_idx, kind, dim = _parse_param(spec, param)
    all_leaves = leaves(spec)
    if not 0 <= leaf_idx < len(all_leaves):
        raise ValidationError(f"unknown hyperparameter id {param!r}")
    leaf = all_leaves[leaf_idx]
    r2 = scaled_sq_dist(X, X, leaf.lengthscales)
    k = leaf.value_from_r2(r2)
    if kind == "variance":
        return k  # K is linear in the variance, so dK/dln(v) = K
    if not 0 <= dim < leaf.lengthscales.size:
        raise ValidationError(f"lengthscale dimension {dim} out of range in {param!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    diff = (X[:, dim, None] - X[None, :, dim]) / leaf.lengthscales[dim]
    return leaf.grad_prefactor(r2, k) * (diff * diff)


def cholesky_jitter(K: np.ndarray, ladder: tuple[float, ...] = DEFAULT_JITTER_LADDER
                    ) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + j*I for the smallest workable jitter j.

    Ladder entries are multiples of the mean diagonal so stabilization is
    invariant to the output-variance magnitude. Returns (L, applied jitter).
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError("matrix must be square")
    scale = float(np.mean(np.diag(K)))
    for mult in ladder:
        jitter = mult * scale
        try:
            if jitter == 0.0:
                L = np.linalg.cholesky(K)
            else:
                L = np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise TrainingError(
        f"Cholesky factorization failed at maximum jitter {ladder[-1] * scale:g}")


def kernel_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, SumKernel):
        return {"kind": "sum", "left": kernel_to_dict(spec.left),
                "right": kernel_to_dict(spec.right)}
    d = {"kind": "rbf" if isinstance(spec, RbfKernel) else "matern",
         "lengthscales": spec.lengthscales.tolist(), "variance": float(spec.variance)}
    if isinstance(spec, MaternKernel):
        d["nu"] = float(spec.nu)
    return d


def kernel_from_dict(d: dict) -> KernelSpec:
    kind = d.get("kind")
    if kind == "sum":
        return SumKernel(kernel_from_dict(d["left"]), kernel_from_dict(d["right"]))
    if kind == "rbf":
        return RbfKernel(np.asarray(d["lengthscales"], dtype=float), float(d["variance"]))
    if kind == "matern":
        return MaternKernel(np.asarray(d["lengthscales"], dtype=float),
                            float(d["variance"]), float(d["nu"]))
    raise ValidationError(f"unknown kernel kind {kind!r}")
