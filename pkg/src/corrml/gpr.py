"""Exact Gaussian process regression with a constant mean, Gaussian noise,
marginal-likelihood training, and a log-transformed variant for positive rates.

Training minimizes the negative log marginal likelihood

    NLML = 1/2 (y - c)^T (K + s_n^2 I)^(-1) (y - c) + sum_i ln L_ii + n/2 ln 2pi

with Adam in log-hyperparameter space. Gradients use the trace identity
dNLML/dtheta = 1/2 tr((Kinv - alpha alpha^T) dK/dtheta) and d/dc = -1^T alpha.
Factorizations go through the jitter ladder; if a step drives the kernel
matrix past the ladder, training stops and keeps the last factorizable state.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import TrainingError, ValidationError
from .kernels import (
    KernelSpec,
    MaternKernel,
    RbfKernel,
    SumKernel,
    ard_dim,
    cholesky_jitter,
    gram,
    kernel_from_dict,
    kernel_to_dict,
    leaves,
    param_names,
    set_log_params,
)
from .optim import adam_init, adam_step
from .preprocess import DEFAULT_LOG_EPSILON

DEFAULT_GPR_LR = 0.05
DEFAULT_GPR_EPOCHS = 200

LOG2PI = math.log(2.0 * math.pi)


def default_plain_kernel(dim: int) -> KernelSpec:
    """Reference kernel for rate-space fits: ARD Matern nu=3/2."""
    return MaternKernel(np.ones(dim), 1.0, nu=1.5)


def default_log_kernel(dim: int) -> KernelSpec:
    """Reference kernel for log-space fits: ARD RBF + ARD Matern nu=5/2."""
    return SumKernel(RbfKernel(np.ones(dim), 1.0), MaternKernel(np.ones(dim), 1.0, nu=2.5))


def gpr_param_names(spec: KernelSpec) -> list[str]:
    """Packed trainable-parameter order: kernel params, ln noise variance, mean."""
    return param_names(spec) + ["log_noise_variance", "mean"]


class _NlmlWorkspace:
    """Caches per-dimension squared differences for repeated NLML evaluations."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValidationError("feature matrix must be 2-D")
        if X.shape[0] != y.size:
            raise ValidationError(f"{X.shape[0]} rows but {y.size} targets")
        if X.shape[0] < 1:
            raise ValidationError("need at least one sample")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("non-finite training values")
        self.X = X
        self.y = y
        self.n = X.shape[0]
        # (d, n, n) stack of unscaled squared coordinate differences
        diff = X[:, None, :] - X[None, :, :]
        self.sqd = np.ascontiguousarray(np.moveaxis(diff * diff, 2, 0))

    def _leaf_terms(self, spec: KernelSpec):
        terms = []
        for leaf in leaves(spec):
            if leaf.lengthscales.size != self.X.shape[1]:
                raise ValidationError(
                    f"ARD lengthscale count {leaf.lengthscales.size} != input "
                    f"dimension {self.X.shape[1]}")
            inv_ls2 = 1.0 / (leaf.lengthscales * leaf.lengthscales)
            r2 = np.tensordot(inv_ls2, self.sqd, axes=1)
            terms.append((leaf, inv_ls2, r2, leaf.value_from_r2(r2)))
        return terms

    def _factorize(self, spec, noise_variance, c):
        terms = self._leaf_terms(spec)
        K = terms[0][3].copy()
        for _, _, _, k in terms[1:]:
            K += k
        K[np.diag_indices(self.n)] += noise_variance
        L, jitter = cholesky_jitter(K)
        resid = self.y - c
        alpha = cho_solve((L, True), resid, check_finite=False)
        value = (0.5 * float(resid @ alpha)
                 + float(np.sum(np.log(np.diag(L))))
                 + 0.5 * self.n * LOG2PI)
        return terms, L, alpha, value, jitter

    def value(self, spec: KernelSpec, noise_variance: float, c: float) -> float:
        return self._factorize(spec, noise_variance, c)[3]

    def value_and_grad(self, spec: KernelSpec, noise_variance: float, c: float
                       ) -> tuple[float, np.ndarray]:
        terms, L, alpha, value, _ = self._factorize(spec, noise_variance, c)
        k_inv = cho_solve((L, True), np.eye(self.n), check_finite=False)
        A = k_inv - np.outer(alpha, alpha)
        grad = []
        for leaf, inv_ls2, r2, k in terms:
            weighted = A * leaf.grad_prefactor(r2, k)
            # all lengthscale partials at once: 1/2 sum_ij A_ij P_ij sqd[d]_ij / ls_d^2
            per_dim = np.tensordot(self.sqd, weighted, axes=([1, 2], [0, 1]))
            grad.extend(0.5 * per_dim * inv_ls2)
            grad.append(0.5 * float(np.sum(A * k)))
        grad.append(0.5 * float(np.trace(A)) * noise_variance)
        grad.append(-float(np.sum(alpha)))
        return value, np.asarray(grad)


def nlml(X: np.ndarray, y: np.ndarray, spec: KernelSpec, noise_variance: float,
         mean: float) -> float:
    """Negative log marginal likelihood of (X, y) under the given hyperparameters."""
    if noise_variance < 0:
        raise ValidationError("noise variance must be >= 0")
    return _NlmlWorkspace(X, y).value(spec, noise_variance, mean)


def nlml_grad(X: np.ndarray, y: np.ndarray, spec: KernelSpec, noise_variance: float,
              mean: float) -> tuple[float, np.ndarray]:
    """(NLML, gradient) with gradient ordered per gpr_param_names(spec)."""
    if noise_variance < 0:
        raise ValidationError("noise variance must be >= 0")
    return _NlmlWorkspace(X, y).value_and_grad(spec, noise_variance, mean)


@dataclass
class GprModel:
    x_train: np.ndarray
    y_train: np.ndarray
    spec: KernelSpec
    mean: float
    noise_variance: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    history: list[float] = field(default_factory=list)  # NLML per epoch, then final

    @property
    def prior_variance(self) -> float:
        return float(sum(leaf.variance for leaf in leaves(self.spec)))


def _finalize(workspace: _NlmlWorkspace, spec, noise_variance, c, history) -> GprModel:
    _, L, alpha, value, jitter = workspace._factorize(spec, noise_variance, c)
    return GprModel(x_train=workspace.X, y_train=workspace.y, spec=spec, mean=c,
                    noise_variance=noise_variance, chol=L, alpha=alpha, jitter=jitter,
                    history=history + [value])


def fit_gpr(X: np.ndarray, y: np.ndarray, spec: KernelSpec | None = None,
            epochs: int = DEFAULT_GPR_EPOCHS, lr: float = DEFAULT_GPR_LR,
            seed: int | None = None) -> GprModel:
    """Train hyperparameters by Adam on the NLML.

    The kernel argument fixes structure only (RBF/Matern/sum, ARD dimension);
    starting values follow a fixed rule in scaled feature space: unit
    lengthscales, total signal variance var(y) split across leaves, noise
    variance 0.1 var(y), mean = mean(y). Training is deterministic, so `seed`
    is accepted for interface symmetry with the other model families but unused.
    """
    del seed
    workspace = _NlmlWorkspace(X, y)
    if workspace.n < 2:
        raise ValidationError("need at least two samples to fit")
    if epochs < 0:
        raise ValidationError("epochs must be >= 0")
    dim = workspace.X.shape[1]
    spec = default_plain_kernel(dim) if spec is None else spec
    if ard_dim(spec) != dim:
        raise ValidationError(f"kernel ARD dimension {ard_dim(spec)} != feature dimension {dim}")

    y_var = float(np.var(workspace.y))
    if y_var <= 0.0:
        y_var = 1.0  # constant targets: fall back to unit scale
    n_leaves = len(leaves(spec))
    log_ls = np.zeros(dim)
    theta_parts = []
    for _ in range(n_leaves):
        theta_parts.append(log_ls)
        theta_parts.append([math.log(y_var / n_leaves)])
    theta = np.concatenate(theta_parts + [[math.log(0.1 * y_var)], [float(np.mean(workspace.y))]])

    def unpack(vec):
        # values outside the representable range are a numerical failure of
        # the optimization, not an input-validation problem
        try:
            k = set_log_params(spec, vec[:-2])
            noise_var = math.exp(vec[-2])
        except (ValidationError, OverflowError) as exc:
            raise TrainingError(f"hyperparameters left the representable range: {exc}") from exc
        if not math.isfinite(noise_var):
            raise TrainingError("noise variance overflowed during training")
        return k, noise_var, float(vec[-1])

    state = adam_init(theta.shape, lr)
    history: list[float] = []
    last_valid = None
    for _ in range(epochs):
        try:
            kern, noise_var, c = unpack(theta)
            value, grad = workspace.value_and_grad(kern, noise_var, c)
        except TrainingError:
            break
        history.append(value)
        last_valid = theta
        state, theta = adam_step(state, theta, grad)

    for candidate in (theta, last_valid):
        if candidate is None:
            continue
        try:
            kern, noise_var, c = unpack(candidate)
            return _finalize(workspace, kern, noise_var, c, history)
        except TrainingError:
            continue
    raise TrainingError("kernel matrix could not be factorized at any visited state")


def predict_gpr(model: GprModel, X_star: np.ndarray, include_noise: bool = True
                ) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at new inputs.

    mean = c + K_*^T alpha; variance = k(x,x) - ||L^-1 K_*||^2, plus the noise
    variance by default (predicting observations rather than the latent rate).
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != model.x_train.shape[1]:
        raise ValidationError(
            f"feature dimension {X_star.shape[1]} != training dimension "
            f"{model.x_train.shape[1]}")
    k_star = gram(model.x_train, X_star, model.spec)
    mean = model.mean + k_star.T @ model.alpha
    w = solve_triangular(model.chol, k_star, lower=True, check_finite=False)
    var = model.prior_variance - np.sum(w * w, axis=0)
    var = np.maximum(var, 1e-12 * model.prior_variance)
    if include_noise:
        var = var + model.noise_variance
    return mean, var


@dataclass
class LogGprModel:
    inner: GprModel
    epsilon: float
    back_transform: str  # "median" or "mean"


def fit_log_gpr(X: np.ndarray, y: np.ndarray, spec: KernelSpec | None = None,
                epochs: int = DEFAULT_GPR_EPOCHS, lr: float = DEFAULT_GPR_LR,
                epsilon: float = DEFAULT_LOG_EPSILON, back_transform: str = "median",
                seed: int | None = None) -> LogGprModel:
    """GPR on ln(y + epsilon); predictions are mapped back to rate space."""
    if back_transform not in ("median", "mean"):
        raise ValidationError(f"back_transform must be 'median' or 'mean', got {back_transform!r}")
    if epsilon < 0:
        raise ValidationError("epsilon must be >= 0")
    y = np.asarray(y, dtype=float).ravel()
    if np.any(y + epsilon <= 0):
        raise ValidationError("targets must satisfy y + epsilon > 0 for the log transform")
    dim = np.atleast_2d(X).shape[1]
    spec = default_log_kernel(dim) if spec is None else spec
    inner = fit_gpr(X, np.log(y + epsilon), spec=spec, epochs=epochs, lr=lr, seed=seed)
    return LogGprModel(inner=inner, epsilon=epsilon, back_transform=back_transform)


def back_transform_log_predictions(mu: np.ndarray, var: np.ndarray, epsilon: float,
                                   mode: str) -> np.ndarray:
    """Map a log-space predictive Gaussian back to rate space, clamped at zero.

    median mode: exp(mu) - epsilon (log-normal median, robust to the error
    amplification of exponentiation); mean mode: exp(mu + var/2) - epsilon.
    """
    if mode == "median":
        out = np.exp(np.asarray(mu, dtype=float)) - epsilon
    elif mode == "mean":
        out = np.exp(np.asarray(mu, dtype=float) + 0.5 * np.asarray(var, dtype=float)) - epsilon
    else:
        raise ValidationError(f"back_transform must be 'median' or 'mean', got {mode!r}")
    return np.maximum(out, 0.0)


def predict_log_gpr(model: LogGprModel, X_star: np.ndarray) -> np.ndarray:
    """Back-transformed rate predictions, clamped to be non-negative."""
    mu, var = predict_gpr(model.inner, X_star, include_noise=True)
    return back_transform_log_predictions(mu, var, model.epsilon, model.back_transform)


def _data_checksum(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    h.update(repr(X.shape).encode())
    return h.hexdigest()


def gpr_to_dict(model: GprModel) -> dict:
    """Serializable form; the Cholesky factor and alpha are rebuilt on load."""
    return {
        "kind": "gpr",
        "kernel": kernel_to_dict(model.spec),
        "mean": float(model.mean),
        "noise_variance": float(model.noise_variance),
        "x_train": model.x_train.tolist(),
        "y_train": model.y_train.tolist(),
        "checksum": _data_checksum(model.x_train, model.y_train),
    }


def gpr_from_dict(d: dict) -> GprModel:
    if d.get("kind") != "gpr":
        raise ValidationError(f"expected kind 'gpr', got {d.get('kind')!r}")
    X = np.asarray(d["x_train"], dtype=float)
    y = np.asarray(d["y_train"], dtype=float)
    if _data_checksum(X, y) != d["checksum"]:
        raise ValidationError("training-data checksum mismatch")
    spec = kernel_from_dict(d["kernel"])
    workspace = _NlmlWorkspace(X, y)
    model = _finalize(workspace, spec, float(d["noise_variance"]), float(d["mean"]), [])
    return model


def log_gpr_to_dict(model: LogGprModel) -> dict:
    return {"kind": "log-gpr", "inner": gpr_to_dict(model.inner),
            "epsilon": float(model.epsilon), "back_transform": model.back_transform}


def log_gpr_from_dict(d: dict) -> LogGprModel:
    if d.get("kind") != "log-gpr":
        raise ValidationError(f"expected kind 'log-gpr', got {d.get('kind')!r}")
    return LogGprModel(inner=gpr_from_dict(d["inner"]), epsilon=float(d["epsilon"]),
                       back_transform=str(d["back_transform"]))
