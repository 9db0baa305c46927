"""Gaussian-process regression with a circulant Gram matrix.

Training inputs are the first n = 2^m points of a rank-1 lattice in natural
index order (optionally under one common shift). The covariance kernel is a
product over input dimensions of ``1 + gamma_l * eta_alpha(wrapped distance)``
where eta_alpha is the even-degree Bernoulli-polynomial periodic kernel
factor. Because the kernel depends only on coordinatewise differences mod 1
and the lattice in natural order is the cyclic group under addition mod 1,
the Gram matrix satisfies K[i][j] = K[0][(j-i) mod n] and is diagonalized by
the discrete Fourier transform. Fitting, marginal-likelihood optimization,
and posterior evaluation then cost O(n log n).

A dense-algebra path with identical contracts (Cholesky factorization of the
explicitly assembled Gram matrix) is provided as the correctness oracle.
"""

from __future__ import annotations

import base64
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

__all__ = [
    "PeriodicKernel",
    "default_kernel",
    "FastGpModel",
    "DenseGpModel",
    "TailCache",
    "gram_spectrum",
    "fit",
    "prior_model",
    "posterior_mean",
    "posterior_variance",
    "posterior_cross_covariance",
    "log_marginal_likelihood",
    "dense_fit",
    "dense_posterior_mean",
    "dense_posterior_variance",
    "dense_log_marginal_likelihood",
    "save_model",
    "load_model",
]

DENSE_MAX_N = 2048
_CHUNK_ROWS = 8192
_LOG_PARAM_RANGE = 30.0
VARIANCE_ROUNDOFF_FLOOR = -1e-8


@dataclass(frozen=True)
class PeriodicKernel:
    """Shift-invariant product kernel of smoothness order alpha in {2, 4}.

    k(t, t') = scale * prod_l [1 + weights_l * eta(order, (t_l - t'_l) mod 1)]

    with eta(2, u) = 2 pi^2 (u^2 - u + 1/6) and
    eta(4, u) = -(2 pi)^4 / 24 (u^4 - 2 u^3 + u^2 - 1/30). Both have
    nonnegative Fourier coefficients, so the kernel is positive-definite for
    any positive weights and scale.
    """

    weights: np.ndarray
    scale: float = 1.0
    order: int = 4

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(w <= 0):
            raise ValueError("kernel weights must be positive")
        object.__setattr__(self, "weights", w)
        if self.scale <= 0:
            raise ValueError("kernel scale must be positive")
        if self.order not in (2, 4):
            raise ValueError("kernel order must be 2 or 4")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def wrapped_poly(self, u: np.ndarray) -> np.ndarray:
        """eta_order evaluated at wrapped distances u in [0, 1)."""
        if self.order == 2:
            return 2.0 * np.pi**2 * (u * u - u + 1.0 / 6.0)
        return -((2.0 * np.pi) ** 4) / 24.0 * (u**4 - 2.0 * u**3 + u * u - 1.0 / 30.0)

    def diag_value(self) -> float:
        """k(t, t), independent of t by stationarity."""
        return float(self.scale * np.prod(1.0 + self.weights * self.wrapped_poly(np.zeros(self.dim))))

    def cross(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Kernel matrix between row sets a (A, p) and b (B, p), built one
        dimension at a time to keep memory at O(A*B)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if a.shape[1] != self.dim or b.shape[1] != self.dim:
            raise ValueError(f"kernel has {self.dim} dims, inputs have {a.shape[1]} and {b.shape[1]}")
        out = np.full((a.shape[0], b.shape[0]), self.scale)
        for l in range(self.dim):
            u = (a[:, l][:, None] - b[:, l][None, :]) % 1.0
            out *= 1.0 + self.weights[l] * self.wrapped_poly(u)
        return out


def default_kernel(p: int, y_variance: float = 1.0, order: int = 4, weight: float = 0.1) -> PeriodicKernel:
    """Initial kernel for hyperparameter optimization: modest per-dimension
    weights with the scale normalized so the prior marginal variance k(t, t)
    matches the observation variance."""
    unit = PeriodicKernel(weights=np.full(p, weight), scale=1.0, order=order)
    var = y_variance if y_variance > 0 else 1.0
    return replace(unit, scale=var / unit.diag_value())


def _check_lattice_shape(points: np.ndarray) -> tuple[int, int]:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (n, p) matrix")
    n = pts.shape[0]
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"n={n} must be a power of two for the circulant construction")
    return pts.shape


def _first_column_factors(kernel: PeriodicKernel, points: np.ndarray) -> np.ndarray:
    """Per-dimension eta values of the Gram first column: eta_l((x_i - x_0) mod 1)."""
    u = (points - points[0][None, :]) % 1.0
    return kernel.wrapped_poly(u)  # (n, p)


def _half_weights(n: int) -> np.ndarray:
    """Multiplicities that unfold a half spectrum back to the full one."""
    m = n // 2 + 1
    w = np.full(m, 2.0)
    w[0] = 1.0
    if n % 2 == 0 and n > 1:
        w[-1] = 1.0
    return w


def gram_spectrum(kernel: PeriodicKernel, points: np.ndarray) -> np.ndarray:
    """Eigenvalues of the circulant Gram matrix: the DFT of its first column.

    Length-n vector of real values; imaginary round-off is checked against
    the symmetry of the first column and discarded.
    """
    n, p = _check_lattice_shape(points)
    if p != kernel.dim:
        raise ValueError(f"kernel has {kernel.dim} dims, points have {p}")
    pts = np.asarray(points, dtype=float)
    F = 1.0 + kernel.weights[None, :] * kernel.wrapped_poly((pts - pts[0][None, :]) % 1.0)
    c = kernel.scale * np.prod(F, axis=1)
    lam = np.fft.fft(c)
    scale_ref = max(float(np.max(np.abs(lam.real))), 1.0)
    if np.max(np.abs(lam.imag)) > 1e-8 * scale_ref:
        raise ValueError("Gram first column is not symmetric; are the points an unshifted or commonly shifted lattice?")
    return lam.real


@dataclass(frozen=True)
class FastGpModel:
    """Fitted fast GP: lattice points, observations, kernel, noise, and the
    Fourier-domain constants for posterior evaluation."""

    points: np.ndarray  # (n, p)
    y: np.ndarray  # (n,)
    kernel: PeriodicKernel
    zeta: float
    spectrum: np.ndarray  # (n,) circulant eigenvalues
    coefficients: np.ndarray  # (n,) cached (K + zeta I)^{-1} y
    shift: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.points.shape[1]


def prior_model(kernel: PeriodicKernel, zeta: float = 0.0) -> FastGpModel:
    """Zero-data model: the posterior equals the zero-mean prior."""
    p = kernel.dim
    return FastGpModel(
        points=np.zeros((0, p)),
        y=np.zeros(0),
        kernel=kernel,
        zeta=float(zeta),
        spectrum=np.zeros(0),
        coefficients=np.zeros(0),
    )


def _loglik_and_grad(eta0, yh2_half, wts, n, kernel, zeta, want_grad=True, zeta_fixed=False):
    """Log marginal likelihood (and d/dlog-theta gradient) via the spectrum.

    yh2_half carries |rfft(y)|^2 / n; wts the half-spectrum multiplicities.
    Returns (ll, grad or None); ll is -inf when the regularized spectrum is
    not strictly positive.
    """
    F = 1.0 + kernel.weights[None, :] * eta0
    c = kernel.scale * np.prod(F, axis=1)
    A = np.fft.rfft(c).real + zeta
    if np.any(A <= 0.0) or not np.all(np.isfinite(A)):
        return -np.inf, None
    ll = -0.5 * np.sum(wts * yh2_half / A) - 0.5 * np.sum(wts * np.log(A)) - 0.5 * n * math.log(2.0 * math.pi)
    if not want_grad:
        return ll, None
    # d ll / d lambda-hat contracted against d lambda-hat / d log-theta
    front = 0.5 * wts * (yh2_half / A - 1.0) / A

    def contract(dc):
        return float(np.sum(front * np.fft.rfft(dc).real))

    p = kernel.dim
    grad = np.empty(p + (1 if not zeta_fixed else 0) + 1)
    grad[0] = contract(c)  # log scale: dc = c
    pre = np.ones_like(F)
    for l in range(1, p):
        pre[:, l] = pre[:, l - 1] * F[:, l - 1]
    suf = np.ones_like(F)
    for l in range(p - 2, -1, -1):
        suf[:, l] = suf[:, l + 1] * F[:, l + 1]
    for l in range(p):
        dc = kernel.scale * pre[:, l] * suf[:, l] * (kernel.weights[l] * eta0[:, l])
        grad[1 + l] = contract(dc)
    if not zeta_fixed:
        grad[-1] = float(np.sum(front) * zeta)
    return ll, grad


def _ascend(value_and_grad, theta0, max_iterations, rel_tol):
    """Backtracking gradient ascent in log-parameter space.

    Each iteration restarts the Armijo line search from a healthy step so a
    single backtracked step cannot trap the ascent in a micro-step regime;
    convergence means the line search fails outright or the relative gain
    stays below tolerance for two consecutive accepted steps.
    """
    theta = np.clip(theta0, -_LOG_PARAM_RANGE, _LOG_PARAM_RANGE)
    ll, grad = value_and_grad(theta, True)
    if not np.isfinite(ll):
        raise ValueError("non-finite marginal likelihood at the initial hyperparameters")
    step = 0.25
    iterations = 0
    converged = False
    small_gains = 0
    for _ in range(max_iterations):
        iterations += 1
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            converged = True
            break
        step = min(step * 4.0, 8.0 / max(1.0, math.sqrt(gnorm2)))
        improved = False
        while step > 1e-14:
            trial = np.clip(theta + step * grad, -_LOG_PARAM_RANGE, _LOG_PARAM_RANGE)
            ll_t, _ = value_and_grad(trial, False)
            if np.isfinite(ll_t) and ll_t > ll + 1e-4 * step * gnorm2:
                improved = True
                break
            step *= 0.5
        if not improved:
            converged = True
            break
        gain = ll_t - ll
        theta = trial
        ll, grad = value_and_grad(theta, True)
        small_gains = small_gains + 1 if gain <= rel_tol * max(1.0, abs(ll)) else 0
        if small_gains >= 2:
            converged = True
            break
    return theta, ll, iterations, converged


def fit(
    points: np.ndarray,
    y: np.ndarray,
    zeta_init: float,
    optimize: bool = True,
    kernel: PeriodicKernel | None = None,
    max_iterations: int = 200,
    rel_tol: float = 1e-8,
    shift: np.ndarray | None = None,
) -> FastGpModel:
    """Fit the fast GP, optionally maximizing the marginal likelihood.

    The optimizer runs gradient ascent with backtracking over
    (log scale, log weights, log zeta); every likelihood and gradient
    evaluation uses the circulant spectrum, so one iteration costs
    O((p + 2) n log n). ``zeta_init`` comes from the discretization-error
    calibration; zeta stays fixed at zero when ``zeta_init`` is zero since a
    zero noise floor cannot be optimized in log space.
    """
    n, p = _check_lattice_shape(points)
    pts = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if zeta_init < 0:
        raise ValueError("zeta_init must be >= 0")

    if kernel is None:
        kernel = default_kernel(p, float(np.var(y)))
    if kernel.dim != p:
        raise ValueError(f"kernel has {kernel.dim} dims, points have {p}")

    zeta = float(zeta_init)
    diagnostics = {"zeta_init": zeta, "optimized": bool(optimize)}
    if optimize:
        eta0 = _first_column_factors(kernel, pts)
        yh2_half = np.abs(np.fft.rfft(y)) ** 2 / n
        wts = _half_weights(n)
        zeta_fixed = zeta == 0.0

        def value_and_grad(theta, want_grad):
            k = replace(kernel, scale=math.exp(theta[0]), weights=np.exp(theta[1 : 1 + p]))
            z = zeta if zeta_fixed else math.exp(theta[-1])
            return _loglik_and_grad(eta0, yh2_half, wts, n, k, z, want_grad, zeta_fixed)

        theta0 = np.concatenate([[math.log(kernel.scale)], np.log(kernel.weights), [] if zeta_fixed else [math.log(zeta)]])
        theta, ll, iterations, converged = _ascend(value_and_grad, theta0, max_iterations, rel_tol)
        kernel = replace(kernel, scale=math.exp(theta[0]), weights=np.exp(theta[1 : 1 + p]))
        if not zeta_fixed:
            zeta = math.exp(theta[-1])
        diagnostics.update(iterations=iterations, converged=converged, log_likelihood=float(ll))

    spectrum = gram_spectrum(kernel, pts)
    A = spectrum + zeta
    if np.any(A <= 0.0) or not np.all(np.isfinite(A)):
        raise ValueError(
            f"regularized spectrum is not positive (min {float(np.min(A)):.3e}); "
            "the system is numerically singular"
        )
    coefficients = np.fft.irfft(np.fft.rfft(y) / (spectrum[: n // 2 + 1] + zeta), n)
    if "log_likelihood" not in diagnostics:
        diagnostics["log_likelihood"] = _loglik_value(spectrum, y, zeta)
    return FastGpModel(
        points=pts,
        y=y,
        kernel=kernel,
        zeta=zeta,
        spectrum=spectrum,
        coefficients=coefficients,
        shift=None if shift is None else np.asarray(shift, dtype=float),
        diagnostics=diagnostics,
    )


def _loglik_value(spectrum: np.ndarray, y: np.ndarray, zeta: float) -> float:
    n = len(y)
    half = spectrum[: n // 2 + 1] + zeta
    wts = _half_weights(n)
    yh2 = np.abs(np.fft.rfft(y)) ** 2 / n
    return float(-0.5 * np.sum(wts * yh2 / half) - 0.5 * np.sum(wts * np.log(half)) - 0.5 * n * math.log(2 * math.pi))


def log_marginal_likelihood(model: FastGpModel) -> float:
    """Log p(y | points, kernel, zeta) evaluated through the spectrum."""
    if model.n == 0:
        return 0.0
    return _loglik_value(model.spectrum, model.y, model.zeta)


def posterior_mean(model: FastGpModel, t: np.ndarray):
    """Posterior mean at query rows t; O(n p) per query from the cached
    coefficient vector. Scalar in, scalar out."""
    single = np.asarray(t).ndim == 1
    T = np.atleast_2d(np.asarray(t, dtype=float))
    if model.n == 0:
        out = np.zeros(T.shape[0])
        return float(out[0]) if single else out
    out = np.empty(T.shape[0])
    for lo in range(0, T.shape[0], _CHUNK_ROWS):
        chunk = T[lo : lo + _CHUNK_ROWS]
        out[lo : lo + len(chunk)] = model.kernel.cross(chunk, model.points) @ model.coefficients
    return float(out[0]) if single else out


def posterior_variance(model: FastGpModel, t: np.ndarray):
    """Posterior variance at query rows t via one length-n transform per
    query row. Tiny negative round-off is clamped to zero; values below the
    documented floor trigger a warning."""
    single = np.asarray(t).ndim == 1
    T = np.atleast_2d(np.asarray(t, dtype=float))
    prior = model.kernel.diag_value()
    if model.n == 0:
        out = np.full(T.shape[0], prior)
        return float(out[0]) if single else out
    n = model.n
    A = model.spectrum[: n // 2 + 1] + model.zeta
    out = np.empty(T.shape[0])
    for lo in range(0, T.shape[0], _CHUNK_ROWS):
        chunk = T[lo : lo + _CHUNK_ROWS]
        kt = model.kernel.cross(chunk, model.points)
        sol = np.fft.irfft(np.fft.rfft(kt, axis=1) / A[None, :], n, axis=1)
        out[lo : lo + len(chunk)] = prior - np.sum(kt * sol, axis=1)
    if np.any(out < VARIANCE_ROUNDOFF_FLOOR):
        warnings.warn(
            f"posterior variance fell to {float(np.min(out)):.3e}, below the round-off floor",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.clip(out, 0.0, None)
    return float(out[0]) if single else out


def posterior_cross_covariance(model: FastGpModel, t: np.ndarray, t2: np.ndarray) -> float:
    """Posterior covariance k_n(t, t') for a single query pair."""
    t = np.asarray(t, dtype=float).reshape(1, -1)
    t2 = np.asarray(t2, dtype=float).reshape(1, -1)
    prior = float(model.kernel.cross(t, t2)[0, 0])
    if model.n == 0:
        return prior
    n = model.n
    A = model.spectrum[: n // 2 + 1] + model.zeta
    kt = model.kernel.cross(t, model.points)[0]
    kt2 = model.kernel.cross(t2, model.points)[0]
    sol = np.fft.irfft(np.fft.rfft(kt2) / A, n)
    return prior - float(kt @ sol)


class TailCache:
    """Posterior evaluation cache for query batches that share every
    coordinate except the first.

    Confidence sweeps evaluate the surrogate at (r_u, U_i) for many rates r_u
    over a fixed node set U: the kernel factors over dimensions, so the
    product of the trailing-dimension factors against the training points is
    precomputed once and each rate costs one rank-1 factor update plus the
    batched transform.
    """

    def __init__(self, model: FastGpModel, tail: np.ndarray):
        tail = np.atleast_2d(np.asarray(tail, dtype=float))
        if tail.shape[1] != model.p - 1:
            raise ValueError(f"tail coordinates must have {model.p - 1} columns")
        self.model = model
        self.tail = tail
        self.prior = model.kernel.diag_value()
        if model.n:
            k = model.kernel
            part = np.full((tail.shape[0], model.n), k.scale)
            for l in range(1, model.p):
                u = (tail[:, l - 1][:, None] - model.points[:, l][None, :]) % 1.0
                part *= 1.0 + k.weights[l] * k.wrapped_poly(u)
            self.partial = part
            self.half = model.spectrum[: model.n // 2 + 1] + model.zeta

    def evaluate(self, first_coordinate: float) -> tuple[np.ndarray, np.ndarray]:
        """(posterior mean, posterior variance) over the cached node rows."""
        m = self.model
        if m.n == 0:
            B = self.tail.shape[0]
            return np.zeros(B), np.full(B, self.prior)
        u0 = (float(first_coordinate) - m.points[:, 0]) % 1.0
        kt = self.partial * (1.0 + m.kernel.weights[0] * m.kernel.wrapped_poly(u0))[None, :]
        mean = kt @ m.coefficients
        sol = np.fft.irfft(np.fft.rfft(kt, axis=1) / self.half[None, :], m.n, axis=1)
        var = np.clip(self.prior - np.sum(kt * sol, axis=1), 0.0, None)
        return mean, var


# ---------------------------------------------------------------------------
# Dense-algebra oracle path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DenseGpModel:
    points: np.ndarray
    y: np.ndarray
    kernel: PeriodicKernel
    zeta: float
    cho: tuple = field(repr=False, default=None)
    coefficients: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)


def _dense_loglik_and_grad(K_parts, y, kernel, zeta, want_grad=True, zeta_fixed=False):
    eta_by_dim, n = K_parts
    F = [1.0 + kernel.weights[l] * eta_by_dim[l] for l in range(kernel.dim)]
    K = kernel.scale * np.ones((n, n))
    for Fl in F:
        K = K * Fl
    C = K + zeta * np.eye(n)
    try:
        cho = scipy.linalg.cho_factor(C, lower=True)
    except scipy.linalg.LinAlgError:
        return -np.inf, None, None
    a = scipy.linalg.cho_solve(cho, y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    ll = -0.5 * float(y @ a) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
    if not want_grad:
        return ll, None, (cho, a)
    Cinv = scipy.linalg.cho_solve(cho, np.eye(n))

    def g(dK):
        return 0.5 * float(a @ dK @ a) - 0.5 * float(np.sum(Cinv * dK))

    p = kernel.dim
    grad = np.empty(p + (0 if zeta_fixed else 1) + 1)
    grad[0] = g(K)
    for l in range(p):
        other = kernel.scale * np.ones((n, n))
        for m_ in range(p):
            if m_ != l:
                other = other * F[m_]
        grad[1 + l] = g(other * (kernel.weights[l] * eta_by_dim[l]))
    if not zeta_fixed:
        grad[-1] = 0.5 * zeta * float(a @ a) - 0.5 * zeta * float(np.trace(Cinv))
    return ll, grad, (cho, a)


def dense_fit(
    points: np.ndarray,
    y: np.ndarray,
    zeta_init: float,
    optimize: bool = True,
    kernel: PeriodicKernel | None = None,
    max_iterations: int = 200,
    rel_tol: float = 1e-8,
) -> DenseGpModel:
    """Textbook GPR with explicit Gram assembly and Cholesky factorization.

    Same contracts as :func:`fit`; O(n^3) per likelihood evaluation, guarded
    to n <= 2048. Serves as the independent oracle for the fast path.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = pts.shape
    if n > DENSE_MAX_N:
        raise ValueError(f"dense path is guarded to n <= {DENSE_MAX_N}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if kernel is None:
        kernel = default_kernel(p, float(np.var(y)))

    base = PeriodicKernel(weights=np.ones(p), scale=1.0, order=kernel.order)
    eta_by_dim = [base.wrapped_poly((pts[:, l][:, None] - pts[:, l][None, :]) % 1.0) for l in range(p)]
    K_parts = (eta_by_dim, n)
    zeta = float(zeta_init)
    diagnostics = {"zeta_init": zeta, "optimized": bool(optimize)}

    if optimize:
        zeta_fixed = zeta == 0.0

        def value_and_grad(theta, want_grad):
            k = replace(kernel, scale=math.exp(theta[0]), weights=np.exp(theta[1 : 1 + p]))
            z = zeta if zeta_fixed else math.exp(theta[-1])
            ll, grad, _ = _dense_loglik_and_grad(K_parts, y, k, z, want_grad, zeta_fixed)
            return ll, grad

        theta0 = np.concatenate([[math.log(kernel.scale)], np.log(kernel.weights), [] if zeta_fixed else [math.log(zeta)]])
        theta, ll, iterations, converged = _ascend(value_and_grad, theta0, max_iterations, rel_tol)
        kernel = replace(kernel, scale=math.exp(theta[0]), weights=np.exp(theta[1 : 1 + p]))
        if not zeta_fixed:
            zeta = math.exp(theta[-1])
        diagnostics.update(iterations=iterations, converged=converged, log_likelihood=float(ll))

    ll, _, state = _dense_loglik_and_grad(K_parts, y, kernel, zeta, want_grad=False)
    if state is None:
        raise ValueError("Gram matrix factorization failed; K + zeta I is numerically singular")
    cho, a = state
    diagnostics.setdefault("log_likelihood", float(ll))
    return DenseGpModel(points=pts, y=y, kernel=kernel, zeta=zeta, cho=cho, coefficients=a, diagnostics=diagnostics)


def dense_posterior_mean(model: DenseGpModel, t: np.ndarray):
    single = np.asarray(t).ndim == 1
    T = np.atleast_2d(np.asarray(t, dtype=float))
    out = model.kernel.cross(T, model.points) @ model.coefficients
    return float(out[0]) if single else out


def dense_posterior_variance(model: DenseGpModel, t: np.ndarray):
    single = np.asarray(t).ndim == 1
    T = np.atleast_2d(np.asarray(t, dtype=float))
    kt = model.kernel.cross(T, model.points)
    sol = scipy.linalg.cho_solve(model.cho, kt.T)
    out = np.clip(model.kernel.diag_value() - np.sum(kt * sol.T, axis=1), 0.0, None)
    return float(out[0]) if single else out


def dense_log_marginal_likelihood(model: DenseGpModel) -> float:
    n = model.n
    logdet = 2.0 * float(np.sum(np.log(np.diag(model.cho[0]))))
    return -0.5 * float(model.y @ model.coefficients) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _encode(arr: np.ndarray) -> dict:
    a = np.asarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(payload["shape"]).copy()


def save_model(model: FastGpModel, path: str | Path, generator_info: dict | None = None, config_hash: str | None = None) -> None:
    """Serialize a fitted model to a versioned JSON file with base64 binary
    payloads for the arrays."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "fast-gp-model",
        "n": model.n,
        "p": model.p,
        "kernel": {"order": model.kernel.order, "scale": model.kernel.scale, "weights": model.kernel.weights.tolist()},
        "zeta": model.zeta,
        "shift": None if model.shift is None else model.shift.tolist(),
        "generator": generator_info or {},
        "config_hash": config_hash,
        "diagnostics": model.diagnostics,
        "points": _encode(model.points),
        "y": _encode(model.y),
        "spectrum": _encode(model.spectrum),
        "coefficients": _encode(model.coefficients),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> FastGpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION or doc.get("kind") != "fast-gp-model":
        raise ValueError(f"{path} is not a fast-gp model file of version {MODEL_FORMAT_VERSION}")
    kernel = PeriodicKernel(
        weights=np.asarray(doc["kernel"]["weights"], dtype=float),
        scale=float(doc["kernel"]["scale"]),
        order=int(doc["kernel"]["order"]),
    )
    return FastGpModel(
        points=_decode(doc["points"]),
        y=_decode(doc["y"]).reshape(-1),
        kernel=kernel,
        zeta=float(doc["zeta"]),
        spectrum=_decode(doc["spectrum"]).reshape(-1),
        coefficients=_decode(doc["coefficients"]).reshape(-1),
        shift=None if doc["shift"] is None else np.asarray(doc["shift"], dtype=float),
        diagnostics=doc.get("diagnostics", {}),
    )
