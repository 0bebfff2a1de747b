"""Vector autoregressive modeling: estimation, prediction, simulation.

The model is

    y_t = c + A_1 y_{t-1} + ... + A_p y_{t-p} + u_t,

with K-dimensional state y_t, intercept c, K x K coefficient matrices A_i and
zero-mean Gaussian noise u_t with covariance Sigma.  Estimation is per-equation
ordinary least squares on the lagged design matrix, which is the optimal
estimator for independent Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_REG_EPS = 1e-8


class RankDeficiencyError(ValueError):
    """Design matrix does not have full column rank."""


class UnstableModelError(ValueError):
    """Companion spectral radius is >= 1, the process is not stationary."""


@dataclass(frozen=True)
class VarModel:
    """A fitted (or constructed) VAR(p) model.

    Attributes
    ----------
    c : (K,) intercept vector
    coefs : (p, K, K) lag coefficient matrices, coefs[i] multiplies y_{t-1-i}
    sigma : (K, K) symmetric positive-definite noise covariance
    trained_on : number of samples the model was fitted on (0 if constructed)
    """

    c: np.ndarray
    coefs: np.ndarray
    sigma: np.ndarray
    trained_on: int = 0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        coefs = np.asarray(self.coefs, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if coefs.ndim == 2:
            coefs = coefs[None, :, :]
        if coefs.ndim != 3 or coefs.shape[1] != coefs.shape[2]:
            raise ValueError(f"coefs must be (p, K, K), got {coefs.shape}")
        K = coefs.shape[1]
        if c.shape != (K,):
            raise ValueError(f"c must have shape ({K},), got {c.shape}")
        if sigma.shape != (K, K):
            raise ValueError(f"sigma must have shape ({K}, {K}), got {sigma.shape}")
        if not np.all(np.isfinite(coefs)) or not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise ValueError("sigma must be symmetric within 1e-12")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    @property
    def p(self) -> int:
        return self.coefs.shape[0]

    @property
    def K(self) -> int:
        return self.coefs.shape[1]

    def companion(self) -> np.ndarray:
        """Companion form state matrix, shape (K*p, K*p)."""
        p, K = self.p, self.K
        top = np.hstack([self.coefs[i] for i in range(p)])
        if p == 1:
            return top
        lower = np.hstack([np.eye(K * (p - 1)), np.zeros((K * (p - 1), K))])
        return np.vstack([top, lower])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    def is_stable(self, tol: float = 1e-9) -> bool:
        return self.spectral_radius() < 1.0 - tol

    def stationary_mean(self) -> np.ndarray:
        """Fixed point mu = (I - sum_i A_i)^{-1} c of the noiseless recursion."""
        return np.linalg.solve(np.eye(self.K) - self.coefs.sum(axis=0), self.c)

    def sigma_regularized(self) -> np.ndarray:
        return regularize_spd(self.sigma)

    # -- text serialization -------------------------------------------------

    def to_text(self) -> str:
        """Self-describing text rendering, exact round trip via `from_text`."""
        lines = ["varmodel v1", f"p {self.p}", f"K {self.K}", f"trained_on {self.trained_on}"]
        lines.append("c " + " ".join(repr(float(v)) for v in self.c))
        for i in range(self.p):
            flat = " ".join(repr(float(v)) for v in self.coefs[i].ravel())
            lines.append(f"A{i + 1} {flat}")
        lines.append("Sigma " + " ".join(repr(float(v)) for v in self.sigma.ravel()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VarModel":
        fields = {}
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "varmodel v1":
            raise ValueError("not a varmodel v1 document")
        for ln in lines[1:]:
            key, _, rest = ln.partition(" ")
            fields[key] = rest
        p = int(fields["p"])
        K = int(fields["K"])
        c = np.array([float(v) for v in fields["c"].split()])
        coefs = np.stack(
            [np.array([float(v) for v in fields[f"A{i + 1}"].split()]).reshape(K, K) for i in range(p)]
        )
        sigma = np.array([float(v) for v in fields["Sigma"].split()]).reshape(K, K)
        return cls(c=c, coefs=coefs, sigma=sigma, trained_on=int(fields.get("trained_on", 0)))


def regularize_spd(sigma: np.ndarray, eps: float = SIGMA_REG_EPS) -> np.ndarray:
    """Add eps * (trace/K) * I so downstream inversions survive near-singular
    covariances from strongly correlated channels."""
    sigma = np.asarray(sigma, dtype=float)
    K = sigma.shape[0]
    return sigma + eps * (np.trace(sigma) / K) * np.eye(K)


def _lagged_design(series: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Build (Z, Y): Y rows are y_t for t >= p, Z rows are [1, y_{t-1}, ..., y_{t-p}]."""
    n, K = series.shape
    rows = n - p
    Z = np.empty((rows, 1 + K * p))
    Z[:, 0] = 1.0
    for i in range(1, p + 1):
        Z[:, 1 + (i - 1) * K : 1 + i * K] = series[p - i : n - i]
    return Z, series[p:]


def fit_var(series: np.ndarray, p: int) -> VarModel:
    """Fit a VAR(p) by per-equation ordinary least squares.

    Parameters
    ----------
    series : (n, K) array, one row per time step (standardized units expected)
    p : lag order, >= 1

    Returns
    -------
    VarModel with noise covariance estimated from in-sample residuals
    (denominator n - p).

    Raises
    ------
    ValueError if the series is too short for identification.
    RankDeficiencyError if the lagged design matrix is column rank deficient.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("series must be 2-D (n, K)")
    n, K = series.shape
    if p < 1:
        raise ValueError("lag order p must be >= 1")
    if n <= K * p + 1:
        raise ValueError(f"need more than K*p+1 = {K * p + 1} samples, got {n}")
    Z, Y = _lagged_design(series, p)
    coef, _, rank, _ = np.linalg.lstsq(Z, Y, rcond=None)
    if rank < Z.shape[1]:
        raise RankDeficiencyError(
            f"design matrix rank {rank} < {Z.shape[1]}; regressors are collinear"
        )
    resid = Y - Z @ coef
    sigma = resid.T @ resid / (n - p)
    c = coef[0].copy()
    coefs = np.stack([coef[1 + (i - 1) * K : 1 + i * K, :].T for i in range(1, p + 1)])
    return VarModel(c=c, coefs=coefs, sigma=sigma, trained_on=n)


def _check_lags(model: VarModel, lags: np.ndarray) -> np.ndarray:
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    if lags.shape != (model.p, model.K):
        raise ValueError(f"expected {model.p} lag vectors of dimension {model.K}, got {lags.shape}")
    return lags


def predict_one(model: VarModel, lags: np.ndarray) -> np.ndarray:
    """One-step prediction c + sum_i A_i y_{t-i}.

    `lags` holds the p most recent states in chronological order, so
    lags[-1] is y_{t-1}.
    """
    lags = _check_lags(model, lags)
    y = model.c.copy()
    for i in range(model.p):
        y += model.coefs[i] @ lags[-1 - i]
    return y


def forecast_q(model: VarModel, lags: np.ndarray, q: int) -> np.ndarray:
    """q-step forecast trajectory by iterating the one-step prediction,
    feeding each forecast back in as the most recent lag.  Returns (q, K)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    window = _check_lags(model, lags).copy()
    out = np.empty((q, model.K))
    for j in range(q):
        nxt = predict_one(model, window)
        out[j] = nxt
        window = np.vstack([window[1:], nxt]) if model.p > 1 else nxt[None, :]
    return out


def residual(model: VarModel, lags: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Residual r_t = prediction - observation (prediction-minus-data sign)."""
    observed = np.asarray(observed, dtype=float)
    return predict_one(model, lags) - observed


def simulate(model: VarModel, n: int, seed, burn_in: int = 200) -> np.ndarray:
    """Simulate n steps of the process, discarding `burn_in` initial steps.

    Noise is drawn as L z with L the lower Cholesky factor of the regularized
    noise covariance, so the draw is deterministic for a given seed.  The
    recursion starts from the stationary mean.

    Raises
    ------
    UnstableModelError for a companion spectral radius >= 1.
    np.linalg.LinAlgError if the covariance cannot be factorized after
    regularization.
    """
    if not model.is_stable(tol=0.0):
        raise UnstableModelError(f"spectral radius {model.spectral_radius():.4f} >= 1")
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(model.sigma_regularized())
    p, K = model.p, model.K
    total = n + burn_in
    shocks = rng.standard_normal((total, K)) @ L.T
    out = np.empty((total + p, K))
    out[:p] = model.stationary_mean()
    for t in range(p, total + p):
        y = model.c + shocks[t - p]
        for i in range(p):
            y += model.coefs[i] @ out[t - 1 - i]
        out[t] = y
    return out[p + burn_in :]


def random_stable_var(K: int, p: int, rng: np.random.Generator, spectral_radius: float = 0.95) -> VarModel:
    """Draw a random stable VAR(p) for synthetic experiments.

    Coefficients start from i.i.d. uniform[-1, 1] entries; scaling A_i by s^i
    with s = target / rho(companion) rescales every companion eigenvalue by s,
    pinning the spectral radius exactly.  The noise covariance is a random
    diagonal plus a rank-one bump, normalized to unit trace.
    """
    coefs = rng.uniform(-1.0, 1.0, size=(p, K, K))
    probe = VarModel(c=np.zeros(K), coefs=coefs, sigma=np.eye(K))
    rho = probe.spectral_radius()
    scale = spectral_radius / rho
    coefs = np.stack([coefs[i] * scale ** (i + 1) for i in range(p)])
    d = rng.uniform(0.5, 1.5, size=K)
    v = rng.uniform(-1.0, 1.0, size=K)
    sigma = np.diag(d) + 0.1 * np.outer(v, v)
    sigma /= np.trace(sigma)
    return VarModel(c=np.zeros(K), coefs=coefs, sigma=sigma)
