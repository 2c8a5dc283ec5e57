"""Law-invariant risk functions over empirical cost samples.

Evaluation and derivatives act on the empirical law of a Monte Carlo sample:
expectations become weighted sums, the L2 deviation becomes the weighted
standard deviation, and the derivative of the risk at the sample is returned
pointwise per entry.  Everything here is a pure function of immutable inputs
and safe to call concurrently.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateSample

__all__ = [
    "RiskFunction",
    "EmpiricalSample",
    "DirectionalCheck",
    "evaluate",
    "l_derivative",
    "directional_derivative_check",
    "bootstrap_standard_error",
]

EXPECTATION = "expectation"
MEAN_DEVIATION = "mean_deviation"
SMOOTHED_SEMIDEVIATION = "smoothed_semideviation"
ENTROPIC = "entropic"

_KINDS = (EXPECTATION, MEAN_DEVIATION, SMOOTHED_SEMIDEVIATION, ENTROPIC)


@dataclass(frozen=True)
class RiskFunction:
    """Tagged risk functional.

    kind selects among:
      expectation               mean
      mean_deviation            mean + beta * L2-deviation
      smoothed_semideviation    mean + beta * E[(X - mean) smoothed-positive-part]
      entropic                  log E[exp(theta X)] / theta

    tol_sigma is the degeneracy floor for mean_deviation: below a deviation of
    tol_sigma * (1 + |mean|) the derivative does not exist and is refused.
    """

    kind: str
    beta: float = 0.0
    epsilon: float = 0.0
    theta: float = 0.0
    tol_sigma: float = 1e-10

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown risk kind {self.kind!r}")
        if self.kind in (MEAN_DEVIATION, SMOOTHED_SEMIDEVIATION) and self.beta <= 0.0:
            raise ValueError("beta must be > 0")
        if self.kind == SMOOTHED_SEMIDEVIATION and self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.kind == ENTROPIC and self.theta <= 0.0:
            raise ValueError("theta must be > 0")
        if self.tol_sigma <= 0.0:
            raise ValueError("tol_sigma must be > 0")

    @staticmethod
    def expectation():
        return RiskFunction(EXPECTATION)

    @staticmethod
    def mean_deviation(beta, tol_sigma=1e-10):
        return RiskFunction(MEAN_DEVIATION, beta=beta, tol_sigma=tol_sigma)

    @staticmethod
    def smoothed_semideviation(beta, epsilon):
        return RiskFunction(SMOOTHED_SEMIDEVIATION, beta=beta, epsilon=epsilon)

    @staticmethod
    def entropic(theta):
        return RiskFunction(ENTROPIC, theta=theta)


@dataclass(frozen=True)
class EmpiricalSample:
    """Finite weighted sample standing in for the law of the total cost."""

    values: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size < 1:
            raise ValueError("sample must contain at least one value")
        if not np.isfinite(v).all():
            raise ValueError("sample values must be finite")
        if self.weights is None:
            w = np.full(v.size, 1.0 / v.size)
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape != v.shape:
                raise ValueError("weights must match values in length")
            if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.values.size


def _mean(sample):
    return float(sample.weights @ sample.values)


def _deviation(sample, mean):
    return math.sqrt(float(sample.weights @ (sample.values - mean) ** 2))


def _smoothed_positive_part(x, epsilon):
    # eps * softplus(x / eps), computed stably via logaddexp.
    return epsilon * np.logaddexp(0.0, x / epsilon)


def _entropic_log_mean_exp(values, weights, theta):
    shift = float(np.max(theta * values))
    return (shift + math.log(float(weights @ np.exp(theta * values - shift))))


def evaluate(risk, sample):
    """Risk of the empirical sample; total on finite samples."""
    m = _mean(sample)
    if risk.kind == EXPECTATION:
        return m
    if risk.kind == MEAN_DEVIATION:
        return m + risk.beta * _deviation(sample, m)
    if risk.kind == SMOOTHED_SEMIDEVIATION:
        smooth = _smoothed_positive_part(sample.values - m, risk.epsilon)
        return m + risk.beta * float(sample.weights @ smooth)
    return _entropic_log_mean_exp(sample.values, sample.weights, risk.theta) / risk.theta


def l_derivative(risk, sample):
    """Pointwise derivative of the risk at the sample's empirical law.

    Returns one derivative value per sample entry.  For mean_deviation the
    derivative does not exist at (near-)constant samples and DegenerateSample
    is raised.
    """
    v, w = sample.values, sample.weights
    if risk.kind == EXPECTATION:
        return np.ones_like(v)
    m = _mean(sample)
    if risk.kind == MEAN_DEVIATION:
        dev = _deviation(sample, m)
        if dev <= risk.tol_sigma * (1.0 + abs(m)):
            raise DegenerateSample(
                f"deviation {dev:.3e} below floor; derivative undefined at constants"
            )
        return 1.0 + risk.beta * (v - m) / dev
    if risk.kind == SMOOTHED_SEMIDEVIATION:
        u = expit((v - m) / risk.epsilon)
        return 1.0 + risk.beta * (u - float(w @ u))
    shift = float(np.max(risk.theta * v))
    e = np.exp(risk.theta * v - shift)
    return e / float(w @ e)


@dataclass(frozen=True)
class DirectionalCheck:
    fd_value: float
    inner_product: float
    abs_error: float


def directional_derivative_check(risk, sample, direction, h):
    """Compare a central finite difference of the risk against <D, direction>.

    The first-order expansion of the risk predicts that perturbing the sample
    by h * direction moves the risk by h * sum_i w_i D_i direction_i; this
    probes that prediction with a symmetric difference of width h.
    """
    if h <= 0.0:
        raise ValueError("h must be > 0")
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.shape != sample.values.shape:
        raise ValueError("direction must match the sample length")
    deriv = l_derivative(risk, sample)
    up = EmpiricalSample(sample.values + h * d, sample.weights)
    dn = EmpiricalSample(sample.values - h * d, sample.weights)
    fd = (evaluate(risk, up) - evaluate(risk, dn)) / (2.0 * h)
    ip = float(sample.weights @ (deriv * d))
    return DirectionalCheck(fd_value=fd, inner_product=ip, abs_error=abs(fd - ip))


def bootstrap_standard_error(risk, sample, n_boot=200, seed=0):
    """Monte Carlo standard error of evaluate(risk, sample) by resampling.

    Nonparametric bootstrap with a fixed seed so repeated runs agree exactly.
    """
    rng = np.random.default_rng(seed)
    n = sample.n
    if n < 2:
        return float("nan")
    uniform = np.allclose(sample.weights, 1.0 / n, rtol=0.0, atol=1e-15)
    vals = np.empty(n_boot)
    for b in range(n_boot):
        if uniform:
            idx = rng.integers(0, n, n)
        else:
            idx = rng.choice(n, size=n, p=sample.weights)
        vals[b] = evaluate(risk, EmpiricalSample(sample.values[idx]))
    return float(vals.std(ddof=1))
