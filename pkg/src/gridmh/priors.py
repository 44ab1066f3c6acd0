"""Independent per-coordinate priors with log density, gradient and Hessian."""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import ConfigError


def _vec(values, d):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1 and d > 1:
        arr = np.full(d, float(arr[0]))
    return arr


@dataclass(frozen=True)
class GammaPrior:
    shape: tuple
    rate: tuple

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = _vec(self.shape, theta.size), _vec(self.rate, theta.size)
        if np.any(theta <= 0):
            return -math.inf
        return float(np.sum(a * np.log(b) - special.gammaln(a) + (a - 1) * np.log(theta) - b * theta))

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = _vec(self.shape, theta.size), _vec(self.rate, theta.size)
        return (a - 1) / theta - b

    def hess(self, theta):
        theta = np.asarray(theta, dtype=float)
        a = _vec(self.shape, theta.size)
        return np.diag(-(a - 1) / theta**2)

    def sample(self, rng, d):
        a, b = _vec(self.shape, d), _vec(self.rate, d)
        return rng.gamma(a, 1.0 / b)


@dataclass(frozen=True)
class GaussianPrior:
    mean: tuple
    sd: tuple

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        mu, sd = _vec(self.mean, theta.size), _vec(self.sd, theta.size)
        z = (theta - mu) / sd
        return float(np.sum(-0.5 * z * z - np.log(sd) - 0.5 * math.log(2 * math.pi)))

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        mu, sd = _vec(self.mean, theta.size), _vec(self.sd, theta.size)
        return -(theta - mu) / sd**2

    def hess(self, theta):
        sd = _vec(self.sd, np.size(theta))
        return np.diag(-1.0 / sd**2)

    def sample(self, rng, d):
        return rng.normal(_vec(self.mean, d), _vec(self.sd, d))


@dataclass(frozen=True)
class UniformPrior:
    """Uniform on a box; infinite bounds give an improper flat prior."""

    lower: tuple = -math.inf
    upper: tuple = math.inf

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        lo, hi = _vec(self.lower, theta.size), _vec(self.upper, theta.size)
        if np.any(theta < lo) or np.any(theta > hi):
            return -math.inf
        width = hi - lo
        return float(-np.sum(np.log(width[np.isfinite(width)])))

    def grad(self, theta):
        return np.zeros(np.size(theta))

    def hess(self, theta):
        d = np.size(theta)
        return np.zeros((d, d))

    def sample(self, rng, d):
        lo, hi = _vec(self.lower, d), _vec(self.upper, d)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("cannot sample from an improper flat prior")
        return rng.uniform(lo, hi)


def flat():
    return UniformPrior()


def parse_prior(text):
    """Parse ``"gamma 1 1"``, ``"gaussian 0 30"``, ``"uniform -5 5"`` or ``"flat"``.

    Parameters given once apply to every coordinate; comma-separated lists
    give per-coordinate values, e.g. ``"gaussian 0 30,10"``.
    """
    parts = text.split()
    if not parts:
        raise ConfigError("empty prior specification")
    kind, args = parts[0].lower(), parts[1:]

    def val(s):
        vals = tuple(float(v) for v in s.split(","))
        return vals if len(vals) > 1 else vals[0]

    try:
        if kind == "flat" and not args:
            return UniformPrior()
        if kind == "gamma" and len(args) == 2:
            return GammaPrior(val(args[0]), val(args[1]))
        if kind in ("gaussian", "normal") and len(args) == 2:
            return GaussianPrior(val(args[0]), val(args[1]))
        if kind == "uniform" and len(args) == 2:
            return UniformPrior(val(args[0]), val(args[1]))
    except ValueError as exc:
        raise ConfigError(f"bad prior {text!r}: {exc}") from None
    raise ConfigError(f"bad prior {text!r}")
