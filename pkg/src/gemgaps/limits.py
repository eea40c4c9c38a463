"""Large-n limit laws of the sample maximum and the diversity moments.

The distribution function of the scaled maximum under 0 < alpha < 1 is
evaluated through a semi-infinite Bessel-oscillator integral; alpha = 1/2
also has a closed form used to validate the quadrature route.
"""

import math
from dataclasses import dataclass

from .errors import ValidationError
from .specfun import integrate_bessel_tail, log_gamma, normal_cdf

__all__ = [
    "LimitCdfRequest",
    "LimitCdfResult",
    "diversity_moment",
    "limit_cdf_mn",
    "limit_cdf_half",
    "clt_reference_cdf",
    "cdf_grid_csv",
]

# the oscillatory route needs enough integrand decay on the right and a
# non-negative Bessel order; outside this window it refuses cleanly
QUAD_ALPHA_MIN = 0.1
QUAD_ALPHA_MAX = 0.95


def diversity_moment(alpha, theta, p):
    """p-th moment of the limiting rescaled count of distinct values."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"requires 0 < alpha < 1, got {alpha}")
    if not theta > -alpha:
        raise ValidationError(f"requires theta > -alpha, got theta={theta}")
    if p < 0.0:
        raise ValidationError(f"requires p >= 0, got {p}")
    return math.exp(
        log_gamma(theta + 1.0) - log_gamma(theta / alpha + 1.0)
        + log_gamma(p + theta / alpha + 1.0) - log_gamma(p * alpha + theta + 1.0))


@dataclass(frozen=True)
class LimitCdfRequest:
    """Evaluation point for the limiting law of the scaled maximum."""

    alpha: float
    theta: float
    x: float
    tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"requires 0 < alpha < 1, got {self.alpha}")
        if not self.theta > -self.alpha:
            raise ValidationError(
                f"requires theta > -alpha, got theta={self.theta}, alpha={self.alpha}")
        if not self.x > 0.0:
            raise ValidationError(f"requires x > 0, got {self.x}")
        if not self.tol > 0.0:
            raise ValidationError(f"requires tol > 0, got {self.tol}")


@dataclass(frozen=True)
class LimitCdfResult:
    """Clamped CDF value plus the raw quadrature outcome behind it."""

    value: float
    raw_value: float
    abs_error_estimate: float
    evaluations: int


def limit_cdf_mn(req):
    """CDF of the limiting law of M_n / n^(alpha/(1-alpha)) at req.x.

    Evaluates the prefactor times the integral of
    v^(theta+2 alpha-1) exp(-(v^2/alpha)^alpha x^(1-alpha)) J_theta(2v)
    over (0, infinity). The raw quadrature value is preserved in the result;
    only the .value field is clamped to [0, 1].
    """
    if not isinstance(req, LimitCdfRequest):
        req = LimitCdfRequest(*req)
    alpha, theta, x = req.alpha, req.theta, req.x
    if not QUAD_ALPHA_MIN <= alpha <= QUAD_ALPHA_MAX:
        raise ValidationError(
            f"quadrature route supports alpha in [{QUAD_ALPHA_MIN}, {QUAD_ALPHA_MAX}], "
            f"got {alpha}")
    if theta < 0.0:
        raise ValidationError(
            f"quadrature route requires theta >= 0 (Bessel order), got {theta}")

    log_pref = (math.log(2.0) + (1.0 - theta - alpha) * math.log(alpha)
                + log_gamma(theta + 1.0) - log_gamma(theta / alpha + 1.0)
                + (1.0 - alpha) * (theta / alpha + 1.0) * math.log(x))
    pref = math.exp(log_pref)

    x_pow = x ** (1.0 - alpha)
    decay_exp = theta + 2.0 * alpha - 1.0

    def f_smooth(v):
        return v ** decay_exp * math.exp(-((v * v / alpha) ** alpha) * x_pow)

    inner_tol = min(max(req.tol / max(pref, 1.0), 1e-16), 0.1)
    quad = integrate_bessel_tail(f_smooth, nu=theta, scale=2.0, tol=inner_tol)
    raw = pref * quad.value
    err = pref * quad.abs_error_estimate
    return LimitCdfResult(
        value=min(max(raw, 0.0), 1.0),
        raw_value=raw,
        abs_error_estimate=err,
        evaluations=quad.evaluations,
    )


def limit_cdf_half(theta, x):
    """Closed form of the limiting maximum law at alpha = 1/2."""
    if not theta > -0.5:
        raise ValidationError(f"requires theta > -1/2, got {theta}")
    if not x > 0.0:
        raise ValidationError(f"requires x > 0, got {x}")
    return (x / (x + 2.0)) ** (theta + 0.5)


def clt_reference_cdf(theta, n, x):
    """Normal reference curve for the centered and scaled maximum."""
    if not theta > 0.0:
        raise ValidationError(f"requires theta > 0, got {theta}")
    if n < 2:
        raise ValidationError(f"requires n >= 2, got {n}")
    center = theta * math.log(n)
    return normal_cdf((x - center) / math.sqrt(center))


def cdf_grid_csv(alpha, theta, xs, tol=1e-8):
    """CSV grid (x, value, error_estimate) of the limiting maximum CDF."""
    lines = ["x,value,error_estimate"]
    for x in xs:
        res = limit_cdf_mn(LimitCdfRequest(alpha, theta, float(x), tol))
        lines.append(f"{float(x)!r},{res.value!r},{res.abs_error_estimate!r}")
    return "\n".join(lines) + "\n"
