"""
Homogeneous intrinsic dimension estimation with TWO-NN.

Under local homogeneity the ratio mu = r_2 / r_1 of the distances to the
first two nearest neighbors is Pareto(1, d) distributed. Three estimators of
the shape d are provided: a no-intercept least squares fit of the linearized
c.d.f. (`linfit`), maximum likelihood with an exact inverse-gamma interval
(`mle`), and the conjugate Gamma posterior (`bayes`).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import gammainccinv, gammaincinv

from idim.errors import ConfigError, DataError
from idim.geometry import Metric, compute_mus

logger = logging.getLogger(__name__)


class Method(str, Enum):
    LINFIT = "linfit"
    MLE = "mle"
    BAYES = "bayes"


_METHOD_NAMES = {
    Method.LINFIT: "Least Square Estimation",
    Method.MLE: "MLE",
    Method.BAYES: "Bayesian Estimation",
}


@dataclass
class TwoNNFit:
    method: Method
    estimate: float
    lower: float
    upper: float
    alpha: float
    c_trimmed: float
    n_original: int
    n_used: int
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready dict with `estimate`, `interval` and `config` keys."""
        extras = {
            k: v for k, v in self.extras.items() if not isinstance(v, np.ndarray)
        }
        return {
            "estimate": self.estimate,
            "interval": [self.lower, self.upper],
            "config": {
                "method": self.method.value,
                "alpha": self.alpha,
                "c_trimmed": self.c_trimmed,
                "n_original": self.n_original,
                "n_used": self.n_used,
            },
            "extras": extras,
        }

    def to_frame(self) -> pd.DataFrame:
        row = {"method": self.method.value, "lower": self.lower}
        if self.method is Method.BAYES:
            row.update(
                mean=self.extras["mean"],
                median=self.extras["median"],
                mode=self.extras["mode"],
            )
        else:
            row["estimate"] = self.estimate
        row.update(upper=self.upper, alpha=self.alpha, n_used=self.n_used)
        return pd.DataFrame([row])

    def plot_data(self) -> pd.DataFrame:
        """Plot-ready points: the linearized c.d.f. or the density grid."""
        if self.method is Method.LINFIT:
            return pd.DataFrame({"x": self.extras["x"], "y": self.extras["y"]})
        if self.method is Method.BAYES:
            return pd.DataFrame(
                {
                    "d": self.extras["grid"],
                    "prior": self.extras["prior_density"],
                    "posterior": self.extras["posterior_density"],
                }
            )
        raise ConfigError("plot data is available for linfit and bayes fits only")

    def report(self) -> str:
        lines = [
            "Model: TWO-NN",
            f"Method: {_METHOD_NAMES[self.method]}",
            f"Sample size: {self.n_original}, Obs. used: {self.n_used}. "
            f"Trimming proportion: {self.c_trimmed * 100:g}%",
        ]
        if self.method is Method.BAYES:
            a_d, b_d = self.extras["a_d"], self.extras["b_d"]
            lines += [
                f"Prior d ~ Gamma({a_d:g}, {b_d:g})",
                "Credible Interval quantiles: "
                f"{(1 - self.alpha) / 2:g}, {(1 + self.alpha) / 2:g}",
                "Posterior ID estimates:",
                "",
            ]
            table = pd.DataFrame(
                {
                    "Lower Bound": [self.lower],
                    "Mean": [self.extras["mean"]],
                    "Median": [self.extras["median"]],
                    "Mode": [self.extras["mode"]],
                    "Upper Bound": [self.upper],
                }
            )
        else:
            lines += [f"ID estimates (confidence level: {self.alpha:g})", ""]
            table = pd.DataFrame(
                {
                    "Lower Bound": [self.lower],
                    "Estimate": [self.estimate],
                    "Upper Bound": [self.upper],
                }
            )
        lines.append(table.to_string(index=False, float_format="%.6f"))
        return "\n".join(lines)


def _check_level(alpha: float, name: str = "alpha"):
    if not 0 < alpha < 1:
        raise ConfigError(f"{name} must be in (0, 1), got {alpha}")


def _check_mus(mus) -> np.ndarray:
    mus = np.asarray(mus, dtype=float).ravel()
    if not np.all(np.isfinite(mus)):
        raise DataError("ratios must be finite")
    if np.any(mus < 1):
        raise DataError("ratios must all be >= 1")
    return mus


def trim(mus, c_trimmed: float, min_keep: int = 3) -> np.ndarray:
    """
    Remove the floor(n * c_trimmed) largest ratios.

    The remaining ratios keep their original order.
    """
    if not 0 <= c_trimmed < 1:
        raise ConfigError(f"c_trimmed must be in [0, 1), got {c_trimmed}")
    mus = np.asarray(mus, dtype=float).ravel()
    n = len(mus)
    # the small offset absorbs products such as 1500 * 0.01 = 14.999...
    n_drop = int(math.floor(n * c_trimmed + 1e-9))
    if n - n_drop < min_keep:
        raise DataError(
            f"{n - n_drop} ratios left after trimming; at least {min_keep} needed"
        )
    if n_drop == 0:
        return mus.copy()
    order = np.argsort(mus, kind="stable")
    keep = np.ones(n, dtype=bool)
    keep[order[n - n_drop :]] = False
    return mus[keep]


def twonn_linfit(mus, alpha: float = 0.95, c_trimmed: float = 0.01) -> TwoNNFit:
    """
    Least squares estimate from the linearized Pareto c.d.f.

    Fits -log(1 - F(mu_(i))) = d log(mu_(i)) without intercept, with the
    empirical c.d.f. F(mu_(i)) = i / (n + 1). The interval is d +- t * SE(d)
    with the no-intercept OLS standard error.
    """
    _check_level(alpha)
    mus = _check_mus(mus)
    n_original = len(mus)
    kept = np.sort(trim(mus, c_trimmed))
    n = len(kept)

    x = np.log(kept)
    y = -np.log1p(-np.arange(1, n + 1) / (n + 1))
    if np.ptp(x) == 0:
        raise DataError("all ratios are equal: the regression slope is undefined")

    sxx = np.dot(x, x)
    slope = np.dot(x, y) / sxx
    residuals = y - slope * x
    se = math.sqrt(np.dot(residuals, residuals) / (n - 1) / sxx)
    half_width = stats.t.ppf((1 + alpha) / 2, df=n - 1) * se

    return TwoNNFit(
        method=Method.LINFIT,
        estimate=float(slope),
        lower=float(slope - half_width),
        upper=float(slope + half_width),
        alpha=alpha,
        c_trimmed=c_trimmed,
        n_original=n_original,
        n_used=n,
        extras={"se": se, "x": x, "y": y},
    )


def gamma_quantile(p, shape, rate=1.0):
    """Quantile of Gamma(shape, rate)."""
    return gammaincinv(shape, p) / rate


def invgamma_quantile(p, shape, scale=1.0):
    """Quantile of an Inverse-Gamma(shape, scale): scale / q_Gamma(1 - p; shape, 1)."""
    return scale / gammainccinv(shape, p)


def twonn_mle(
    mus,
    alpha: float = 0.95,
    c_trimmed: float = 0.01,
    unbiased: bool = True,
) -> TwoNNFit:
    """
    Maximum likelihood estimate of the Pareto shape.

    d = (n - 1) / sum(log mu) when `unbiased`, n / sum(log mu) otherwise. The
    confidence interval at level `alpha` is
    [d / q_IG(1 - (1 - alpha)/2), d / q_IG((1 - alpha)/2)] with the quantiles of
    an Inverse-Gamma of shape n and scale n - 1.
    """
    _check_level(alpha)
    mus = _check_mus(mus)
    n_original = len(mus)
    kept = trim(mus, c_trimmed)
    n = len(kept)

    log_sum = float(np.sum(np.log(kept)))
    if log_sum == 0:
        raise DataError("all ratios equal 1: the likelihood has no maximum")

    estimate = ((n - 1) if unbiased else n) / log_sum
    tail = (1 - alpha) / 2
    lower = estimate / invgamma_quantile(1 - tail, n, n - 1)
    upper = estimate / invgamma_quantile(tail, n, n - 1)

    return TwoNNFit(
        method=Method.MLE,
        estimate=estimate,
        lower=float(lower),
        upper=float(upper),
        alpha=alpha,
        c_trimmed=c_trimmed,
        n_original=n_original,
        n_used=n,
        extras={"log_sum": log_sum, "unbiased": unbiased},
    )


def twonn_bayes(
    mus,
    alpha: float = 0.95,
    a_d: float = 0.001,
    b_d: float = 0.001,
    c_trimmed: float = 0.01,
    plot_low: float = 0.0,
    plot_upp: Optional[float] = None,
    by: float = 0.01,
) -> TwoNNFit:
    """
    Conjugate Bayesian estimate: d | mu ~ Gamma(a_d + n, b_d + sum(log mu)).

    `alpha` is the posterior mass of the equal-tailed credible interval. The
    fit reports the posterior mean as `estimate`; median and mode live in
    `extras`, together with prior and posterior densities evaluated on
    `plot_low, plot_low + by, ..., plot_upp`.
    """
    _check_level(alpha)
    if a_d <= 0 or b_d <= 0:
        raise ConfigError(f"a_d and b_d must be positive, got {a_d}, {b_d}")
    mus = _check_mus(mus)
    n_original = len(mus)
    kept = trim(mus, c_trimmed, min_keep=1)
    n = len(kept)

    log_sum = float(np.sum(np.log(kept)))
    shape = a_d + n
    rate = b_d + log_sum

    mean = shape / rate
    median = float(gamma_quantile(0.5, shape, rate))
    # shape > 1 since at least one ratio is kept
    mode = (shape - 1) / rate
    lower = float(gamma_quantile((1 - alpha) / 2, shape, rate))
    upper = float(gamma_quantile((1 + alpha) / 2, shape, rate))

    if plot_upp is None:
        plot_upp = math.ceil(float(gamma_quantile(0.9999, shape, rate)))
    if not plot_low < plot_upp or by <= 0:
        raise ConfigError(
            f"invalid plot support: low={plot_low}, upp={plot_upp}, by={by}"
        )
    grid = np.arange(plot_low, plot_upp + by / 2, by)

    return TwoNNFit(
        method=Method.BAYES,
        estimate=mean,
        lower=lower,
        upper=upper,
        alpha=alpha,
        c_trimmed=c_trimmed,
        n_original=n_original,
        n_used=n,
        extras={
            "a_d": a_d,
            "b_d": b_d,
            "shape": shape,
            "rate": rate,
            "mean": mean,
            "median": median,
            "mode": mode,
            "grid": grid,
            "prior_density": stats.gamma.pdf(grid, a_d, scale=1 / b_d),
            "posterior_density": stats.gamma.pdf(grid, shape, scale=1 / rate),
        },
    )


def twonn(
    X=None,
    dist_mat=None,
    mus=None,
    method: Union[Method, str] = Method.MLE,
    metric: Union[Metric, str] = Metric.EUCLIDEAN,
    alpha: float = 0.95,
    c_trimmed: float = 0.01,
    **kwargs,
) -> TwoNNFit:
    """
    Estimate a global intrinsic dimension.

    `mus` overrides `X` and `dist_mat`; `dist_mat` overrides `X`. Extra keyword
    arguments go to the selected estimator (`unbiased` for mle; `a_d`, `b_d`,
    `plot_low`, `plot_upp`, `by` for bayes).
    """
    method = Method(method)
    if mus is None:
        mus = compute_mus(X=X, dist_mat=dist_mat, metric=metric).mus

    if method is Method.LINFIT:
        return twonn_linfit(mus, alpha=alpha, c_trimmed=c_trimmed, **kwargs)
    if method is Method.MLE:
        return twonn_mle(mus, alpha=alpha, c_trimmed=c_trimmed, **kwargs)
    return twonn_bayes(mus, alpha=alpha, c_trimmed=c_trimmed, **kwargs)
