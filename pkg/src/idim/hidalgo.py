"""
Heterogeneous intrinsic dimension estimation (Hidalgo).

The ratios mu_i follow a mixture of Pareto(1, d_k) distributions. Membership
labels are tied together by the q-nearest-neighbor adjacency matrix: a neighbor
belongs to the same component with probability zeta_1 = xi and to another one
with probability zeta_0 = 1 - xi. The posterior is explored with a
sequential-scan Gibbs sampler (weights, then labels, then dimensions).
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.special import expit, gammainc, gammaincinv, gammaln, logsumexp, softmax
from tqdm import tqdm

from idim.errors import ConfigError, DataError
from idim.geometry import Metric, compute_mus
from idim.utils import optional_njit, progress_interval

logger = logging.getLogger(__name__)

RNG_NAME = "numpy.random.PCG64"

# below this c.d.f. mass at D the truncated gamma is sampled from its tail
_MIN_TRUNCATED_MASS = 1e-250

# the tail fallback is reported once per sampler run
_tail_warned = False


class PriorType(str, Enum):
    CONJUGATE = "conjugate"
    TRUNCATED = "truncated"
    TRUNCATED_POINTMASS = "truncated-pointmass"


@dataclass
class HidalgoConfig:
    """
    Hidalgo model and sampler settings.

    K is an upper bound on the number of occupied components when
    `alpha_dirichlet` is small. `D` (nominal dimension) is required by the
    truncated priors; `pi_mass` is the prior probability that d_k = D under
    the point-mass prior. The sampler runs `burn_in + nsim` sweeps and keeps
    every `thinning`-th draw after burn-in.
    """

    K: int = 10
    q: int = 3
    xi: float = 0.75
    alpha_dirichlet: float = 0.05
    a0_d: float = 1.0
    b0_d: float = 1.0
    prior_type: PriorType = PriorType.CONJUGATE
    D: Optional[int] = None
    pi_mass: float = 0.5
    nsim: int = 2000
    burn_in: int = 2000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self):
        self.prior_type = PriorType(self.prior_type)
        if self.K < 1:
            raise ConfigError(f"K must be at least 1, got {self.K}")
        if self.q < 1:
            raise ConfigError(f"q must be at least 1, got {self.q}")
        if not 0.5 <= self.xi < 1:
            raise ConfigError(f"xi must be in [0.5, 1), got {self.xi}")
        if self.alpha_dirichlet <= 0:
            raise ConfigError("alpha_dirichlet must be positive")
        if self.a0_d <= 0 or self.b0_d <= 0:
            raise ConfigError("a0_d and b0_d must be positive")
        if self.prior_type is not PriorType.CONJUGATE:
            if self.D is None or self.D < 1:
                raise ConfigError(
                    f"prior_type={self.prior_type.value} needs a nominal dimension D >= 1"
                )
        if not 0 < self.pi_mass < 1:
            raise ConfigError(f"pi_mass must be in (0, 1), got {self.pi_mass}")
        if self.nsim < 1 or self.burn_in < 0 or self.thinning < 1:
            raise ConfigError("need nsim >= 1, burn_in >= 0 and thinning >= 1")
        if self.nsim % self.thinning:
            raise ConfigError(
                f"nsim={self.nsim} is not divisible by thinning={self.thinning}"
            )

    @property
    def zeta(self) -> float:
        """Probability zeta_0 that a neighbor lies on another manifold."""
        return 1.0 - self.xi

    @property
    def n_draws(self) -> int:
        return self.nsim // self.thinning

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["prior_type"] = self.prior_type.value
        return d


@dataclass
class HidalgoChains:
    """Raw draws kept by the sampler; labels are 1-based."""

    cluster_prob: np.ndarray
    membership_labels: np.ndarray
    id_raw: np.ndarray
    config: HidalgoConfig
    elapsed: float = 0.0
    mus: Optional[np.ndarray] = None
    kept_index: Optional[np.ndarray] = None
    removed_duplicates: int = 0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.id_raw.shape[0]

    @property
    def n(self) -> int:
        return self.membership_labels.shape[1]

    def check(self):
        """Raise DataError if the chains break a model invariant."""
        K = self.config.K
        if self.cluster_prob.shape != (self.T, K) or self.id_raw.shape != (self.T, K):
            raise DataError("chains have inconsistent shapes")
        if self.membership_labels.shape[0] != self.T:
            raise DataError("chains have inconsistent lengths")
        if np.any(self.cluster_prob < 0) or not np.allclose(
            self.cluster_prob.sum(axis=1), 1.0, rtol=0, atol=1e-12
        ):
            raise DataError("mixture weights are not on the simplex")
        if np.any(self.membership_labels < 1) or np.any(self.membership_labels > K):
            raise DataError(f"membership labels outside 1..{K}")
        if np.any(self.id_raw <= 0):
            raise DataError("component dimensions must be positive")
        if self.config.prior_type is not PriorType.CONJUGATE and np.any(
            self.id_raw > self.config.D
        ):
            raise DataError(f"component dimensions exceed D={self.config.D}")

    def save(self, out_dir, input_info: Optional[Dict[str, Any]] = None):
        from idim.files import save_chains

        return save_chains(self, out_dir, input_info)

    @classmethod
    def load(cls, out_dir) -> "HidalgoChains":
        from idim.files import load_chains

        return load_chains(out_dir)

    def report(self) -> str:
        c = self.config
        minutes = self.elapsed / 60
        elapsed = (
            f"{minutes:.4f} mins" if minutes >= 1 else f"{self.elapsed:.4f} secs"
        )
        return "\n".join(
            [
                "Model: Hidalgo",
                "Method: Bayesian Estimation",
                f"Prior d ~ Gamma({c.a0_d:g}, {c.b0_d:g}), type = {c.prior_type.value}",
                f"Prior on mixture weights: Dirichlet({c.alpha_dirichlet:g}) "
                f"with {c.K} mixture components",
                "MCMC details:",
                f"Total iterations: {c.burn_in + c.nsim}, Burn in: {c.burn_in}, "
                f"Elapsed time: {elapsed}",
            ]
        )


# ---------------------------------------------------------------------------
# Likelihood pieces


def log_likelihood_term(mu_i: float, d: float) -> float:
    """Log Pareto(1, d) density at mu_i: log d - (d + 1) log mu_i."""
    return math.log(d) - (d + 1) * math.log(mu_i)


def _log_binom(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    valid = (k >= 0) & (k <= n)
    with np.errstate(invalid="ignore"):
        out = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return np.where(valid, out, -np.inf)


def log_norm_table(zeta: float, n: int, q: int) -> np.ndarray:
    """
    log Z(zeta, N) for N = 0..n.

    Z(zeta, N) sums (1 - zeta)^m zeta^(q - m) over every way of choosing the q
    neighbors of a point whose component has N members (itself included): m
    among the other N - 1 members, q - m among the n - N outsiders.
    log Z(zeta, 0) is -inf.
    """
    if not 0 < zeta < 1:
        raise ConfigError(f"zeta must be in (0, 1), got {zeta}")
    if not 1 <= q <= n - 1:
        raise ConfigError(f"q must be between 1 and n-1={n - 1}, got {q}")
    N = np.arange(1, n + 1)[:, None]
    m = np.arange(q + 1)[None, :]
    terms = (
        _log_binom(N - 1, m)
        + _log_binom(n - N, q - m)
        + m * math.log1p(-zeta)
        + (q - m) * math.log(zeta)
    )
    table = np.empty(n + 1)
    table[0] = -np.inf
    table[1:] = logsumexp(terms, axis=1)
    return table


def neighborhood_norm_z(zeta: float, N_k: int, n: int, q: int) -> float:
    """Normalizing constant Z(zeta, N_k) of the q-neighbor choice model."""
    if not 0 <= N_k <= n:
        raise ConfigError(f"component size must be in 0..{n}, got {N_k}")
    return float(np.exp(log_norm_table(zeta, n, q)[N_k]))


# ---------------------------------------------------------------------------
# Gamma helpers


def log_gammainc(a: float, x: float) -> float:
    """log of the regularized lower incomplete gamma P(a, x), safe from underflow."""
    if x <= 0:
        return -math.inf
    p = gammainc(a, x)
    if p > 0:
        return math.log(p)
    # series: P(a, x) = x^a e^-x / Gamma(a + 1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0
    total = 1.0
    for k in range(1, 10_000):
        term *= x / (a + k)
        total += term
        if term < total * 1e-16:
            break
    return a * math.log(x) - x - gammaln(a + 1) + math.log(total)


def log_truncated_gamma_norm(a: float, b: float, D: float) -> float:
    """log C_{a,b,D}: integral of d^(a-1) e^(-b d) over (0, D]."""
    return gammaln(a) - a * math.log(b) + log_gammainc(a, b * D)


def sample_truncated_gamma(
    shape: float, rate: float, upper: float, rng: np.random.Generator
) -> float:
    """Draw from Gamma(shape, rate) restricted to (0, upper] by inverse c.d.f."""
    u = 1.0 - rng.random()
    log_mass = log_gammainc(shape, rate * upper)
    if log_mass > math.log(_MIN_TRUNCATED_MASS):
        d = gammaincinv(shape, u * math.exp(log_mass)) / rate
        if d > 0:
            return min(d, upper)
    # all the mass sits just below `upper`: exponential tail with the
    # log-density slope at `upper`
    _warn_tail(shape, rate, upper, log_mass)
    slope = (shape - 1) / upper - rate
    if slope <= 0:
        return upper * u
    return upper + math.log1p(-u * -math.expm1(-slope * upper)) / slope


def _warn_tail(shape: float, rate: float, upper: float, log_mass: float):
    global _tail_warned
    if _tail_warned:
        return
    _tail_warned = True
    logger.warning(
        "Truncated gamma mass below %g (shape=%g, rate=%g, upper=%g, log mass=%g); "
        "sampling from the exponential tail at the upper bound",
        _MIN_TRUNCATED_MASS,
        shape,
        rate,
        upper,
        log_mass,
    )


def _draw_d(n_k: int, log_sum: float, config: HidalgoConfig, rng) -> float:
    shape = config.a0_d + n_k
    rate = config.b0_d + log_sum
    prior = config.prior_type
    if prior is PriorType.CONJUGATE:
        return rng.gamma(shape, 1.0 / rate)
    if prior is PriorType.TRUNCATED:
        return sample_truncated_gamma(shape, rate, config.D, rng)

    D = config.D
    log_rho_gamma = (
        math.log1p(-config.pi_mass)
        + log_truncated_gamma_norm(shape, rate, D)
        - log_truncated_gamma_norm(config.a0_d, config.b0_d, D)
    )
    log_rho_point = math.log(config.pi_mass) + n_k * math.log(D) - D * log_sum
    if rng.random() < expit(log_rho_point - log_rho_gamma):
        return float(D)
    return sample_truncated_gamma(shape, rate, D, rng)


def sample_d(k: int, z, mus, config: HidalgoConfig, rng) -> float:
    """
    Draw d_k from its full conditional given 0-based labels `z`.

    Empty components draw from the prior.
    """
    members = np.asarray(z) == k
    log_sum = float(np.sum(np.log(np.asarray(mus)[members])))
    return _draw_d(int(members.sum()), log_sum, config, rng)


def sample_weights(z, alpha: float, K: int, rng) -> np.ndarray:
    """pi ~ Dirichlet(alpha + n_1, ..., alpha + n_K), as normalized gamma draws."""
    counts = np.bincount(np.asarray(z, dtype=np.int64), minlength=K)
    draws = rng.standard_gamma(alpha + counts)
    return draws / draws.sum()


# ---------------------------------------------------------------------------
# Membership kernel


@optional_njit(cache=True)
def _membership_log_weights(
    i, z, counts, log_pi, log_d, d, log_mus, neighbors, rev_ptr, rev_idx,
    log_z, log_ratio, links, out,
):
    # counts must exclude point i
    K = out.shape[0]
    for k in range(K):
        links[k] = 0.0
    for j in range(neighbors.shape[1]):
        links[z[neighbors[i, j]]] += 1.0
    for p in range(rev_ptr[i], rev_ptr[i + 1]):
        links[z[rev_idx[p]]] += 1.0
    for k in range(K):
        n_k = counts[k]
        w = (
            log_pi[k]
            + log_d[k]
            - (d[k] + 1.0) * log_mus[i]
            - log_z[n_k + 1]
            + links[k] * log_ratio
        )
        if n_k > 0:
            w += n_k * (log_z[n_k] - log_z[n_k + 1])
        out[k] = w


@optional_njit(cache=True)
def _draw_categorical(log_w, u):
    K = log_w.shape[0]
    top = -np.inf
    for k in range(K):
        if log_w[k] > top:
            top = log_w[k]
    total = 0.0
    for k in range(K):
        total += np.exp(log_w[k] - top)
    target = u * total
    acc = 0.0
    for k in range(K):
        acc += np.exp(log_w[k] - top)
        if target < acc:
            return k
    for k in range(K - 1, -1, -1):
        if log_w[k] > -np.inf:
            return k
    return K - 1


@optional_njit(cache=True)
def _sweep_memberships(
    z, counts, log_pi, log_d, d, log_mus, neighbors, rev_ptr, rev_idx,
    log_z, log_ratio, uniforms,
):
    K = counts.shape[0]
    links = np.zeros(K)
    log_w = np.empty(K)
    for i in range(z.shape[0]):
        counts[z[i]] -= 1
        _membership_log_weights(
            i, z, counts, log_pi, log_d, d, log_mus, neighbors, rev_ptr, rev_idx,
            log_z, log_ratio, links, log_w,
        )
        k = _draw_categorical(log_w, uniforms[i])
        z[i] = k
        counts[k] += 1


def _reverse_neighbors(neighbors: np.ndarray, n: int):
    """CSR lists of the points having each point among their neighbors."""
    rows = np.repeat(np.arange(n, dtype=np.int64), neighbors.shape[1])
    cols = neighbors.ravel()
    order = np.argsort(cols, kind="stable")
    rev_idx = np.ascontiguousarray(rows[order])
    rev_ptr = np.zeros(n + 1, dtype=np.int64)
    rev_ptr[1:] = np.cumsum(np.bincount(cols, minlength=n))
    return rev_ptr, rev_idx


class GibbsSampler:
    """
    Sampler state and precomputed neighborhood structure for one chain.

    Labels in `z` are 0-based. Not thread-safe: one instance per chain.
    """

    def __init__(self, mus, neighbors, config: HidalgoConfig, rng=None):
        mus = np.asarray(mus, dtype=float)
        if np.any(mus < 1) or not np.all(np.isfinite(mus)):
            raise DataError("ratios must be finite and >= 1")
        self.config = config
        self.n = len(mus)
        self.K = config.K
        self.log_mus = np.log(mus)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        if self.neighbors.shape != (self.n, config.q):
            raise DataError(
                f"expected ({self.n}, {config.q}) neighbor indices, "
                f"got {self.neighbors.shape}"
            )
        self.rev_ptr, self.rev_idx = _reverse_neighbors(self.neighbors, self.n)
        self.log_z = log_norm_table(config.zeta, self.n, config.q)
        self.log_ratio = math.log(config.xi / config.zeta)
        self.rng = np.random.default_rng(config.seed) if rng is None else rng

        self.z = self.rng.integers(self.K, size=self.n).astype(np.int64)
        self.d = np.array([_draw_d(0, 0.0, config, self.rng) for _ in range(self.K)])
        self.pi = sample_weights([], config.alpha_dirichlet, self.K, self.rng)

    def counts(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.K).astype(np.int64)

    def _log_pi(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pi)

    def membership_log_weights(self, i: int) -> np.ndarray:
        """Unnormalized log full conditional of z_i over the K components."""
        counts = self.counts()
        counts[self.z[i]] -= 1
        out = np.empty(self.K)
        _membership_log_weights(
            i, self.z, counts, self._log_pi(), np.log(self.d), self.d,
            self.log_mus, self.neighbors, self.rev_ptr, self.rev_idx,
            self.log_z, self.log_ratio, np.zeros(self.K), out,
        )
        return out

    def membership_probabilities(self, i: int) -> np.ndarray:
        return softmax(self.membership_log_weights(i))

    def sample_membership(self, i: int) -> int:
        k = int(_draw_categorical(self.membership_log_weights(i), self.rng.random()))
        self.z[i] = k
        return k

    def sample_weights(self) -> np.ndarray:
        self.pi = sample_weights(self.z, self.config.alpha_dirichlet, self.K, self.rng)
        return self.pi

    def sample_dimensions(self) -> np.ndarray:
        counts = np.bincount(self.z, minlength=self.K)
        sums = np.bincount(self.z, weights=self.log_mus, minlength=self.K)
        self.d = np.array(
            [
                _draw_d(int(counts[k]), float(sums[k]), self.config, self.rng)
                for k in range(self.K)
            ]
        )
        return self.d

    def sweep(self):
        """One Gibbs iteration: weights, labels in index order, dimensions."""
        self.sample_weights()
        uniforms = self.rng.random(self.n)
        _sweep_memberships(
            self.z, self.counts(), self._log_pi(), np.log(self.d), self.d,
            self.log_mus, self.neighbors, self.rev_ptr, self.rev_idx,
            self.log_z, self.log_ratio, uniforms,
        )
        self.sample_dimensions()


def run_hidalgo(
    X=None,
    dist_mat=None,
    config: Optional[HidalgoConfig] = None,
    metric: Union[Metric, str] = Metric.EUCLIDEAN,
    verbose: bool = False,
) -> HidalgoChains:
    """
    Fit the Hidalgo mixture with the Gibbs sampler.

    Ratios mu_{1,2} and the q-neighbor adjacency are computed from `X` (or
    `dist_mat`, which overrides it) after duplicate removal.
    """
    global _tail_warned
    _tail_warned = False
    config = HidalgoConfig() if config is None else config
    ratios = compute_mus(
        X=X, dist_mat=dist_mat, metric=metric, with_adjacency=True, q=config.q
    )
    sampler = GibbsSampler(ratios.mus, ratios.neighbors(), config)

    T = config.n_draws
    cluster_prob = np.empty((T, config.K))
    labels = np.empty((T, sampler.n), dtype=np.int64)
    id_raw = np.empty((T, config.K))

    logger.info(
        "Running Hidalgo on %d points: K=%d, %d burn-in + %d sweeps",
        sampler.n,
        config.K,
        config.burn_in,
        config.nsim,
    )
    start = time.perf_counter()
    sweeps = tqdm(
        range(config.burn_in + config.nsim),
        desc="Hidalgo",
        unit=" sweeps",
        disable=not verbose,
        mininterval=progress_interval(),
    )
    for it in sweeps:
        sampler.sweep()
        kept = it - config.burn_in + 1
        if kept > 0 and kept % config.thinning == 0:
            t = kept // config.thinning - 1
            cluster_prob[t] = sampler.pi
            labels[t] = sampler.z + 1
            id_raw[t] = sampler.d
    elapsed = time.perf_counter() - start

    return HidalgoChains(
        cluster_prob=cluster_prob,
        membership_labels=labels,
        id_raw=id_raw,
        config=config,
        elapsed=elapsed,
        mus=ratios.mus,
        kept_index=ratios.kept_index,
        removed_duplicates=ratios.removed_duplicates,
        extras={"rng": RNG_NAME},
    )
