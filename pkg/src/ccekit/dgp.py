"""Simulated panels with mildly integrated common factors.

The design follows a CCE setup with ``m`` factors and ``k`` regressors::

    y_i = X_i beta_i + F gamma_i + eps_i
    X_i = F Gamma_i + V_i

Factors follow ``f_t = R f_{t-1} + u_t`` with ``R = I - Q T^{-tau}`` and
``q_j ~ U(q_low, q_high)``. Idiosyncratic errors are IID or weakly
correlated across units (band weights) and optionally over time.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from ._errors import ConfigError

INNOVATION_SCALES = ("std_dev", "variance", "unit")
ERROR_MODES = ("iid", "weak_cs", "weak_time_cs", "nonstationary_v")


def make_rng(master_seed, *keys):
    """PCG64 generator seeded from ``(master_seed, *keys)``.

    Streams with different keys are independent for practical purposes and
    identical keys give identical draws on every platform.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class FactorConfig:
    m: int = 4
    tau: float = 0.0
    q_low: float = 0.0
    q_high: float = 2.0
    burn_in: int = 50
    # std_dev: innovation sd sqrt(1 - r^2), unit stationary variance.
    # variance: innovation variance sqrt(1 - r^2).
    # unit: innovation variance 1, stationary variance 1 / (1 - r^2).
    innovation_scale: str = "std_dev"

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("factor count m must be >= 1")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError(f"tau must lie in [0, 1), got {self.tau}")
        if self.q_low < 0 or self.q_high <= self.q_low:
            raise ConfigError("need 0 <= q_low < q_high")
        if self.tau == 0 and self.q_high > 2.0:
            raise ConfigError("q_high > 2 puts R outside the unit circle when tau = 0")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.innovation_scale not in INNOVATION_SCALES:
            raise ConfigError(f"innovation_scale must be one of {INNOVATION_SCALES}")


@dataclass(frozen=True)
class ErrorConfig:
    mode: str = "weak_cs"
    rho: float = 0.0
    rho_v: float = 0.0
    kappa: float = 0.2
    kappa_v: float = 0.2
    J: int = 5
    J_v: int = 5
    burn_in: int = 50

    def __post_init__(self):
        if self.mode not in ERROR_MODES:
            raise ConfigError(f"error mode must be one of {ERROR_MODES}, got {self.mode!r}")
        if abs(self.rho) >= 1 or abs(self.rho_v) >= 1:
            raise ConfigError("AR coefficients must satisfy |rho| < 1")
        if self.kappa < 0 or self.kappa_v < 0 or self.J < 0 or self.J_v < 0:
            raise ConfigError("kappa, kappa_v, J, J_v must be non-negative")

    @classmethod
    def for_mode(cls, mode, **overrides):
        """Config with the mode's default time dependence (0.5 for weak_time_cs)."""
        if mode == "weak_time_cs":
            overrides.setdefault("rho", 0.5)
            overrides.setdefault("rho_v", 0.5)
        return cls(mode=mode, **overrides)


@dataclass(frozen=True)
class PanelConfig:
    N: int = 100
    T: int = 100
    k: int = 8
    beta_level: float = 0.5
    slope_het_sd: float = 0.0
    loading_mean: float = 1.0
    loading_sd: float = 1.0
    oracle_candidates: bool = False
    factor: FactorConfig = field(default_factory=FactorConfig)
    errors: ErrorConfig = field(default_factory=ErrorConfig)

    def __post_init__(self):
        m = self.factor.m
        if not 1 <= m <= self.k:
            raise ConfigError(f"need 1 <= m <= k, got m={m}, k={self.k}")
        if self.T <= self.k + 1:
            raise ConfigError(f"need T > k + 1, got T={self.T}, k={self.k}")
        if self.N < 2:
            raise ConfigError("need N >= 2")
        if self.slope_het_sd < 0 or self.loading_sd < 0:
            raise ConfigError("standard deviations must be non-negative")

    @property
    def m(self):
        return self.factor.m

    def with_cell(self, N, T, tau):
        return replace(self, N=int(N), T=int(T), factor=replace(self.factor, tau=float(tau)))


@dataclass
class Panel:
    y: np.ndarray          # (T, N)
    x: np.ndarray          # (N, T, k); x[i] is X_i
    f_true: np.ndarray     # (T, m)
    gamma: np.ndarray      # (N, m)
    big_gamma: np.ndarray  # (N, m, k)
    beta: np.ndarray       # (N, k) unit slopes
    eps: np.ndarray        # (T, N)
    v: np.ndarray          # (N, T, k)
    config: PanelConfig = None

    @property
    def N(self):
        return self.y.shape[1]

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def k(self):
        return self.x.shape[2]

    def z(self):
        """Stacked unit data Z_i = [y_i, X_i], shape (N, T, k + 1)."""
        return np.concatenate([self.y.T[:, :, None], self.x], axis=2)


def draw_factor_system(rng, cfg, T):
    """Diagonals ``(q, r)`` of Q and of R = I - Q T^{-tau}."""
    q = rng.uniform(cfg.q_low, cfg.q_high, size=cfg.m)
    r = 1.0 - q * float(T) ** (-cfg.tau)
    if np.any(np.abs(r) >= 1.0):
        raise ConfigError(f"AR roots {r} are not inside the unit circle")
    return q, r


def _innovation_sd(r, scale):
    if scale == "std_dev":
        return np.sqrt(1.0 - r ** 2)
    if scale == "variance":
        return (1.0 - r ** 2) ** 0.25
    return np.ones_like(r)


def ar1_columns(r, shocks):
    """Run x_t = r_j x_{t-1} + shocks_t column by column from a zero start."""
    out = np.empty_like(shocks)
    prev = np.zeros(shocks.shape[1:])
    for t in range(shocks.shape[0]):
        prev = r * prev + shocks[t]
        out[t] = prev
    return out


def gen_factors(rng, cfg, T, return_system=False):
    """T x m mildly integrated factors; the first ``burn_in`` draws are discarded."""
    q, r = draw_factor_system(rng, cfg, T)
    shocks = rng.standard_normal((T + cfg.burn_in, cfg.m)) * _innovation_sd(r, cfg.innovation_scale)
    f = ar1_columns(r, shocks)[cfg.burn_in:]
    if return_system:
        return f, q, r
    return f


def gen_loadings(rng, N, m, k, loading_mean=1.0, loading_sd=1.0):
    """Loadings Gamma_i = psi_i [I_m, 0] (m x k) and gamma_i (m,)."""
    psi = loading_mean + loading_sd * rng.standard_normal(N)
    base = np.eye(m, k)
    big_gamma = psi[:, None, None] * base
    gamma = loading_mean + loading_sd * rng.standard_normal((N, m))
    return big_gamma, gamma


def build_band_weights(N, J):
    """0/1 matrix with ones where 1 <= |i - j| <= J and a zero diagonal."""
    idx = np.arange(N)
    d = np.abs(idx[:, None] - idx[None, :])
    return ((d >= 1) & (d <= J)).astype(np.float64)


def apply_spillover(e, J, kappa, axis):
    """Compute (I + kappa W) e along ``axis`` without forming the N x N band matrix."""
    e = np.moveaxis(e, axis, 0)
    N = e.shape[0]
    if J == 0 or kappa == 0:
        return np.moveaxis(e.copy(), 0, axis)
    csum = np.concatenate([np.zeros((1,) + e.shape[1:]), np.cumsum(e, axis=0)])
    idx = np.arange(N)
    hi = np.minimum(idx + J, N - 1) + 1
    lo = np.maximum(idx - J, 0)
    window = csum[hi] - csum[lo] - e
    return np.moveaxis(e + kappa * window, 0, axis)


def _ar_filter(rho, shocks):
    if rho == 0:
        return shocks
    return lfilter([1.0], [1.0, -rho], shocks, axis=0)


def gen_errors(rng, cfg, N, T, k, m=4, factor_cfg=None):
    """Idiosyncratic errors ``eps`` (T, N) and ``v`` (N, T, k).

    ``m`` enters the scale of the correlated ``eps`` block. ``factor_cfg``
    is required for the ``nonstationary_v`` mode, where every column of V_i
    is generated by the factor recursion.
    """
    if cfg.mode == "iid":
        eps = rng.standard_normal((T, N))
        v = rng.standard_normal((N, T, k))
        return eps, v

    burn = cfg.burn_in
    TT = T + burn
    # eps_t'(iota_i + kappa w_i') for all i at once is (I + kappa W) eps_t.
    # nonstationary_v keeps eps on the time-uncorrelated weak_cs rule
    rho = cfg.rho if cfg.mode != "nonstationary_v" else 0.0
    a_eps = np.sqrt(m * (1.0 - rho ** 2) / (1.0 + 2 * cfg.J * cfg.kappa ** 2))
    shocks = apply_spillover(rng.standard_normal((TT, N)), cfg.J, cfg.kappa, axis=1)
    eps = _ar_filter(rho, a_eps * shocks)[burn:]

    if cfg.mode == "nonstationary_v":
        if factor_cfg is None:
            raise ConfigError("nonstationary_v needs the factor configuration")
        v_cfg = replace(factor_cfg, m=N * k)
        v = gen_factors(rng, v_cfg, T)  # (T, N*k)
        v = v.reshape(T, N, k).transpose(1, 0, 2).copy()
        return eps, v

    a_v = np.sqrt((1.0 - cfg.rho_v ** 2) / (1.0 + 2 * cfg.J_v * cfg.kappa_v ** 2))
    ups = rng.standard_normal((TT, N, k))
    zv = a_v * apply_spillover(ups, cfg.J_v, cfg.kappa_v, axis=1)
    v = _ar_filter(cfg.rho_v, zv)[burn:]
    return eps, v.transpose(1, 0, 2).copy()


def assemble_panel(f, big_gamma, gamma, eps, v, cfg, rng=None, beta=None):
    """Build y and X from their components; slopes drawn when heterogeneous."""
    T, m = f.shape
    N, mk, k = big_gamma.shape
    if mk != m or gamma.shape != (N, m) or eps.shape != (T, N) or v.shape != (N, T, k):
        raise ValueError("inconsistent panel component shapes")
    if beta is None:
        beta = np.full((N, k), cfg.beta_level)
        if cfg.slope_het_sd > 0:
            if rng is None:
                raise ValueError("heterogeneous slopes need an rng")
            beta = beta + cfg.slope_het_sd * rng.standard_normal((N, k))
    x = np.matmul(f, big_gamma) + v
    y = np.einsum("itk,ik->ti", x, beta) + f @ gamma.T + eps
    return Panel(y=y, x=x, f_true=f, gamma=gamma, big_gamma=big_gamma,
                 beta=beta, eps=eps, v=v, config=cfg)


def simulate_panel(cfg, rng):
    """Draw one panel; the result is a pure function of ``cfg`` and the rng state."""
    f = gen_factors(rng, cfg.factor, cfg.T)
    big_gamma, gamma = gen_loadings(rng, cfg.N, cfg.m, cfg.k, cfg.loading_mean, cfg.loading_sd)
    eps, v = gen_errors(rng, cfg.errors, cfg.N, cfg.T, cfg.k, m=cfg.m, factor_cfg=cfg.factor)
    return assemble_panel(f, big_gamma, gamma, eps, v, cfg, rng=rng)


def oracle_candidates(f, K, rng):
    """True factors padded with K - m independent standard normal columns."""
    from .cce import CandidateSet

    T, m = f.shape
    if K < m:
        raise ValueError(f"need K >= m, got K={K}, m={m}")
    noise = rng.standard_normal((T, K - m))
    labels = [f"factor_{j + 1}" for j in range(m)] + [f"noise_{j + 1}" for j in range(K - m)]
    return CandidateSet(np.hstack([f, noise]), labels, "oracle")
