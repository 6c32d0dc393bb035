"""Information-criterion selection of cross-section averages.

Two objectives are evaluated over every nonempty subset M of the K
candidate columns C:

* MW:  ln( (NT)^-1 sum_i nu_i' M_{C_M} nu_i ) + g p
* DVS: ln det( (NT)^-1 sum_i X_i' M_{C_M} X_i ) + g k p

where ``nu_i`` are pooled CCE residuals under the full candidate set. A
moment cache reduces every subset evaluation to K x K algebra::

    sum_i X_i' M X_i  = S_xx - sum_i A_i P_M A_i'      A_i = X_i' C
    sum_i nu_i' M nu_i = s_nn - <P_M, sum_i b_i b_i'>   b_i = C' nu_i

with ``P_M`` the zero-padded (C_M' C_M)^+. The sum over units is folded
into a k x k x K x K tensor once, so the full 2^K - 1 scan costs
O(2^K k^2 K^2) regardless of N and T.
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
import math

import numpy as np

from . import matlin
from ._errors import InadmissibleSubsetError, SelectionError


class Penalty(str, Enum):
    P1 = "P1"
    P2 = "P2"


class Criterion(str, Enum):
    MW = "MW"
    DVS = "DVS"
    DVS_ADJUSTED = "DVS_adjusted"


@dataclass(frozen=True)
class SubsetMask:
    bits: int

    @property
    def g(self):
        return bin(self.bits).count("1")

    def members(self):
        return [j for j in range(self.bits.bit_length()) if self.bits >> j & 1]

    @classmethod
    def from_members(cls, cols):
        bits = 0
        for j in cols:
            bits |= 1 << int(j)
        if bits == 0:
            raise ValueError("the empty subset is not searched")
        return cls(bits)


def penalty(kind, N, T):
    """Cardinality penalty p_{N,T}; P2 uses C^2 = min(N, T)."""
    kind = Penalty(kind)
    scale = (N + T) / (N * T)
    if kind is Penalty.P1:
        return scale * math.log(N * T / (N + T))
    return scale * math.log(min(N, T))


@lru_cache(maxsize=None)
def all_masks(K):
    """Mask integers 1..2^K-1, their membership matrix and cardinalities."""
    bits = np.arange(1, 2 ** K, dtype=np.int64)
    member = (bits[:, None] >> np.arange(K)) & 1
    return bits, member.astype(bool), member.sum(axis=1)


@dataclass
class MomentCache:
    gram: np.ndarray              # (K, K) C'C
    N: int
    T: int
    k: int
    K: int
    a: np.ndarray = None          # (N, k, K) X_i' C
    s_xx: np.ndarray = None       # (k, k) sum_i X_i' X_i
    b: np.ndarray = None          # (N, K) C' nu_i
    s_nn: float = None            # sum_i nu_i' nu_i
    _xx4: np.ndarray = field(default=None, repr=False)
    _bb: np.ndarray = field(default=None, repr=False)
    _pinv_all: np.ndarray = field(default=None, repr=False)
    _scan: dict = field(default_factory=dict, repr=False)

    @property
    def has_dvs(self):
        return self.a is not None

    @property
    def has_mw(self):
        return self.b is not None

    @property
    def xx4(self):
        # H[p, q, c, d] = sum_i A_i[p, c] A_i[q, d]
        if self._xx4 is None:
            a2 = self.a.reshape(self.N, -1)
            self._xx4 = (a2.T @ a2).reshape(self.k, self.K, self.k, self.K).transpose(0, 2, 1, 3)
        return self._xx4

    @property
    def bb(self):
        if self._bb is None:
            self._bb = self.b.T @ self.b
        return self._bb

    def permuted(self, order):
        order = np.asarray(order)
        return MomentCache(
            gram=self.gram[np.ix_(order, order)], N=self.N, T=self.T, k=self.k, K=self.K,
            a=None if self.a is None else self.a[:, :, order], s_xx=self.s_xx,
            b=None if self.b is None else self.b[:, order], s_nn=self.s_nn)


def build_cache(panel, candidates, fit=None):
    """Cross-moments of the panel with the candidate matrix.

    DVS blocks are always filled; MW blocks need the CCE ``fit``.
    """
    c = candidates.c
    if c.shape[0] != panel.T:
        raise ValueError(f"candidate rows {c.shape[0]} != T {panel.T}")
    gram = c.T @ c
    a = np.matmul(panel.x.transpose(0, 2, 1), c)
    x2 = panel.x.reshape(-1, panel.k)
    s_xx = x2.T @ x2
    b = s_nn = None
    if fit is not None:
        b = fit.residuals @ c
        s_nn = float(np.sum(fit.residuals ** 2))
    return MomentCache(gram=0.5 * (gram + gram.T), N=panel.N, T=panel.T, k=panel.k,
                       K=c.shape[1], a=a, s_xx=0.5 * (s_xx + s_xx.T), b=b, s_nn=s_nn)


def _padded_pinv(cache, member):
    full = member is all_masks(cache.K)[1]
    if full and cache._pinv_all is not None:
        return cache._pinv_all
    g = cache.gram * (member[:, :, None] & member[:, None, :])
    p = matlin.pinv_gram(g, cache.T)
    if full:
        cache._pinv_all = p
    return p


def _normaliser(cache, crit, tau):
    if crit is Criterion.DVS_ADJUSTED:
        if tau is None:
            raise ValueError("DVS_adjusted needs tau")
        return cache.N * cache.T ** (1.0 + tau)
    return cache.N * cache.T


def dvs_moments(cache, member):
    """(n, k, k) stack of sum_i X_i' M_{C_M} X_i for masks in ``member``."""
    p = _padded_pinv(cache, member)
    k, K = cache.k, cache.K
    proj = (p.reshape(-1, K * K) @ cache.xx4.reshape(k * k, K * K).T).reshape(-1, k, k)
    r = cache.s_xx[None] - proj
    return 0.5 * (r + r.transpose(0, 2, 1))


def mw_quadratic(cache, member):
    """(n,) sums sum_i nu_i' M_{C_M} nu_i for masks in ``member``."""
    p = _padded_pinv(cache, member)
    return cache.s_nn - p.reshape(p.shape[0], -1) @ cache.bb.ravel()


def objectives(cache, crit, member, tau=None):
    """Objective values (penalty excluded); +inf marks inadmissible subsets."""
    crit = Criterion(crit)
    if crit is Criterion.MW:
        if not cache.has_mw:
            raise ValueError("MW needs a cache built with a CCE fit")
        qf = mw_quadratic(cache, member)
        ok = qf > 1e-12 * cache.s_nn
        return np.where(ok, np.log(np.where(ok, qf, 1.0) / (cache.N * cache.T)), np.inf)
    mom = dvs_moments(cache, member) / _normaliser(cache, crit, tau)
    return matlin.logdet_pd_many(mom)


def _member_of(cache, mask):
    bits = mask.bits if isinstance(mask, SubsetMask) else int(mask)
    if bits <= 0 or bits >= 1 << cache.K:
        raise ValueError(f"mask {bits} outside 1..2^{cache.K}-1")
    return ((bits >> np.arange(cache.K)) & 1).astype(bool)[None]


def _penalty_weight(cache, crit):
    return 1 if Criterion(crit) is Criterion.MW else cache.k


def ic_value(cache, crit, pen, mask, tau=None):
    """Total IC of one subset; ``math.inf`` when the subset is inadmissible."""
    member = _member_of(cache, mask)
    obj = float(objectives(cache, crit, member, tau)[0])
    g = int(member.sum())
    return obj + g * _penalty_weight(cache, crit) * penalty(pen, cache.N, cache.T)


@dataclass
class SelectionResult:
    chosen: SubsetMask
    g_hat: int
    criterion: Criterion
    penalty: Penalty
    masks: np.ndarray       # (2^K - 1,) mask integers
    objective: np.ndarray   # penalty excluded, +inf when inadmissible
    penalty_term: np.ndarray
    total: np.ndarray
    inadmissible_count: int

    def table(self):
        return [
            {"mask": int(m), "g": bin(int(m)).count("1"), "objective": float(o),
             "penalty": float(p), "ic": float(t)}
            for m, o, p, t in zip(self.masks, self.objective, self.penalty_term, self.total)
        ]


def select(cache, crit, pen, tau=None):
    """Exhaustive argmin over the 2^K - 1 nonempty subsets.

    Ties go to the smaller subset, then to the smaller mask integer.
    """
    crit, pen = Criterion(crit), Penalty(pen)
    bits, member, g = all_masks(cache.K)
    key = (crit, tau)
    if key not in cache._scan:
        cache._scan[key] = objectives(cache, crit, member, tau)
    obj = cache._scan[key]
    pen_term = g * _penalty_weight(cache, crit) * penalty(pen, cache.N, cache.T)
    total = obj + pen_term
    finite = np.isfinite(total)
    if not finite.any():
        raise SelectionError("every candidate subset is inadmissible")
    idx = np.flatnonzero(finite)
    best = idx[np.lexsort((bits[idx], g[idx], total[idx]))[0]]
    chosen = SubsetMask(int(bits[best]))
    return SelectionResult(chosen, chosen.g, crit, pen, bits, obj, pen_term, total,
                           int((~finite).sum()))


def objective_difference(cache, crit, mask_a, mask_b, tau=None):
    """Objective of ``mask_a`` minus that of ``mask_b`` (no penalty)."""
    member = np.vstack([_member_of(cache, mask_a), _member_of(cache, mask_b)])
    va, vb = objectives(cache, crit, member, tau)
    if not (np.isfinite(va) and np.isfinite(vb)):
        raise InadmissibleSubsetError("objective undefined for at least one mask")
    return float(va - vb)


def sigma_hat(z):
    """(NT)^-1 sum_i (Z_i - Zbar)'(Z_i - Zbar) for unit data ``z`` of shape (N, T, K)."""
    N, T, _ = z.shape
    d = z - z.mean(axis=0)
    return np.einsum("itk,itl->kl", d, d) / (N * T)


def er_count(candidates, scaled=False, sigma=None, j_max=None):
    """Eigenvalue-ratio estimate of the factor count from T^-1 C'C.

    With ``scaled`` the candidates are post-multiplied by ``sigma^{-1/2}``,
    which equals averaging unit data scaled the same way.
    """
    c = candidates.c if hasattr(candidates, "c") else np.asarray(candidates, dtype=np.float64)
    T, K = c.shape
    if K < 2:
        raise ValueError("eigenvalue ratio needs at least two candidates")
    j_max = K - 1 if j_max is None else int(j_max)
    if not 1 <= j_max <= K - 1:
        raise ValueError(f"j_max must lie in 1..{K - 1}")
    if scaled:
        if sigma is None:
            raise ValueError("scaled eigenvalue ratio needs sigma")
        c = c @ matlin.inv_sqrt_sym(sigma)
    lam = matlin.sym_eig(c.T @ c / T).eigenvalues
    best_j, best_ratio = 1, -np.inf
    for j in range(1, j_max + 1):
        if lam[j] < 1e-12 * lam[0] or lam[j] <= 0:
            continue
        ratio = lam[j - 1] / lam[j]
        if ratio > best_ratio:
            best_j, best_ratio = j, ratio
    return best_j
