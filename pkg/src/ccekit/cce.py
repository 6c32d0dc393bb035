"""Cross-section averages and the pooled CCE estimator."""
from dataclasses import dataclass

import numpy as np

from . import matlin
from ._errors import EstimationError

SOURCES = ("cs_averages", "regressors_only", "oracle")


@dataclass
class CandidateSet:
    c: np.ndarray   # (T, K) candidate proxies
    labels: list
    source: str = "cs_averages"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.c.ndim == 1:
            self.c = self.c[:, None]
        if self.c.shape[1] < 1:
            raise ValueError("a candidate set needs at least one column")
        if len(self.labels) != self.c.shape[1]:
            raise ValueError("one label per candidate column is required")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("candidates contain non-finite entries")
        if self.source not in SOURCES:
            raise ValueError(f"unknown candidate source {self.source!r}")

    @property
    def T(self):
        return self.c.shape[0]

    @property
    def K(self):
        return self.c.shape[1]

    def permuted(self, order):
        order = list(order)
        return CandidateSet(self.c[:, order], [self.labels[j] for j in order], self.source)


@dataclass
class CceFit:
    beta_hat: np.ndarray   # (k,)
    residuals: np.ndarray  # (N, T); residuals[i] = y_i - X_i beta_hat
    candidates: CandidateSet
    condition_number: float


def cs_averages(panel):
    """Per-period means of y and of every regressor: columns ybar, xbar_1..xbar_k."""
    ybar = panel.y.mean(axis=1)
    xbar = panel.x.mean(axis=0)
    labels = ["ybar"] + [f"xbar_{j + 1}" for j in range(panel.k)]
    return CandidateSet(np.column_stack([ybar, xbar]), labels, "cs_averages")


def regressor_candidates(cs):
    """Drop the ybar column so selection only uses regressor averages."""
    if cs.source in ("regressors_only", "oracle"):
        return cs
    if cs.source != "cs_averages":
        raise ValueError(f"cannot take regressor averages from source {cs.source!r}")
    return CandidateSet(cs.c[:, 1:], cs.labels[1:], "regressors_only")


def project_out(c, data):
    """Apply M_C to every (T, .) slice of ``data`` without forming the T x T matrix.

    ``data`` has time on axis -2, e.g. shape (N, T, k) or (T, N).
    """
    c_pinv = matlin.pinv(c)
    if data.ndim == 2:
        return data - c @ (c_pinv @ data)
    return data - np.matmul(c, np.matmul(c_pinv, data))


def cce_pooled(panel, cs):
    """Pooled CCE slope with every candidate in ``cs`` as a factor proxy.

    Residuals are y_i - X_i beta_hat; the factors are not subtracted.
    """
    if cs.T != panel.T:
        raise ValueError("candidate rows must match the panel length")
    mx = project_out(cs.c, panel.x)             # (N, T, k)
    denom = mx.reshape(-1, panel.k).T @ panel.x.reshape(-1, panel.k)
    denom = 0.5 * (denom + denom.T)
    num = np.einsum("itk,ti->k", mx, panel.y)
    w = np.linalg.eigvalsh(denom)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise EstimationError("pooled CCE denominator is singular")
    cond = float(w[-1] / w[0])
    beta_hat = matlin.pinv(denom) @ num
    residuals = panel.y.T - panel.x @ beta_hat
    return CceFit(beta_hat, residuals, cs, cond)
