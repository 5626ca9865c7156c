"""Fixed-effect estimation from within-group scatter.

``beta_hat`` solves ``Sigma_hat beta = S_xy`` where both sides are within-group
(demeaned) cross products divided by ``N``; ``alpha_hat`` is the mean over
groups of ``ybar_i - xbar_i' beta_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dataset import GroupedDataset
from .errors import SingularDesign, UsageError

__all__ = [
    "FixedEffectsFit",
    "DesignDiagnostics",
    "gls_fit",
    "design_diagnostics",
    "RCOND_MIN",
]

RCOND_MIN = 1e-12


def _group_means(a: np.ndarray, ds: GroupedDataset) -> np.ndarray:
    if a.ndim == 2 and a.shape[1] == 0:
        return np.zeros((ds.n, 0))
    sums = np.add.reduceat(a, ds.offsets[:-1], axis=0)
    if a.ndim == 2:
        return sums / ds.sizes[:, None]
    return sums / ds.sizes


@dataclass(frozen=True, eq=False)
class FixedEffectsFit:
    alpha_hat: float
    beta_hat: np.ndarray
    sigma_hat: np.ndarray
    resid: np.ndarray  # flat, grouped like the dataset rows
    sizes: np.ndarray
    offsets: np.ndarray
    ids: tuple

    @property
    def n(self) -> int:
        return int(self.sizes.shape[0])

    @property
    def N(self) -> int:  # noqa: N802
        return int(self.offsets[-1])

    @property
    def residuals(self) -> list[np.ndarray]:
        """Per-group residual vectors ``e_hat_i``."""
        return [self.resid[self.offsets[i]:self.offsets[i + 1]] for i in range(self.n)]

    @classmethod
    def from_residuals(cls, groups, alpha_hat=0.0, beta_hat=None):
        """Wrap given per-group residual vectors (testing and oracle use)."""
        groups = [np.asarray(g, dtype=float).ravel() for g in groups]
        sizes = np.array([g.size for g in groups], dtype=np.int64)
        beta = np.zeros(0) if beta_hat is None else np.asarray(beta_hat, dtype=float)
        p = beta.shape[0]
        return cls(
            alpha_hat=float(alpha_hat),
            beta_hat=beta,
            sigma_hat=np.zeros((p, p)),
            resid=np.concatenate(groups) if groups else np.zeros(0),
            sizes=sizes,
            offsets=np.concatenate([[0], np.cumsum(sizes)]),
            ids=tuple(str(i) for i in range(len(groups))),
        )


def _solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvalsh(a)
    top = eig.max()
    if top <= 0 or eig.min() / top < RCOND_MIN:
        raise SingularDesign(
            "within-group covariate scatter is singular "
            f"(eigenvalues {eig.min():.3g}..{top:.3g})"
        )
    return cho_solve(cho_factor(a, lower=True), b)


def gls_fit(ds: GroupedDataset) -> FixedEffectsFit:
    """Estimate ``alpha``, ``beta`` and return residuals ``y - alpha - x'beta``.

    ``p = 0`` is supported: ``beta_hat`` is empty and ``alpha_hat`` is the mean
    of the group means.
    """
    if ds.n < 2:
        raise UsageError("at least two groups are needed")
    N = ds.N
    ybar = _group_means(ds.y, ds)
    xbar = _group_means(ds.x, ds)
    if ds.p:
        xc = ds.x - np.repeat(xbar, ds.sizes, axis=0)
        yc = ds.y - np.repeat(ybar, ds.sizes)
        sigma = xc.T @ xc / N
        sigma = 0.5 * (sigma + sigma.T)
        beta = _solve_spd(sigma, xc.T @ yc / N)
    else:
        sigma = np.zeros((0, 0))
        beta = np.zeros(0)
    alpha = float(np.mean(ybar) - np.mean(xbar, axis=0) @ beta) if ds.p else float(np.mean(ybar))
    resid = ds.y - alpha - ds.x @ beta
    resid.setflags(write=False)
    return FixedEffectsFit(
        alpha_hat=alpha,
        beta_hat=beta,
        sigma_hat=sigma,
        resid=resid,
        sizes=ds.sizes,
        offsets=ds.offsets,
        ids=ds.ids,
    )


@dataclass(frozen=True)
class DesignDiagnostics:
    """Finite-sample group-size and design summaries of a dataset.

    ``c_n``, ``d_n`` and ``x0_n`` drive the variance inflation of the
    first-step estimators; ``inv_size_mean``, ``size_ratio`` and
    ``max_within_dev`` are the quantities whose limits the large-sample
    theory constrains (reported, never enforced).
    """

    c_n: float
    d_n: float
    x0_n: np.ndarray
    mean_group_size: float
    x0_quad: float | None
    inv_size_mean: float
    size_ratio: float
    max_within_dev: float

    def as_dict(self) -> dict:
        return {
            "c_n": self.c_n,
            "d_n": self.d_n,
            "x0_n": [float(v) for v in self.x0_n],
            "x0_quad": self.x0_quad,
            "mean_group_size": self.mean_group_size,
            "inv_size_mean": self.inv_size_mean,
            "size_ratio": self.size_ratio,
            "max_within_dev": self.max_within_dev,
        }


def design_diagnostics(ds: GroupedDataset) -> DesignDiagnostics:
    l = ds.sizes.astype(float)
    n, N = ds.n, ds.N
    c_n = N / n**2 * float(np.sum(1.0 / l))
    d_n = float(np.sum(l**2)) / N - float(np.sum(l)) / n
    xbar = _group_means(ds.x, ds)
    pooled = ds.x.mean(axis=0) if ds.p else np.zeros(0)
    x0 = pooled - xbar.mean(axis=0) if ds.p else np.zeros(0)
    quad = None
    max_dev = 0.0
    if ds.p:
        xc = ds.x - np.repeat(xbar, ds.sizes, axis=0)
        max_dev = float(np.max(np.linalg.norm(xc, axis=1)) / np.sqrt(N))
        sigma = xc.T @ xc / N
        try:
            quad = float(x0 @ _solve_spd(0.5 * (sigma + sigma.T), x0))
        except SingularDesign:
            quad = None
    elif ds.p == 0:
        quad = 0.0
    return DesignDiagnostics(
        c_n=c_n,
        d_n=d_n,
        x0_n=x0,
        mean_group_size=N / n,
        x0_quad=quad,
        inv_size_mean=float(np.mean(1.0 / l)),
        size_ratio=N / n,
        max_within_dev=max_dev,
    )
