"""scikit-learn style front end to :func:`sparsecov.pipeline.rgl_estimate`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .newton_cg import SolverConfig
from .pipeline import rgl_estimate
from .sparse_sym import SampleMatrix

__all__ = ["ThresholdMDMC"]


class ThresholdMDMC(BaseEstimator):
    """Sparse inverse covariance by soft-thresholding and max-det completion.

    Parameters
    ----------
    alpha : float or LambdaSpec
        Off-diagonal penalty weight(s).
    prior : SparsityPattern, optional
        Hard sparsity prior; entries outside it are zero in the estimate.
    newton_tol, max_newton : solver stopping rule.
    ordering : {"auto", "mindegree", "rcm", "natural"}
    block_size, threads : blocking and parallelism of the thresholding pass.
    assume_centered : if False, samples are centered before use.

    Attributes
    ----------
    precision_ : SparseSymMatrix on the thresholded pattern.
    report_ : SolverReport of the fit.
    n_features_in_ : int
    """

    def __init__(self, alpha=0.1, prior=None, newton_tol=1e-7, max_newton=50,
                 ordering="auto", block_size=4000, threads=None, assume_centered=False):
        self.alpha = alpha
        self.prior = prior
        self.newton_tol = newton_tol
        self.max_newton = max_newton
        self.ordering = ordering
        self.block_size = block_size
        self.threads = threads
        self.assume_centered = assume_centered

    def fit(self, X, y=None):
        """Fit on samples ``X`` of shape ``(n_samples, n_features)``."""
        samples = X if isinstance(X, SampleMatrix) else SampleMatrix.from_samples(
            np.asarray(X, dtype=np.float64), center=not self.assume_centered)
        cfg = SolverConfig(newton_tol=self.newton_tol, max_newton=self.max_newton)
        cfg.validate()
        P, rep = rgl_estimate(samples, self.alpha, H=self.prior, cfg=cfg,
                              block_size=self.block_size, ordering=self.ordering,
                              threads=self.threads)
        self.precision_ = P
        self.report_ = rep
        self.n_features_in_ = samples.n
        return self

    def get_precision(self):
        """Dense precision matrix."""
        check_is_fitted(self, "precision_")
        return self.precision_.to_dense()

    def score(self, X, y=None):
        """Gaussian log-likelihood of ``X`` per sample, up to a constant."""
        check_is_fitted(self, "precision_")
        S = SampleMatrix.from_samples(np.asarray(X, dtype=np.float64),
                                      center=not self.assume_centered).covariance()
        K = self.precision_.to_dense()
        sign, logdet = np.linalg.slogdet(K)
        return float(0.5 * (logdet - np.sum(S * K)))
