"""Analytic encoder whose log-volume equals a mixture's log density.

The Rosenblatt transform ``f_k(x) = P(X_k <= x_k | X_{<k} = x_{<k})`` maps
the mixture to the uniform cube. Its Jacobian is lower triangular with the
conditional densities on the diagonal, so ``|det J(x)| = p(x)`` and every
singular value stays moderate, which keeps eps-clipping out of the way.
Only mixtures with isotropic components are supported.
"""

import numpy as np
from scipy.special import log_softmax, logsumexp, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class RosenblattEncoder:
    def __init__(self, mixture):
        if not all(c.isotropic for c in mixture.components):
            raise ValueError("the Rosenblatt oracle needs isotropic components")
        self.mixture = mixture
        self.means = np.array([c.mean for c in mixture.components])  # (C, D)
        self.sd = np.sqrt(np.array([c.covariance for c in mixture.components]))  # (C,)
        self.logw = np.log(mixture.weights)

    @property
    def input_dim(self):
        return self.mixture.dim

    def _prefix_state(self, x):
        """Per prefix length k: standardized coords and log responsibilities."""
        z = (x[:, None, :] - self.means[None]) / self.sd[None, :, None]  # (N, C, D)
        logpdf = -0.5 * z * z - np.log(self.sd)[None, :, None] - _LOG_SQRT_2PI
        # log w_c + sum_{j<k} log N(x_j; mu_cj, s_c), for k = 0..D-1
        prefix = np.cumsum(logpdf, axis=2) - logpdf
        log_resp = log_softmax(self.logw[None, :, None] + prefix, axis=1)  # (N, C, D)
        return z, log_resp, logpdf

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z, log_resp, _ = self._prefix_state(x)
        return np.einsum("ncd,ncd->nd", np.exp(log_resp), ndtr(z))

    def input_jacobian(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        n, d = xb.shape
        z, log_resp, _ = self._prefix_state(xb)
        resp = np.exp(log_resp)
        cdf = ndtr(z)
        pdf = np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / self.sd[None, :, None]
        jac = np.zeros((n, d, d))
        idx = np.arange(d)
        jac[:, idx, idx] = np.einsum("ncd,ncd->nd", resp, pdf)
        # d log(prefix weight of c at row k) / d x_j = -z_cj / s_c for j < k
        score = -z / self.sd[None, :, None]  # (N, C, D)
        for k in range(1, d):
            r = resp[:, :, k]  # (N, C)
            centered = score[:, :, :k] - np.einsum("nc,ncj->nj", r, score[:, :, :k])[:, None, :]
            jac[:, k, :k] = np.einsum("nc,nc,ncj->nj", r, cdf[:, :, k], centered)
        return jac[0] if single else jac

    def log_det(self, x):
        """``log |det J(x)|``: the sum of log conditional densities on the diagonal."""
        xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _, log_resp, logpdf = self._prefix_state(xb)
        return logsumexp(log_resp + logpdf, axis=1).sum(axis=1)
