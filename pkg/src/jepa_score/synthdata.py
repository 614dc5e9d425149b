"""Synthetic data with known densities: Gaussian-mixture generators plus
additive-noise views, and exact log-density oracles for both."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from jepa_score.linalg import as_matrix, as_vector

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Component:
    """One mixture component. ``covariance`` is an isotropic variance (float)
    or a full ``(D, D)`` SPD matrix."""

    weight: float
    mean: np.ndarray
    covariance: object

    @property
    def isotropic(self):
        return np.ndim(self.covariance) == 0


class GeneratorSpec:
    """Gaussian mixture over generators."""

    def __init__(self, components):
        comps = []
        for c in components:
            if not isinstance(c, Component):
                c = Component(float(c["weight"]), c["mean"], c["covariance"])
            mean = as_vector(c.mean)
            if np.ndim(c.covariance) == 0:
                cov = float(c.covariance)
                if not cov > 0:
                    raise ValueError("isotropic covariance must be positive")
            else:
                cov = as_matrix(c.covariance)
                if cov.shape != (mean.size, mean.size):
                    raise ValueError(f"covariance shape {cov.shape} does not match mean dim {mean.size}")
            comps.append(Component(float(c.weight), mean, cov))
        if not comps:
            raise ValueError("mixture needs at least one component")
        dims = {c.mean.size for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        weights = np.array([c.weight for c in comps])
        if np.any(weights <= 0):
            raise ValueError("component weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {weights.sum()!r}, not 1")
        self.components = tuple(comps)
        self.dim = dims.pop()
        self.weights = weights
        self._chols = []
        for c in comps:
            if c.isotropic:
                self._chols.append(None)
                continue
            if not np.allclose(c.covariance, c.covariance.T, rtol=0, atol=1e-12):
                raise ValueError("covariance is not symmetric")
            try:
                self._chols.append(np.linalg.cholesky(c.covariance))
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance is not positive definite") from exc

    def __len__(self):
        return len(self.components)

    def to_dict(self):
        return {
            "components": [
                {
                    "weight": c.weight,
                    "mean": c.mean.tolist(),
                    "covariance": c.covariance if c.isotropic else c.covariance.tolist(),
                }
                for c in self.components
            ]
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["components"])

    def with_added_variance(self, var):
        """Mixture with every covariance widened by ``var * I``."""
        comps = []
        for c in self.components:
            cov = c.covariance + var if c.isotropic else c.covariance + var * np.eye(self.dim)
            comps.append(Component(c.weight, c.mean, cov))
        return GeneratorSpec(comps)


def default_mixture(dim, seed, n_components=5, mean_range=3.0, scale_range=(0.5, 1.5)):
    """Random isotropic mixture: means uniform in ``[-r, r]^D``, per-component
    standard deviation uniform in ``scale_range``, equal weights."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(-mean_range, mean_range, size=(n_components, dim))
    scales = rng.uniform(*scale_range, size=n_components)
    w = 1.0 / n_components
    comps = [Component(w, means[i], float(scales[i] ** 2)) for i in range(n_components)]
    # equal weights may miss the sum-to-one check by an ulp
    comps[-1] = Component(1.0 - w * (n_components - 1), means[-1], comps[-1].covariance)
    return GeneratorSpec(comps)


@dataclass(frozen=True)
class TransformSpec:
    kind: str = "none"
    sigma_T: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "additive_gaussian"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not self.sigma_T >= 0:
            raise ValueError("sigma_T must be nonnegative")

    @property
    def noise_std(self):
        return self.sigma_T if self.kind == "additive_gaussian" else 0.0

    def to_dict(self):
        return {"kind": self.kind, "sigma_T": self.sigma_T}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "none"), float(d.get("sigma_T", 0.0)))


@dataclass
class SynthDataset:
    generators: np.ndarray
    spec: GeneratorSpec
    transform: TransformSpec
    seed: int
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, spec, transform, n, seed):
        return cls(sample_generators(spec, n, seed), spec, transform, seed)

    def __len__(self):
        return len(self.generators)


def sample_generators(spec, n, seed):
    """``n`` i.i.d. mixture draws as an ``(n, D)`` array.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(spec), size=n, p=spec.weights)
    z = rng.standard_normal((n, spec.dim))
    out = np.empty((n, spec.dim))
    for c, (comp, chol) in enumerate(zip(spec.components, spec._chols)):
        idx = labels == c
        if chol is None:
            out[idx] = comp.mean + np.sqrt(comp.covariance) * z[idx]
        else:
            out[idx] = comp.mean + z[idx] @ chol.T
    return out


def apply_transform(x, t, rng):
    """One stochastic view of ``x`` (any leading shape)."""
    x = np.asarray(x, dtype=np.float64)
    if t.kind == "none" or t.sigma_T == 0:
        return x.copy()
    return x + t.sigma_T * rng.standard_normal(x.shape)


def gmm_log_density(spec, x):
    """``log sum_c w_c N(x; mu_c, Sigma_c)`` for ``x`` of shape ``(D,)`` or ``(N, D)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != spec.dim:
        raise ValueError(f"x has dim {xb.shape[1]}, mixture has dim {spec.dim}")
    d = spec.dim
    terms = np.empty((xb.shape[0], len(spec)))
    for c, (comp, chol) in enumerate(zip(spec.components, spec._chols)):
        diff = xb - comp.mean
        if chol is None:
            var = comp.covariance
            quad = np.einsum("ij,ij->i", diff, diff) / var
            logdet = d * np.log(var)
        else:
            sol = np.linalg.solve(chol, diff.T)
            quad = np.einsum("ij,ij->j", sol, sol)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
        terms[:, c] = np.log(comp.weight) - 0.5 * (d * _LOG_2PI + logdet + quad)
    out = logsumexp(terms, axis=1)
    return float(out[0]) if single else out


def noisy_density_log(spec, t, x):
    """Log density of transformed samples: the mixture convolved with the noise."""
    s = t.noise_std
    if s == 0:
        return gmm_log_density(spec, x)
    return gmm_log_density(spec.with_added_variance(s * s), x)
