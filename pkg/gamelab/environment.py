"""
Ground-truth worth field: a Gaussian mixture over the L x L grid of unit cells.
Cell (ix, iy) has centroid (ix + 0.5, iy + 0.5); rasters are indexed [ix, iy].
"""

import logging
from functools import cached_property

import numpy as np
from scipy.stats import multivariate_normal

from .exceptions import SingularCovariance
from .games import make_rng


logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12
MIN_GRID = 8


def centroids(size):
    axis = np.arange(size) + 0.5
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel()])


def raster_gradient(raster):
    """
    Gradient magnitude per cell; central differences inside, one-sided at the edges
    """
    raster = np.asarray(raster, dtype=float)
    dx, dy = np.gradient(raster)
    return np.hypot(dx, dy)


class GaussianComponent(object):

    def __init__(self, weight, mean, covariance):
        mean = np.asarray(mean, dtype=float)
        covariance = np.asarray(covariance, dtype=float)

        if weight < 0:
            raise ValueError("component weight must be non-negative")
        if mean.shape != (2,) or covariance.shape != (2, 2):
            raise ValueError("components live on the plane: mean (2,), covariance (2, 2)")
        if np.abs(covariance - covariance.T).max() > SYMMETRY_TOLERANCE:
            raise SingularCovariance("covariance {} is not symmetric".format(covariance.tolist()))
        if np.linalg.det(covariance) <= 0 or np.linalg.eigvalsh(covariance).min() <= 0:
            raise SingularCovariance("covariance {} is not positive definite".format(covariance.tolist()))

        self.weight = float(weight)
        self.mean = mean
        self.covariance = covariance
        self._density = multivariate_normal(mean=mean, cov=covariance)

    def density(self, points):
        return np.atleast_1d(self._density.pdf(points))

    def to_dict(self):
        return {
            "weight": self.weight,
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["weight"], data["mean"], data["covariance"])


class WorthField(object):

    def __init__(self, components, size):
        components = list(components)
        if not components:
            raise ValueError("a worth field needs at least one component")
        if size < 1:
            raise ValueError("grid size must be positive")

        total = sum(component.weight for component in components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError("component weights sum to {}, not 1".format(total))

        self.components = components
        self.size = int(size)

    @property
    def num_components(self):
        return len(self.components)

    def density(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.zeros(len(points))
        for component in self.components:
            values += component.weight * component.density(points)
        return values

    @cached_property
    def raster(self):
        return self.density(centroids(self.size)).reshape(self.size, self.size)

    @cached_property
    def gradient_raster(self):
        return raster_gradient(self.raster)

    @property
    def total_mass(self):
        return float(self.raster.sum())

    def to_dict(self):
        return {
            "size": self.size,
            "components": [component.to_dict() for component in self.components],
        }

    @classmethod
    def from_dict(cls, data):
        return cls([GaussianComponent.from_dict(item) for item in data["components"]], data["size"])


def evaluate(field, l):
    return float(field.density(l)[0])


def local_gradient(field, l):
    ix, iy = (int(np.floor(coordinate)) for coordinate in l)
    return float(field.gradient_raster[ix, iy])


def generate_scenario(seed, size, m_range=(1, 5)):
    """
    Random field: M uniform in ``m_range``, means uniform over the interior
    (margin 0.1 L), Dirichlet weights, diagonal covariances with sigma in [L/20, L/8].
    """
    if size < MIN_GRID:
        raise ValueError("grid size must be at least {}".format(MIN_GRID))
    low, high = m_range
    if not 1 <= low <= high:
        raise ValueError("component range {} is not valid".format(m_range))

    rng = make_rng(seed)
    count = int(rng.integers(low, high + 1))
    margin = 0.1 * size
    means = rng.uniform(margin, size - margin, size=(count, 2))
    weights = rng.dirichlet(np.ones(count))
    weights /= weights.sum()
    sigmas = rng.uniform(size / 20.0, size / 8.0, size=(count, 2))

    components = [GaussianComponent(weight, mean, np.diag(sigma ** 2))
                  for weight, mean, sigma in zip(weights, means, sigmas)]
    logger.debug("scenario {}: {} components on a {}x{} grid".format(seed, count, size, size))
    return WorthField(components, size)
