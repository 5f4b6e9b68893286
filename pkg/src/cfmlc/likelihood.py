"""Posterior computations shared by the decoders and the rate estimators.

Observations are complex scalars y = p + z with z ~ CN(0, sigma2) and p drawn
from a finite weighted point set, each point tagged with a target value.  For
folded observations the noise is wrapped onto a two-dimensional lattice, and
the likelihood of a point becomes the periodised Gaussian

    theta(u) = sum_{lam in Lambda} exp(-|u - lam|^2 / sigma2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .algebra import RingElement

_CHUNK_ELEMS = 1 << 22
_TAIL = 40.0  # exp(-40) relative truncation of Gaussian sums


@dataclass(frozen=True)
class FoldLattice:
    """The ideal phi*R as a lattice in the complex plane."""

    b1: complex
    b2: complex

    @classmethod
    def of(cls, phi: RingElement) -> "FoldLattice":
        return cls(complex(phi), complex(phi * RingElement(phi.ring, 0, 1)))

    @cached_property
    def _basis(self) -> np.ndarray:
        return np.array([[self.b1.real, self.b2.real], [self.b1.imag, self.b2.imag]])

    @cached_property
    def _inv(self) -> np.ndarray:
        return np.linalg.inv(self._basis)

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self._basis)))

    def reduce(self, z: np.ndarray) -> np.ndarray:
        """z minus a nearby lattice point (rounding in the basis coordinates)."""
        z = np.asarray(z, dtype=complex)
        inv = self._inv
        c1 = np.round(inv[0, 0] * z.real + inv[0, 1] * z.imag)
        c2 = np.round(inv[1, 0] * z.real + inv[1, 1] * z.imag)
        return z - c1 * self.b1 - c2 * self.b2

    def _points_within(self, basis: np.ndarray, radius: float) -> np.ndarray:
        b1 = complex(basis[0, 0], basis[1, 0])
        b2 = complex(basis[0, 1], basis[1, 1])
        area = abs(float(np.linalg.det(basis)))
        # |i| <= radius * |b2| / area bounds the coefficient range
        n1 = int(math.ceil(radius * abs(b2) / area)) + 1
        n2 = int(math.ceil(radius * abs(b1) / area)) + 1
        i, j = np.meshgrid(np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1), indexing="ij")
        pts = (i * b1 + j * b2).ravel()
        return pts[np.abs(pts) <= radius]

    def log_theta(self, u: np.ndarray, sigma2: float) -> np.ndarray:
        """log of the periodised Gaussian at u (any shape).

        Reduced offsets satisfy |u| <= rho, so the direct sum needs lattice
        points within rho + sqrt(tail) * sigma.  The dual sum has absolute
        error below exp(-tail) * scale, which stays relatively small while
        theta >= exp(-rho^2 / sigma2) is not too tiny; the cheaper of the two
        valid sums is used.
        """
        u = self.reduce(u)
        sigma = math.sqrt(sigma2)
        rho = 0.5 * (abs(self.b1) + abs(self.b2))
        r_direct = rho + math.sqrt(_TAIL) * sigma
        r_dual = math.sqrt(_TAIL) / (math.pi * sigma)
        n_direct = math.pi * r_direct**2 / self.covolume
        n_dual = math.pi * r_dual**2 * self.covolume
        if rho * rho / sigma2 <= 0.5 * _TAIL and n_dual < n_direct:
            return self._log_theta_dual(u, sigma2, r_dual)
        return self._log_theta_direct(u, sigma2, r_direct)

    def _log_theta_direct(self, u: np.ndarray, sigma2: float, radius: float) -> np.ndarray:
        lam = self._points_within(self._basis, radius)
        flat = u.ravel()
        out = np.empty(flat.shape)
        step = max(1, _CHUNK_ELEMS // lam.size)
        for s in range(0, flat.size, step):
            d2 = np.abs(flat[s : s + step, None] - lam[None, :]) ** 2
            m = d2.min(axis=1)
            out[s : s + step] = -m / sigma2 + np.log(np.sum(np.exp(-(d2 - m[:, None]) / sigma2), axis=1))
        return out.reshape(u.shape)

    def _log_theta_dual(self, u: np.ndarray, sigma2: float, radius: float) -> np.ndarray:
        # Poisson summation: theta(u) = (pi s2 / V) sum_k exp(-pi^2 s2 |k|^2) cos(2 pi <k, u>)
        dual = np.linalg.inv(self._basis).T
        k = self._points_within(dual, radius)
        wts = np.exp(-(math.pi**2) * sigma2 * np.abs(k) ** 2)
        flat = u.ravel()
        out = np.empty(flat.shape)
        step = max(1, _CHUNK_ELEMS // k.size)
        for s in range(0, flat.size, step):
            uu = flat[s : s + step, None]
            phase = 2 * math.pi * (k.real[None, :] * uu.real + k.imag[None, :] * uu.imag)
            out[s : s + step] = np.cos(phase) @ wts
        scale = math.pi * sigma2 / self.covolume
        return np.log(np.maximum(out * scale, 1e-300)).reshape(u.shape)


@dataclass(frozen=True)
class PointSet:
    """Weighted noiseless points, each tagged with an integer target."""

    points: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    n_targets: int

    @classmethod
    def compress(
        cls, points: np.ndarray, targets: np.ndarray, n_targets: int, fold: FoldLattice | None = None
    ) -> "PointSet":
        """Merge duplicate (point, target) pairs, reducing modulo ``fold`` first."""
        p = np.asarray(points, dtype=complex)
        if fold is not None:
            p = fold.reduce(p)
        scale = max(1.0, float(np.max(np.abs(p))) if p.size else 1.0)
        key = np.stack([np.round(p.real / scale, 10), np.round(p.imag / scale, 10), targets.astype(float)], axis=1)
        _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        return cls(p[first], np.asarray(targets)[first].astype(np.int64), counts.astype(float), n_targets)


def log_likelihoods(y: np.ndarray, pset: PointSet, sigma2: float, fold: FoldLattice | None = None) -> np.ndarray:
    """(S, U) log-likelihoods of each point (weights included, constants dropped)."""
    diff = y[:, None] - pset.points[None, :]
    if fold is None:
        ll = -(np.abs(diff) ** 2) / sigma2
    else:
        ll = fold.log_theta(diff, sigma2)
    return ll + np.log(pset.weights)[None, :]


def posterior(y: np.ndarray, pset: PointSet, sigma2: float, fold: FoldLattice | None = None) -> np.ndarray:
    """(S, n_targets) posterior pmf of the target given each observation."""
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    out = np.empty((y.size, pset.n_targets))
    onehot = np.zeros((pset.points.size, pset.n_targets))
    onehot[np.arange(pset.points.size), pset.targets] = 1.0
    per_point = 1 if fold is None else 64
    step = max(1, _CHUNK_ELEMS // (pset.points.size * per_point))
    for s in range(0, y.size, step):
        ll = log_likelihoods(y[s : s + step], pset, sigma2, fold)
        ll -= ll.max(axis=1, keepdims=True)
        mass = np.exp(ll) @ onehot
        out[s : s + step] = mass / mass.sum(axis=1, keepdims=True)
    return out


def entropy_bits(pmf: np.ndarray) -> np.ndarray:
    """Row-wise entropy in bits."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(pmf > 0, -pmf * np.log2(pmf), 0.0)
    return t.sum(axis=-1)
