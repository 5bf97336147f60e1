"""Sparse source generators: single sparse vectors and correlated pairs."""

from dataclasses import dataclass

import numpy as np
from scipy import fft


def dct_synthesize(theta):
    """Orthonormal DCT-II synthesis ``x = Psi @ theta`` (applies the inverse DCT-II)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise ValueError("theta must be a non-empty 1-D array")
    return fft.idct(theta, type=2, norm="ortho")


def dct_analyze(x):
    """Orthonormal DCT-II analysis ``theta = Psi.T @ x``."""
    return fft.dct(np.asarray(x, dtype=float), type=2, norm="ortho")


def synthesize(theta, basis="dct"):
    if basis == "dct":
        return dct_synthesize(theta)
    if basis == "identity":
        return np.array(theta, dtype=float)
    raise ValueError(f"unknown basis {basis!r}")


def basis_matrix(n, basis="dct"):
    """Dense ``n x n`` synthesis matrix (columns are the basis vectors)."""
    eye = np.eye(n)
    if basis == "identity":
        return eye
    return fft.idct(eye, type=2, norm="ortho", axis=0)


@dataclass(frozen=True)
class SparseVector:
    coeffs: np.ndarray
    support: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class CorrelatedPair:
    theta_c: np.ndarray
    theta_i1: np.ndarray
    theta_i2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    support_c: np.ndarray
    support_i1: np.ndarray
    support_i2: np.ndarray
    basis: str = "dct"

    @property
    def theta1(self):
        return self.theta_c + self.theta_i1

    @property
    def theta2(self):
        return self.theta_c + self.theta_i2

    @property
    def support1(self):
        return np.union1d(self.support_c, self.support_i1)

    @property
    def support2(self):
        return np.union1d(self.support_c, self.support_i2)

    @property
    def k1(self):
        return int(self.support1.size)

    @property
    def k2(self):
        return int(self.support2.size)

    @property
    def x_c(self):
        return synthesize(self.theta_c, self.basis)


def _place(n, support, var, rng):
    theta = np.zeros(n)
    theta[support] = rng.normal(0.0, np.sqrt(var), size=support.size)
    return theta


def gen_sparse(spec, rng):
    """Draw a K-sparse vector with uniformly placed Gaussian nonzeros."""
    support = np.sort(rng.choice(spec.n, size=spec.k, replace=False))
    theta = _place(spec.n, support, spec.var_theta, rng)
    return SparseVector(coeffs=theta, support=support, x=synthesize(theta, spec.basis))


def gen_correlated_pair(spec, rng):
    """Draw a common + innovation pair.

    In ``disjoint`` mode the three supports are drawn jointly without
    replacement, so ``k_j = k_c + k_ij`` exactly.  In ``uniform-random`` mode
    each support is drawn independently and coefficients add on overlaps.
    """
    n = spec.n
    if spec.overlap_mode == "disjoint":
        total = spec.k_c + spec.k_i1 + spec.k_i2
        if total > n:
            raise ValueError("disjoint supports infeasible: k_c + k_i1 + k_i2 > n")
        idx = rng.choice(n, size=total, replace=False)
        s_c = np.sort(idx[: spec.k_c])
        s_1 = np.sort(idx[spec.k_c : spec.k_c + spec.k_i1])
        s_2 = np.sort(idx[spec.k_c + spec.k_i1 :])
    else:
        s_c = np.sort(rng.choice(n, size=spec.k_c, replace=False))
        s_1 = np.sort(rng.choice(n, size=spec.k_i1, replace=False))
        s_2 = np.sort(rng.choice(n, size=spec.k_i2, replace=False))
    th_c = _place(n, s_c, spec.var_c, rng)
    th_1 = _place(n, s_1, spec.var_i1, rng)
    th_2 = _place(n, s_2, spec.var_i2, rng)
    x1 = synthesize(th_c + th_1, spec.basis)
    x2 = synthesize(th_c + th_2, spec.basis)
    return CorrelatedPair(th_c, th_1, th_2, x1, x2, s_c, s_1, s_2, spec.basis)
