"""Gaussian measurement operator ``y = Phi @ x / sqrt(M)``."""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class SensingMatrix:
    entries: np.ndarray
    var_phi: float = 1.0
    seed: object = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def n(self):
        return self.entries.shape[1]

    def effective(self, basis="dct"):
        """Normalized operator ``Phi @ Psi / sqrt(M)`` acting on coefficients.

        Cached per basis; the matrix itself is never mutated.
        """
        a = self._cache.get(basis)
        if a is None:
            if basis == "dct":
                u = fft.dct(self.entries, type=2, norm="ortho", axis=1)
            elif basis == "identity":
                u = self.entries.copy()
            else:
                raise ValueError(f"unknown basis {basis!r}")
            a = np.ascontiguousarray(u / np.sqrt(self.m))
            a.flags.writeable = False
            self._cache[basis] = a
        return a

    def lipschitz(self, basis="dct"):
        """Squared spectral norm of :meth:`effective` (gradient Lipschitz constant)."""
        key = (basis, "lipschitz")
        if key not in self._cache:
            self._cache[key] = float(np.linalg.norm(self.effective(basis), 2) ** 2)
        return self._cache[key]


def gen_sensing_matrix(m, n, var_phi, rng, seed=None):
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got m={m}, n={n}")
    if var_phi < 0:
        raise ValueError("var_phi must be non-negative")
    entries = rng.normal(0.0, np.sqrt(var_phi), size=(m, n))
    entries.flags.writeable = False
    return SensingMatrix(entries=entries, var_phi=float(var_phi), seed=seed)


def measure(phi, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (phi.n,):
        raise ValueError(f"signal length {x.shape} does not match sensing matrix width {phi.n}")
    return phi.entries @ x / np.sqrt(phi.m)
