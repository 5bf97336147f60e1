"""Closed-form rate-distortion theory for single-source and distributed CS.

Every function here is pure.  Rates are in bits per measurement sample
(bpms); distortions are per-sample mean squared errors.  Asymptotic rates
(sparsity, overmeasuring, overlaps) are plugged in as finite ratios.
"""

import math
from dataclasses import dataclass

import numpy as np

#: Entropy-constrained uniform scalar quantizer loss factor (about 1.53 dB).
EC_FACTOR = math.pi * math.e / 6.0

FLAVORS = ("info", "ec")
BASES = ("dct", "identity")


class UnboundedGainError(ValueError):
    """A rate gain is infinite for the requested parameters."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SparseSpec:
    n: int
    k: int
    var_theta: float = 1.0
    basis: str = "dct"

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError(f"need 0 < k < n, got k={self.k}, n={self.n}")
        if not (self.var_theta > 0 and math.isfinite(self.var_theta)):
            raise ValueError("var_theta must be positive and finite")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")


@dataclass(frozen=True)
class PairSpec:
    n: int
    k_c: int
    k_i1: int
    k_i2: int
    var_c: float = 1.0
    var_i1: float = 1.0
    var_i2: float = 1.0
    overlap_mode: str = "disjoint"
    basis: str = "dct"

    def __post_init__(self):
        if min(self.k_c, self.k_i1, self.k_i2) < 0:
            raise ValueError("sparsities must be non-negative")
        if self.k_c + max(self.k_i1, self.k_i2) > self.n:
            raise ValueError("k_c + max(k_i1, k_i2) must not exceed n")
        for name in ("var_c", "var_i1", "var_i2"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.overlap_mode not in ("disjoint", "uniform-random"):
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.overlap_mode == "disjoint" and self.k_c + self.k_i1 + self.k_i2 > self.n:
            raise ValueError("disjoint supports need k_c + k_i1 + k_i2 <= n")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")

    @property
    def k1(self):
        """Global sparsity of source 1 under disjoint supports."""
        return self.k_c + self.k_i1

    @property
    def k2(self):
        return self.k_c + self.k_i2


@dataclass(frozen=True)
class SystemRates:
    gamma: float
    mu: float
    omega_c: float
    omega_i: float

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"sparsity rate must lie in (0, 1), got {self.gamma}")
        if not self.mu > 1:
            raise ValueError(f"overmeasuring rate must exceed 1, got {self.mu}")
        tol = 1e-12
        s = self.omega_c + self.omega_i
        if (
            min(self.omega_c, self.omega_i) < 0
            or max(self.omega_c, self.omega_i) > 1 + tol
            or not 1 - tol <= s <= 2 + tol
        ):
            raise ValueError(
                "overlaps must satisfy max(w_c, w_i) <= 1 <= w_c + w_i <= 2, "
                f"got w_c={self.omega_c}, w_i={self.omega_i}"
            )


@dataclass(frozen=True)
class MeasurementStats:
    var_y1: float
    var_y2: float
    rho12: float

    def __post_init__(self):
        if self.var_y1 <= 0 or self.var_y2 <= 0:
            raise ValueError("measurement variances must be positive")
        if not 0 <= self.rho12 <= 1:
            raise ValueError("rho12 must lie in [0, 1]")


@dataclass(frozen=True)
class RDPoint:
    rate: float
    distortion: float
    scenario: str
    flavor: str = "ec"

    def __post_init__(self):
        # NaN passes: an all-failed point is reported, not rejected
        if self.rate < 0 or self.distortion < 0:
            raise ValueError("rate and distortion must be non-negative")
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}")


def system_rates(k, n, m, k_c, k_i):
    """Finite-dimension proxies for (gamma, mu, omega_c, omega_i)."""
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    if m <= 0:
        raise ValueError("m must be positive")
    if m <= k:
        raise ValueError(f"overmeasuring rate m/k must exceed 1 (m={m}, k={k})")
    return SystemRates(gamma=k / n, mu=m / k, omega_c=k_c / k, omega_i=k_i / k)


def pair_rates(spec, m):
    """System rates of both sources of a disjoint-support pair."""
    r1 = system_rates(spec.k1, spec.n, m, spec.k_c, spec.k_i1)
    r2 = system_rates(spec.k2, spec.n, m, spec.k_c, spec.k_i2)
    return r1, r2


def measurement_variance(rates, var_phi, var_c, var_i=0.0):
    if min(var_phi, var_c, var_i) < 0:
        raise ValueError("variances must be non-negative")
    return var_phi / rates.mu * (rates.omega_c * var_c + rates.omega_i * var_i)


def correlation_coefficient(rates1, rates2, var_c, var_i1, var_i2):
    """Correlation of paired measurements sharing a common component.

    With no common component (``omega_c == 0`` on either side) the formula
    divides by zero; the limit value 0 is returned.
    """
    if rates1.omega_c == 0 or rates2.omega_c == 0:
        return 0.0
    if var_c <= 0:
        raise ValueError("var_c must be positive when a common component exists")
    f1 = 1.0 + rates1.omega_i / rates1.omega_c * var_i1 / var_c
    f2 = 1.0 + rates2.omega_i / rates2.omega_c * var_i2 / var_c
    return (f1 * f2) ** -0.5


def measurement_stats(spec, m, var_phi=1.0):
    r1, r2 = pair_rates(spec, m)
    return MeasurementStats(
        var_y1=measurement_variance(r1, var_phi, spec.var_c, spec.var_i1),
        var_y2=measurement_variance(r2, var_phi, spec.var_c, spec.var_i2),
        rho12=correlation_coefficient(r1, r2, spec.var_c, spec.var_i1, spec.var_i2),
    )


def rate_gain_star(rho12):
    """Rate saved by coding measurements conditionally on the SI measurements."""
    if not 0 <= rho12 <= 1:
        raise ValueError("rho12 must lie in [0, 1]")
    if rho12 >= 1:
        raise UnboundedGainError("rho12 = 1: side information determines the source")
    return 0.5 * math.log2(1.0 / (1.0 - rho12 * rho12))


def rate_gain_jr(rates):
    """Extra rate saved by joint reconstruction with a known common part."""
    mu, wi = rates.mu, rates.omega_i
    if not mu > 1:
        raise ValueError("overmeasuring rate must exceed 1")
    if wi <= 0:
        raise UnboundedGainError("omega_i = 0: joint reconstruction is exact")
    if wi > 1:
        raise ValueError("omega_i must not exceed 1")
    return 0.5 * math.log2((mu - wi) / (wi * (mu - 1.0)))


def _q(rate, flavor):
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}, got {flavor!r}")
    q = np.exp2(-2.0 * np.asarray(rate, dtype=float))
    if flavor == "ec":
        q = q * EC_FACTOR
    return q if q.ndim else float(q)


def rd_gaussian(var, rate, flavor="info"):
    if var < 0:
        raise ValueError("variance must be non-negative")
    if np.any(np.asarray(rate) < 0):
        raise ValueError("rate must be non-negative")
    return var * _q(rate, flavor)


def rd_conditional(var, rho, rate, flavor="info"):
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    return rd_gaussian(var * (1.0 - rho * rho), rate, flavor)


def oracle_distortion_finite(k, n, m, var_e, var_phi=1.0):
    """Exact mean per-sample MSE of the known-support least-squares decoder.

    Holds for any quantization-noise covariance with per-sample variance
    ``var_e``; requires ``m > k + 3`` for the inverse-Wishart mean to exist.
    """
    if m <= k + 3:
        raise PreconditionError(
            f"need m > k + 3 for the generalized inverse-Wishart mean to exist (m={m}, k={k})"
        )
    if var_e < 0 or var_phi <= 0:
        raise ValueError("need var_e >= 0 and var_phi > 0")
    return (k / n) * (m / (m - k - 1.0)) * (var_e / var_phi)


def oracle_distortion_asymptotic(rates, var_e, var_phi=1.0):
    """Large-system limit of :func:`oracle_distortion_finite`."""
    return rates.gamma * rates.mu / (rates.mu - 1.0) * var_e / var_phi


def rd_reconstruction_theory(scenario, rates, stats, var_c, var_i, rate, flavor="ec", var_phi=1.0):
    """Oracle reconstruction RD function of source 1.

    ``scenario`` is one of ``ir`` (no side information), ``ir-cond`` (side
    information used for rate only) or ``jr`` (joint reconstruction with a
    known common component).
    """
    g, mu = rates.gamma, rates.mu
    wc, wi = rates.omega_c, rates.omega_i
    if not mu > 1:
        raise ValueError("overmeasuring rate must exceed 1")
    energy = wc * var_c + wi * var_i
    if scenario == "ir":
        return g * energy / (mu - 1.0) * _q(rate, flavor)
    r_star = rate_gain_star(stats.rho12)
    shifted = np.asarray(rate, dtype=float) + r_star
    if scenario == "ir-cond":
        return g * energy / (mu - 1.0) * _q(shifted, flavor)
    if scenario == "jr":
        if not 0 < wi <= 1:
            if wi == 0:
                raise UnboundedGainError("omega_i = 0: joint reconstruction is exact")
            raise ValueError("omega_i must lie in (0, 1]")
        return wi * g * energy / (mu - wi) * _q(shifted, flavor)
    raise ValueError(f"unknown scenario {scenario!r}")


def rd_measurement_theory(scenario, stats, rate, flavor="ec"):
    """Measurement RD of source 1 without (``meas``) or with (``meas-cond``) SI."""
    if scenario == "meas":
        return rd_gaussian(stats.var_y1, rate, flavor)
    if scenario == "meas-cond":
        return rd_conditional(stats.var_y1, stats.rho12, rate, flavor)
    raise ValueError(f"unknown scenario {scenario!r}")


def pinv_wishart_mean_scale(k, m, var_phi=1.0):
    """Scalar ``c`` with ``E[(U U^T)^+] = c I_m`` for ``U`` an m x k matrix of N(0, var_phi).

    Generalized inverse-Wishart mean; requires ``m > k + 3``.  The trace of the
    expectation is ``m * c = k / ((m - k - 1) var_phi)``.
    """
    if m <= k + 3:
        raise PreconditionError(f"need m > k + 3 (m={m}, k={k})")
    return k / (m * (m - k - 1.0) * var_phi)
