"""Decoders: oracle least squares, BPDN, and joint reconstruction with SI.

All decoders operate on coefficient vectors through the normalized operator
``A = Phi @ Psi / sqrt(M)`` so that ``y = A @ theta``.  With this scaling the
known-support least-squares estimate ``A_S^+ y`` is the same as
``sqrt(M) * U_S^+ y`` with ``U = Phi @ Psi``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .model import PreconditionError
from .signal import dct_analyze, synthesize


class RankDeficientError(np.linalg.LinAlgError):
    pass


class SolverError(RuntimeError):
    """BPDN failed to reach its residual target."""

    def __init__(self, msg, residual_norm=None, epsilon=None):
        super().__init__(msg)
        self.residual_norm = residual_norm
        self.epsilon = epsilon


@dataclass(frozen=True)
class Reconstruction:
    x_hat: np.ndarray
    theta_hat: np.ndarray
    support_used: np.ndarray
    residual_norm: float
    n_iter: int = 0


def _analyze(x, basis):
    if basis == "dct":
        return dct_analyze(x)
    if basis == "identity":
        return np.array(x, dtype=float)
    raise ValueError(f"unknown basis {basis!r}")


def _finish(A, y, theta, basis, support=None, n_iter=0):
    if support is None:
        support = np.flatnonzero(theta)
    return Reconstruction(
        x_hat=synthesize(theta, basis),
        theta_hat=theta,
        support_used=np.asarray(support, dtype=np.int64),
        residual_norm=float(np.linalg.norm(A @ theta - y)),
        n_iter=n_iter,
    )


def pseudo_inverse_apply(u_sub, v, rcond=1e-10):
    """Least-squares solution ``argmin_z ||u_sub @ z - v||`` via thin QR."""
    u_sub = np.asarray(u_sub, dtype=float)
    v = np.asarray(v, dtype=float)
    m, k = u_sub.shape
    if k == 0:
        return np.zeros(0)
    if k > m:
        raise RankDeficientError(f"{k} columns exceed {m} rows")
    q, r = linalg.qr(u_sub, mode="economic")
    d = np.abs(np.diag(r))
    if d.min() <= rcond * d.max():
        raise RankDeficientError("sub-matrix is numerically rank deficient")
    return linalg.solve_triangular(r, q.T @ v)


def oracle_reconstruct(y_q, phi, basis="dct", support=None):
    """Least-squares estimate on a known support, zero elsewhere."""
    support = np.sort(np.asarray(support, dtype=np.int64))
    if support.size >= phi.m:
        raise PreconditionError(f"support size {support.size} must be below m={phi.m}")
    A = phi.effective(basis)
    theta = np.zeros(phi.n)
    theta[support] = pseudo_inverse_apply(A[:, support], y_q)
    return _finish(A, y_q, theta, basis, support)


def epsilon_from_step(m, step):
    """Residual radius covering uniform quantization noise: mean plus 3 std of ||e||^2."""
    return math.sqrt(m * step * step / 12.0 * (1.0 + 3.0 / math.sqrt(m)))


# ---------------------------------------------------------------------------
# BPDN
# ---------------------------------------------------------------------------


class _Segment:
    """Exact lasso solution path on a fixed support and sign pattern.

    On the segment ``theta_S(lam) = u - lam * v`` and the residual is
    ``r0 + lam * w`` with ``r0`` orthogonal to ``w``.
    """

    def __init__(self, A, y, support, signs, atol):
        self.support = support
        self.signs = signs
        a_s = A[:, support]
        c = linalg.cho_factor(a_s.T @ a_s, lower=True)
        self.u = linalg.cho_solve(c, a_s.T @ y)
        self.v = linalg.cho_solve(c, signs)
        r0 = y - a_s @ self.u
        w = a_s @ self.v
        self.a = float(r0 @ r0)
        self.b = float(w @ w)
        # y in the span of the support: off-support correlations are round-off
        self.spans = self.a <= 1e-20 * float(y @ y)
        off = np.ones(A.shape[1], dtype=bool)
        off[support] = False
        self.off = np.flatnonzero(off)
        self.c0 = A[:, off].T @ r0
        self.c1 = A[:, off].T @ w
        self.atol = atol

    @classmethod
    def from_iterate(cls, A, y, theta, atol):
        support = np.flatnonzero(theta)
        if support.size == 0 or support.size > A.shape[0]:
            return None
        try:
            return cls(A, y, support, np.sign(theta[support]), atol)
        except linalg.LinAlgError:
            return None

    def valid_at(self, lam):
        th = self.u - lam * self.v
        if np.any(np.sign(th) != self.signs):
            return False
        corr = np.abs(self.c0 + lam * self.c1)
        return bool(corr.max(initial=0.0) <= lam * (1 + 1e-9) + self.atol)

    def theta(self, lam, n):
        out = np.zeros(n)
        out[self.support] = self.u - lam * self.v
        return out

    def residual_norm(self, lam):
        return math.sqrt(self.a + lam * lam * self.b)

    def lambda_for(self, eps):
        if eps * eps < self.a or self.b <= 0:
            return None
        return math.sqrt((eps * eps - self.a) / self.b)

    def next_breakpoint(self, lam0, skip=None):
        """Largest ``lam < lam0`` where an atom leaves or joins the support.

        ``skip`` is the atom that changed at ``lam0``; round-off would
        otherwise let it flip straight back.  Returns ``(lam, drop_position,
        add_index, add_sign)``; ``lam = 0`` with no event when the segment
        extends to the least-squares end.
        """
        best, drop, add, sgn = 0.0, None, None, 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            hit = self.u / self.v
        ok = np.isfinite(hit) & (hit > 0) & (hit < lam0 * (1 - 1e-12)) & (self.support != skip)
        if ok.any():
            i = int(np.flatnonzero(ok)[np.argmax(hit[ok])])
            best, drop = float(hit[i]), i
        if self.off.size and not self.spans:
            with np.errstate(divide="ignore", invalid="ignore"):
                up = self.c0 / (1.0 - self.c1)
                dn = -self.c0 / (1.0 + self.c1)
            for cand, s in ((up, 1.0), (dn, -1.0)):
                ok = np.isfinite(cand) & (cand > 0) & (cand < lam0 * (1 - 1e-12)) & (self.off != skip)
                if ok.any():
                    i = int(np.flatnonzero(ok)[np.argmax(cand[ok])])
                    if cand[i] > best:
                        best, drop, add, sgn = float(cand[i]), None, int(self.off[i]), s
        return best, drop, add, sgn


def _follow_path(A, y, seg, lam0, epsilon, max_steps):
    """Homotopy continuation of the lasso path from a verified segment down
    to the residual level ``epsilon`` (``0`` reaches the basis-pursuit end).

    Returns the solution or ``None`` if the path becomes degenerate.
    """
    n = A.shape[1]
    lam = lam0
    changed = None
    for _ in range(max_steps):
        lam_next, drop, add, sgn = seg.next_breakpoint(lam, changed)
        if epsilon > 0 and seg.residual_norm(lam_next) <= epsilon:
            lp = seg.lambda_for(epsilon)
            return seg.theta(min(lp, lam) if lp is not None else lam_next, n)
        if drop is None and add is None:
            return seg.theta(0.0, n)
        support, signs = list(seg.support), list(seg.signs)
        if drop is not None:
            changed = support[drop]
            del support[drop], signs[drop]
        else:
            changed = add
            if len(support) >= A.shape[0]:
                return None
            support.append(add)
            signs.append(sgn)
        if not support:
            return None
        order = np.argsort(support)
        try:
            seg = _Segment(A, y, np.asarray(support)[order], np.asarray(signs)[order], seg.atol)
        except linalg.LinAlgError:
            return None
        lam = lam_next
    return None


def _lipschitz(A):
    return float(np.linalg.norm(A, 2) ** 2)


def bpdn_coefficients(A, y, epsilon, tol=1e-8, max_iter=10_000, max_outer=80, lipschitz=None):
    """Solve ``min ||theta||_1  s.t.  ||A theta - y||_2 <= epsilon``.

    The constrained problem is reached through its penalized form.  FISTA
    solves the lasso at a penalty ``lam`` chosen by a geometric bisection
    on the residual.  Once an iterate's support and signs pass the KKT
    check at a penalty whose residual exceeds ``epsilon``, the exact
    piecewise-linear lasso path is followed from there down to the point
    where the residual equals ``epsilon``.  ``epsilon == 0`` gives basis
    pursuit.

    Returns ``(theta, total_fista_iterations)``.
    """
    A = np.ascontiguousarray(A, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    m, n = A.shape
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    ynorm = float(np.linalg.norm(y))
    if ynorm <= epsilon:
        return np.zeros(n), 0
    AT = np.ascontiguousarray(A.T)
    lam_max = float(np.abs(AT @ y).max())
    if lam_max == 0.0:
        raise SolverError("measurements are orthogonal to every atom", ynorm, epsilon)
    step = 1.0 / (lipschitz if lipschitz is not None else _lipschitz(A))
    atol = 1e-10 * lam_max
    lo, hi = 0.0, lam_max
    lam = 0.5 * lam_max
    theta = np.zeros(n)
    total = 0
    last_res = ynorm
    for _ in range(max_outer):
        theta, it = _kernels.fista_lasso(A, AT, y, lam, theta, step, tol, max_iter)
        total += it
        seg = _Segment.from_iterate(A, y, theta, atol)
        if seg is not None and not seg.valid_at(lam):
            seg = None
        res = seg.residual_norm(lam) if seg is not None else float(np.linalg.norm(A @ theta - y))
        last_res = res
        if seg is not None and res > epsilon:
            out = _follow_path(A, y, seg, lam, epsilon, max_steps=4 * m + 4 * seg.support.size)
            if out is not None:
                if epsilon == 0.0:
                    # entries that reach zero exactly at the path's end
                    out[np.abs(out) <= 1e-12 * np.abs(out).max()] = 0.0
                return out, total
        if seg is None and it >= max_iter:
            raise SolverError(
                f"FISTA did not converge in {max_iter} iterations at lam={lam:.3e}", res, epsilon
            )
        if res > epsilon:
            hi = lam
        else:
            lo = lam
            if seg is None and res >= epsilon * (1 - 1e-6):
                return theta, total
        lam = math.sqrt(lo * hi) if lo > 0 else hi / 4.0
        if hi - lo <= 1e-12 * hi or lam < 1e-14 * lam_max:
            break
    raise SolverError("penalty search did not meet the residual bound", last_res, epsilon)


def bpdn_solve(y_q, phi, basis="dct", epsilon=0.0, **kw):
    A = phi.effective(basis)
    theta, it = bpdn_coefficients(A, y_q, epsilon, lipschitz=phi.lipschitz(basis), **kw)
    return _finish(A, y_q, theta, basis, n_iter=it)


# ---------------------------------------------------------------------------
# Joint reconstruction
# ---------------------------------------------------------------------------


def threshold_support(theta, tau=1e-2):
    """Indices with ``|theta_i| > tau * max|theta|``."""
    amax = np.abs(theta).max(initial=0.0)
    if amax == 0.0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.abs(theta) > tau * amax)


def ideal_jr(y_q1, y2, phi, basis, x_c, support_i1):
    """Genie joint decoder: known common signal and innovation support.

    The common component's measurements are removed from ``y_q1`` and the
    innovation is estimated by least squares on ``support_i1``.  ``y2`` is
    accepted for interface symmetry; the genie makes it redundant.
    """
    support_i1 = np.sort(np.asarray(support_i1, dtype=np.int64))
    if phi.m <= support_i1.size + 3:
        raise PreconditionError(
            f"need m > |support_i1| + 3 (m={phi.m}, |support_i1|={support_i1.size})"
        )
    A = phi.effective(basis)
    theta_c = _analyze(x_c, basis)
    resid = y_q1 - A @ theta_c
    theta = theta_c.copy()
    theta[support_i1] += pseudo_inverse_apply(A[:, support_i1], resid)
    support = np.union1d(np.flatnonzero(theta_c), support_i1)
    return _finish(A, y_q1, theta, basis, support)


def decode_side_information(y2, phi, basis="dct", si_epsilon=0.0, tau=1e-2):
    """BPDN-decode the SI, then refit by least squares on its thresholded support."""
    rec = bpdn_solve(y2, phi, basis, si_epsilon)
    A = phi.effective(basis)
    support = threshold_support(rec.theta_hat, tau)
    if 0 < support.size < phi.m:
        theta = np.zeros(phi.n)
        theta[support] = pseudo_inverse_apply(A[:, support], y2)
        return _finish(A, y2, theta, basis, support, rec.n_iter)
    return rec


def _jr_with_common_support(y_q1, phi, basis, epsilon, si_rec, common_support):
    A = phi.effective(basis)
    theta_c = np.zeros(phi.n)
    theta_c[common_support] = si_rec.theta_hat[common_support]
    resid = y_q1 - A @ theta_c
    inno = bpdn_solve(resid, phi, basis, epsilon)
    theta = theta_c + inno.theta_hat
    return _finish(A, y_q1, theta, basis, n_iter=inno.n_iter)


def bpdn_ideal_jr(y_q1, y2, phi, basis, support_c, epsilon, si_rec=None):
    """Joint BPDN decoder told the true common support."""
    if si_rec is None:
        si_rec = decode_side_information(y2, phi, basis)
    return _jr_with_common_support(
        y_q1, phi, basis, epsilon, si_rec, np.asarray(support_c, dtype=np.int64)
    )


def intersect_jr(y_q1, y2, phi, basis="dct", epsilon=0.0, tau=1e-2, si_rec=None, ir_rec=None):
    """Joint decoder estimating the common support as a support intersection.

    Both sources are BPDN-decoded, their thresholded supports intersected,
    the common coefficients taken from the SI estimate on the intersection,
    and the innovation BPDN-decoded from what remains of ``y_q1``.  An empty
    intersection falls back to the independent BPDN estimate.
    """
    if ir_rec is None:
        ir_rec = bpdn_solve(y_q1, phi, basis, epsilon)
    if si_rec is None:
        si_rec = decode_side_information(y2, phi, basis, tau=tau)
    common = np.intersect1d(
        threshold_support(ir_rec.theta_hat, tau), threshold_support(si_rec.theta_hat, tau)
    )
    if common.size == 0:
        return ir_rec
    return _jr_with_common_support(y_q1, phi, basis, epsilon, si_rec, common)
