"""Dense SVD by one-sided Jacobi, energy-thresholded truncation, nuclear norm.

Everything here works on 2-D float64 arrays and returns fresh arrays; no
function mutates its input.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, ValidationError

JACOBI_TOL = 1e-14
MAX_SWEEPS = 60
# singular values at or below RANK_RTOL * sigma_max count as zero
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = u @ diag(sigma) @ vt`` with ``sigma`` non-increasing."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def shape(self):
        return self.u.shape[0], self.vt.shape[1]

    def truncate(self, k):
        return SvdResult(self.u[:, :k].copy(), self.sigma[:k].copy(), self.vt[:k].copy())

    def reconstruct(self):
        return (self.u * self.sigma) @ self.vt


def as_matrix(m):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"matrix must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix contains NaN or Inf")
    return a


def energy_ratio(e):
    """Validate an energy ratio; it must lie strictly inside (0, 1)."""
    try:
        e = float(e)
    except (TypeError, ValueError):
        raise ValidationError(f"energy ratio must be a number, got {e!r}") from None
    if not 0.0 < e < 1.0:
        raise ValidationError(f"energy ratio must lie in (0, 1), got {e}")
    return e


def _complete_basis(u, missing):
    """Fill columns ``missing`` of ``u`` with unit vectors orthogonal to the rest."""
    rows = u.shape[0]
    filled = [j for j in range(u.shape[1]) if j not in set(missing)]
    for j in missing:
        basis = u[:, filled]
        for k in range(rows):
            cand = np.zeros(rows)
            cand[k] = 1.0
            for _ in range(2):
                cand -= basis @ (basis.T @ cand)
            nrm = np.linalg.norm(cand)
            if nrm > 0.5:
                u[:, j] = cand / nrm
                filled.append(j)
                break


def svd(m):
    """Thin SVD of a dense matrix via cyclic one-sided Jacobi rotations.

    The matrix is oriented so Jacobi acts on the shorter dimension. Columns
    of ``u`` are sign-normalized so their largest-magnitude entry is
    non-negative, which makes the factors reproducible bit for bit.

    Raises
    ------
    ValidationError
        Non-finite or non-2-D input.
    ConvergenceError
        No convergence within ``MAX_SWEEPS`` sweeps; ``residual`` holds the
        largest relative column inner product left.
    """
    a = as_matrix(m)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    p = a.shape[1]

    w = np.array(a.T, order="C")  # always a copy; the kernel works in place
    q = np.eye(p)
    sweeps, off = kernels.jacobi_rotate(w, q, JACOBI_TOL, MAX_SWEEPS)
    if sweeps > MAX_SWEEPS:
        raise ConvergenceError(
            f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps "
            f"(residual {off:.3e})", off)

    sigma = np.sqrt(np.einsum("ij,ij->i", w, w))
    order = np.argsort(-sigma, kind="stable")
    sigma, w, q = sigma[order], w[order], q[order]

    u = np.zeros((a.shape[0], p))
    nz = sigma > 0.0
    u[:, nz] = w[nz].T / sigma[nz]
    missing = np.flatnonzero(~nz).tolist()
    if missing:
        _complete_basis(u, missing)
    vt = q

    if transposed:
        u, vt = vt.T.copy(), u.T.copy()

    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(p)] < 0.0
    u[:, flip] *= -1.0
    vt[flip] *= -1.0
    return SvdResult(u, sigma, vt)


def truncation_rank(sigma, e):
    """Smallest ``k`` whose discarded tail energy is at most ``e`` of the total.

    ``sum(sigma[k:]**2) <= e * sum(sigma**2)``; an all-zero spectrum gives 0.
    """
    e = energy_ratio(e)
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 1:
        raise ValidationError("sigma must be a vector")
    if np.any(s < 0.0) or not np.all(np.isfinite(s)):
        raise ValidationError("sigma must be finite and non-negative")
    if np.any(np.diff(s) > 0.0):
        raise ValidationError("sigma must be sorted non-increasing")
    if s.size == 0:
        return 0
    # tail[k] = sum(s[k:]**2), summed from the small end
    tail = np.append(np.cumsum((s * s)[::-1])[::-1], 0.0)
    total = tail[0]
    if total == 0.0:
        return 0
    return int(np.flatnonzero(tail <= e * total)[0])


def tsvd(m, e):
    """Energy-thresholded truncated SVD; returns ``(SvdResult, k)``."""
    full = svd(m)
    k = truncation_rank(full.sigma, e)
    return full.truncate(k), k


def numerical_rank(sigma):
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > RANK_RTOL * sigma[0]))


def nuclear_norm(m):
    return float(np.sum(svd(m).sigma))


def nuclear_norm_and_subgradient(m):
    """Nuclear norm together with ``U_r @ V_r^T`` from one shared SVD."""
    s = svd(m)
    r = numerical_rank(s.sigma)
    g = s.u[:, :r] @ s.vt[:r]
    return float(np.sum(s.sigma)), g


def nuclear_subgradient(m):
    """Sub-gradient ``U_r @ V_r^T`` of the nuclear norm, ``r`` = numerical rank.

    The zero matrix maps to the zero matrix.
    """
    return nuclear_norm_and_subgradient(m)[1]
