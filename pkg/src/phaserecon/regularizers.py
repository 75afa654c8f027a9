"""Penalty functions and proximal operators for magnitude and phase images.

A :class:`Regularizer` bundles a penalty value with its exact proximal
operator.  Inputs are component-stacked arrays ``(ncomp, *grid)``; the
wavelet penalties transform the grid axes of each component independently.

The divergence-free constraint on velocity fields is enforced by projection
(the proximal operator of the subspace indicator).  The projection is
computed in the Fourier domain with central-difference wavenumbers
``sin(2*pi*f)``, so the *discrete* centered-difference divergence of the
output is exactly zero; modes annihilated by the centered difference (DC and
Nyquist) pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft as _fft

from .wavelets import WaveletSpec, dwt, idwt

__all__ = [
    "Regularizer",
    "soft_threshold",
    "make_l1_wavelet_reg",
    "make_l2_reg",
    "divfree_project",
    "divergence",
    "make_divfree_reg",
]


@dataclass(frozen=True)
class Regularizer:
    """Penalty ``value(x)`` with proximal map ``prox(x, alpha)``.

    ``prox(x, alpha)`` solves ``argmin_z 0.5*||z - x||^2 + alpha*value(z)``
    exactly; with ``lam * alpha == 0`` it is the identity.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    lam: float


def soft_threshold(x, t):
    """Entrywise soft thresholding with threshold ``t >= 0``.

    Real entries shrink toward zero; complex entries keep their phase while
    the magnitude is thresholded.
    """
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x)
    if t == 0:
        return x.copy()
    mag = np.abs(x)
    scale = np.maximum(mag - t, 0.0)
    out = np.zeros_like(x)
    nz = mag > 0
    out[nz] = x[nz] / mag[nz] * scale[nz]
    return out


def make_l1_wavelet_reg(lam, spec: WaveletSpec) -> Regularizer:
    """l1 penalty on the orthonormal wavelet coefficients of each component.

    Since the transform is orthonormal, the prox is exact:
    ``idwt(soft_threshold(dwt(x), lam*alpha))``.
    """
    if lam < 0:
        raise ValueError("regularization weight must be nonnegative")

    def _grid_axes(x):
        return tuple(range(1, x.ndim))

    def value(x):
        x = np.asarray(x)
        if lam == 0:
            return 0.0
        return lam * float(np.sum(np.abs(dwt(x, spec, axes=_grid_axes(x)))))

    def prox(x, alpha):
        x = np.asarray(x)
        t = lam * alpha
        if t == 0:
            return x.copy()
        axes = _grid_axes(x)
        return idwt(soft_threshold(dwt(x, spec, axes=axes), t), spec, axes=axes)

    return Regularizer(value=value, prox=prox, lam=float(lam))


def make_l2_reg(lam) -> Regularizer:
    """Squared l2 penalty ``lam * ||x||^2 / 2`` with scaling prox."""
    if lam < 0:
        raise ValueError("regularization weight must be nonnegative")

    def value(x):
        x = np.asarray(x)
        return 0.5 * lam * float(np.vdot(x, x).real)

    def prox(x, alpha):
        return np.asarray(x) / (1.0 + lam * alpha)

    return Regularizer(value=value, prox=prox, lam=float(lam))


def _wavenumbers(shape):
    """Central-difference wavenumbers sin(2*pi*f) per axis, broadcastable."""
    ks = []
    nd = len(shape)
    for ax, n in enumerate(shape):
        k = np.sin(2.0 * np.pi * np.fft.fftfreq(n))
        sl = [None] * nd
        sl[ax] = slice(None)
        ks.append(k[tuple(sl)])
    return ks


def divfree_project(v):
    """Project a 3-component velocity field onto divergence-free fields.

    Args:
        v: Array ``(3, nx, ny, nz)`` of real velocity components on a
            periodic grid with at least 2 samples per axis.

    Returns:
        The solenoidal component: in Fourier space
        ``vhat - k (k . vhat) / |k|^2`` with central-difference wavenumbers.
        The projection is linear, idempotent and self-adjoint, and its output
        has exactly zero centered-difference divergence.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 4 or v.shape[0] != 3:
        raise ValueError(f"expected (3, nx, ny, nz) velocity field, got {v.shape}")
    grid = v.shape[1:]
    if min(grid) < 2:
        raise ValueError(f"need at least 2 samples along every axis, got {grid}")

    ks = _wavenumbers(grid)
    vhat = _fft.fftn(v, axes=(1, 2, 3))
    k2 = sum(k * k for k in ks)
    kdotv = sum(k * vhat[i] for i, k in enumerate(ks))
    with np.errstate(invalid="ignore", divide="ignore"):
        coeff = np.where(k2 > 0, kdotv / np.where(k2 > 0, k2, 1.0), 0.0)
    out = np.stack([vhat[i] - ks[i] * coeff for i in range(3)])
    return _fft.ifftn(out, axes=(1, 2, 3)).real


def divergence(v):
    """Centered-difference divergence of a periodic (3, nx, ny, nz) field."""
    v = np.asarray(v)
    div = np.zeros(v.shape[1:], dtype=np.float64)
    for ax in range(3):
        div += (np.roll(v[ax], -1, axis=ax) - np.roll(v[ax], 1, axis=ax)) / 2.0
    return div


def make_divfree_reg(lambda_smooth_bg, spec: WaveletSpec,
                     div_tol: float = 1e-6) -> Regularizer:
    """Flow-phase regularizer for ``p = (p_bg, p_x, p_y, p_z)``.

    The background component gets the l1 wavelet prox (smoothness); the three
    velocity components are projected onto the divergence-free subspace.  The
    penalty value is the background wavelet l1 plus the subspace indicator
    (0 on fields whose relative divergence is below ``div_tol``, inf
    otherwise).
    """
    bg_reg = make_l1_wavelet_reg(lambda_smooth_bg, spec)

    def _check(p):
        p = np.asarray(p)
        if p.ndim != 4 or p.shape[0] != 4:
            raise ValueError(
                f"expected 4 phase components (background + 3 velocities), "
                f"got shape {p.shape}"
            )
        return p

    def value(p):
        p = _check(p)
        vel = p[1:]
        vnorm = np.linalg.norm(vel)
        if vnorm > 0 and np.linalg.norm(divergence(vel)) > div_tol * vnorm:
            return np.inf
        return bg_reg.value(p[:1])

    def prox(p, alpha):
        p = _check(p)
        out = np.empty_like(p, dtype=np.float64)
        out[:1] = bg_reg.prox(p[:1], alpha)
        out[1:] = divfree_project(p[1:])
        return out

    return Regularizer(value=value, prox=prox, lam=float(lambda_smooth_bg))
