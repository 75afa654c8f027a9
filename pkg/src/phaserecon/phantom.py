"""Synthetic ground truth, coil maps, sampling masks, noise and metrics.

Everything here is a pure function of its parameters and seed, so simulated
experiments are exactly reproducible.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .models import forward

__all__ = [
    "Phantom",
    "SamplingMask",
    "make_phantom",
    "make_sens_maps",
    "poisson_disk_mask",
    "partial_fourier_mask",
    "full_mask",
    "combine_masks",
    "simulate_acquisition",
    "psnr",
    "psnr_rmse",
]


@dataclass(frozen=True)
class Phantom:
    """Ground-truth magnitude/phase components plus bookkeeping masks."""

    kind: str
    magnitude: np.ndarray
    phase: np.ndarray
    m_labels: tuple
    p_labels: tuple
    support: np.ndarray
    phase_range: float
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-space sampling pattern with its achieved acceleration.

    ``radius_scale`` records the accepted Poisson-disk base radius (0 for
    non-Poisson kinds) so audits can recover the local rejection radii.
    """

    mask: np.ndarray
    acceleration: float
    calib_size: int
    kind: str
    radius_scale: float = 0.0


def _grid(shape):
    """Normalized coordinates in [-1, 1) per axis, ij-indexed."""
    axes = [2.0 * (np.arange(n) - n / 2) / n for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def _ellipse(coords, center, semiaxes):
    q = sum(((c - c0) / a) ** 2 for c, c0, a in zip(coords, center, semiaxes))
    return q <= 1.0


def _smooth_field(shape, rng, lo, hi):
    """Low-order polynomial plus gentle sinusoid, affinely mapped to [lo, hi]."""
    coords = _grid(shape)
    f = np.zeros(shape)
    for c in coords:
        f += rng.uniform(-1, 1) * c + rng.uniform(-0.6, 0.6) * c * c
    for a, b in zip(coords, coords[1:] + coords[:1]):
        f += rng.uniform(-0.5, 0.5) * a * b
    f += rng.uniform(0.3, 0.8) * np.sin(
        np.pi * (rng.uniform(0.5, 1.5) * coords[0]
                 + rng.uniform(0.5, 1.5) * coords[-1]) + rng.uniform(0, 2 * np.pi))
    span = f.max() - f.min()
    if span == 0 or hi == lo:
        return np.full(shape, 0.5 * (hi + lo))
    return (f - f.min()) * ((hi - lo) / span) + lo


def _blobby_magnitude(shape, rng, support):
    mag = np.where(support, 0.8, 0.0)
    coords = _grid(shape)
    for _ in range(5):
        center = [rng.uniform(-0.45, 0.45) for _ in shape]
        axes = [rng.uniform(0.08, 0.3) for _ in shape]
        mag += np.where(_ellipse(coords, center, axes) & support,
                        rng.uniform(-0.35, 0.45), 0.0)
    return np.clip(mag, 0.0, 1.2)


def make_phantom(kind: str, shape, phase_range: float, seed=0,
                 field_range_hz: float = 60.0) -> Phantom:
    """Build a synthetic ground-truth object.

    Args:
        kind: ``"pf-brain-like"`` (single image, smooth phase),
            ``"waterfat-2compartment"`` (water/fat compartments with a smooth
            field map spanning ``+-field_range_hz``), or ``"flow-tube"``
            (3-D vessel with an analytic divergence-free velocity field).
        shape: Grid shape, at least 16 per axis (3-D for flow-tube).
        phase_range: Total range (max - min) of the smooth phase truth in
            radians; ranges above 2 pi force wraps in any principal-value
            initialization.
        seed: Reproducibility seed.
        field_range_hz: Field-map half range in Hz (water-fat kind only).
    """
    shape = tuple(int(n) for n in shape)
    if min(shape) < 16:
        raise ValueError(f"phantom grid must be >= 16 per axis, got {shape}")
    # Mix the kind into the stream deterministically (str hash is salted).
    kind_tag = zlib.crc32(kind.encode("utf-8"))
    if isinstance(seed, np.random.SeedSequence):
        entropy = tuple(int(s) for s in seed.generate_state(2))
    else:
        entropy = (int(seed),)
    rng = np.random.default_rng(np.random.SeedSequence((kind_tag,) + entropy))
    coords = _grid(shape)

    if kind == "pf-brain-like":
        support = _ellipse(coords, [0.0] * len(shape), [0.88] * len(shape))
        mag = _blobby_magnitude(shape, rng, support)
        ph = _smooth_field(shape, rng, -phase_range / 2, phase_range / 2)
        return Phantom(kind, mag[None], ph[None], ("magnitude",), ("phase",),
                       support, phase_range)

    if kind == "waterfat-2compartment":
        outer = _ellipse(coords, [0.0] * len(shape), [0.85] * len(shape))
        inner = _ellipse(coords, [0.0] * len(shape), [0.58] * len(shape))
        water = np.where(inner, 1.0, 0.0) * _blobby_magnitude(shape, rng, inner)
        fat = np.where(outer & ~inner, 0.9, 0.0)
        p_water = _smooth_field(shape, rng, -phase_range / 2, phase_range / 2)
        p_fat = _smooth_field(shape, rng, -phase_range / 2, phase_range / 2)
        field = _smooth_field(shape, rng, -2 * np.pi * field_range_hz,
                              2 * np.pi * field_range_hz)
        return Phantom(kind, np.stack([water, fat]),
                       np.stack([p_water, p_fat, field]),
                       ("water", "fat"), ("water", "fat", "field"),
                       outer, phase_range,
                       extras={"field_range_hz": field_range_hz})

    if kind == "flow-tube":
        if len(shape) != 3:
            raise ValueError("flow-tube phantom requires a 3-D shape")
        x, y, z = coords
        vessel = (x ** 2 + y ** 2) <= 0.35 ** 2
        support = _ellipse(coords, [0, 0, 0], [0.9, 0.9, 1.0])
        mag = np.where(support, 0.4, 0.0) + np.where(vessel, 0.6, 0.0)
        # Rigid swirl + plug flow: linear/constant inside the tube, so the
        # centered-difference divergence vanishes wherever the stencil stays
        # inside the vessel.
        omega, v_axial = 1.6, 0.6
        vx = np.where(vessel, -omega * y, 0.0)
        vy = np.where(vessel, omega * x, 0.0)
        vz = np.where(vessel, v_axial, 0.0)
        p_bg = _smooth_field(shape, rng, -phase_range / 2, phase_range / 2)
        return Phantom(kind, mag[None], np.stack([p_bg, vx, vy, vz]),
                       ("magnitude",), ("background", "vx", "vy", "vz"),
                       support, phase_range,
                       extras={"vessel": vessel, "omega": omega,
                               "v_axial": v_axial})

    raise ValueError(f"unknown phantom kind {kind!r}")


def make_sens_maps(shape, coils: int, seed=0):
    """Smooth low-order complex coil maps, sum-of-squares normalized to 1."""
    if coils < 1:
        raise ValueError("need at least one coil")
    shape = tuple(int(n) for n in shape)
    if coils == 1:
        return np.ones((1,) + shape, dtype=np.complex128)

    rng = np.random.default_rng(seed)
    coords = _grid(shape)
    maps = np.empty((coils,) + shape, dtype=np.complex128)
    for c in range(coils):
        # Center each coil's response on a point around the FOV so the
        # sum of squares never vanishes.
        theta = 2 * np.pi * c / coils
        cx = 0.75 * np.cos(theta)
        cy = 0.75 * np.sin(theta)
        centered = [coords[0] - cx, coords[1] - cy] + [co for co in coords[2:]]
        profile = 1.0
        for cc in centered:
            profile = profile - 0.35 * cc * cc
        lin = sum(rng.uniform(-0.3, 0.3) * cc for cc in centered)
        phase = sum(rng.uniform(-1.0, 1.0) * cc for cc in coords) \
            + rng.uniform(0, 2 * np.pi)
        maps[c] = (profile + lin) * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos


def full_mask(shape) -> SamplingMask:
    return SamplingMask(np.ones(shape, dtype=bool), 1.0, 0, "full")


def partial_fourier_mask(shape, fraction: float, axis: int = 0) -> SamplingMask:
    """Keep the contiguous low-index ``fraction`` of k-space along ``axis``.

    With centered k-space indexing (DC at ``n // 2``) this keeps rows
    ``0 .. floor(fraction * n) - 1``, i.e. the low-index half plus the center
    for any fraction above one half.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    shape = tuple(int(n) for n in shape)
    n = shape[axis]
    keep = int(np.floor(fraction * n))
    mask = np.zeros(shape, dtype=bool)
    sl = [slice(None)] * len(shape)
    sl[axis] = slice(0, keep)
    mask[tuple(sl)] = True
    return SamplingMask(mask, float(mask.size / mask.sum()), 0, "partial-fourier")


def _radius_field(shape, r_center, slope):
    coords = _grid(shape)
    rho = np.sqrt(sum(c * c for c in coords)) / np.sqrt(len(shape))
    return r_center * (1.0 + slope * np.minimum(rho, 1.0))


def _calib_block(shape, calib_size):
    block = np.zeros(shape, dtype=bool)
    if calib_size <= 0:
        return block
    sl = []
    for n in shape:
        lo = n // 2 - calib_size // 2
        sl.append(slice(lo, lo + calib_size))
    block[tuple(sl)] = True
    return block


def _dart_throw(shape, radii, calib, order):
    """Variable-density dart throwing with a symmetric min-distance rule.

    A candidate c is accepted when every accepted point q satisfies
    ``|c - q| >= (r(c) + r(q)) / 2``; calibration samples are pre-accepted.
    """
    nd = len(shape)
    # Any conflicting pair is within (r_c + r_q)/2 <= r_max, so with cells of
    # side r_max a one-cell neighborhood suffices.
    cell = float(max(radii.max(), 1.0))
    buckets = {}
    accepted = np.zeros(shape, dtype=bool)
    radii_flat = radii.ravel()
    offsets = [off for off in np.ndindex(*([3] * nd))]

    def try_accept(idx, flat, forced):
        cid = tuple(int(idx[d] / cell) for d in range(nd))
        if not forced:
            r_c = radii_flat[flat]
            for off in offsets:
                pts = buckets.get(
                    tuple(cid[d] + off[d] - 1 for d in range(nd)))
                if not pts:
                    continue
                for q, r_q in pts:
                    d2 = 0.0
                    for d in range(nd):
                        dd = idx[d] - q[d]
                        d2 += dd * dd
                    lim = 0.5 * (r_c + r_q)
                    if d2 < lim * lim:
                        return
        buckets.setdefault(cid, []).append((idx, radii_flat[flat]))
        accepted[idx] = True

    calib_flat = np.flatnonzero(calib.ravel())
    for flat, idx in zip(calib_flat,
                         zip(*np.unravel_index(calib_flat, shape))):
        try_accept(idx, flat, forced=True)
    all_idx = np.unravel_index(order, shape)
    for flat, idx in zip(order, zip(*all_idx)):
        if not accepted[idx]:
            try_accept(idx, int(flat), forced=False)
    return accepted


def poisson_disk_mask(shape, accel: float, calib_size: int, seed=0,
                      slope: float = 3.0, tol: float = 0.08,
                      max_rounds: int = 30) -> SamplingMask:
    """Variable-density Poisson-disk sampling pattern.

    The rejection radius grows linearly with distance from the k-space
    center, ``r(k) = r0 (1 + slope * |k| / k_max)``, and ``r0`` is bisected
    until the achieved acceleration is within ``tol`` of the request.  The
    calibration block is always fully sampled.

    Raises:
        ValueError: If the calibration block alone exceeds the sample budget
            or the target acceleration cannot be bracketed.
    """
    if accel < 1:
        raise ValueError("acceleration must be >= 1")
    shape = tuple(int(n) for n in shape)
    total = int(np.prod(shape))
    budget = total / accel
    calib = _calib_block(shape, calib_size)
    if calib.sum() > budget:
        raise ValueError(
            f"infeasible acceleration {accel}: calibration block holds "
            f"{int(calib.sum())} samples but the budget is {budget:.0f}"
        )
    if accel == 1:
        return SamplingMask(np.ones(shape, dtype=bool), 1.0, calib_size,
                            "poisson-disk")

    rng = np.random.default_rng(seed)
    order = rng.permutation(total)

    lo, hi = 0.25, 1.0
    # Grow hi until the pattern is at least as sparse as requested.
    for _ in range(max_rounds):
        mask = _dart_throw(shape, _radius_field(shape, hi, slope), calib, order)
        if total / mask.sum() >= accel:
            break
        lo, hi = hi, hi * 1.6
    else:
        raise ValueError(f"could not reach acceleration {accel}")

    best, best_scale = mask, hi
    for _ in range(max_rounds):
        achieved = total / best.sum()
        if abs(achieved - accel) <= tol * accel:
            break
        mid = 0.5 * (lo + hi)
        mask = _dart_throw(shape, _radius_field(shape, mid, slope), calib, order)
        if total / mask.sum() >= accel:
            hi = mid
        else:
            lo = mid
        if abs(total / mask.sum() - accel) < abs(achieved - accel):
            best, best_scale = mask, mid
    achieved = float(total / best.sum())
    if abs(achieved - accel) > 0.10 * accel:
        raise ValueError(
            f"achieved acceleration {achieved:.2f} is more than 10% away "
            f"from the requested {accel}"
        )
    return SamplingMask(best, achieved, calib_size, "poisson-disk",
                        radius_scale=float(best_scale))


def combine_masks(*masks) -> SamplingMask:
    """Element-wise AND of sampling patterns."""
    if not masks:
        raise ValueError("need at least one mask")
    combined = masks[0].mask.copy()
    for sm in masks[1:]:
        if sm.mask.shape != combined.shape:
            raise ValueError("mask shapes differ")
        combined &= sm.mask
    kept = combined.sum()
    if kept == 0:
        raise ValueError("combined mask is empty")
    return SamplingMask(combined, float(combined.size / kept),
                        min(m.calib_size for m in masks), "combined")


def simulate_acquisition(model, phantom: Phantom, noise_sigma: float, seed=0):
    """Forward-simulate k-space with complex white Gaussian noise.

    Real and imaginary noise channels each have standard deviation
    ``noise_sigma``.  Deterministic for a fixed seed; ``noise_sigma = 0``
    returns the exact forward map.
    """
    if noise_sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    y = forward(model, phantom.magnitude, phantom.phase)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + noise_sigma * (rng.standard_normal(y.shape)
                               + 1j * rng.standard_normal(y.shape))
    return y


def psnr(ref, rec) -> float:
    """Peak signal-to-noise ratio ``20 log10(max(ref) / ||ref - rec||_2)``.

    The denominator is the error 2-norm (no 1/sqrt(N) normalization); see
    :func:`psnr_rmse` for the RMSE-normalized variant.  An exact match
    returns ``inf``.
    """
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    if not np.any(ref):
        raise ValueError("reference image is identically zero")
    err = float(np.linalg.norm(ref - rec))
    if err == 0.0:
        return float("inf")
    return float(20.0 * np.log10(ref.max() / err))


def psnr_rmse(ref, rec) -> float:
    """PSNR with the error normalized by sqrt(N) (RMSE convention)."""
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    if not np.any(ref):
        raise ValueError("reference image is identically zero")
    err = float(np.linalg.norm(ref - rec)) / np.sqrt(ref.size)
    if err == 0.0:
        return float("inf")
    return float(20.0 * np.log10(ref.max() / err))
