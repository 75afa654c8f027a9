"""Forward models ``y = A(M m . exp(i P p))`` for phase imaging.

Magnitude and phase unknowns are real component-stacked arrays
``(ncomp, *grid)``.  ``M`` and ``P`` have real coefficients and map real
vectors to real vectors; ``A`` maps the complex per-echo/per-encode image
stack to multi-coil k-space.

Three builders are provided:

* partial Fourier: ``M = P = I``, ``A = mask . F . S`` on a single image;
* water-fat: components ``m = (water, fat)``, ``p = (water, fat, field)``
  with per-echo blocks and a (possibly multi-peak) fat phasor;
* flow: a single magnitude replicated over velocity encodes, with the
  encoding matrix mixing ``p = (background, vx, vy, vz)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linops
from .linops import LinOp

__all__ = [
    "ForwardModel",
    "MagnitudeVec",
    "PhaseVec",
    "WaterFatSpec",
    "FlowEncodingSpec",
    "build_partial_fourier",
    "build_waterfat",
    "build_flow",
    "forward",
    "objective",
    "robust_objective",
    "as_components",
]

# Typical single-peak fat chemical shift at 3 T (-3.4 ppm); the builder takes
# the value from its spec, this constant is only a documented convenience.
TYPICAL_FAT_SHIFT_HZ_3T = -428.0


def as_components(x):
    """Return the underlying ``(ncomp, *grid)`` array of a vec or array."""
    return np.asarray(getattr(x, "data", x))


@dataclass(frozen=True)
class MagnitudeVec:
    """Real component-stacked magnitude images with labels."""

    data: np.ndarray
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.float64))
        if len(self.labels) != self.data.shape[0]:
            raise ValueError("one label per magnitude component required")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("magnitude entries must be finite")


@dataclass(frozen=True)
class PhaseVec:
    """Real component-stacked phase images (radians) with labels."""

    data: np.ndarray
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.float64))
        if len(self.labels) != self.data.shape[0]:
            raise ValueError("one label per phase component required")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("phase entries must be finite")


@dataclass(frozen=True)
class WaterFatSpec:
    """Multi-echo chemical shift acquisition parameters.

    Attributes:
        echo_times_s: Strictly increasing echo times in seconds.
        peaks: Fat spectrum as ``((amplitude, freq_offset_hz), ...)``; the
            relative amplitudes must sum to 1.  A single peak reduces the fat
            phasor to ``exp(i t_e 2 pi df)``.
    """

    echo_times_s: tuple
    peaks: tuple

    def __post_init__(self):
        te = tuple(float(t) for t in self.echo_times_s)
        object.__setattr__(self, "echo_times_s", te)
        peaks = tuple((float(a), float(df)) for a, df in self.peaks)
        object.__setattr__(self, "peaks", peaks)
        if len(te) < 2:
            raise ValueError("need at least 2 echo times")
        if any(t1 >= t2 for t1, t2 in zip(te[:-1], te[1:])):
            raise ValueError("echo times must be strictly increasing")
        if len(peaks) < 1:
            raise ValueError("need at least one fat peak")
        amp_sum = sum(a for a, _ in peaks)
        if abs(amp_sum - 1.0) > 1e-8:
            raise ValueError(f"fat peak amplitudes must sum to 1, got {amp_sum}")

    def fat_phasor(self, t_e):
        """Net fat phasor ``sum_j a_j exp(i t_e 2 pi df_j)`` at echo time t_e."""
        return complex(sum(a * np.exp(1j * t_e * 2.0 * np.pi * df)
                           for a, df in self.peaks))


_BALANCED_FOUR_POINT = np.array([
    [+1, -1, -1, -1],
    [+1, +1, +1, -1],
    [+1, +1, -1, +1],
    [+1, -1, +1, +1],
], dtype=np.float64)


@dataclass(frozen=True)
class FlowEncodingSpec:
    """Velocity encoding matrix (V x 4, full column rank) plus venc scaling.

    ``venc_rad_per_unit`` scales the three velocity columns; the background
    column is left as tabulated.  Unit scaling by default.
    """

    matrix: np.ndarray
    venc_rad_per_unit: float = 1.0

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != 4:
            raise ValueError(f"encoding matrix must be V x 4, got {mat.shape}")
        if np.linalg.matrix_rank(mat) < 4:
            raise ValueError("encoding matrix must have full column rank 4")
        object.__setattr__(self, "matrix", mat)

    @staticmethod
    def balanced_four_point(venc_rad_per_unit: float = 1.0) -> "FlowEncodingSpec":
        return FlowEncodingSpec(_BALANCED_FOUR_POINT.copy(), venc_rad_per_unit)

    def phase_matrix(self):
        """Encoding matrix with venc scaling folded into the velocity columns."""
        mat = self.matrix.copy()
        mat[:, 1:] *= self.venc_rad_per_unit
        return mat


@dataclass(frozen=True)
class ForwardModel:
    """Operator triple ``(A, M, P)`` plus shape and labeling metadata."""

    kind: str
    A: LinOp
    M: LinOp
    P: LinOp
    m_shape: tuple
    p_shape: tuple
    y_shape: tuple
    m_labels: tuple
    p_labels: tuple
    meta: dict = field(default_factory=dict)


def _coil_fft(img_shape, mask, ncoils) -> LinOp:
    """Per-coil centered masked FFT on a (coils, *img) stack."""
    fft_op = linops.make_fft_sampling_op(img_shape, mask)
    return linops.block_diag([fft_op] * ncoils)


def _as_maps(sens_maps):
    maps = np.asarray(sens_maps, dtype=np.complex128)
    if maps.ndim < 2:
        raise ValueError("sensitivity maps must be a (coils, *image) stack")
    return maps


def build_partial_fourier(mask, sens_maps) -> ForwardModel:
    """Single-image model: ``M = P = I`` and ``A = mask . F . S``."""
    maps = _as_maps(sens_maps)
    img = maps.shape[1:]
    mask = np.asarray(mask)
    if mask.shape != img:
        raise ValueError(
            f"mask shape {mask.shape} does not match image shape {img}"
        )
    ncoils = maps.shape[0]
    A = linops.compose([
        _coil_fft(img, mask, ncoils),
        linops.make_sens_op(maps),
        linops.reshape_op((1,) + img, img),
    ])
    ident = linops.identity_op((1,) + img)
    return ForwardModel(
        kind="partial_fourier",
        A=A, M=ident, P=ident,
        m_shape=(1,) + img, p_shape=(1,) + img, y_shape=(ncoils,) + img,
        m_labels=("magnitude",), p_labels=("phase",),
        meta={"mask": mask},
    )


def build_waterfat(spec: WaterFatSpec, masks, sens_maps) -> ForwardModel:
    """Multi-echo water-fat model with shared field map.

    ``m = (water, fat)``; ``p = (water, fat, field)`` with the field entering
    each echo's phase as ``t_e * p_field``.  The per-echo complex images are
    ``water + fat_phasor(t_e) * fat``, Fourier-sampled with that echo's mask.
    """
    maps = _as_maps(sens_maps)
    img = maps.shape[1:]
    ncoils = maps.shape[0]
    E = len(spec.echo_times_s)
    masks = [np.asarray(m) for m in masks]
    if len(masks) != E:
        raise ValueError(f"expected {E} echo masks, got {len(masks)}")
    for i, m in enumerate(masks):
        if m.shape != img:
            raise ValueError(f"echo mask {i} shape {m.shape} != image shape {img}")

    S = linops.make_sens_op(maps)
    blocks = []
    p_rows = []
    for t_e, mask in zip(spec.echo_times_s, masks):
        combine = linops.hstack([
            linops.identity_op(img),
            linops.scale_op(spec.fat_phasor(t_e), img),
        ])
        blocks.append(linops.compose([_coil_fft(img, mask, ncoils), S, combine]))
        p_rows.append(linops.matrix_op(
            np.array([[1.0, 0.0, t_e], [0.0, 1.0, t_e]]), img))

    A = linops.block_diag(blocks)
    M = linops.vstack([linops.identity_op((2,) + img)] * E)
    P = linops.vstack(p_rows)
    return ForwardModel(
        kind="water_fat",
        A=A, M=M, P=P,
        m_shape=(2,) + img, p_shape=(3,) + img,
        y_shape=(E, ncoils) + img,
        m_labels=("water", "fat"), p_labels=("water", "fat", "field"),
        meta={"spec": spec, "masks": tuple(masks)},
    )


def build_flow(spec: FlowEncodingSpec, masks, sens_maps) -> ForwardModel:
    """Velocity-encoded flow model with a shared magnitude image.

    ``m`` is one image replicated over encodes; ``p = (bg, vx, vy, vz)`` is
    mixed into per-encode phases by the encoding matrix.
    """
    maps = _as_maps(sens_maps)
    img = maps.shape[1:]
    ncoils = maps.shape[0]
    pmat = spec.phase_matrix()
    V = pmat.shape[0]
    masks = [np.asarray(m) for m in masks]
    if len(masks) != V:
        raise ValueError(f"expected {V} encode masks, got {len(masks)}")
    for i, m in enumerate(masks):
        if m.shape != img:
            raise ValueError(f"encode mask {i} shape {m.shape} != image shape {img}")

    S = linops.make_sens_op(maps)
    A = linops.block_diag(
        [linops.compose([_coil_fft(img, m, ncoils), S]) for m in masks])
    M = linops.matrix_op(np.ones((V, 1)), img)
    P = linops.matrix_op(pmat, img)
    return ForwardModel(
        kind="flow",
        A=A, M=M, P=P,
        m_shape=(1,) + img, p_shape=(4,) + img,
        y_shape=(V, ncoils) + img,
        m_labels=("magnitude",), p_labels=("background", "vx", "vy", "vz"),
        meta={"spec": spec, "masks": tuple(masks)},
    )


def forward(model: ForwardModel, m, p):
    """Noise-free forward map ``A(M m . exp(i P p))``."""
    m = as_components(m)
    p = as_components(p)
    if m.shape != model.m_shape:
        raise ValueError(f"m shape {m.shape} != model m_shape {model.m_shape}")
    if p.shape != model.p_shape:
        raise ValueError(f"p shape {p.shape} != model p_shape {model.p_shape}")
    z = model.M.apply(m) * np.exp(1j * model.P.apply(p))
    return model.A.apply(z)


def _data_term(model, m, p, y):
    r = np.asarray(y) - forward(model, m, p)
    return 0.5 * float(np.vdot(r, r).real)


def objective(model: ForwardModel, m, p, y, g_m=None, g_p=None) -> float:
    """Regularized least squares value ``f(m, p) + g_m(m) + g_p(p)``."""
    total = _data_term(model, m, p, y)
    if g_m is not None:
        total += g_m.value(as_components(m))
    if g_p is not None:
        total += g_p.value(as_components(p))
    return total


def robust_objective(model: ForwardModel, m, p, y, g_m, g_p, wraps) -> float:
    """Objective with the phase penalty averaged over the wrap set."""
    offsets = list(getattr(wraps, "wraps", wraps))
    if not offsets:
        raise ValueError("wrap set must be nonempty")
    total = _data_term(model, m, p, y)
    if g_m is not None:
        total += g_m.value(as_components(m))
    if g_p is not None:
        p = as_components(p)
        total += sum(g_p.value(p + w) for w in offsets) / len(offsets)
    return total
