"""Alternating proximal-gradient reconstruction with phase cycling.

One solve runs ``outer_iters`` rounds of a K-step magnitude update followed
by a K-step cycled phase update:

    r     = A*(y - A(M m . exp(i P p)))
    m  <- prox_{a_m g_m}( m + a_m Re(M*(exp(-i P p) . r)) )
    p  <- prox_{a_p g_p}( p + w + a_p Im(P*(M m . exp(-i P p) . r)) ) - w

with a wrap offset ``w`` drawn uniformly from the wrap set at every inner
phase step.  Step sizes follow the spectral rule: ``a_m`` is computed once
per solve from ``1 / (lmax(A*A) lmax(M*M))`` and ``a_p`` is refreshed every
outer iteration from ``1 / (lmax(A*A) lmax(P*P) max|M m|^2)``; both are
divided by a 1.01 safety factor to absorb power-iteration underestimation.

A solve is sequential and deterministic for a fixed seed.  Models and
regularizers are immutable, so independent solves may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import max_eigenvalue
from .models import (ForwardModel, MagnitudeVec, PhaseVec, as_components,
                     forward, objective, robust_objective)

__all__ = [
    "SolverConfig",
    "PhaseWrapSet",
    "ReconResult",
    "DivergenceError",
    "make_phase_wrap_set",
    "make_phase_wrap_set_from_init",
    "spectral_constants",
    "default_step_sizes",
    "magnitude_update",
    "phase_update_cycled",
    "init_zero_filled",
    "reconstruct",
    "two_stage_grid_search",
]

_SAFETY = 1.01


class DivergenceError(RuntimeError):
    """Raised when iterates blow up or turn non-finite."""


@dataclass(frozen=True)
class SolverConfig:
    """Iteration counts, wrap set size, seed and step-size policy.

    Attributes:
        outer_iters: Number of outer (alternation) rounds N.
        inner_iters: Proximal-gradient steps K per magnitude/phase update.
        seed: Seed controlling power iteration starts and wrap draws.
        wrap_count: Size of the default phase wrap set.
        step_safety: Extra multiplier on the spectral step sizes (1.0 keeps
            the standard rule; values > 1 are not descent-safe).
        record_history: Record objective / robust objective / residual norms.
        power_iters: Power iteration cap for the spectral constants.
        power_tol: Power iteration relative tolerance.
        divergence_factor: Abort when the data term exceeds this multiple of
            its initial value.
    """

    outer_iters: int = 100
    inner_iters: int = 10
    seed: int = 0
    wrap_count: int = 8
    step_safety: float = 1.0
    record_history: bool = False
    power_iters: int = 30
    power_tol: float = 1e-6
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.wrap_count < 1:
            raise ValueError("wrap_count must be >= 1")
        if self.step_safety <= 0:
            raise ValueError("step_safety must be positive")


@dataclass(frozen=True)
class PhaseWrapSet:
    """Set of phase wrap offsets; always contains the zero offset."""

    wraps: tuple

    def __post_init__(self):
        if len(self.wraps) < 1:
            raise ValueError("wrap set must contain at least one offset")
        has_zero = any(np.all(np.asarray(w) == 0) for w in self.wraps)
        if not has_zero:
            raise ValueError("wrap set must contain the zero offset")
        for w in self.wraps:
            if not np.all(np.isfinite(np.asarray(w))):
                raise ValueError("wrap offsets must be finite")

    def __len__(self):
        return len(self.wraps)


def make_phase_wrap_set(count: int) -> PhaseWrapSet:
    """Constant global offsets ``2 pi k / count`` for ``k = 0..count-1``.

    Each offset is added uniformly to every phase component.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    return PhaseWrapSet(tuple(2.0 * np.pi * k / count for k in range(count)))


def _principal(x):
    return np.angle(np.exp(1j * np.asarray(x)))


def make_phase_wrap_set_from_init(p0, count: int) -> PhaseWrapSet:
    """Wrap fields generated from the initial phase estimate.

    For each constant offset ``c_k = 2 pi k / count`` the offset field
    ``w_k = wrap(p0 + c_k) - (p0 + c_k)`` is an integer multiple of 2 pi at
    every pixel whose jump contours sit where the shifted principal value
    wraps.  Adding such a field to the phase leaves the data term unchanged
    while relocating the wrap discontinuities the regularizer sees, which is
    what spreads thresholding artifacts spatially.  ``k = 0`` contributes the
    zero offset.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    p0 = as_components(p0)
    offsets = [np.zeros(p0.shape)]
    for k in range(1, count):
        c = 2.0 * np.pi * k / count
        offsets.append(_principal(p0 + c) - (p0 + c))
    return PhaseWrapSet(tuple(offsets))


@dataclass(frozen=True)
class ReconResult:
    """Reconstruction output with optional per-step diagnostics.

    With history recording enabled, ``objective_history`` and
    ``residual_norm_history`` hold one entry per inner step (magnitude and
    phase steps interleaved in execution order, 2*N*K total) and
    ``robust_objective_history`` holds one entry per outer iteration plus the
    initial value.
    """

    m: MagnitudeVec
    p: PhaseVec
    objective_history: np.ndarray
    robust_objective_history: np.ndarray
    residual_norm_history: np.ndarray
    info: dict = field(default_factory=dict)


def spectral_constants(model: ForwardModel, seed=0, max_iters: int = 30,
                       tol: float = 1e-6):
    """Power-iteration estimates of lmax(A*A), lmax(M*M), lmax(P*P)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(3)
    est_a = max_eigenvalue(model.A, max_iters=max_iters, tol=tol, seed=seeds[0])
    est_m = max_eigenvalue(model.M, max_iters=max_iters, tol=tol, seed=seeds[1])
    est_p = max_eigenvalue(model.P, max_iters=max_iters, tol=tol, seed=seeds[2])
    return est_a, est_m, est_p


def _phase_step_size(lam_a, lam_p, m, model, step_safety):
    max_mm2 = float(np.max(np.abs(model.M.apply(as_components(m))) ** 2))
    if max_mm2 == 0.0:
        raise ValueError("zero magnitude; cannot set phase step")
    return step_safety / (_SAFETY * lam_a * lam_p * max_mm2)


def default_step_sizes(model: ForwardModel, m_current, spectra=None,
                       step_safety: float = 1.0, seed=0):
    """Spectral step sizes ``(alpha_m, alpha_p)`` for the current magnitude.

    ``alpha_m = 1 / (lmax(A*A) lmax(M*M))`` and
    ``alpha_p = 1 / (lmax(A*A) lmax(P*P) max|M m|^2)``, both divided by the
    1.01 safety factor.  Pass precomputed ``spectra`` (the
    :func:`spectral_constants` triple) to avoid re-running power iteration.
    """
    if spectra is None:
        spectra = spectral_constants(model, seed=seed)
    est_a, est_m, est_p = spectra
    alpha_m = step_safety / (_SAFETY * est_a.lambda_max * est_m.lambda_max)
    alpha_p = _phase_step_size(est_a.lambda_max, est_p.lambda_max,
                               m_current, model, step_safety)
    return alpha_m, alpha_p


def _prox(reg, x, alpha):
    return x.copy() if reg is None else reg.prox(x, alpha)


def magnitude_update(model: ForwardModel, m, p, y, g_m, alpha_m: float,
                     K: int, on_step=None):
    """K proximal-gradient steps on the magnitude with the phase fixed."""
    m = as_components(m).astype(np.float64, copy=True)
    p = as_components(p)
    y = np.asarray(y)
    phase = np.exp(1j * model.P.apply(p))
    for _ in range(K):
        z = model.M.apply(m) * phase
        r = model.A.adjoint_apply(y - model.A.apply(z))
        m = _prox(g_m, m + alpha_m * np.real(model.M.adjoint_apply(np.conj(phase) * r)),
                  alpha_m)
        if on_step is not None:
            on_step(m, float(np.linalg.norm(r)))
    return m


def phase_update_cycled(model: ForwardModel, m, p, y, g_p, alpha_p: float,
                        K: int, wraps: PhaseWrapSet, rng, on_step=None):
    """K cycled proximal-gradient steps on the phase with the magnitude fixed.

    A wrap offset is drawn uniformly at every inner step, added before the
    prox and removed after; with the singleton zero wrap set this reduces to
    the plain proximal-gradient phase update.
    """
    m = as_components(m)
    p = as_components(p).astype(np.float64, copy=True)
    y = np.asarray(y)
    offsets = wraps.wraps
    mm = model.M.apply(m)
    for _ in range(K):
        w = offsets[int(rng.integers(len(offsets)))]
        phase = np.exp(1j * model.P.apply(p))
        r = model.A.adjoint_apply(y - model.A.apply(mm * phase))
        grad_dir = np.imag(model.P.adjoint_apply(mm * np.conj(phase) * r))
        p = _prox(g_p, p + w + alpha_p * grad_dir, alpha_p) - w
        if on_step is not None:
            on_step(p, float(np.linalg.norm(r)))
    return p


def init_zero_filled(model: ForwardModel, y):
    """Zero-filled initialization appropriate for the model kind.

    partial Fourier: ``m0 = |A* y|``, ``p0 = angle(A* y)``.
    water-fat: ``(m_water, m_fat) = |M* A* y|``, water/fat phases from
    ``angle(M* A* y)``, zero field map.
    flow: magnitude from the encode-averaged adjoint image, background phase
    from the first velocity encode of ``angle(A* y)``, zero velocities.
    """
    y = np.asarray(y)
    if y.shape != model.y_shape:
        raise ValueError(f"y shape {y.shape} != model y_shape {model.y_shape}")
    ay = model.A.adjoint_apply(y)
    if model.kind == "partial_fourier":
        return np.abs(ay), np.angle(ay)
    if model.kind == "water_fat":
        may = model.M.adjoint_apply(ay)
        m0 = np.abs(may)
        p0 = np.zeros(model.p_shape)
        p0[:2] = np.angle(may)
        return m0, p0
    if model.kind == "flow":
        nenc = model.y_shape[0]
        m0 = np.abs(model.M.adjoint_apply(ay)) / nenc
        p0 = np.zeros(model.p_shape)
        p0[0] = np.angle(ay[0])
        return m0, p0
    raise ValueError(f"unknown model kind {model.kind!r}")


def reconstruct(model: ForwardModel, y, m0, p0, g_m, g_p,
                config: SolverConfig, wraps: PhaseWrapSet | None = None) -> ReconResult:
    """Run the full alternating solve.

    Args:
        model: Forward model triple.
        y: Acquired k-space data of ``model.y_shape``.
        m0, p0: Initial magnitude and phase (arrays or vec types).
        g_m, g_p: Regularizers or None.
        config: Iteration counts, seed, wrap count, history flag.
        wraps: Optional explicit wrap set; defaults to the constant-offset
            set of size ``config.wrap_count``.

    Returns:
        ReconResult; deterministic for fixed inputs and seed.

    Raises:
        DivergenceError: On non-finite iterates or a data term exceeding
            ``config.divergence_factor`` times its initial value.
    """
    y = np.asarray(y)
    m = as_components(m0).astype(np.float64, copy=True)
    p = as_components(p0).astype(np.float64, copy=True)
    if m.shape != model.m_shape or p.shape != model.p_shape:
        raise ValueError("initialization shapes do not match the model")
    if wraps is None:
        wraps = make_phase_wrap_set(config.wrap_count)

    seed_root = np.random.SeedSequence(config.seed)
    seed_power, seed_draws = seed_root.spawn(2)
    spectra = spectral_constants(model, seed=seed_power,
                                 max_iters=config.power_iters,
                                 tol=config.power_tol)
    est_a, est_m, est_p = spectra
    alpha_m = config.step_safety / (_SAFETY * est_a.lambda_max * est_m.lambda_max)
    rng = np.random.default_rng(seed_draws)

    record = config.record_history
    obj_hist = []
    robust_hist = []
    resid_hist = []

    def obj_cb(kind):
        if not record:
            return None
        if kind == "m":
            return lambda mk, rn: (obj_hist.append(objective(model, mk, p, y, g_m, g_p)),
                                   resid_hist.append(rn))
        return lambda pk, rn: (obj_hist.append(objective(model, m, pk, y, g_m, g_p)),
                               resid_hist.append(rn))

    f0 = _data_term_value(model, m, p, y)
    if record:
        robust_hist.append(robust_objective(model, m, p, y, g_m, g_p, wraps))

    for n in range(config.outer_iters):
        m = magnitude_update(model, m, p, y, g_m, alpha_m,
                             config.inner_iters, on_step=obj_cb("m"))
        alpha_p = _phase_step_size(est_a.lambda_max, est_p.lambda_max,
                                   m, model, config.step_safety)
        p = phase_update_cycled(model, m, p, y, g_p, alpha_p,
                                config.inner_iters, wraps, rng,
                                on_step=obj_cb("p"))

        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(p))):
            raise DivergenceError(
                f"non-finite iterate at outer iteration {n}; "
                f"check step sizes and regularization weights"
            )
        f_n = _data_term_value(model, m, p, y)
        if f_n > config.divergence_factor * max(f0, 1e-30):
            raise DivergenceError(
                f"data term grew from {f0:.3e} to {f_n:.3e} at outer "
                f"iteration {n}; solve aborted as divergent"
            )
        if record:
            robust_hist.append(robust_objective(model, m, p, y, g_m, g_p, wraps))

    return ReconResult(
        m=MagnitudeVec(m, model.m_labels),
        p=PhaseVec(p, model.p_labels),
        objective_history=np.asarray(obj_hist),
        robust_objective_history=np.asarray(robust_hist),
        residual_norm_history=np.asarray(resid_hist),
        info={
            "alpha_m": alpha_m,
            "lambda_max_A": est_a.lambda_max,
            "lambda_max_M": est_m.lambda_max,
            "lambda_max_P": est_p.lambda_max,
            "spectra_converged": (est_a.converged, est_m.converged,
                                  est_p.converged),
            "final_data_term": f_n,
            "wrap_count": len(wraps),
        },
    )


def _data_term_value(model, m, p, y):
    r = y - forward(model, m, p)
    return 0.5 * float(np.vdot(r, r).real)


def two_stage_grid_search(solve_fn, lam_m_grid, lam_p_grid, lam_m_fixed=None):
    """Two-stage regularization weight search against a scalar error metric.

    Stage 1 fixes the magnitude weight (``lam_m_fixed`` or the middle of the
    grid) and sweeps the phase weight; stage 2 fixes the best phase weight
    and sweeps the magnitude weight.  ``solve_fn(lam_m, lam_p)`` must return
    the error to minimize (e.g. mean squared error against the truth).

    Returns a dict with both stages' grids/errors and the selected pair.
    """
    lam_m_grid = [float(v) for v in lam_m_grid]
    lam_p_grid = [float(v) for v in lam_p_grid]
    if not lam_m_grid or not lam_p_grid:
        raise ValueError("grids must be nonempty")
    lam_m0 = float(lam_m_fixed) if lam_m_fixed is not None \
        else lam_m_grid[len(lam_m_grid) // 2]

    stage1 = [float(solve_fn(lam_m0, lp)) for lp in lam_p_grid]
    best_p = lam_p_grid[int(np.argmin(stage1))]
    stage2 = [float(solve_fn(lm, best_p)) for lm in lam_m_grid]
    best_m = lam_m_grid[int(np.argmin(stage2))]
    return {
        "stage1": {"lam_m_fixed": lam_m0, "lam_p_grid": lam_p_grid,
                   "errors": stage1},
        "stage2": {"lam_p_fixed": best_p, "lam_m_grid": lam_m_grid,
                   "errors": stage2},
        "best": {"lam_m": best_m, "lam_p": best_p,
                 "error": float(min(stage2))},
    }
