"""Composable linear operators over complex image and k-space arrays.

Operators are immutable after construction and their ``apply`` /
``adjoint_apply`` methods are pure, so instances can be shared freely across
threads.  Every adjoint is written analytically from the constructor's
definition, never obtained by numeric transposition.

The Fourier sampling operator uses a centered, orthonormal DFT
(``fftshift . fft . ifftshift`` with 1/sqrt(N) scaling), so a fully sampled
transform is exactly unitary and element-wise masking can only reduce the
spectral norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

__all__ = [
    "LinOp",
    "SpectralEstimate",
    "make_fft_sampling_op",
    "make_sens_op",
    "compose",
    "block_diag",
    "vstack",
    "hstack",
    "matrix_op",
    "scale_op",
    "identity_op",
    "reshape_op",
    "max_eigenvalue",
]


class LinOp:
    """Linear map between nd-array spaces with an analytic adjoint.

    Attributes:
        in_shape: Shape of valid inputs to :meth:`apply`.
        out_shape: Shape of outputs of :meth:`apply` (inputs to the adjoint).
    """

    def __init__(self, in_shape, out_shape):
        self.in_shape = tuple(int(n) for n in in_shape)
        self.out_shape = tuple(int(n) for n in out_shape)

    def apply(self, x):
        raise NotImplementedError

    def adjoint_apply(self, y):
        raise NotImplementedError

    def _check_in(self, x):
        x = np.asarray(x)
        if x.shape != self.in_shape:
            raise ValueError(
                f"{type(self).__name__}: input shape {x.shape} does not match "
                f"operator input shape {self.in_shape}"
            )
        return x

    def _check_out(self, y):
        y = np.asarray(y)
        if y.shape != self.out_shape:
            raise ValueError(
                f"{type(self).__name__}: adjoint input shape {y.shape} does not "
                f"match operator output shape {self.out_shape}"
            )
        return y

    def __repr__(self):
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape})"


class _Identity(LinOp):
    def __init__(self, shape):
        super().__init__(shape, shape)

    def apply(self, x):
        return self._check_in(x).copy()

    def adjoint_apply(self, y):
        return self._check_out(y).copy()


class _Scale(LinOp):
    def __init__(self, c, shape):
        super().__init__(shape, shape)
        self.c = complex(c) if np.iscomplexobj(np.asarray(c)) else float(c)

    def apply(self, x):
        return self.c * self._check_in(x)

    def adjoint_apply(self, y):
        return np.conj(self.c) * self._check_out(y)


class _Reshape(LinOp):
    def __init__(self, in_shape, out_shape):
        if int(np.prod(in_shape)) != int(np.prod(out_shape)):
            raise ValueError(
                f"reshape_op: element counts differ ({in_shape} vs {out_shape})"
            )
        super().__init__(in_shape, out_shape)

    def apply(self, x):
        return self._check_in(x).reshape(self.out_shape).copy()

    def adjoint_apply(self, y):
        return self._check_out(y).reshape(self.in_shape).copy()


class _FftSampling(LinOp):
    """Centered orthonormal DFT followed by element-wise masking."""

    def __init__(self, image_shape, sample_mask):
        sample_mask = np.asarray(sample_mask)
        if sample_mask.shape != tuple(image_shape):
            raise ValueError(
                f"make_fft_sampling_op: mask shape {sample_mask.shape} does not "
                f"match image shape {tuple(image_shape)}"
            )
        super().__init__(image_shape, image_shape)
        self.mask = sample_mask.astype(np.float64)

    def apply(self, x):
        x = self._check_in(x)
        k = np.fft.fftshift(_fft.fftn(np.fft.ifftshift(x), norm="ortho"))
        return self.mask * k

    def adjoint_apply(self, y):
        y = self._check_out(y)
        return np.fft.fftshift(_fft.ifftn(np.fft.ifftshift(self.mask * y), norm="ortho"))


class _Sens(LinOp):
    """Coil sensitivity weighting: x -> stack of (map_c * x) over coils."""

    def __init__(self, maps):
        maps = np.asarray(maps, dtype=np.complex128)
        if maps.ndim < 2 or maps.shape[0] < 1:
            raise ValueError("make_sens_op: need at least one coil map")
        super().__init__(maps.shape[1:], maps.shape)
        self.maps = maps

    def apply(self, x):
        x = self._check_in(x)
        return self.maps * x[None]

    def adjoint_apply(self, y):
        y = self._check_out(y)
        return np.sum(np.conj(self.maps) * y, axis=0)


class _Compose(LinOp):
    def __init__(self, ops):
        ops = list(ops)
        if not ops:
            raise ValueError("compose: empty operator list")
        for left, right in zip(ops[:-1], ops[1:]):
            if left.in_shape != right.out_shape:
                raise ValueError(
                    f"compose: shape mismatch between {right!r} and {left!r}"
                )
        super().__init__(ops[-1].in_shape, ops[0].out_shape)
        self.ops = tuple(ops)

    def apply(self, x):
        x = self._check_in(x)
        for op in reversed(self.ops):
            x = op.apply(x)
        return x

    def adjoint_apply(self, y):
        y = self._check_out(y)
        for op in self.ops:
            y = op.adjoint_apply(y)
        return y


def _common_shape(shapes, what):
    shapes = list(shapes)
    if any(s != shapes[0] for s in shapes):
        raise ValueError(f"{what}: blocks must share a common shape, got {shapes}")
    return shapes[0]


class _BlockDiag(LinOp):
    def __init__(self, ops):
        ops = list(ops)
        if not ops:
            raise ValueError("block_diag: empty operator list")
        ishape = _common_shape([op.in_shape for op in ops], "block_diag (inputs)")
        oshape = _common_shape([op.out_shape for op in ops], "block_diag (outputs)")
        super().__init__((len(ops),) + ishape, (len(ops),) + oshape)
        self.ops = tuple(ops)

    def apply(self, x):
        x = self._check_in(x)
        return np.stack([op.apply(x[i]) for i, op in enumerate(self.ops)])

    def adjoint_apply(self, y):
        y = self._check_out(y)
        return np.stack([op.adjoint_apply(y[i]) for i, op in enumerate(self.ops)])


class _VStack(LinOp):
    """Stack operator outputs along a new leading axis; adjoint sums adjoints."""

    def __init__(self, ops):
        ops = list(ops)
        if not ops:
            raise ValueError("vstack: empty operator list")
        ishape = _common_shape([op.in_shape for op in ops], "vstack (inputs)")
        oshape = _common_shape([op.out_shape for op in ops], "vstack (outputs)")
        super().__init__(ishape, (len(ops),) + oshape)
        self.ops = tuple(ops)

    def apply(self, x):
        x = self._check_in(x)
        return np.stack([op.apply(x) for op in self.ops])

    def adjoint_apply(self, y):
        y = self._check_out(y)
        acc = self.ops[0].adjoint_apply(y[0])
        for i, op in enumerate(self.ops[1:], start=1):
            acc = acc + op.adjoint_apply(y[i])
        return acc


class _HStack(LinOp):
    """Adjoint of vstack: sum of per-block applications of a stacked input."""

    def __init__(self, ops):
        ops = list(ops)
        if not ops:
            raise ValueError("hstack: empty operator list")
        ishape = _common_shape([op.in_shape for op in ops], "hstack (inputs)")
        oshape = _common_shape([op.out_shape for op in ops], "hstack (outputs)")
        super().__init__((len(ops),) + ishape, oshape)
        self.ops = tuple(ops)

    def apply(self, x):
        x = self._check_in(x)
        acc = self.ops[0].apply(x[0])
        for i, op in enumerate(self.ops[1:], start=1):
            acc = acc + op.apply(x[i])
        return acc

    def adjoint_apply(self, y):
        y = self._check_out(y)
        return np.stack([op.adjoint_apply(y) for op in self.ops])


class _MatrixMix(LinOp):
    """Small mixing matrix applied across the leading (component) axis.

    Maps ``(c, *cell)`` to ``(r, *cell)`` via an ``r x c`` matrix, i.e. the
    Kronecker product of the matrix with the identity on the cell grid.
    """

    def __init__(self, mat, cell_shape):
        mat = np.asarray(mat)
        if mat.ndim != 2:
            raise ValueError("matrix_op: mixing matrix must be 2-D")
        super().__init__((mat.shape[1],) + tuple(cell_shape),
                         (mat.shape[0],) + tuple(cell_shape))
        self.mat = mat

    def apply(self, x):
        x = self._check_in(x)
        return np.tensordot(self.mat, x, axes=1)

    def adjoint_apply(self, y):
        y = self._check_out(y)
        return np.tensordot(np.conj(self.mat).T, y, axes=1)


def make_fft_sampling_op(image_shape, sample_mask) -> LinOp:
    """Centered orthonormal Fourier transform followed by k-space masking.

    Args:
        image_shape: Shape of the image grid (also the k-space grid).
        sample_mask: Binary array of ``image_shape`` marking acquired samples,
            indexed in centered k-space coordinates (DC at ``n // 2``).

    Returns:
        LinOp mapping image to masked k-space.  With an all-ones mask the
        operator is unitary.
    """
    return _FftSampling(image_shape, sample_mask)


def make_sens_op(maps) -> LinOp:
    """Coil sensitivity operator from a ``(coils, *image)`` map stack.

    The forward map weights the image by each coil map; the adjoint is the
    conjugate-weighted coil sum.
    """
    return _Sens(maps)


def compose(ops) -> LinOp:
    """Operator product ``compose([A, B])(x) == A(B(x))`` (rightmost first)."""
    return _Compose(ops)


def block_diag(ops) -> LinOp:
    """Block-diagonal operator over a stacked leading axis."""
    return _BlockDiag(ops)


def vstack(ops) -> LinOp:
    """Vertical stack: shared input, outputs stacked on a new leading axis."""
    return _VStack(ops)


def hstack(ops) -> LinOp:
    """Horizontal stack: stacked input, summed outputs (adjoint of vstack)."""
    return _HStack(ops)


def matrix_op(mat, cell_shape) -> LinOp:
    """Mixing matrix acting across components: ``mat (x) identity``."""
    return _MatrixMix(mat, cell_shape)


def scale_op(c, shape) -> LinOp:
    """Multiplication by the scalar ``c``; adjoint multiplies by ``conj(c)``."""
    return _Scale(c, shape)


def identity_op(shape) -> LinOp:
    return _Identity(shape)


def reshape_op(in_shape, out_shape) -> LinOp:
    """Lossless reshape between shapes of equal element count."""
    return _Reshape(in_shape, out_shape)


@dataclass(frozen=True)
class SpectralEstimate:
    """Power-iteration estimate of a maximum eigenvalue.

    Attributes:
        lambda_max: Estimated maximum eigenvalue of the normal operator G*G.
        iterations_used: Number of power iterations performed.
        residual: Relative change of the estimate at the final iteration.
        converged: Whether ``residual`` fell below the requested tolerance.
    """

    lambda_max: float
    iterations_used: int
    residual: float
    converged: bool


def max_eigenvalue(op: LinOp, max_iters: int = 30, tol: float = 1e-6,
                   seed=0) -> SpectralEstimate:
    """Estimate the maximum eigenvalue of ``G* G`` for ``G = op``.

    Power iteration on the normal operator, started from a seeded complex
    Gaussian vector, so results are deterministic for a given seed.  If the
    relative change of the estimate does not fall below ``tol`` within
    ``max_iters`` iterations, the last estimate is returned with the
    ``converged`` flag cleared.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_shape) + 1j * rng.standard_normal(op.in_shape)
    v /= np.linalg.norm(v)

    lam = 0.0
    lam_old = np.inf
    residual = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        w = op.adjoint_apply(op.apply(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            # Input landed in (or the operator has) a trivial null space.
            return SpectralEstimate(0.0, iters, 0.0, True)
        residual = abs(lam - lam_old) / lam
        v = w / lam
        lam_old = lam
        if residual <= tol:
            return SpectralEstimate(lam, iters, residual, True)
    return SpectralEstimate(lam, iters, residual, False)
