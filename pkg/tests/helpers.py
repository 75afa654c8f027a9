"""Shared oracles and assertions for the test suite.

Dense materialization and brute-force oracles live here so the checks stay
independent of the code paths they verify.
"""

import numpy as np


def random_pair(op, rng):
    x = rng.standard_normal(op.in_shape) + 1j * rng.standard_normal(op.in_shape)
    y = rng.standard_normal(op.out_shape) + 1j * rng.standard_normal(op.out_shape)
    return x, y


def adjoint_gap(op, x, y):
    """|<Ax, y> - <x, A*y>| relative to ||x|| ||y||."""
    lhs = np.vdot(y, op.apply(x))
    rhs = np.vdot(op.adjoint_apply(y), x)
    return abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y))


def assert_adjoint(op, rng, pairs=20, tol=1e-10):
    for _ in range(pairs):
        x, y = random_pair(op, rng)
        gap = adjoint_gap(op, x, y)
        assert gap <= tol, f"adjoint dot-test gap {gap:.3e} > {tol:.0e} on {op!r}"


def to_dense(op):
    """Materialize an operator column by column into a dense matrix."""
    n_in = int(np.prod(op.in_shape))
    n_out = int(np.prod(op.out_shape))
    mat = np.zeros((n_out, n_in), dtype=np.complex128)
    basis = np.zeros(op.in_shape, dtype=np.complex128)
    for j in range(n_in):
        basis.reshape(-1)[j] = 1.0
        mat[:, j] = op.apply(basis).reshape(-1)
        basis.reshape(-1)[j] = 0.0
    return mat


def dense_lambda_max(op):
    """Largest eigenvalue of G*G via dense singular values."""
    s = np.linalg.svd(to_dense(op), compute_uv=False)
    return float(s[0] ** 2)


def data_term(model, m, p, y):
    from phaserecon.models import forward
    r = np.asarray(y) - forward(model, m, p)
    return 0.5 * float(np.vdot(r, r).real)


def numeric_grad(f, x, coords, eps=1e-6):
    """Central finite differences of a scalar function at selected coords."""
    out = {}
    for idx in coords:
        e = np.zeros_like(x)
        e[idx] = eps
        out[idx] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def discrete_gradient(phi):
    """Centered periodic gradient of a scalar 3-D field."""
    return np.stack([
        (np.roll(phi, -1, ax) - np.roll(phi, 1, ax)) / 2.0 for ax in range(3)
    ])


def discrete_curl(a):
    """Centered periodic curl of a 3-component 3-D field."""
    def d(f, ax):
        return (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / 2.0
    return np.stack([
        d(a[2], 1) - d(a[1], 2),
        d(a[0], 2) - d(a[2], 0),
        d(a[1], 0) - d(a[0], 1),
    ])
