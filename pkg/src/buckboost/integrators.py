"""Fixed-step integration of piecewise affine systems.

Two routes are provided: classical RK4, and the closed-form solution of
``dx/dt = a x + b`` used as an oracle.  The stepping loops are compiled with
numba because a single scenario can take tens of millions of steps.
"""

from __future__ import annotations

import cmath
import math

import numba
import numpy as np
from scipy.linalg import expm

from .converter import AffineSystem, StateVector


class DivergenceError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


@numba.njit(cache=True)
def _deriv(a, b, x, out):
    n = x.shape[0]
    for i in range(n):
        acc = b[i]
        for j in range(n):
            acc += a[i, j] * x[j]
        out[i] = acc


@numba.njit(cache=True)
def _rk4_inplace(a, b, x, h, k1, k2, k3, k4, tmp):
    n = x.shape[0]
    _deriv(a, b, x, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _deriv(a, b, tmp, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _deriv(a, b, tmp, k3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    _deriv(a, b, tmp, k4)
    for i in range(n):
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@numba.njit(cache=True)
def advance_rk4(a, b, a_alt, b_alt, clamp, x0, h, n_steps, out):
    """Take ``n_steps`` RK4 steps of size ``h`` from ``x0``, writing each state to ``out``.

    With ``clamp`` set, once ``x[0]`` reaches or crosses zero it is pinned
    there and the remaining steps use ``(a_alt, b_alt)``.  Returns the number
    of steps completed before a non-finite value appeared.
    """
    n = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    sign0 = 1.0 if x[0] > 0 else -1.0
    blocked = False
    for s in range(n_steps):
        if blocked:
            _rk4_inplace(a_alt, b_alt, x, h, k1, k2, k3, k4, tmp)
        else:
            _rk4_inplace(a, b, x, h, k1, k2, k3, k4, tmp)
            if clamp and x[0] * sign0 <= 0.0:
                x[0] = 0.0
                blocked = True
        for i in range(n):
            if not np.isfinite(x[i]):
                return s
            out[s, i] = x[i]
    return n_steps


@numba.njit(cache=True)
def advance_euler(a, b, a_alt, b_alt, clamp, x0, h, n_steps, out):
    """Forward Euler with the same calling convention as :func:`advance_rk4`.

    First order only; kept as a deliberately weak route so verification can
    show that it notices a bad integrator.
    """
    n = x0.shape[0]
    x = x0.copy()
    k = np.empty(n)
    sign0 = 1.0 if x[0] > 0 else -1.0
    blocked = False
    for s in range(n_steps):
        if blocked:
            _deriv(a_alt, b_alt, x, k)
        else:
            _deriv(a, b, x, k)
        for i in range(n):
            x[i] += h * k[i]
        if not blocked and clamp and x[0] * sign0 <= 0.0:
            x[0] = 0.0
            blocked = True
        for i in range(n):
            if not np.isfinite(x[i]):
                return s
            out[s, i] = x[i]
    return n_steps


@numba.njit(cache=True)
def advance_map(phi, gam, phi_alt, gam_alt, clamp, x0, n_steps, out):
    """Repeatedly apply the affine map ``x <- phi x + gam``; clamping as in :func:`advance_rk4`."""
    n = x0.shape[0]
    x = x0.copy()
    y = np.empty(n)
    sign0 = 1.0 if x[0] > 0 else -1.0
    blocked = False
    for s in range(n_steps):
        if blocked:
            _deriv(phi_alt, gam_alt, x, y)
        else:
            _deriv(phi, gam, x, y)
            if clamp and y[0] * sign0 <= 0.0:
                y[0] = 0.0
                blocked = True
        for i in range(n):
            if not np.isfinite(y[i]):
                return s
            x[i] = y[i]
            out[s, i] = y[i]
    return n_steps


def rk4_step(sys: AffineSystem, state, dt: float) -> StateVector | np.ndarray:
    """One classical RK4 step of ``dx/dt = a x + b``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = np.asarray(sys.a, dtype=float)
    b = np.asarray(sys.b, dtype=float)
    x0 = np.asarray(state, dtype=float)
    out = np.empty((1, x0.shape[0]))
    if advance_rk4(a, b, a, b, False, x0, dt, 1, out) != 1:
        raise DivergenceError("RK4 step produced a non-finite state")
    return _like(state, out[0])


def _like(state, x: np.ndarray):
    if isinstance(state, StateVector) or (isinstance(state, tuple) and len(x) == 2):
        return StateVector(float(x[0]), float(x[1]))
    return x


# Below this |delta*dt| the eigenvalue formulas lose digits to cancellation.
_NEAR_REPEATED = 1e-2


def _series_propagator(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Scaling-and-squaring Taylor series on the augmented matrix ``[[a, b], [0, 0]]``."""
    n = a.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = a * dt
    m[:n, n] = b * dt
    norm = np.abs(m).sum(axis=1).max()
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    m /= 2.0**squarings
    result = np.eye(n + 1)
    term = np.eye(n + 1)
    for k in range(1, 20):
        term = term @ m / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result[:n, :n], result[:n, n]


def _expm1_over(z: complex, dt: float) -> complex:
    """``(exp(z) - 1) / z * dt``, i.e. ``(exp(lambda dt) - 1) / lambda`` for ``z = lambda dt``."""
    if abs(z) < 1e-2:
        term, acc = 1.0 + 0j, 0j
        for k in range(1, 12):
            acc += term
            term *= z / (k + 1)
        return acc * dt
    if z.imag == 0.0:
        return math.expm1(z.real) / z.real * dt + 0j
    return (cmath.exp(z) - 1.0) / z * dt


def exact_propagator_2x2(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(exp(a dt), integral_0^dt exp(a s) ds @ b)`` for a 2x2 system.

    With ``mu`` the mean eigenvalue and ``delta`` the half-gap,
    ``exp(a t) = exp(mu t) [cosh(delta t) I + sinh(delta t)/delta (a - mu I)]``.
    Nearly repeated or defective eigenvalues go through a series fallback.
    """
    mu = 0.5 * (a[0, 0] + a[1, 1])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = mu * mu - det  # delta**2
    w = disc * dt * dt
    if abs(w) < _NEAR_REPEATED**2:
        return _series_propagator(a, b, dt)

    delta = cmath.sqrt(disc)
    lam1, lam2 = mu + delta, mu - delta
    shifted = a - mu * np.eye(2)
    if w > 0:
        e1, e2 = math.exp(lam1.real * dt), math.exp(lam2.real * dt)
        c_term = 0.5 * (e1 + e2)
        s_term = (e1 - e2) / (2.0 * delta.real)
        g1, g2 = _expm1_over(lam1 * dt, dt), _expm1_over(lam2 * dt, dt)
        ic = 0.5 * (g1 + g2).real
        is_ = ((g1 - g2) / (2.0 * delta)).real
    else:
        nu = delta.imag
        scale = math.exp(mu * dt)
        c_term = scale * math.cos(nu * dt)
        s_term = scale * math.sin(nu * dt) / nu
        g1 = _expm1_over(lam1 * dt, dt)
        ic = g1.real
        is_ = g1.imag / nu
    phi = c_term * np.eye(2) + s_term * shifted
    integral = ic * np.eye(2) + is_ * shifted
    return phi, integral @ b


def exact_propagator(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if dt == 0:
        return np.eye(a.shape[0]), np.zeros(a.shape[0])
    if a.shape == (2, 2):
        return exact_propagator_2x2(a, b, dt)
    n = a.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = a
    m[:n, n] = b
    e = expm(m * dt)
    return e[:n, :n], e[:n, n]


def exact_step(sys: AffineSystem, state, dt: float):
    """Closed-form solution of ``dx/dt = a x + b`` after ``dt`` seconds."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x0 = np.asarray(state, dtype=float)
    phi, gam = exact_propagator(sys.a, sys.b, dt)
    return _like(state, phi @ x0 + gam)
