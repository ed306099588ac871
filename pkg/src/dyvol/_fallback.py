"""Pure-Python/numpy versions of the hot kernels.

Same signatures and arithmetic as the compiled ``_kernels`` module. Selected
automatically when the extension is not built, or forced with
``DYVOL_PURE_PYTHON=1``.
"""

import math

import numpy as np


def cir_euler_days(v0, n_days, substeps, gamma, theta, k, rho, z1, z2):
    """Full-truncation Euler scheme for the variance and the centred log price.

    Returns ``(dx, v_day, v_end)``: per-day sums of the log-return increments
    (no drift ``mu``), end-of-day truncated variance, and the untruncated
    variance state to carry into the next chunk.
    """
    dt = 1.0 / substeps
    rho_bar = math.sqrt(max(0.0, 1.0 - rho * rho))
    z1 = np.asarray(z1, dtype=np.float64).tolist()
    z2 = np.asarray(z2, dtype=np.float64).tolist()
    dx = np.empty(n_days)
    v_day = np.empty(n_days)
    v = float(v0)
    j = 0
    for d in range(n_days):
        acc = 0.0
        for _ in range(substeps):
            vp = v if v > 0.0 else 0.0
            sq = math.sqrt(vp * dt)
            a = z1[j]
            acc += -0.5 * vp * dt + sq * a
            v = v - gamma * (vp - theta) * dt + k * sq * (rho * a + rho_bar * z2[j])
            j += 1
        dx[d] = acc
        v_day[d] = v if v > 0.0 else 0.0
    return dx, v_day, v


def _clog1p(z):
    x = z.real
    y = z.imag
    re = 0.5 * np.log1p(2.0 * x + x * x + y * y)
    im = np.arctan2(y, 1.0 + x)
    return re + 1j * im


def _unwrap(z):
    return z.real + 1j * np.unwrap(z.imag)


def char_exponent_array(p, t, gamma, theta, k, rho):
    """Characteristic exponent on an ascending frequency array.

    Every complex logarithm is continued along ``p`` (phase unwrapping) so
    that the non-integer power ``2*gamma*theta/k**2`` stays on one branch.
    """
    p = np.asarray(p, dtype=np.float64)
    q = p * p - 1j * p
    big_gamma = gamma + 1j * rho * k * p
    omega = np.sqrt(big_gamma * big_gamma + k * k * q)
    s = big_gamma + omega
    e = np.exp(-omega * t)
    one_minus_e = -np.expm1(-omega * t)
    c = 2.0 * gamma * theta / (k * k)

    # gamma*Gamma*theta*t/k^2 minus the Omega*t/2 part of the last log,
    # written as (gamma*theta*t/k^2)*(Gamma - Omega) without cancellation
    lin = -gamma * theta * t * q / s

    # ln[cosh + A sinh] = Omega t/2 + ln[1 - (1 - A)(1 - e^{-Omega t})/2]
    # 1 - A with A = (Omega^2 - Gamma^2 + 2 gamma Gamma)/(2 gamma Omega); 2 gamma - s
    # is expanded so it stays accurate when Omega is close to gamma (small k)
    drift = 1j * rho * k * p
    two_gamma_minus_s = -drift - (drift * (2.0 * gamma + drift) + k * k * q) / (gamma + omega)
    one_minus_a3 = k * k * q * two_gamma_minus_s / (s * 2.0 * gamma * omega)
    l3 = _unwrap(_clog1p(-0.5 * one_minus_a3 * one_minus_e))

    # ratio term; identically zero when rho == 0
    if rho != 0.0:
        num = _unwrap(np.log((1.0 + gamma / omega) + (1.0 - gamma / omega) * e))
        den = _unwrap(np.log((1.0 + big_gamma / omega) + (1.0 - big_gamma / omega) * e))
        l2 = num - den
    else:
        l2 = np.zeros_like(q)

    return lin - c * (l2 + l3)


def fourier_invert(x, p, w, phi_re, phi_im):
    """``sum_j w_j * Re[exp(i p_j x) * phi_j]`` for every ``x``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    block = 256
    for i in range(0, x.shape[0], block):
        arg = np.outer(x[i:i + block], p)
        out[i:i + block] = np.cos(arg) @ (w * phi_re) - np.sin(arg) @ (w * phi_im)
    return out


ANCHOR = 64


def fourier_invert_uniform(x0, dx, nx, p, w, phi_re, phi_im):
    """``fourier_invert`` on the grid ``x0 + i*dx``; phases advance by a complex
    rotation per row and are recomputed exactly every ``ANCHOR`` rows."""
    c = w * (phi_re + 1j * phi_im)
    rot = np.exp(1j * p * dx)
    out = np.empty(nx)
    for start in range(0, nx, ANCHOR):
        z = c * np.exp(1j * p * (x0 + start * dx))
        for i in range(start, min(start + ANCHOR, nx)):
            out[i] = z.real.sum()
            z *= rot
    return out
