"""Shared test utilities: synthetic scaling families and random unitaries."""

import numpy as np


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed n x n unitary via QR with phase fixing."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def scaling_function(x: np.ndarray, beta: float, eta: float) -> np.ndarray:
    """Smooth positive master curve with the melting-crossover asymptotics.

    F(x) ~ |x|^(eta (2 - beta)) as x -> -inf (so sigma2 -> t^2) and
    F(x) ~ x^(-eta (beta - 1)) as x -> +inf (so sigma2 -> t), with F(0)=1.
    """
    a = eta * (2.0 - beta)
    b = -eta * (beta - 1.0)
    return (1.0 + x**2) ** ((a + b) / 4.0) * np.exp(-0.5 * (a - b) * np.arcsinh(x))


def synthetic_sigma2(p: float, t: np.ndarray, p_c: float, beta: float, eta: float) -> np.ndarray:
    x = (p - p_c) * t ** (1.0 / eta)
    return t**beta * scaling_function(x, beta, eta)


def synthetic_sigma2_curves(
    p_values, t, p_c: float, beta: float, eta: float, noise: float = 0.0, seed: int = 0
):
    """List of (p, t, sigma2) curves, optionally with multiplicative noise."""
    rng = np.random.default_rng(seed)
    curves = []
    for p in p_values:
        s2 = synthetic_sigma2(p, t, p_c, beta, eta)
        if noise:
            s2 = s2 * (1.0 + noise * rng.standard_normal(t.size))
        curves.append((float(p), t.copy(), s2))
    return curves


def synthetic_entropy_table(L_values, p_values, p_c: float, nu: float):
    """dict L -> (p grid, steady-state entropy) obeying the one-parameter
    crossover form S = s0(L) + G[(p - p_c) L^(1/nu)]."""
    p = np.asarray(p_values, dtype=float)
    out = {}
    for L in L_values:
        x = (p - p_c) * float(L) ** (1.0 / nu)
        out[int(L)] = (p.copy(), 0.3 * np.log(L) + 0.45 * (1.0 - np.tanh(1.2 * x)))
    return out
