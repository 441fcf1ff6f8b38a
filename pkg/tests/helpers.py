import numpy as np

from gqr import symplectic as sp


def random_symplectic(rng, n, scale=0.6):
    """Product of random passive and squeezing layers."""
    S = np.eye(2 * n)
    labels = [f"m{i}" for i in range(n)]
    for _ in range(3):
        z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        q, r = np.linalg.qr(z)
        S = sp.passive(q * (np.diag(r) / np.abs(np.diag(r))), labels).S @ S
        rs = rng.uniform(-scale, scale, size=n)
        S = np.diag(np.ravel([[np.exp(-r), np.exp(r)] for r in rs])) @ S
    return S


def random_state(rng, n):
    S = random_symplectic(rng, n)
    nu = 0.5 + rng.exponential(1.0, size=n)
    cov = S @ np.diag(np.repeat(nu, 2)) @ S.T
    return sp.GaussianState(tuple(f"m{i}" for i in range(n)), rng.normal(size=2 * n), cov), nu
