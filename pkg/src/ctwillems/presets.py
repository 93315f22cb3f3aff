"""Named plants used by the CLI and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .lti import LtiSystem, is_controllable

PRESETS = ("scalar_stable", "double_integrator", "oscillator", "random_controllable")


def random_controllable(seed: int, n: int = 3, m: int = 2, p: int = 2) -> LtiSystem:
    """Seeded random plant with spectral abscissa -0.5 and a controllable ``(A, B)``."""
    rng = np.random.default_rng(seed)
    while True:
        A = rng.normal(size=(n, n)) / np.sqrt(n)
        A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
        B = rng.normal(size=(n, m))
        if is_controllable(A, B):
            break
    C = rng.normal(size=(p, n))
    D = 0.1 * rng.normal(size=(p, m))
    return LtiSystem(A, B, C, D)


def preset(name: str, seed: int = 0, **kwargs) -> LtiSystem:
    if name == "scalar_stable":
        return LtiSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    if name == "double_integrator":
        return LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    if name == "oscillator":
        return LtiSystem([[0.0, -1.0], [1.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    if name == "random_controllable":
        return random_controllable(seed, **kwargs)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
