"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from emnav.magmodel import DipoleAgent


def random_agent(rng: np.random.Generator, span: float = 0.04) -> DipoleAgent:
    """Random pivoted dipole inside the central workspace."""
    p = rng.uniform(-span, span, 3)
    return DipoleAgent(
        p=tuple(p),
        alpha=float(rng.uniform(-0.6, 0.6)),
        beta=float(rng.uniform(-0.6, 0.6)),
        dipole_magnitude=float(rng.uniform(0.2, 2.0)),
        polarity=int(rng.choice([-1, 1])),
    )


def min_norm_oracle(mat: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Brute-force minimum-norm exact solution of mat @ x = target.

    Independent of the pseudoinverse route: takes any least-squares solution
    and removes its component in the nullspace via an explicit orthonormal
    nullspace basis (scipy.linalg.null_space).  Valid when the target lies in
    the range of mat.
    """
    from scipy.linalg import lstsq, null_space

    x0, *_ = lstsq(mat, target)
    basis = null_space(mat, rcond=1e-10)
    if basis.size:
        x0 = x0 - basis @ (basis.T @ x0)
    return x0
