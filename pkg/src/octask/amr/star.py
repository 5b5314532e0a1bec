"""Rotating-star-like initial condition.

Gaussian density blob over a floor, rigid rotation about z through the
domain center, pressure proportional to density, ideal-gas energy.
"""

from __future__ import annotations

import numpy as np


def density(cfg, x, y, z):
    c = 0.5 * cfg.domain_size
    r2 = (x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2
    return np.exp(-r2 / (cfg.r0 * cfg.r0)) + cfg.density_floor


def initial_fields(cfg, x, y, z) -> dict[str, np.ndarray]:
    c = 0.5 * cfg.domain_size
    rho = density(cfg, x, y, z)
    vx = -cfg.omega * (y - c)
    vy = cfg.omega * (x - c)
    vz = np.zeros_like(vx)
    p = cfg.pressure_scale * rho
    en = p / (cfg.gamma - 1.0) + 0.5 * rho * ((vx * vx + vy * vy) + vz * vz)
    return {
        "rho": rho,
        "mx": rho * vx,
        "my": rho * vy,
        "mz": rho * vz,
        "en": en,
    }


def refine_metric(cfg):
    """Node metric for the refinement criterion: peak initial density."""

    def metric(key, structure) -> float:
        x, y, z = structure.cell_centers(key)
        return float(density(cfg, x, y, z).max())

    return metric
