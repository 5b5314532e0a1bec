"""Adaptive octree of 8x8x8 sub-grids: ghost exchange, monopole gravity,
a first-order finite-volume hydro step, and the distributed driver."""

from .config import AmrConfig, parse_ini
from .tree import TreeStructure, build_structure

__all__ = ["AmrConfig", "parse_ini", "TreeStructure", "build_structure"]
