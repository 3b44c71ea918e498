"""Relightable Gaussian head avatars on the CPU.

The package covers the full desk-scale loop: spherical-harmonic and
spherical-Gaussian shading of texture-bound 3D Gaussians, a tile-based
splatting renderer with a compiled kernel and a pure-numpy fallback,
HDR environment-map tooling, one-light-at-a-time stacks with image-based
relighting, non-negative inverse lighting, and the training losses.
"""

__version__ = "0.1.0"
