"""Reaction-diffusion with nonlocal Robin boundary conditions on prefractal
and cusp domains: geometry, P1 meshing and assembly, time stepping,
spectra and long-time diagnostics."""

__version__ = "0.1.0"
