"""
Geolocal - support
Numerical kernels: lattice terms, dense simulation, ensemble geometry,
robust interpolation and the reduction pipeline.
"""
