"""
Flux through a surface and the current it induces
=================================================

A point charge in front of a square surface. The exact flux follows from the
solid angle. Far from a large surface the flux saturates at q/(2 eps), and far
from a small one it falls off as the inverse square. The displacement current
is the time derivative of eps times the flux.
"""

import numpy as np

from weakvalues.constants import Q_E
from weakvalues.electrostatics import (
    RectSurface,
    WeightingField,
    flux_large_surface,
    flux_off_axis_quadrature,
    flux_on_axis_exact,
    flux_small_surface,
    induced_current,
)

weak = RectSurface.square((280e-9, 0, 0), 1e-11)
tile = RectSurface.square((280e-9, 0, 0), 25e-18, "x", "strong-small")

# distance from the charge to the surface plane
chi = np.geomspace(1e-10, 1e-5, 6)
print(f"{'chi [m]':>10} {'weak exact':>12} {'large':>12} {'tile exact':>12} {'small':>12}")
for c in chi:
    X = 280e-9 - c
    exact = flux_on_axis_exact(X, weak)
    try:
        large = flux_large_surface(X, weak)
    except ValueError:
        large = np.nan
    small = flux_small_surface(X, tile)
    print(f"{c:10.2e} {exact:12.4e} {large:12.4e} {flux_on_axis_exact(X, tile):12.4e} {small:12.4e}")

# the closed form agrees with direct quadrature off axis too
r = (200e-9, 1e-9, -2e-9)
print("off-axis quadrature:", flux_off_axis_quadrature(r, tile))

# one electron crossing the channel at the central speed
field = WeightingField.parallel_plate(280e-9)
I = induced_current([[85e-9, 0, 0]], [[1.784e5, 0, 0]], [-Q_E], field)
print(f"induced current {abs(I):.3e} A")
