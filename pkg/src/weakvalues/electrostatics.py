"""
Electric flux of point charges through rectangular sensing surfaces,
Ramo-Shockley weighting fields and the induced (total) current.

A surface flux is ``q / (4 pi eps)`` times the signed solid angle the rectangle
subtends at the charge. The sign is positive when the charge sits on the
negative side of the surface normal, so a charge moving along +x toward a
surface with normal +x produces a positive current.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .constants import C_LIGHT, DEFAULT_PERMITTIVITY, EPS0, HBAR, Q_E
from .errors import AsymptoticRegimeError, QuadratureError

AXES = {"x": 0, "y": 1, "z": 2}
ROLES = ("weak-large", "strong-small", "cable-cross-section")
LARGE_RATIO = 100.0
SMALL_RATIO = 0.01


@dataclass(frozen=True)
class RectSurface:
    """Axis-aligned rectangle.

    ``extents`` are the side lengths along the two in-plane axes, taken in
    x, y, z order with the normal axis removed (so ``(L_y, L_z)`` for a
    normal along x).
    """

    center: tuple
    extents: tuple
    normal: str = "x"
    role: str = "weak-large"

    def __post_init__(self):
        if self.normal not in AXES:
            raise ValueError(f"normal must be one of x, y, z; got {self.normal!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown surface role {self.role!r}")
        if len(self.extents) != 2 or min(self.extents) <= 0:
            raise ValueError("surface extents must be two positive lengths")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))

    @classmethod
    def square(cls, center, area, normal="x", role="weak-large"):
        side = float(np.sqrt(area))
        return cls(tuple(center), (side, side), normal, role)

    @property
    def area(self):
        return self.extents[0] * self.extents[1]

    @property
    def is_square(self):
        return np.isclose(self.extents[0], self.extents[1], rtol=1e-12)

    @property
    def axis(self):
        return AXES[self.normal]

    @property
    def in_plane_axes(self):
        return tuple(i for i in range(3) if i != self.axis)

    @property
    def plane(self):
        return self.center[self.axis]

    def corners(self):
        """Boundary vertices, counter-clockwise seen from the +normal side."""
        c = np.array(self.center)
        u, v = self.in_plane_axes
        eu, ev = np.zeros(3), np.zeros(3)
        eu[u], ev[v] = 0.5 * self.extents[0], 0.5 * self.extents[1]
        # (u, v, n) is a right-handed cycle for n = x (y, z), n = z (x, y); flip for n = y
        sign = -1.0 if self.normal == "y" else 1.0
        ev = sign * ev
        return np.array([c - eu - ev, c + eu - ev, c + eu + ev, c - eu + ev])


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ValueError("box needs 3D bounds with hi > lo on every axis")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def size(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self):
        return float(np.prod(self.size))

    def contains(self, r):
        r = np.asarray(r)
        return np.all((r >= np.asarray(self.lo)) & (r <= np.asarray(self.hi)), axis=-1)


def default_cable_boxes(length=280e-9, distance=10e-9, cable_length=40e-9, cross_section=20e-9):
    """Two cables on the device axis, one beyond each end, ``distance`` away."""
    h = 0.5 * cross_section
    left = Box((-distance - cable_length, -h, -h), (-distance, h, h))
    right = Box((length + distance, -h, -h), (length + distance + cable_length, h, h))
    return left, right


@dataclass(frozen=True)
class DeviceGeometry:
    """Device along x from 0 to ``length``.

    The weak electrode closes the device at ``x = length``; the strong
    electrode is a row of small tiles along the transport direction.
    """

    length: float = 280e-9
    permittivity: float = DEFAULT_PERMITTIVITY
    weak_surface: Optional[RectSurface] = None
    strong_surfaces: tuple = ()
    cables: tuple = ()

    def __post_init__(self):
        if self.weak_surface is None:
            object.__setattr__(self, "weak_surface",
                               RectSurface.square((self.length, 0.0, 0.0), 1e-11, "x", "weak-large"))
        object.__setattr__(self, "strong_surfaces", tuple(self.strong_surfaces))
        object.__setattr__(self, "cables", tuple(self.cables))

    @classmethod
    def build(cls, length=280e-9, permittivity=DEFAULT_PERMITTIVITY, weak_area=1e-11,
              n_tiles=56, tile_width=5e-9, tile_start=0.0, cable_distance=10e-9,
              cable_length=40e-9, cable_cross_section=20e-9):
        weak = RectSurface.square((length, 0.0, 0.0), weak_area, "x", "weak-large")
        tiles = tuple(
            RectSurface((tile_start + (k + 0.5) * tile_width, 0.0, 0.0), (tile_width, tile_width),
                        "y", "strong-small")
            for k in range(n_tiles)
        )
        cables = default_cable_boxes(length, cable_distance, cable_length, cable_cross_section)
        return cls(length, permittivity, weak, tiles, cables)

    def weak_field(self):
        return WeightingField.parallel_plate(self.length)

    def tile_edges(self):
        """Edges along x of the strong tiles (requires contiguous tiling)."""
        if not self.strong_surfaces:
            return np.array([])
        lo = [s.center[0] - 0.5 * s.extents[0] for s in self.strong_surfaces]
        hi = [s.center[0] + 0.5 * s.extents[0] for s in self.strong_surfaces]
        return np.array(lo + [hi[-1]])

    def tile_centers(self):
        return np.array([s.center[0] for s in self.strong_surfaces])

    def tile_index(self, x):
        """Index of the tile whose x span contains ``x``; -1 outside the tiled span."""
        edges = self.tile_edges()
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(edges, x, side="right") - 1
        idx = np.where((x >= edges[0]) & (x < edges[-1]), idx, -1)
        return int(idx) if idx.ndim == 0 else idx

    def validate(self):
        """List every violated geometry rule (empty when valid)."""
        problems = []
        L2 = self.length**2
        if not self.length > 0:
            problems.append("device length must be positive")
        if not self.permittivity > 0:
            problems.append("permittivity must be positive")
        ratio = self.weak_surface.area / L2
        if ratio < LARGE_RATIO:
            problems.append(f"weak-surface ratio rule: S_w/L_x^2 = {ratio:.3g} < {LARGE_RATIO:g}")
        for k, s in enumerate(self.strong_surfaces):
            r = s.area / L2
            if r > SMALL_RATIO:
                problems.append(f"strong-surface ratio rule: tile {k} S_s/L_x^2 = {r:.3g} > {SMALL_RATIO:g}")
        edges_lo = [s.center[0] - 0.5 * s.extents[0] for s in self.strong_surfaces]
        edges_hi = [s.center[0] + 0.5 * s.extents[0] for s in self.strong_surfaces]
        for k in range(1, len(edges_lo)):
            if edges_lo[k] < edges_hi[k - 1] - 1e-15:
                problems.append(f"strong tiles {k - 1} and {k} overlap")
            elif edges_lo[k] > edges_hi[k - 1] + 1e-15:
                problems.append(f"strong tiles {k - 1} and {k} leave a gap")
        return problems

    def condition_width(self):
        """Position width of the strong Kraus operator implied by the tiles.

        The exponential weighting ``exp(-alpha r)`` with ``alpha = sqrt(2/S)``
        has the same second moment as a Gaussian of width ``sqrt(S)``.
        """
        if not self.strong_surfaces:
            raise ValueError("geometry has no strong tiles")
        return float(np.sqrt(self.strong_surfaces[0].area))


@dataclass(frozen=True)
class WeightingField:
    """Ramo-Shockley weighting field, ``F = grad(phi)``.

    ``parallel-plate``: ``phi = x / L_x``. ``exponential-small-surface``:
    ``phi = -exp(-alpha |r - r_s|)`` with ``alpha = sqrt(2 / S_s)``.
    """

    kind: str
    length: Optional[float] = None
    alpha: Optional[float] = None
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind == "parallel-plate":
            if not (self.length and self.length > 0):
                raise ValueError("parallel-plate field needs L_x > 0")
        elif self.kind == "exponential-small-surface":
            if not (self.alpha and self.alpha > 0):
                raise ValueError("exponential field needs alpha > 0")
        else:
            raise ValueError(f"unknown weighting-field kind {self.kind!r}")

    @classmethod
    def parallel_plate(cls, length):
        return cls("parallel-plate", length=float(length))

    @classmethod
    def exponential(cls, surface_or_area, center=None):
        if isinstance(surface_or_area, RectSurface):
            area, center = surface_or_area.area, surface_or_area.center if center is None else center
        else:
            area = float(surface_or_area)
        return cls("exponential-small-surface", alpha=float(np.sqrt(2.0 / area)),
                   center=tuple(center if center is not None else (0.0, 0.0, 0.0)))

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "parallel-plate":
            return r[..., 0] / self.length
        R = np.linalg.norm(r - np.asarray(self.center), axis=-1)
        return -np.exp(-self.alpha * R)

    def gradient(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(np.broadcast_shapes(r.shape, (3,)))
        if self.kind == "parallel-plate":
            out[..., 0] = 1.0 / self.length
            return out
        d = r - np.asarray(self.center)
        R = np.linalg.norm(d, axis=-1)
        at = R == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (self.alpha * np.exp(-self.alpha * R) / np.where(at, 1.0, R))[..., None] * d
        if np.any(at):
            # approach-from-the-left limit, F_x = -alpha
            out[at] = np.array([-self.alpha, 0.0, 0.0])
        return out


def weighting_gradient(field: WeightingField, r):
    """Weighting-field vector (1/m) at ``r``."""
    return field.gradient(r)


def _local_coords(r, surface):
    """Signed distance to the plane (positive on the -normal side) and in-plane offsets."""
    r = np.asarray(r, dtype=float)
    c = np.asarray(surface.center)
    u, v = surface.in_plane_axes
    d = c[surface.axis] - r[..., surface.axis]
    return d, r[..., u] - c[u], r[..., v] - c[v]


def solid_angle(r, surface: RectSurface):
    """Signed solid angle of ``surface`` seen from ``r`` (sr), in [-2 pi, 2 pi].

    On the plane itself the one-sided limit from the -normal side is used
    inside the rectangle, and 0 outside.
    """
    d, pu, pv = _local_coords(r, surface)
    a, b = 0.5 * surface.extents[0], 0.5 * surface.extents[1]
    on = d == 0
    ds = np.where(on, 1.0, d)
    total = 0.0
    for su, u in ((1, a - pu), (-1, -a - pu)):
        for sv, v in ((1, b - pv), (-1, -b - pv)):
            total = total + su * sv * np.arctan(u * v / (ds * np.sqrt(u * u + v * v + ds * ds)))
    inside = (np.abs(pu) < a) & (np.abs(pv) < b)
    total = np.where(on, np.where(inside, 2 * np.pi, 0.0), total)
    return float(total) if np.ndim(total) == 0 else total


def flux_exact(r, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY):
    """Closed-form flux (V m) of a point charge at ``r`` through ``surface``."""
    return charge / (4 * np.pi * permittivity) * solid_angle(r, surface)


def flux_gradient(r, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY):
    """Gradient of the flux with respect to the charge position (V).

    The solid-angle gradient equals the Biot-Savart integral of the boundary
    loop, which is closed-form for straight edges.
    """
    r = np.asarray(r, dtype=float)
    corners = surface.corners()
    g = np.zeros(np.broadcast_shapes(r.shape, (3,)))
    for k in range(4):
        a = corners[k] - r
        b = corners[(k + 1) % 4] - r
        axb = np.cross(a, b)
        n2 = np.sum(axb * axb, axis=-1)
        na, nb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
        c = b - a
        coef = (np.sum(c * b, axis=-1) / nb - np.sum(c * a, axis=-1) / na) / np.where(n2 > 0, n2, np.inf)
        g = g + coef[..., None] * axb
    return charge / (4 * np.pi * permittivity) * g


def flux_on_axis_exact(X, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY):
    """On-axis flux through a square surface with normal x (arctangent form).

    ``Phi = (q / pi eps) atan(S / (4 chi sqrt(chi^2 + S/2)))`` with
    ``chi = x_w - X``, odd in ``chi``, and ``q / (2 eps)`` at ``chi = 0``.
    """
    if not surface.is_square:
        raise ValueError("on-axis closed form needs a square surface")
    S = surface.area
    chi = surface.plane - np.asarray(X, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.arctan(S / (4 * chi * np.sqrt(chi**2 + S / 2)))
    val = np.where(chi == 0, 0.5 * np.pi, val)
    out = charge / (np.pi * permittivity) * val
    return float(out) if np.ndim(out) == 0 else out


def flux_on_axis_derivative(X, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY):
    """``dPhi/dX`` of the on-axis form away from the plane (the smooth displacement part)."""
    S = surface.area
    chi = surface.plane - np.asarray(X, dtype=float)
    r = np.sqrt(chi**2 + S / 2)
    out = charge / (np.pi * permittivity) * 4 * S * (2 * chi**2 + S / 2) / (r * (16 * chi**2 * r**2 + S**2))
    return float(out) if np.ndim(out) == 0 else out


def flux_off_axis_quadrature(r, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY,
                             rtol: float = 1e-9):
    """Flux by direct 2D adaptive quadrature of ``E . n`` over the surface."""
    d, pu, pv = _local_coords(r, surface)
    a, b = 0.5 * surface.extents[0], 0.5 * surface.extents[1]
    scale = np.sqrt(surface.area)
    if abs(d) < 1e-9 * scale:
        if abs(pu) <= a and abs(pv) <= b:
            raise QuadratureError("charge lies on the surface; use the one-sided limit q/(2 eps)")
        return 0.0
    # dimensionless coordinates in units of |d|
    s = abs(d)
    lo_u, hi_u = (-a - pu) / s, (a - pu) / s
    lo_v, hi_v = (-b - pv) / s, (b - pv) / s

    def f(v, u):
        return (1.0 + u * u + v * v) ** -1.5

    opts = []
    for lo, hi in ((lo_v, hi_v), (lo_u, hi_u)):
        o = {"epsrel": rtol, "epsabs": 0, "limit": 500}
        if lo < 0 < hi:
            o["points"] = [0.0]
        opts.append(o)
    val, err = integrate.nquad(f, [(lo_v, hi_v), (lo_u, hi_u)], opts=opts)
    if err > 10 * rtol * abs(val) + 1e-300:
        raise QuadratureError(f"flux quadrature error estimate {err:.2e} exceeds tolerance")
    return float(np.sign(d) * charge / (4 * np.pi * permittivity) * val)


def large_surface_xi(X, surface):
    """``xi^2 = 2 chi^2 / S`` for the large-surface expansion."""
    chi = surface.plane - np.asarray(X, dtype=float)
    return np.sqrt(2 * chi**2 / surface.area)


def flux_large_surface(X, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY):
    """Linear large-surface form ``(q/pi eps)(pi/2 - 2 sqrt(2/S) chi)``.

    Raises :class:`AsymptoticRegimeError` unless ``S >= 100 chi^2``.
    """
    chi = surface.plane - np.asarray(X, dtype=float)
    S = surface.area
    if np.any(S < LARGE_RATIO * chi**2):
        raise AsymptoticRegimeError(f"large-surface form needs S >= {LARGE_RATIO:g} chi^2")
    out = charge / (np.pi * permittivity) * (0.5 * np.pi - 2 * np.sqrt(2 / S) * chi)
    return float(out) if np.ndim(out) == 0 else out


def flux_small_surface(X, surface: RectSurface, charge=Q_E, permittivity=DEFAULT_PERMITTIVITY,
                       max_xi: Optional[float] = None):
    """Inverse-square small-surface form ``q S / (4 pi eps chi^2)`` for ``X < x_s``.

    Positions at or beyond the surface plane are outside the far-field form
    and raise :class:`AsymptoticRegimeError`. ``max_xi`` optionally bounds
    ``xi = S / (2 chi^2)`` as well.
    """
    chi = surface.plane - np.asarray(X, dtype=float)
    if np.any(chi <= 0):
        raise AsymptoticRegimeError("small-surface form is invalid at or beyond the surface plane")
    xi = surface.area / (2 * chi**2)
    if max_xi is not None and np.any(xi > max_xi):
        raise AsymptoticRegimeError(f"xi = {np.max(xi):.3g} exceeds {max_xi:g}")
    out = charge * surface.area / (4 * np.pi * permittivity * chi**2)
    return float(out) if np.ndim(out) == 0 else out


def induced_current(positions, velocities, charges, field, permittivity=DEFAULT_PERMITTIVITY):
    """Total induced current ``sum_k eps grad(Phi_k) . v_k`` (A).

    ``field`` is a :class:`WeightingField` (then ``sum_k q_k F(X_k) . v_k``) or
    a :class:`RectSurface` (flux-gradient form).
    """
    r = np.atleast_2d(np.asarray(positions, dtype=float))
    v = np.atleast_2d(np.asarray(velocities, dtype=float))
    q = np.broadcast_to(np.asarray(charges, dtype=float), r.shape[:-1])
    if r.shape != v.shape:
        raise ValueError("positions and velocities must be aligned")
    if isinstance(field, WeightingField):
        G = field.gradient(r)
        return float(np.sum(q * np.sum(G * v, axis=-1)))
    G = flux_gradient(r, field, 1.0, permittivity)
    return float(np.sum(permittivity * q * np.sum(G * v, axis=-1)))


@dataclass(frozen=True)
class ClassicalityResult:
    ratio: float
    threshold_field_sq: float
    field_sq: float
    required_ratio: float
    passed: bool


def classicality_threshold(dt):
    """``hbar / (c^3 dt^4 eps0)`` in N^2/C^2."""
    if not dt > 0:
        raise ValueError("time interval must be positive")
    return HBAR / (C_LIGHT**3 * dt**4 * EPS0)


def mean_field_squared(flux, area):
    """``|E|^2`` of the surface-averaged field ``Phi / S``."""
    return (flux / area) ** 2


def classicality_margin(E_sq, dt, required_ratio: float = 10.0) -> ClassicalityResult:
    """Compare ``|E|^2`` with the photon-counting bound; pass when ratio >= ``required_ratio``."""
    thr = classicality_threshold(dt)
    ratio = E_sq / thr
    return ClassicalityResult(float(ratio), float(thr), float(E_sq), required_ratio,
                              bool(ratio >= required_ratio))


def crossing_pulse(times, positions, velocity, surface: RectSurface, charge=Q_E,
                   permittivity=DEFAULT_PERMITTIVITY):
    """Displacement-current pulse ``eps dPhi/dt`` for an on-axis crossing of ``surface``."""
    return permittivity * flux_on_axis_derivative(positions, surface, charge, permittivity) * velocity


def pulse_width(times, current):
    """Full width at half maximum of ``|current|``."""
    a = np.abs(np.asarray(current))
    above = np.nonzero(a >= 0.5 * a.max())[0]
    return float(times[above[-1]] - times[above[0]])


def warn_if(condition, message):
    if condition:
        warnings.warn(message, RuntimeWarning, stacklevel=3)
