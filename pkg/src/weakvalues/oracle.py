"""
Closed-form references.

Free Gaussian packets, the Bohmian velocity of Gaussian superpositions, and
the weak-then-strong measurement pipeline written as a double integral over
momenta. The free propagator is used throughout; no potential enters here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .constants import HBAR, M_E
from .errors import NodeError, QuadratureError
from .quantum import GaussianPacketSpec, WaveField, momentum_spectrum


@dataclass(frozen=True)
class ClosedFormPacket:
    """``psi(x, 0) = w (pi s0^2)^(-1/4) exp(-(x - x0)^2 / (2 s0^2) + i m v0 x / hbar + i phase)``."""

    sigma0: float
    center: float
    velocity: float = 0.0
    mass: float = M_E
    phase: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")

    @classmethod
    def from_spec(cls, spec: GaussianPacketSpec, mass: float = M_E):
        return cls(spec.width, spec.center, spec.central_velocity(mass), mass, spec.relative_phase, spec.weight)

    @property
    def k0(self):
        return self.mass * self.velocity / HBAR

    def tau(self, t):
        return HBAR * np.asarray(t) / (self.mass * self.sigma0**2)


def free_gaussian(packet: ClosedFormPacket, x, t):
    """Exact free evolution of one packet (weight included)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    s = 1 + 1j * packet.tau(t)
    y = np.asarray(x) - packet.center - packet.velocity * t
    k0 = packet.k0
    return (packet.weight * (np.pi * packet.sigma0**2) ** -0.25 / np.sqrt(s)
            * np.exp(-y**2 / (2 * packet.sigma0**2 * s) + 1j * (k0 * np.asarray(x) - HBAR * k0**2 * t / (2 * packet.mass))
                     + 1j * packet.phase))


def _free_gaussian_dx(packet, x, t):
    s = 1 + 1j * packet.tau(t)
    y = np.asarray(x) - packet.center - packet.velocity * t
    return free_gaussian(packet, x, t) * (-y / (packet.sigma0**2 * s) + 1j * packet.k0)


def free_gaussian_width(packet: ClosedFormPacket, t):
    """Amplitude width ``sigma0 sqrt(1 + (hbar t / m sigma0^2)^2)``."""
    return packet.sigma0 * np.sqrt(1 + packet.tau(t) ** 2)


def free_gaussian_velocity(packet: ClosedFormPacket, x, t):
    """``v0 + (x - x0 - v0 t) hbar^2 t / (m^2 sigma0^4 + hbar^2 t^2)``."""
    m, s0 = packet.mass, packet.sigma0
    return packet.velocity + (np.asarray(x) - packet.center - packet.velocity * t) * HBAR**2 * t / (
        m**2 * s0**4 + HBAR**2 * t**2)


def _as_packets(packets, mass):
    out = []
    for p in packets:
        out.append(ClosedFormPacket.from_spec(p, mass) if isinstance(p, GaussianPacketSpec) else p)
    return out


def momentum_amplitude(packets: Sequence[ClosedFormPacket], p):
    """Unnormalized ``phi(p) = sum_i w_i phi_i(p)`` of the superposition at t = 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape, dtype=complex)
    for pk in packets:
        q = p / HBAR - pk.k0
        out += (pk.weight * (pk.sigma0**2 / (np.pi * HBAR**2)) ** 0.25
                * np.exp(-1j * q * pk.center - 0.5 * (q * pk.sigma0) ** 2 + 1j * pk.phase))
    return out


def superposition_norm(packets: Sequence[ClosedFormPacket]):
    """``integral |phi(p)|^2 dp`` by trapezoid rule (spectrally accurate for Gaussians)."""
    lo = min(pk.mass * pk.velocity - 14 * HBAR / pk.sigma0 for pk in packets)
    hi = max(pk.mass * pk.velocity + 14 * HBAR / pk.sigma0 for pk in packets)
    span = max(abs(pk.center) for pk in packets) + max(pk.sigma0 for pk in packets)
    n = int(max(4096, 8 * (hi - lo) * span / (2 * np.pi * HBAR)))
    p = np.linspace(lo, hi, n)
    return float(np.trapezoid(np.abs(momentum_amplitude(packets, p)) ** 2, p))


def superposition_state(packets, x, t, mass: float = M_E, normalized: bool = True):
    """Closed-form ``psi(x, t)`` and ``d psi / dx`` of a Gaussian superposition."""
    pk = _as_packets(packets, mass)
    psi = sum(free_gaussian(p, x, t) for p in pk)
    dpsi = sum(_free_gaussian_dx(p, x, t) for p in pk)
    if normalized:
        n = np.sqrt(superposition_norm(pk))
        psi, dpsi = psi / n, dpsi / n
    return psi, dpsi


def analytic_two_packet_velocity(packets, x, t, mass: float = M_E, node_threshold: float = 1e-12):
    """Closed-form Bohmian velocity ``J / |psi|^2`` of a Gaussian superposition.

    Raises :class:`NodeError` where ``|psi|^2`` drops below ``node_threshold``
    times the largest single-packet peak density at time ``t``.
    """
    pk = [p for p in _as_packets(packets, mass) if p.weight != 0]
    if not pk:
        raise ValueError("no packet with non-zero weight")
    psi, dpsi = superposition_state(pk, x, t, mass, normalized=False)
    rho = np.abs(psi) ** 2
    peak = max(abs(p.weight) ** 2 / (np.sqrt(np.pi) * free_gaussian_width(p, t)) for p in pk)
    if np.any(rho < node_threshold * peak):
        raise NodeError("closed-form velocity requested at a node")
    v = HBAR / pk[0].mass * np.imag(dpsi / psi)
    return float(v) if np.ndim(v) == 0 else v


@dataclass(frozen=True)
class QuadratureSpec:
    """Uniform momentum grid ``[p_min, p_max]`` with ``n_points``; relative tolerance ``tol``."""

    p_min: float
    p_max: float
    n_points: int = 2049
    tol: float = 1e-6

    def __post_init__(self):
        if not self.p_max > self.p_min:
            raise ValueError("empty momentum range")
        if self.n_points < 17 or self.n_points % 2 == 0:
            raise ValueError("n_points must be odd and at least 17 (for the halving check)")

    @classmethod
    def around(cls, packets: Sequence[ClosedFormPacket], widths: float = 10.0, n_points: int = 2049, tol=1e-6):
        """Grid covering ``widths`` momentum standard deviations around every packet."""
        lo = min(pk.mass * pk.velocity - widths * HBAR / (np.sqrt(2) * pk.sigma0) for pk in packets)
        hi = max(pk.mass * pk.velocity + widths * HBAR / (np.sqrt(2) * pk.sigma0) for pk in packets)
        return cls(lo, hi, n_points, tol)

    def grid(self):
        return np.linspace(self.p_min, self.p_max, self.n_points)


@dataclass(frozen=True)
class OracleResult:
    x_s: float
    probability: float
    expectation: float
    condition_ratio: float
    error_estimate: float

    @property
    def velocity(self):
        return self.expectation


def condition_ratio(sigma_w: float, sigma_s: float) -> float:
    """``sigma_w sigma_s / hbar``; the weak value is Bohmian when this is large."""
    if not (sigma_w > 0 and sigma_s > 0):
        raise ValueError("widths must be positive")
    return sigma_w * sigma_s / HBAR


def _trapz_weights(n, dp):
    w = np.full(n, dp)
    w[0] = w[-1] = 0.5 * dp
    return w


def _overlap_kernel(p, sigma_w, sigma_s):
    D = p[:, None] - p[None, :]
    return np.exp(-(D**2) * (1 / (4 * sigma_w**2) + sigma_s**2 / (4 * HBAR**2)))


def _double_integrals(u, p, G):
    w = _trapz_weights(len(p), p[1] - p[0])
    uw = u * w
    Gu = G @ uw
    P = np.real(np.vdot(uw, Gu))
    # (p' + p'')/2 weighting, symmetric so the real part of one term suffices
    N = np.real(np.vdot(uw * p, Gu))
    return P, N


def operator_weak_value(psi0: Union[Sequence[ClosedFormPacket], WaveField], t_m: float, sigma_w: float,
                        sigma_s: float, x_s, quad: QuadratureSpec = None, mass: float = M_E):
    """``P(x_s)`` and ``E[p_w | x_s]`` of the weak-momentum / free-evolution / strong-position pipeline.

    ``P(x_s) = iint u*(p') G(p' - p'') u(p'') dp' dp''`` and the numerator
    carries an extra ``(p' + p'')/2``, with
    ``u(p) = phi(p) exp(-i p^2 t_m / 2 m hbar + i p x_s / hbar) / sqrt(2 pi hbar)`` and
    ``G(d) = exp(-d^2 / 4 sigma_w^2 - sigma_s^2 d^2 / 4 hbar^2)``.
    The expectation is returned in momentum units. Each evaluation is
    repeated on the half grid and :class:`QuadratureError` raised when the
    two differ by more than ``quad.tol``.
    """
    if isinstance(psi0, WaveField):
        spec = momentum_spectrum(psi0.normalized())
        mass = psi0.mass
        if quad is None:
            keep = spec.density > 1e-16 * spec.density.max()
            quad = QuadratureSpec(spec.p[keep][0], spec.p[keep][-1], 2049)
        p = quad.grid()
        # direct transform at the quadrature nodes; interpolating the FFT phase is too coarse
        psi = psi0.normalized()
        x = psi.grid.x
        phi = np.exp(-1j * np.outer(p, x) / HBAR) @ psi.amplitudes * psi.grid.dx / np.sqrt(2 * np.pi * HBAR)
    else:
        pk = _as_packets(psi0, mass)
        mass = pk[0].mass
        if quad is None:
            quad = QuadratureSpec.around(pk)
        p = quad.grid()
        phi = momentum_amplitude(pk, p) / np.sqrt(superposition_norm(pk))
    ratio = condition_ratio(sigma_w, sigma_s)
    G, G2 = _overlap_kernel(p, sigma_w, sigma_s), _overlap_kernel(p[::2], sigma_w, sigma_s)
    results = []
    for xs in np.atleast_1d(np.asarray(x_s, dtype=float)):
        u = phi * np.exp(-1j * p**2 * t_m / (2 * mass * HBAR) + 1j * p * xs / HBAR) / np.sqrt(2 * np.pi * HBAR)
        P, N = _double_integrals(u, p, G)
        P2, N2 = _double_integrals(u[::2], p[::2], G2)
        scale = np.trapezoid(np.abs(u), p) ** 2
        err = max(abs(P - P2), abs(N - N2) / max(abs(p).max(), 1e-300)) / scale
        if err > quad.tol:
            raise QuadratureError(f"momentum quadrature not converged at x_s = {xs:.4e} m (estimate {err:.2e})")
        if P <= 0:
            raise QuadratureError(f"non-positive probability density at x_s = {xs:.4e} m")
        results.append(OracleResult(float(xs), float(P), float(N / P), ratio, float(err)))
    return results[0] if np.ndim(x_s) == 0 else results
