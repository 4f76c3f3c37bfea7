"""Physical constants and package-wide defaults (SI units)."""

from scipy import constants as _c

HBAR = _c.hbar
M_E = _c.m_e
# Charge magnitude. Currents are reported positive for an electron moving in +x,
# toward the weak-sensing surface, so electron charge is carried as +e.
Q_E = _c.e
EPS0 = _c.epsilon_0
K_B = _c.k
C_LIGHT = _c.c
EV = _c.electron_volt

# GaAs static permittivity. Reproduces the quoted flux Phi ~ 7e-10 V m = q/(2 eps).
RELATIVE_PERMITTIVITY = 12.9
DEFAULT_PERMITTIVITY = RELATIVE_PERMITTIVITY * EPS0

DEFAULT_SOFTENING = 1e-9
DEFAULT_DT = 1e-16
