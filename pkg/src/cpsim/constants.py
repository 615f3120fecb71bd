"""Physical constants (SI).

All dynamical code takes hbar / c / G as explicit parameters so unit
tests can run in natural units (hbar = 1); these values are the SI
defaults used by configuration objects.
"""

HBAR = 1.054571817e-34        # J s
C_LIGHT = 299792458.0         # m / s
G_NEWTON = 6.6743e-11         # m^3 kg^-1 s^-2
NUCLEON_MASS = 1.6726e-27     # kg, default reference mass m_R
GRW_COLLAPSE_RADIUS = 1e-7    # m, conventional localization radius r_C
