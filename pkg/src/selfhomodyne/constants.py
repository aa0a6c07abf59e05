"""Physical constants (CODATA 2018), pinned in one place.

Every CLI output manifest embeds this table so results are traceable to the
exact constants used.
"""

HBAR = 1.054571817e-34  # reduced Planck constant [J s]
C = 299792458.0         # speed of light in vacuum [m/s] (exact)
K_B = 1.380649e-23      # Boltzmann constant [J/K] (exact)
EPS0 = 8.8541878128e-12  # vacuum permittivity [F/m]

CONSTANTS = {
    "hbar_j_s": HBAR,
    "speed_of_light_m_per_s": C,
    "boltzmann_j_per_k": K_B,
    "vacuum_permittivity_f_per_m": EPS0,
}
