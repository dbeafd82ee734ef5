"""
Gold sphere / silicon membrane experiment – condensed reference values.

Everything is SI with angular frequencies in rad/s. Carrier densities are
stored per m^3; the cm^-3 figures quoted alongside them are for reading only.
"""
import math

from scipy import constants as _sc

from utils import per_cm3_to_per_m3

# ---------------------------
# Units & conventions
# ---------------------------

UNITS = {
    "separation": "m",
    "force": "N",
    "free_energy_per_area": "J/m^2",
    "frequency": "rad/s",
    "carrier_density": "1/m^3",
    "voltage": "V",
    "deflection_signal": "arbitrary units",
}

DISPLAY_UNITS = {
    # quantity: (label, factor applied to the SI value)
    "separation": ("nm", 1e9),
    "force": ("pN", 1e12),
    "frequency": ("rad/s", 1.0),
}

# ---------------------------
# Physical constants (CODATA via scipy.constants)
# ---------------------------

HBAR = _sc.hbar
K_B = _sc.k
C_LIGHT = _sc.c
EPS0 = _sc.epsilon_0
E_CHARGE = _sc.e
M_ELECTRON = _sc.m_e
EV_TO_RAD_S = _sc.e / _sc.hbar

# ---------------------------
# Setup geometry & calibration
# ---------------------------

SPHERE = {
    "radius_m": 98.9e-6,           # 2R = 197.8 um
    "radius_err_m": 0.15e-6,
    "gold_coating_m": 82e-9,
}

CALIBRATION = {
    "deflection_coeff_m": 137.2e-9,    # per unit deflection signal
    "deflection_coeff_err_m": 0.6e-9,
    "contact_separation_m": 97e-9,
    "contact_separation_err_m": 1e-9,
    "force_per_signal_N": 6.16e-9,
    "force_per_signal_err_N": 0.04e-9,
    "residual_potential_V": -0.171,
    "residual_potential_err_V": 0.002,
    "calibration_voltages_V": (0.65, -0.91),
    "calibration_separations_m": (1e-6, 5e-6),
}

RESIDUAL_POTENTIALS = {
    "v0_light_V": -0.303,
    "v0_dark_V": -0.225,
    "err_V": 0.002,
}

STATISTICS = {
    "voltage_pairs": 41,
    "confidence": 0.95,
    "systematic_error_N": 0.09e-12,
    "random_error_100nm_N": 0.34e-12,
    "random_error_250nm_N": 0.24e-12,
    "points_per_nm": 3,
}

# ---------------------------
# Silicon membrane & illumination
# ---------------------------

SILICON = {
    "eps_static": 11.66,
    # single-oscillator representation of the dark-Si optical data
    "eps_inf": 1.035,
    "omega0_rad_s": 6.6e15,
    "mass_ratio_holes": 0.2063,
    "mass_ratio_electrons": 0.2588,
    "gamma_holes_rad_s": 5.0e12,
    "gamma_electrons_rad_s": 1.8e13,
    "intrinsic_density_m3": per_cm3_to_per_m3(5e14),  # 5e14 cm^-3, rho ~ 10 Ohm cm
    "membrane_thickness_m": 4e-6,
}

ILLUMINATION = {
    "absorbed_power_W": 3.4e-3,
    "absorbed_power_err_W": 0.3e-3,
    "lifetime_s": 0.38e-3,
    "lifetime_err_s": 0.03e-3,
    "photon_omega_rad_s": 3.66e15,      # 514 nm
    "gauss_width_m": 0.23e-3,
    "thickness_m": 4e-6,
}

# Drude parameters for gold used to synthesize optical data when no
# measured table is supplied.
GOLD = {
    "omega_p_rad_s": 9.0 * EV_TO_RAD_S,
    "gamma_rad_s": 0.035 * EV_TO_RAD_S,
}

# ---------------------------
# Quoted results (checks)
# ---------------------------

QUOTED = {
    "carrier_density_m3": per_cm3_to_per_m3(2.0e19),
    "omega_p_holes_rad_s": 5.6e14,
    "omega_p_electrons_rad_s": 5.0e14,
    "omega_p_intrinsic_holes_rad_s": 2.8e12,
    "xi_1_300K_rad_s": 2.47e14,
    "delta_force_100nm_N": -3.4e-12,
    "t_factor_f40": 2.00,
}


def ideal_casimir_energy(z):
    """Zero-temperature ideal-metal free energy per area, J/m^2."""
    return -math.pi ** 2 * HBAR * C_LIGHT / (720.0 * z ** 3)

