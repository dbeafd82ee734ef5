# config.py
import os

import reference

# --- APP INFO ---
APP_NAME = os.environ.get("OPTOCASIMIR_APP_NAME", "optocasimir")
APP_VERSION = os.environ.get("OPTOCASIMIR_VERSION", "1.0.0")


def _env_float(name, default):
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        print(f"[SYSTEM] Ignoring {name}={raw!r} (not a number), using {default}.")
        return default


def _env_int(name, default):
    return int(_env_float(name, default))


# --- LIFSHITZ DEFAULTS ---
TEMPERATURE_K = _env_float("OPTOCASIMIR_TEMPERATURE", 300.0)
MATSUBARA_REL_TOL = _env_float("OPTOCASIMIR_TOL_MATSUBARA", 1e-9)
MATSUBARA_MAX_TERMS = _env_int("OPTOCASIMIR_MAX_TERMS", 100_000)
QUAD_REL_TOL = _env_float("OPTOCASIMIR_TOL_QUAD", 1e-8)
Y_CUTOFF = _env_float("OPTOCASIMIR_Y_CUTOFF", 60.0)
PFA_MAX_RATIO = 0.05
WORKERS = _env_int("OPTOCASIMIR_WORKERS", 1)

# --- KRAMERS-KRONIG ---
KK_REL_TOL = 1e-8
KK_QUAD_LIMIT = 200
GOLD_TABLE_OMEGA_MIN = 1e11   # rad/s
GOLD_TABLE_OMEGA_MAX = 1e19   # rad/s
GOLD_TABLE_POINTS = 4000

# --- GEOMETRY / GRID ---
SPHERE_RADIUS_M = _env_float("OPTOCASIMIR_RADIUS", reference.SPHERE["radius_m"])
DEFAULT_Z_GRID = os.environ.get("OPTOCASIMIR_GRID", "100nm:500nm:1201")
DEFAULT_XI_GRID = "1e11:1e18:141"

# --- ELECTROSTATICS / ANALYSIS ---
ELECTROSTATIC_SERIES_TOL = 1e-12
ELECTROSTATIC_MAX_TERMS = 1_000_000
CONFIDENCE = _env_float("OPTOCASIMIR_CONFIDENCE", reference.STATISTICS["confidence"])
SYSTEMATIC_ERROR_N = _env_float("OPTOCASIMIR_SYSTEMATIC", reference.STATISTICS["systematic_error_N"])
V0_LIGHT_V = reference.RESIDUAL_POTENTIALS["v0_light_V"]
V0_DARK_V = reference.RESIDUAL_POTENTIALS["v0_dark_V"]
FLAT_PARABOLA_THRESHOLD = 1e-30   # N/V^2
SYNTH_PAIRS = reference.STATISTICS["voltage_pairs"]
SYNTH_SEED = 2024
SYNTH_NOISE_PN = _env_float("OPTOCASIMIR_NOISE_PN", 0.0)
# calibration sweep emitted by `synth --calibration`; wide enough that the
# deflection visibly shifts the separation
SYNTH_CALIB_VOLTAGES = (-2.0, -1.2, 0.8, 1.6)
SYNTH_CALIB_Z_PIEZO = "1um:5um:9"

# Calibration fit: (m [m/unit], z0 [m], V0 [V], force_per_signal [N/unit])
CALIB_INITIAL_GUESS = (120e-9, 80e-9, 0.0, 5e-9)
CALIB_Z_STEP = 1e-4       # relative step for dc/dz
CALIB_STEP_TOL = 1e-10
CALIB_MAX_NFEV = 2000
CALIB_MIN_VOLTAGES = 3

# --- FILE PATHS ---
USER_DATA_DIR = os.path.join(os.path.expanduser("~"), ".optocasimir")

if not os.path.exists(USER_DATA_DIR):
    try:
        os.makedirs(USER_DATA_DIR)
    except OSError:
        pass

CONFIG_DIR = os.environ.get("OPTOCASIMIR_CONFIG_DIR", os.path.join(USER_DATA_DIR, "profiles"))
