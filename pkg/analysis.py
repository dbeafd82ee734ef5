"""
Reduction of measured force differences to the dispersion-force difference.

The electric force between the sphere and the plate is c(z) (V - V0)^2 with
c(z) < 0 the exact sphere-plane capacitance gradient. The lock-in signal is

    dF_tot(z) = c(z) [(V_l - V0_l)^2 - (V - V0)^2] + dF_d(z)

and dF_d follows by subtracting the electric part, one value per voltage
pair, averaged per separation with Student-t confidence intervals.
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import least_squares

import config
import reference
from errors import DomainError, FitError, FlatParabolaWarning, GeometryError, InvalidInputError, StatisticsError
from lifshitz import CurveKind
from utils import atomic_write_text, read_numeric_csv, render_csv

log = logging.getLogger("ANALYSIS")

MEASUREMENT_HEADER = ("z_m", "delta_f_tot_N", "v_light_V", "v_dark_V")
CALIBRATION_HEADER = ("z_piezo_m", "s_def_units", "force_signal_units", "v_applied_V")
SUMMARY_HEADER = ("z_m", "mean_N", "random_err_N", "systematic_err_N", "total_err_N")


# --- TYPES ---

@dataclass(frozen=True)
class ElectrostaticCalib:
    deflection_coeff_m: float
    contact_separation_z0: float
    residual_potential_V0: float
    force_per_signal: float

    def __post_init__(self):
        if not (self.deflection_coeff_m > 0 and self.contact_separation_z0 > 0 and self.force_per_signal > 0):
            raise DomainError("calibration needs m > 0, z0 > 0 and a positive force per signal unit")


@dataclass(frozen=True)
class VoltagePair:
    v_light: float
    v_dark: float

    def __post_init__(self):
        if not (math.isfinite(self.v_light) and math.isfinite(self.v_dark)):
            raise DomainError("applied voltages must be finite")


@dataclass(frozen=True)
class DeltaMeasurement:
    z: float
    delta_f_tot: float
    pair: VoltagePair

    def __post_init__(self):
        if not self.z > 0:
            raise DomainError(f"measurement separation must be positive, got {self.z}")


@dataclass(frozen=True)
class StatSummary:
    z: float
    mean_delta_fd: float
    variance_of_mean: float     # s(z): standard deviation of the mean, N
    dof: int
    t_factor: float
    random_error: float
    systematic_error: float
    total_error: float
    confidence: float

    @property
    def relative_error(self):
        if self.mean_delta_fd == 0:
            return math.inf
        return self.total_error / abs(self.mean_delta_fd)


@dataclass(frozen=True)
class CalibrationPoint:
    z_piezo: float
    s_def: float
    force_signal: float
    v_applied: float


@dataclass(frozen=True)
class CalibrationFit:
    calib: ElectrostaticCalib
    std_errors: dict
    residual_rms: float     # N
    n_points: int
    nfev: int


@dataclass(frozen=True)
class ModelComparison:
    z: float
    measured: float
    theory: float
    total_error: float
    theory_error: float
    excluded: bool


# --- ELECTROSTATICS ---

def electrostatic_coefficient(z, radius):
    """
    c(z) = 2 pi eps0 sum_{n>=1} [coth a - n coth(n a)] / sinh(n a), cosh a = 1 + z/R.

    Every summand is <= 0, so c(z) < 0; c ~ -pi eps0 R / z for z << R.
    """
    if not z > 0:
        raise DomainError(f"separation must be positive, got {z}")
    if not z < radius:
        raise DomainError(f"exact sphere-plane series is used for z < R only (z={z}, R={radius})")
    x = z / radius
    alpha = math.log1p(x + math.sqrt(x * (x + 2.0)))
    coth_a = 1.0 / math.tanh(alpha)
    tol = config.ELECTROSTATIC_SERIES_TOL
    total = 0.0
    start = 1
    chunk = 256
    while start < config.ELECTROSTATIC_MAX_TERMS:
        n = np.arange(start, start + chunk, dtype=float)
        na = n * alpha
        if na[0] > 700.0:
            break
        na = np.minimum(na, 700.0)
        terms = (coth_a - n / np.tanh(na)) / np.sinh(na)
        running = total + np.cumsum(terms)
        small = np.nonzero((n >= 2) & (np.abs(terms) < tol * np.abs(running)))[0]
        if small.size:
            total = float(running[small[0]])
            break
        total = float(running[-1])
        start += chunk
    return 2.0 * math.pi * reference.EPS0 * total


def proximity_coefficient(z, radius):
    """Leading small-separation asymptote -pi eps0 R / z of c(z)."""
    return -math.pi * reference.EPS0 * radius / z


def actual_separation(z_piezo, s_def, calib):
    z = z_piezo + calib.deflection_coeff_m * s_def + calib.contact_separation_z0
    if not z > 0:
        raise GeometryError(f"surfaces in contact: z_piezo={z_piezo}, s_def={s_def} give z={z}")
    return z


# --- CALIBRATION ---

def synthesize_calibration_curves(calib, radius, voltages, z_piezo, noise_sd=0.0, seed=None):
    """
    Deflection-signal curves for a known calibration. The deflection is
    solved self-consistently because it shifts the separation it depends on.
    """
    rng = np.random.default_rng(config.SYNTH_SEED if seed is None else seed)
    k = calib.force_per_signal
    points = []
    for v in voltages:
        v2 = (v - calib.residual_potential_V0) ** 2
        for zp in z_piezo:
            s = 0.0
            for _ in range(200):
                z = actual_separation(zp, s, calib)
                s_new = electrostatic_coefficient(z, radius) * v2 / k
                if abs(s_new - s) <= 1e-15 * max(1.0, abs(s_new)):
                    s = s_new
                    break
                s = s_new
            points.append(CalibrationPoint(float(zp), s, s, float(v)))
    if noise_sd > 0:
        noise = rng.normal(0.0, noise_sd, size=len(points))
        points = [CalibrationPoint(p.z_piezo, p.s_def, p.force_signal + float(e), p.v_applied)
                  for p, e in zip(points, noise)]
    return points


def electrostatic_gradient(z, radius, rel_step=None):
    """dc/dz by a central difference on the exact series."""
    h = (config.CALIB_Z_STEP if rel_step is None else rel_step) * z
    return (electrostatic_coefficient(z + h, radius) - electrostatic_coefficient(z - h, radius)) / (2.0 * h)


# fit works in nm / V / nN so the parameters are of order one
_SCALES = np.array([1e-9, 1e-9, 1.0, 1e-9])


def fit_deflection_calibration(points, radius, initial=None):
    """
    Least-squares fit of k * S_force = c(z) (V - V0)^2 with
    z = z_piezo + m * S_def + z0, for (m, z0, V0, k).

    The Jacobian is analytic in the parameters, so a parameter sitting at
    its bound still gets a usable column.
    """
    points = list(points)
    voltages = {p.v_applied for p in points}
    if len(voltages) < config.CALIB_MIN_VOLTAGES:
        raise FitError(f"calibration needs at least {config.CALIB_MIN_VOLTAGES} distinct voltages, "
                       f"got {len(voltages)}", {"voltages": sorted(voltages)})
    signal = np.array([p.force_signal for p in points])
    if not np.any(signal != 0):
        raise FitError("no electrostatic signal in calibration data", {"points": len(points)})

    zp = np.array([p.z_piezo for p in points])
    sd = np.array([p.s_def for p in points])
    va = np.array([p.v_applied for p in points])
    x0 = np.array(initial if initial is not None else config.CALIB_INITIAL_GUESS, dtype=float) / _SCALES

    def separations(x):
        m, z0, _, _ = x * _SCALES
        return zp + m * sd + z0

    def residuals(x):
        _, _, v0, k = x * _SCALES
        c = np.array([electrostatic_coefficient(zi, radius) for zi in separations(x)])
        return (k * signal - c * (va - v0) ** 2) / 1e-9

    def jacobian(x):
        _, _, v0, _ = x * _SCALES
        z = separations(x)
        c = np.array([electrostatic_coefficient(zi, radius) for zi in z])
        dc = np.array([electrostatic_gradient(zi, radius) for zi in z])
        dv2 = (va - v0) ** 2
        cols = np.column_stack((-dc * dv2 * sd, -dc * dv2, 2.0 * c * (va - v0), signal))
        return cols * _SCALES / 1e-9

    try:
        result = least_squares(
            residuals, x0, jac=jacobian, method="trf",
            bounds=([0.0, 0.0, -np.inf, 0.0], [np.inf, np.inf, np.inf, np.inf]),
            x_scale="jac", xtol=config.CALIB_STEP_TOL, ftol=None, gtol=None,
            max_nfev=config.CALIB_MAX_NFEV)
    except (DomainError, GeometryError) as e:
        raise FitError(f"calibration model left its domain during the fit: {e}")

    diagnostics = {"status": result.status, "message": result.message, "nfev": result.nfev,
                   "cost": float(result.cost)}
    if result.status <= 0:
        raise FitError(f"calibration fit did not converge: {result.message}", diagnostics)

    # rank of the design, judged on unit-normalized columns
    jac = jacobian(result.x)
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        raise FitError("calibration data do not constrain every parameter",
                       {**diagnostics, "column_norms": norms.tolist()})
    rank = np.linalg.matrix_rank(jac / norms, tol=1e-10)
    if rank < len(x0):
        raise FitError(f"calibration design is rank deficient (rank {rank} < {len(x0)})", diagnostics)

    n, p = len(points), len(x0)
    dof = max(n - p, 1)
    s2 = 2.0 * result.cost / dof
    cov = np.linalg.pinv(jac.T @ jac) * s2
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * _SCALES
    m, z0, v0, k = result.x * _SCALES
    calib = ElectrostaticCalib(float(m), float(z0), float(v0), float(k))
    rms = float(np.sqrt(np.mean(result.fun ** 2))) * 1e-9
    log.info("Calibration: m=%.4g nm/unit, z0=%.4g nm, V0=%.4g V, k=%.4g nN/unit (%d evaluations)",
             m * 1e9, z0 * 1e9, v0, k * 1e9, result.nfev)
    return CalibrationFit(
        calib,
        {"deflection_coeff_m": float(std[0]), "contact_separation_z0": float(std[1]),
         "residual_potential_V0": float(std[2]), "force_per_signal": float(std[3])},
        rms, n, int(result.nfev))


# --- RESIDUAL POTENTIALS ---

def fit_parabola_extremum(samples, flat_threshold=None):
    """Vertex abscissa and quadratic coefficient of the least-squares parabola."""
    samples = list(samples)
    v = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if len(set(v.tolist())) < 3:
        raise FitError("parabola fit needs at least 3 distinct voltages", {"voltages": sorted(set(v.tolist()))})
    a2, a1, _ = np.polyfit(v, y, 2)
    if a2 == 0:
        raise FitError("data carry no curvature; the vertex is undefined")
    threshold = config.FLAT_PARABOLA_THRESHOLD if flat_threshold is None else flat_threshold
    if abs(a2) < threshold:
        warnings.warn(f"parabola curvature {a2:.3g} N/V^2 is below {threshold:.3g}", FlatParabolaWarning, stacklevel=2)
    return float(-a1 / (2.0 * a2)), float(a2)


def residual_potential(sweeps, expect="max"):
    """
    Residual potential from voltage sweeps at several separations.
    sweeps maps z -> [(V, dF_tot)]. Returns (mean, standard deviation, per-z vertices).
    """
    vertices = {}
    for z, samples in sorted(sweeps.items()):
        v_star, curvature = fit_parabola_extremum(samples)
        if (expect == "max") != (curvature < 0):
            log.warning("Sweep at z=%.4g m has its extremum of the wrong kind (curvature %.3g)", z, curvature)
        vertices[z] = v_star
    values = np.array(list(vertices.values()))
    spread = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return float(np.mean(values)), spread, vertices


# --- FORCE DIFFERENCES ---

def electric_term(z, pair, v0_light, v0_dark, radius):
    c = electrostatic_coefficient(z, radius)
    return c * ((pair.v_light - v0_light) ** 2 - (pair.v_dark - v0_dark) ** 2)


def invert_delta_total(meas, v0_light, v0_dark, radius):
    return meas.delta_f_tot - electric_term(meas.z, meas.pair, v0_light, v0_dark, radius)


def combine_errors(random, systematic, confidence=None):
    """Random and systematic errors at the same confidence, combined in quadrature."""
    if random < 0 or systematic < 0:
        raise DomainError("errors must be non-negative")
    return math.hypot(random, systematic)


def student_t_factor(confidence, dof):
    return float(stats.t.ppf(0.5 * (1.0 + confidence), dof))


def aggregate_statistics(values, confidence=None, systematic=None, z=float("nan")):
    confidence = config.CONFIDENCE if confidence is None else confidence
    systematic = config.SYSTEMATIC_ERROR_N if systematic is None else systematic
    values = np.asarray(list(values), dtype=float)
    if values.size < 2:
        raise StatisticsError(f"statistics need at least 2 values, got {values.size}")
    if not 0 < confidence < 1:
        raise StatisticsError(f"confidence must lie in (0, 1), got {confidence}")
    if systematic < 0:
        raise StatisticsError("systematic error must be non-negative")

    n = values.size
    mean = float(np.mean(values))
    if np.ptp(values) == 0:
        s = 0.0
    else:
        s = float(np.std(values, ddof=1)) / math.sqrt(n)
    dof = n - 1
    t_factor = student_t_factor(confidence, dof)
    random = s * t_factor
    total = combine_errors(random, systematic, confidence)
    return StatSummary(z, mean, s, dof, t_factor, random, systematic, total, confidence)


def analyze_measurements(measurements, v0_light=None, v0_dark=None, radius=None,
                         confidence=None, systematic=None):
    """dF_d statistics per separation, all voltage pairs weighted equally."""
    v0_light = config.V0_LIGHT_V if v0_light is None else v0_light
    v0_dark = config.V0_DARK_V if v0_dark is None else v0_dark
    radius = config.SPHERE_RADIUS_M if radius is None else radius
    by_z = {}
    for meas in measurements:
        by_z.setdefault(meas.z, []).append(invert_delta_total(meas, v0_light, v0_dark, radius))
    summaries = []
    for z in sorted(by_z):
        summaries.append(aggregate_statistics(by_z[z], confidence, systematic, z=z))
    log.info("Reduced %d separations", len(summaries))
    return summaries


# --- SYNTHETIC DATA ---

def default_voltage_pairs(count=None, v0_light=None, v0_dark=None, span=0.4):
    count = config.SYNTH_PAIRS if count is None else count
    v0_light = config.V0_LIGHT_V if v0_light is None else v0_light
    v0_dark = config.V0_DARK_V if v0_dark is None else v0_dark
    # light sweeps the full span, dark half of it in the opposite direction
    offsets = np.linspace(-span, span, count)
    return [VoltagePair(float(v0_light + offsets[i]), float(v0_dark + 0.5 * offsets[count - 1 - i]))
            for i in range(count)]


def synthesize_measurements(truth, pairs, residuals, noise_sd, seed, radius=None):
    """Lock-in readings for every (z, pair) built from a known dF_d curve."""
    if truth.kind is not CurveKind.FORCE_DIFFERENCE:
        raise DomainError(f"synthetic measurements need a ForceDifference curve, got {truth.kind.value}")
    radius = config.SPHERE_RADIUS_M if radius is None else radius
    v0_light, v0_dark = residuals
    pairs = list(pairs)
    rng = np.random.default_rng(seed)
    if noise_sd > 0:
        noise = rng.normal(0.0, noise_sd, size=(len(truth), len(pairs)))
    else:
        noise = np.zeros((len(truth), len(pairs)))
    out = []
    for i, (z, delta_fd) in enumerate(truth.points):
        for k, pair in enumerate(pairs):
            total = electric_term(z, pair, v0_light, v0_dark, radius) + delta_fd + float(noise[i, k])
            out.append(DeltaMeasurement(z, total, pair))
    return out


# --- THEORY COMPARISON ---

def compare_with_theory(summaries, theory, theory_rel_error=0.0):
    """
    A theory curve is excluded at z when it lies outside the measured mean's
    combined experimental and theoretical error.
    """
    z_th, v_th = theory.z, theory.values
    out = []
    for s in summaries:
        if not z_th[0] <= s.z <= z_th[-1]:
            raise DomainError(f"theory curve does not cover z={s.z}")
        th = float(np.interp(s.z, z_th, v_th))
        th_err = theory_rel_error * abs(th)
        bound = math.hypot(s.total_error, th_err)
        out.append(ModelComparison(s.z, s.mean_delta_fd, th, s.total_error, th_err,
                                   abs(s.mean_delta_fd - th) > bound))
    return out


def exclusion_fraction(comparisons, z_min=0.0, z_max=math.inf):
    selected = [c for c in comparisons if z_min <= c.z <= z_max]
    if not selected:
        return 0.0
    return sum(c.excluded for c in selected) / len(selected)


# --- FILES ---

def read_measurements(path):
    out = []
    for lineno, (z, dft, vl, vd) in read_numeric_csv(path, MEASUREMENT_HEADER):
        try:
            out.append(DeltaMeasurement(z, dft, VoltagePair(vl, vd)))
        except DomainError as e:
            raise InvalidInputError(str(e), path=path, line=lineno)
    return out


def write_measurements(path, measurements, comments=()):
    rows = [(m.z, m.delta_f_tot, m.pair.v_light, m.pair.v_dark) for m in measurements]
    atomic_write_text(path, render_csv(MEASUREMENT_HEADER, rows, comments))


def read_calibration_curves(path):
    return [CalibrationPoint(*values) for _, values in read_numeric_csv(path, CALIBRATION_HEADER)]


def write_calibration_curves(path, points, comments=()):
    rows = [(p.z_piezo, p.s_def, p.force_signal, p.v_applied) for p in points]
    atomic_write_text(path, render_csv(CALIBRATION_HEADER, rows, comments))


def write_summaries(path, summaries, comments=()):
    rows = [(s.z, s.mean_delta_fd, s.random_error, s.systematic_error, s.total_error) for s in summaries]
    atomic_write_text(path, render_csv(SUMMARY_HEADER, rows, comments))
