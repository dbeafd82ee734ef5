"""
Dielectric permittivity along the imaginary frequency axis.

Models are immutable. A model is a base (tabulated optical data pushed
through the Kramers-Kronig relation, a single-oscillator fit, or an ideal
conductor) plus any number of Drude carrier terms, tagged with the class
that decides its reflection coefficients at zero frequency.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import quad

import config
import reference
from errors import ConfigurationError, DomainError, InvalidInputError
from utils import atomic_write_text, log_grid, read_numeric_csv, read_text_lines, render_csv

log = logging.getLogger("MATERIALS")

OPTICAL_TABLE_HEADER = ("omega_rad_s", "eps1", "eps2")


# --- TYPES ---

@dataclass(frozen=True)
class OpticalDataTable:
    rows: tuple
    source: str = field(default="", compare=False)
    _omega: np.ndarray = field(init=False, repr=False, compare=False)
    _eps2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple((float(w), float(e1), float(e2)) for w, e1, e2 in self.rows)
        if len(rows) < 2:
            raise InvalidInputError("optical table needs at least 2 rows", path=self.source or None)
        omega = np.array([r[0] for r in rows])
        eps2 = np.array([r[2] for r in rows])
        if not np.all(omega > 0):
            raise InvalidInputError("omega must be positive", path=self.source or None)
        if not np.all(np.diff(omega) > 0):
            raise InvalidInputError("omega must be strictly increasing", path=self.source or None)
        if not np.all(eps2 >= 0):
            raise InvalidInputError("eps2 must be non-negative (passive medium)", path=self.source or None)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_omega", omega)
        object.__setattr__(self, "_eps2", eps2)

    @property
    def omega_min(self):
        return self.rows[0][0]

    @property
    def omega_max(self):
        return self.rows[-1][0]

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class DrudeParams:
    omega_p: float
    gamma: float

    def __post_init__(self):
        if not (self.omega_p > 0 and self.gamma > 0):
            raise DomainError(f"Drude parameters must be positive (omega_p={self.omega_p}, gamma={self.gamma})")


@dataclass(frozen=True)
class CarrierSpec:
    density: float      # 1/m^3
    mass_ratio: float

    def __post_init__(self):
        if self.density < 0:
            raise DomainError(f"carrier density must be >= 0, got {self.density}")
        if not 0 < self.mass_ratio < 1:
            raise DomainError(f"effective mass ratio must lie in (0, 1), got {self.mass_ratio}")


@dataclass(frozen=True)
class IlluminationSpec:
    absorbed_power: float
    lifetime: float
    photon_omega: float
    thickness: float
    gauss_width: float

    def __post_init__(self):
        for name in ("absorbed_power", "lifetime", "photon_omega", "thickness", "gauss_width"):
            if not getattr(self, name) > 0:
                raise DomainError(f"illumination {name} must be positive, got {getattr(self, name)}")


class ZeroFrequencyClass(Enum):
    DIELECTRIC = "Dielectric"
    DRUDE_LIKE = "DrudeLike"
    PERFECT_REFLECTOR = "PerfectReflector"


@dataclass(frozen=True)
class Tabulated:
    table: OpticalDataTable
    # None: hold eps2 at its first tabulated value below the table.
    low_tail: DrudeParams = None


@dataclass(frozen=True)
class LorentzFit:
    eps_inf: float
    eps_static: float
    omega0: float

    def __post_init__(self):
        if not self.eps_static > self.eps_inf >= 1:
            raise DomainError(f"need eps_static > eps_inf >= 1, got {self.eps_static}, {self.eps_inf}")
        if not self.omega0 > 0:
            raise DomainError(f"omega0 must be positive, got {self.omega0}")


@dataclass(frozen=True)
class IdealConductor:
    pass


@dataclass(frozen=True)
class PermittivityModel:
    base: object
    drude_terms: tuple = ()
    zero_freq_class: ZeroFrequencyClass = ZeroFrequencyClass.DIELECTRIC
    label: str = ""
    # epsilon(0) used for the zero-frequency TM coefficient of dielectrics
    static_value: float = None

    def __post_init__(self):
        object.__setattr__(self, "drude_terms", tuple(self.drude_terms))
        if not isinstance(self.base, (Tabulated, LorentzFit, IdealConductor)):
            raise ConfigurationError(f"unsupported permittivity base {type(self.base).__name__}")
        if self.drude_terms and self.zero_freq_class is not ZeroFrequencyClass.DRUDE_LIKE:
            raise ConfigurationError("models with Drude terms must be DrudeLike at zero frequency")
        if isinstance(self.base, IdealConductor) != (self.zero_freq_class is ZeroFrequencyClass.PERFECT_REFLECTOR):
            raise ConfigurationError("ideal conductor base and PerfectReflector class go together")
        if self.static_value is not None and not self.static_value >= 1:
            raise DomainError(f"static permittivity must be >= 1, got {self.static_value}")


class Profile(Enum):
    GOLD_TABULATED = "GoldTabulated"
    SI_DARK_DIELECTRIC = "SiDarkDielectric"
    SI_DARK_WITH_DC = "SiDarkWithDc"
    SI_ILLUMINATED = "SiIlluminated"
    PERFECT_REFLECTOR = "PerfectReflector"


@dataclass(frozen=True)
class ProfileInputs:
    table: OpticalDataTable = None
    lorentz: LorentzFit = None
    drude: tuple = ()
    low_tail: DrudeParams = None
    static_value: float = None


# --- CARRIER PHYSICS ---

def plasma_frequency(spec):
    """omega_p = sqrt(n e^2 / (m* eps0)) in rad/s."""
    if not spec.density > 0:
        raise DomainError(f"plasma frequency needs a positive carrier density, got {spec.density}")
    m_eff = spec.mass_ratio * reference.M_ELECTRON
    return math.sqrt(spec.density * reference.E_CHARGE ** 2 / (m_eff * reference.EPS0))


def carrier_density_from_illumination(spec):
    """Steady-state pair density n = 4 P tau / (hbar omega d pi w^2), 1/m^3."""
    for name in ("absorbed_power", "lifetime", "photon_omega", "thickness", "gauss_width"):
        if not getattr(spec, name) > 0:
            raise DomainError(f"illumination {name} must be positive")
    photon_energy = reference.HBAR * spec.photon_omega
    volume = spec.thickness * math.pi * spec.gauss_width ** 2
    return 4.0 * spec.absorbed_power * spec.lifetime / (photon_energy * volume)


# --- EVALUATION ---

def drude_term(params, xi):
    if not xi > 0:
        raise DomainError(f"Drude term is evaluated at xi > 0 only, got {xi}")
    return params.omega_p ** 2 / (xi * (xi + params.gamma))


def lorentz_permittivity(fit, xi):
    if xi < 0:
        raise DomainError(f"xi must be >= 0, got {xi}")
    return fit.eps_inf + (fit.eps_static - fit.eps_inf) / (1.0 + (xi / fit.omega0) ** 2)


def _atan_excess(u):
    """(u - arctan u) / u^3, free of cancellation for small u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u < 0.1
    us = u[small] ** 2
    series = np.zeros_like(us)
    for k in range(10, -1, -1):
        series = series * -us + 1.0 / (2 * k + 3)
    out[small] = series
    ub = u[~small]
    out[~small] = (ub - np.arctan(ub)) / ub ** 3
    return out


def _segment_integral(omega, eps2, xi):
    # exact integral of omega*eps2(omega)/(omega^2+xi^2) for piecewise-linear eps2
    w1, w2 = omega[:-1], omega[1:]
    dw = w2 - w1
    slope = np.diff(eps2) / dw
    intercept = eps2[:-1] - slope * w1
    log_part = 0.5 * intercept * np.log1p(dw * (w1 + w2) / (w1 * w1 + xi * xi))
    # int w^2/(w^2+xi^2) dw = xi * [g(w/xi)], g(u) = u - arctan u
    u1, u2 = w1 / xi, w2 / xi
    g1 = u1 ** 3 * _atan_excess(u1)
    g2 = u2 ** 3 * _atan_excess(u2)
    atan_part = slope * xi * (g2 - g1)
    return float(np.sum(log_part + atan_part))


def _high_tail(e_hi, w_hi, xi):
    """int_{w_hi}^inf e_hi (w_hi/w)^3 w/(w^2+xi^2) dw in closed form."""
    t = xi / w_hi
    return e_hi * float(_atan_excess(np.array([t]))[0])


def kramers_kronig_transform(table, xi, low_tail=None, rel_tol=None):
    """
    epsilon(i xi) = 1 + (2/pi) int_0^inf omega eps2(omega) / (omega^2 + xi^2) d omega.

    Inside the table eps2 is interpolated linearly and integrated exactly.
    Below the table eps2 is held at its first value, or follows the Drude
    tail given by low_tail; above it eps2 falls off as omega^-3 and is integrated in closed form.
    The Drude low tail uses adaptive quadrature split at omega = xi.
    """
    if not isinstance(table, OpticalDataTable):
        raise InvalidInputError("kramers_kronig_transform needs an OpticalDataTable")
    if not xi > 0:
        raise DomainError(f"Kramers-Kronig transform is evaluated at xi > 0 only, got {xi}")
    rel_tol = config.KK_REL_TOL if rel_tol is None else rel_tol
    omega, eps2 = table._omega, table._eps2
    w_lo, w_hi = omega[0], omega[-1]

    inner = _segment_integral(omega, eps2, xi)

    if low_tail is None:
        low = 0.5 * eps2[0] * math.log1p((w_lo / xi) ** 2)
    else:
        wp2g = low_tail.omega_p ** 2 * low_tail.gamma
        g2 = low_tail.gamma ** 2

        def f_low(w):
            return wp2g / ((w * w + g2) * (w * w + xi * xi))

        low = _split_quad(f_low, 0.0, w_lo, xi, rel_tol)

    high = _high_tail(eps2[-1], w_hi, xi) if eps2[-1] > 0 else 0.0

    return 1.0 + (2.0 / math.pi) * (low + inner + high)


def _split_quad(f, a, b, split, rel_tol):
    limit = config.KK_QUAD_LIMIT
    if a < split < b:
        left, _ = quad(f, a, split, epsabs=0.0, epsrel=rel_tol, limit=limit)
        right, _ = quad(f, split, b, epsabs=0.0, epsrel=rel_tol, limit=limit)
        return left + right
    value, _ = quad(f, a, b, epsabs=0.0, epsrel=rel_tol, limit=limit)
    return value


def base_permittivity(model, xi):
    base = model.base
    if isinstance(base, IdealConductor):
        return math.inf
    if not xi > 0:
        raise DomainError(f"permittivity is evaluated at xi > 0 only, got {xi}")
    if isinstance(base, LorentzFit):
        return lorentz_permittivity(base, xi)
    return kramers_kronig_transform(base.table, xi, low_tail=base.low_tail)


def eval_permittivity(model, xi):
    if not xi > 0:
        raise DomainError(f"permittivity is evaluated at xi > 0 only, got {xi}")
    value = base_permittivity(model, xi)
    for params in model.drude_terms:
        value += drude_term(params, xi)
    return value


def static_permittivity(model):
    """epsilon(0) of the base, as used by dielectric zero-frequency coefficients."""
    if model.static_value is not None:
        return model.static_value
    base = model.base
    if isinstance(base, LorentzFit):
        return base.eps_static
    if isinstance(base, IdealConductor):
        return math.inf
    # eps2 -> 0 at low frequency for a dielectric; evaluate well below the table
    return kramers_kronig_transform(base.table, base.table.omega_min * 1e-3, low_tail=base.low_tail)


def is_conducting(model):
    return model.zero_freq_class is not ZeroFrequencyClass.DIELECTRIC


# --- OPTICAL TABLES ---

def load_optical_table(path):
    rows = read_numeric_csv(path, OPTICAL_TABLE_HEADER)
    prev = None
    for lineno, (w, _e1, e2) in rows:
        if w <= 0:
            raise InvalidInputError(f"omega must be positive, got {w}", path=path, line=lineno)
        if prev is not None and w <= prev:
            raise InvalidInputError("omega must be strictly increasing", path=path, line=lineno)
        if e2 < 0:
            raise InvalidInputError(f"eps2 must be non-negative, got {e2}", path=path, line=lineno)
        prev = w
    log.debug("Loaded %d optical rows from %s", len(rows), path)
    return OpticalDataTable(tuple(values for _, values in rows), source=str(path))


def write_optical_table(path, table, comments=()):
    atomic_write_text(path, render_csv(OPTICAL_TABLE_HEADER, table.rows, comments))


def drude_optical_table(params, omega_min=None, omega_max=None, points=None):
    """Log-spaced table of the Drude dielectric function on the real axis."""
    omega_min = config.GOLD_TABLE_OMEGA_MIN if omega_min is None else omega_min
    omega_max = config.GOLD_TABLE_OMEGA_MAX if omega_max is None else omega_max
    points = config.GOLD_TABLE_POINTS if points is None else points
    wp2, g = params.omega_p ** 2, params.gamma
    rows = []
    for w in log_grid(omega_min, omega_max, points):
        eps1 = 1.0 - wp2 / (w * w + g * g)
        eps2 = wp2 * g / (w * (w * w + g * g))
        rows.append((w, eps1, eps2))
    return OpticalDataTable(tuple(rows), source=f"drude(omega_p={params.omega_p:.4g}, gamma={params.gamma:.4g})")


# --- PROFILES ---

def build_material_profile(profile, inputs):
    profile = Profile(profile)
    if profile is Profile.PERFECT_REFLECTOR:
        return PermittivityModel(IdealConductor(), (), ZeroFrequencyClass.PERFECT_REFLECTOR, label=profile.value)

    drude = tuple(inputs.drude or ())

    if profile is Profile.GOLD_TABULATED:
        if inputs.table is None:
            raise ConfigurationError("GoldTabulated needs an optical data table")
        if inputs.low_tail is None:
            log.warning("GoldTabulated without a Drude low-frequency tail; holding eps2 below the table")
        return PermittivityModel(Tabulated(inputs.table, inputs.low_tail), (),
                                 ZeroFrequencyClass.DRUDE_LIKE, label=profile.value,
                                 static_value=inputs.static_value)

    if inputs.table is not None:
        base = Tabulated(inputs.table, inputs.low_tail)
    elif inputs.lorentz is not None:
        base = inputs.lorentz
    else:
        raise ConfigurationError(f"{profile.value} needs an optical table or Lorentz parameters")

    expected = {
        Profile.SI_DARK_DIELECTRIC: 0,
        Profile.SI_DARK_WITH_DC: 1,
        Profile.SI_ILLUMINATED: 2,
    }[profile]
    if len(drude) != expected:
        raise ConfigurationError(
            f"{profile.value} takes {expected} Drude term(s), got {len(drude)}")

    zero_class = ZeroFrequencyClass.DIELECTRIC if expected == 0 else ZeroFrequencyClass.DRUDE_LIKE
    return PermittivityModel(base, drude, zero_class, label=profile.value, static_value=inputs.static_value)


def silicon_lorentz_fit():
    si = reference.SILICON
    return LorentzFit(si["eps_inf"], si["eps_static"], si["omega0_rad_s"])


def gold_drude_params():
    return DrudeParams(reference.GOLD["omega_p_rad_s"], reference.GOLD["gamma_rad_s"])


def experiment_drude_parameters():
    """Electron, hole and intrinsic-hole Drude parameters of the experiment."""
    si, light = reference.SILICON, reference.ILLUMINATION
    n = carrier_density_from_illumination(IlluminationSpec(
        light["absorbed_power_W"], light["lifetime_s"], light["photon_omega_rad_s"],
        light["thickness_m"], light["gauss_width_m"]))
    electrons = DrudeParams(plasma_frequency(CarrierSpec(n, si["mass_ratio_electrons"])),
                            si["gamma_electrons_rad_s"])
    holes = DrudeParams(plasma_frequency(CarrierSpec(n, si["mass_ratio_holes"])),
                        si["gamma_holes_rad_s"])
    intrinsic = DrudeParams(plasma_frequency(CarrierSpec(si["intrinsic_density_m3"], si["mass_ratio_holes"])),
                            si["gamma_holes_rad_s"])
    return {"density": n, "electrons": electrons, "holes": holes, "intrinsic_holes": intrinsic}


def experiment_profiles(si_table=None, gold_table=None):
    """The four material models of the experiment, keyed by Profile."""
    carriers = experiment_drude_parameters()
    si_inputs = dict(table=si_table, lorentz=None if si_table is not None else silicon_lorentz_fit(),
                     static_value=reference.SILICON["eps_static"])
    gold = gold_drude_params()
    if gold_table is None:
        gold_table = drude_optical_table(gold)
    return {
        Profile.GOLD_TABULATED: build_material_profile(
            Profile.GOLD_TABULATED, ProfileInputs(table=gold_table, low_tail=gold)),
        Profile.SI_DARK_DIELECTRIC: build_material_profile(
            Profile.SI_DARK_DIELECTRIC, ProfileInputs(**si_inputs)),
        Profile.SI_DARK_WITH_DC: build_material_profile(
            Profile.SI_DARK_WITH_DC, ProfileInputs(drude=(carriers["intrinsic_holes"],), **si_inputs)),
        Profile.SI_ILLUMINATED: build_material_profile(
            Profile.SI_ILLUMINATED, ProfileInputs(drude=(carriers["electrons"], carriers["holes"]), **si_inputs)),
    }


def _drude_from_json(obj, where):
    try:
        return DrudeParams(float(obj["omega_p"]), float(obj["gamma"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"{where}: bad Drude entry {obj!r} ({e})")


def resolve_profile_path(name_or_path):
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = os.path.join(config.CONFIG_DIR, name_or_path)
    if not candidate.endswith(".json"):
        candidate += ".json"
    if os.path.exists(candidate):
        return candidate
    raise ConfigurationError(f"material profile {name_or_path!r} not found (looked in {config.CONFIG_DIR})")


def load_material_profile(name_or_path):
    """
    Build a model from a JSON document:
    {"profile": "...", "lorentz": {...}?, "drude": [{"omega_p": .., "gamma": ..}]?,
     "table_path": "..."?, "low_tail": {...}?, "eps_static": ..?}
    """
    path = resolve_profile_path(name_or_path)
    try:
        doc = json.loads("\n".join(read_text_lines(path)))
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"invalid JSON ({e.msg})", path=path, line=e.lineno)

    if "profile" not in doc:
        raise ConfigurationError(f"{path}: missing 'profile'")
    try:
        profile = Profile(doc["profile"])
    except ValueError:
        raise ConfigurationError(f"{path}: unknown profile {doc['profile']!r}")

    table = None
    if doc.get("table_path"):
        table_path = doc["table_path"]
        if not os.path.isabs(table_path):
            table_path = os.path.join(os.path.dirname(os.path.abspath(path)), table_path)
        table = load_optical_table(table_path)

    lorentz = None
    if doc.get("lorentz") is not None:
        lz = doc["lorentz"]
        try:
            lorentz = LorentzFit(float(lz["eps_inf"]), float(lz["eps_static"]), float(lz["omega0"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"{path}: bad Lorentz parameters ({e})")

    drude = tuple(_drude_from_json(d, path) for d in doc.get("drude") or ())
    low_tail = _drude_from_json(doc["low_tail"], path) if doc.get("low_tail") else None
    static_value = doc.get("eps_static")
    model = build_material_profile(profile, ProfileInputs(
        table=table, lorentz=lorentz, drude=drude, low_tail=low_tail,
        static_value=None if static_value is None else float(static_value)))
    log.info("Loaded profile %s from %s", profile.value, path)
    return model


def describe_model(model):
    """JSON-ready summary used in output metadata."""
    base = model.base
    if isinstance(base, Tabulated):
        base_desc = {"kind": "tabulated", "rows": len(base.table), "source": base.table.source,
                     "low_tail": None if base.low_tail is None else
                     {"omega_p": base.low_tail.omega_p, "gamma": base.low_tail.gamma}}
    elif isinstance(base, LorentzFit):
        base_desc = {"kind": "lorentz", "eps_inf": base.eps_inf, "eps_static": base.eps_static,
                     "omega0": base.omega0}
    else:
        base_desc = {"kind": "ideal"}
    return {
        "label": model.label,
        "base": base_desc,
        "drude": [{"omega_p": d.omega_p, "gamma": d.gamma} for d in model.drude_terms],
        "zero_freq_class": model.zero_freq_class.value,
        "eps_static": model.static_value,
    }
