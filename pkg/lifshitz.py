"""
Finite-temperature Lifshitz free energy between two half-spaces and the
sphere-plate force in the proximity force approximation.

    E(z, T) = (k_B T / 2 pi) sum'_j int k dk sum_{TM,TE} ln(1 - r1 r2 exp(-2 q_j z))

The k integral is done in y = 2 q_j z, so every Matsubara term reads
int_{y_j}^{y_j + y_cutoff} y ln(1 - r1 r2 e^-y) dy / (4 z^2) with y_j = 2 xi_j z / c.
"""
import concurrent.futures as futures
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import zeta

import config
import reference
from errors import ConfigurationError, ConvergenceError, DomainError, GeometryError, InvalidInputError, PfaValidityWarning
from materials import ZeroFrequencyClass, describe_model, eval_permittivity, static_permittivity
from utils import atomic_write_text, canonical_json, read_numeric_csv, read_text_lines, render_csv

log = logging.getLogger("LIFSHITZ")

# Matsubara terms integrated together in one adaptive pass
TERM_BLOCK = 32


# --- TYPES ---

@dataclass(frozen=True)
class LifshitzConfig:
    temperature: float = config.TEMPERATURE_K
    matsubara_rel_tol: float = config.MATSUBARA_REL_TOL
    matsubara_max_terms: int = config.MATSUBARA_MAX_TERMS
    quad_rel_tol: float = config.QUAD_REL_TOL
    y_cutoff: float = config.Y_CUTOFF

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        for name in ("matsubara_rel_tol", "quad_rel_tol"):
            tol = getattr(self, name)
            if not 0 < tol <= 1e-2:
                raise ConfigurationError(f"{name} must lie in (0, 1e-2], got {tol}")
        if self.matsubara_max_terms < 100:
            raise ConfigurationError(f"matsubara_max_terms must be >= 100, got {self.matsubara_max_terms}")
        if self.y_cutoff < 40:
            raise ConfigurationError(f"y_cutoff must be >= 40, got {self.y_cutoff}")


@dataclass(frozen=True)
class HalfSpace:
    model: object
    label: str = ""
    # overrides r_TE at zero frequency (prescriptions for metals differ)
    r_te0: float = None

    def __post_init__(self):
        if self.r_te0 is not None and not 0.0 <= self.r_te0 <= 1.0:
            raise ConfigurationError(f"r_te0 override must lie in [0, 1], got {self.r_te0}")

    @property
    def name(self):
        return self.label or self.model.label


@dataclass(frozen=True)
class SpherePlateGeometry:
    radius: float
    separation: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"sphere radius must be positive, got {self.radius}")
        if not self.separation > 0:
            raise GeometryError(f"separation must be positive, got {self.separation}")
        if self.separation / self.radius >= config.PFA_MAX_RATIO:
            warnings.warn(
                f"z/R = {self.separation / self.radius:.3g} is outside the proximity force regime",
                PfaValidityWarning, stacklevel=2)


class CurveKind(Enum):
    FORCE = "Force"
    FORCE_DIFFERENCE = "ForceDifference"
    FREE_ENERGY_PER_AREA = "FreeEnergyPerArea"


VALUE_COLUMNS = {
    CurveKind.FORCE: "value_N",
    CurveKind.FORCE_DIFFERENCE: "value_N",
    CurveKind.FREE_ENERGY_PER_AREA: "value_J_m2",
}


@dataclass(frozen=True)
class ForceCurve:
    points: tuple
    kind: CurveKind
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        points = tuple((float(z), float(v)) for z, v in self.points)
        for (z0, _), (z1, _) in zip(points, points[1:]):
            if not z1 > z0:
                raise DomainError("curve separations must be strictly increasing")
        if self.kind is CurveKind.FORCE and any(v >= 0 for _, v in points):
            raise DomainError("Force curves hold attractive (negative) values only")
        object.__setattr__(self, "points", points)

    @property
    def z(self):
        return np.array([p[0] for p in self.points])

    @property
    def values(self):
        return np.array([p[1] for p in self.points])

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class MatsubaraTerm:
    j: int
    xi: float
    weight: float
    tm: float   # dimensionless y-integrals, unweighted
    te: float

    @property
    def value(self):
        return self.weight * (self.tm + self.te)


# --- SCALAR OPERATIONS ---

def matsubara_frequency(j, temperature):
    if j < 0 or int(j) != j:
        raise DomainError(f"Matsubara index must be a non-negative integer, got {j}")
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return 2.0 * math.pi * reference.K_B * temperature * j / reference.HBAR


def fresnel_coefficients(eps, xi, kperp):
    """(r_TM, r_TE) of vacuum / medium at imaginary frequency xi."""
    if not eps >= 1:
        raise DomainError(f"permittivity along the imaginary axis must be >= 1, got {eps}")
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    if kperp < 0:
        raise DomainError(f"kperp must be >= 0, got {kperp}")
    if math.isinf(eps):
        return 1.0, -1.0
    k0 = xi / reference.C_LIGHT
    q = math.sqrt(kperp * kperp + k0 * k0)
    k = math.sqrt(kperp * kperp + eps * k0 * k0)
    return (eps * q - k) / (eps * q + k), (q - k) / (q + k)


def zero_frequency_coefficients(hs):
    cls = hs.model.zero_freq_class
    if cls is ZeroFrequencyClass.DIELECTRIC:
        e0 = static_permittivity(hs.model)
        r_tm, r_te = (e0 - 1.0) / (e0 + 1.0), 0.0
    elif cls is ZeroFrequencyClass.DRUDE_LIKE:
        r_tm, r_te = 1.0, 0.0
    else:
        r_tm, r_te = 1.0, 1.0
    if hs.r_te0 is not None:
        r_te = hs.r_te0
    return r_tm, r_te


def ideal_metal_reference(z, temperature=0.0):
    """Free energy per area between ideal metals, J/m^2 (closed-form series)."""
    if not z > 0:
        raise DomainError(f"separation must be positive, got {z}")
    if temperature < 0:
        raise DomainError(f"temperature must be >= 0, got {temperature}")
    zero_t = reference.ideal_casimir_energy(z)
    if temperature == 0:
        return zero_t
    a = 2.0 * matsubara_frequency(1, temperature) * z / reference.C_LIGHT
    if a < 1e-6:
        return zero_t
    # int_{y0}^inf y ln(1-e^-y) dy = -sum_n e^{-n y0} (y0/n^2 + 1/n^3), summed over j in closed form
    n = np.arange(1, int(math.ceil(50.0 / a)) + 2, dtype=float)
    x = np.exp(-n * a)
    one_minus = -np.expm1(-n * a)
    series = np.sum((a / n ** 2) * x / one_minus ** 2 + (1.0 / n ** 3) * x / one_minus)
    per_pol = -0.5 * zeta(3) - series
    prefactor = reference.K_B * temperature / (2.0 * math.pi) / (4.0 * z * z)
    return prefactor * 2.0 * per_pol


# --- EVALUATOR ---

class LifshitzEvaluator:
    """
    Evaluates the Matsubara series for one pair of half-spaces.

    Permittivities at the Matsubara frequencies do not depend on z, so they
    are computed once per index and reused across separations.
    """

    def __init__(self, hs1, hs2, cfg):
        self.hs1 = hs1
        self.hs2 = hs2
        self.cfg = cfg
        self.zero = (zero_frequency_coefficients(hs1), zero_frequency_coefficients(hs2))
        self._ideal = (hs1.model.zero_freq_class is ZeroFrequencyClass.PERFECT_REFLECTOR,
                       hs2.model.zero_freq_class is ZeroFrequencyClass.PERFECT_REFLECTOR)
        self._xi = []
        self._eps1 = []
        self._eps2 = []

    def _permittivities(self, j_stop):
        T = self.cfg.temperature
        while len(self._xi) < j_stop - 1:
            j = len(self._xi) + 1
            xi = matsubara_frequency(j, T)
            self._xi.append(xi)
            self._eps1.append(1.0 if self._ideal[0] else eval_permittivity(self.hs1.model, xi))
            self._eps2.append(1.0 if self._ideal[1] else eval_permittivity(self.hs2.model, xi))
        return (np.array(self._xi[: j_stop - 1]), np.array(self._eps1[: j_stop - 1]),
                np.array(self._eps2[: j_stop - 1]))

    def _zero_term(self):
        (tm1, te1), (tm2, te2) = self.zero
        cut, tol = self.cfg.y_cutoff, self.cfg.quad_rel_tol

        def integral(product):
            if product == 0.0:
                return 0.0
            value, _ = quad(lambda y: y * math.log1p(-product * math.exp(-y)), 0.0, cut,
                            epsabs=0.0, epsrel=tol, limit=200)
            return value

        return MatsubaraTerm(0, 0.0, 0.5, integral(tm1 * tm2), integral(te1 * te2))

    def _block(self, j_start, j_stop, z):
        xi_all, eps1_all, eps2_all = self._permittivities(j_stop)
        xi = xi_all[j_start - 1:]
        eps1 = eps1_all[j_start - 1:]
        eps2 = eps2_all[j_start - 1:]
        y0 = 2.0 * xi * z / reference.C_LIGHT
        y0sq = y0 * y0
        ideal1, ideal2 = self._ideal
        count = len(xi)

        def reflect(eps, y, ideal):
            if ideal:
                return np.ones_like(y), -np.ones_like(y)
            s = np.sqrt(y * y + (eps - 1.0) * y0sq)
            return (eps * y - s) / (eps * y + s), (y - s) / (y + s)

        def integrand(t):
            y = y0 + t
            rtm1, rte1 = reflect(eps1, y, ideal1)
            rtm2, rte2 = reflect(eps2, y, ideal2)
            damp = np.exp(-y)
            return np.concatenate((y * np.log1p(-rtm1 * rtm2 * damp),
                                   y * np.log1p(-rte1 * rte2 * damp)))

        res, err, info = quad_vec(integrand, 0.0, self.cfg.y_cutoff, epsabs=1e-200,
                                  epsrel=self.cfg.quad_rel_tol, norm="max", full_output=True)
        if not info.success:
            log.warning("k-integral for terms %d..%d at z=%.4g m stopped early (est. error %.3g)",
                        j_start, j_stop - 1, z, err)
        return [MatsubaraTerm(j_start + i, float(xi[i]), 1.0, float(res[i]), float(res[count + i]))
                for i in range(count)]

    def terms(self, z):
        if not z > 0:
            raise DomainError(f"separation must be positive, got {z}")
        cfg = self.cfg
        first = self._zero_term()
        out = [first]
        total = first.value
        quiet = 0
        prev = 0.0
        j = 1
        while j < cfg.matsubara_max_terms:
            stop = min(j + TERM_BLOCK, cfg.matsubara_max_terms)
            for term in self._block(j, stop, z):
                out.append(term)
                total += term.value
                # terms fall off geometrically; the unsummed rest is about t r / (1 - r)
                ratio = term.value / prev if prev != 0.0 else 0.0
                prev = term.value
                if ratio < 1.0 and abs(term.value) <= cfg.matsubara_rel_tol * (1.0 - max(ratio, 0.0)) * abs(total):
                    quiet += 1
                    if quiet >= 3:
                        return out
                else:
                    quiet = 0
            j = stop
        pref = self.prefactor(z)
        raise ConvergenceError(
            f"Matsubara sum at z={z:.6g} m not converged after {len(out)} terms",
            partial=pref * total, last_term=pref * out[-1].value, terms=len(out), z=z)

    def prefactor(self, z):
        return reference.K_B * self.cfg.temperature / (2.0 * math.pi) / (4.0 * z * z)

    def free_energy(self, z):
        terms = self.terms(z)
        value = self.prefactor(z) * math.fsum(t.value for t in terms)
        log.debug("E(z=%.4g m) = %.6e J/m^2 from %d terms", z, value, len(terms))
        return value


# --- PUBLIC OPERATIONS ---

def matsubara_terms(z, hs1, hs2, cfg):
    return LifshitzEvaluator(hs1, hs2, cfg).terms(z)


def free_energy_per_area(z, hs1, hs2, cfg):
    return LifshitzEvaluator(hs1, hs2, cfg).free_energy(z)


def sphere_plate_force(geom, hs_sphere, hs_plate, cfg):
    return 2.0 * math.pi * geom.radius * free_energy_per_area(geom.separation, hs_sphere, hs_plate, cfg)


def force_difference(geom, hs_sphere, hs_plate_light, hs_plate_dark, cfg):
    """F_light - F_dark for the same sphere and geometry."""
    if hs_plate_light == hs_plate_dark:
        return 0.0
    light = sphere_plate_force(geom, hs_sphere, hs_plate_light, cfg)
    dark = sphere_plate_force(geom, hs_sphere, hs_plate_dark, cfg)
    return light - dark


def _validate_grid(grid):
    grid = [float(z) for z in grid]
    if not grid:
        raise DomainError("separation grid is empty")
    if any(not z > 0 for z in grid):
        raise DomainError("separations must be positive")
    return grid


def _evaluate_chunk(task):
    zs, radius, hs_sphere, hs_plate, hs_dark, cfg = task
    light = LifshitzEvaluator(hs_sphere, hs_plate, cfg)
    dark = None if hs_dark is None or hs_dark == hs_plate else LifshitzEvaluator(hs_sphere, hs_dark, cfg)
    values = []
    scale = 2.0 * math.pi * radius
    for z in zs:
        try:
            if hs_dark is None:
                value = scale * light.free_energy(z)
            elif dark is None:
                value = 0.0
            else:
                value = scale * light.free_energy(z) - scale * dark.free_energy(z)
        except ConvergenceError as e:
            e.z = z
            e.points = list(zip(zs, values))
            raise
        values.append(value)
    return values


def _chunks(seq, size):
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def force_curve(grid, radius, hs_sphere, hs_plate, cfg, hs_plate_dark=None, workers=None):
    """
    Sphere-plate force (or light-minus-dark difference when hs_plate_dark is
    given) on every separation of grid, returned in grid order.
    """
    grid = _validate_grid(grid)
    if any(z1 <= z0 for z0, z1 in zip(grid, grid[1:])):
        raise DomainError("separation grid must be strictly increasing")
    SpherePlateGeometry(radius, grid[-1])
    workers = config.WORKERS if workers is None else max(1, int(workers))
    kind = CurveKind.FORCE if hs_plate_dark is None else CurveKind.FORCE_DIFFERENCE

    size = max(1, math.ceil(len(grid) / (4 * workers))) if workers > 1 else len(grid)
    chunks = _chunks(grid, size)
    tasks = [(c, radius, hs_sphere, hs_plate, hs_plate_dark, cfg) for c in chunks]
    log.info("Evaluating %s on %d separations (%d worker(s))", kind.value, len(grid), workers)

    values = []
    if workers == 1:
        for task in tasks:
            values.extend(_run_chunk(task, grid, values))
    else:
        with futures.ProcessPoolExecutor(max_workers=workers) as pool:
            pending = [pool.submit(_evaluate_chunk, t) for t in tasks]
            for task, fut in zip(tasks, pending):
                try:
                    values.extend(fut.result())
                except ConvergenceError as e:
                    _attach_partial(e, grid, values)
                    for other in pending:
                        other.cancel()
                    raise

    metadata = curve_metadata(kind, radius, hs_sphere, hs_plate, cfg, hs_plate_dark)
    return ForceCurve(tuple(zip(grid, values)), kind, metadata)


def _run_chunk(task, grid, done):
    try:
        return _evaluate_chunk(task)
    except ConvergenceError as e:
        _attach_partial(e, grid, done)
        raise


def _attach_partial(error, grid, done):
    chunk_points = getattr(error, "points", [])
    error.points = list(zip(grid, done)) + list(chunk_points)
    log.error("Convergence failure at z=%.6g m after %d completed point(s)", error.z or float("nan"),
              len(error.points))


def free_energy_curve(grid, hs1, hs2, cfg):
    grid = _validate_grid(grid)
    evaluator = LifshitzEvaluator(hs1, hs2, cfg)
    points = tuple((z, evaluator.free_energy(z)) for z in grid)
    metadata = {"materials": {"body1": hs1.name, "body2": hs2.name},
                "temperature": cfg.temperature, "config": asdict(cfg), "version": config.APP_VERSION}
    return ForceCurve(points, CurveKind.FREE_ENERGY_PER_AREA, metadata)


def curve_metadata(kind, radius, hs_sphere, hs_plate, cfg, hs_plate_dark=None):
    materials = {"sphere": hs_sphere.name, "plate": hs_plate.name}
    models = {"sphere": describe_model(hs_sphere.model), "plate": describe_model(hs_plate.model)}
    if hs_plate_dark is not None:
        materials["plate_dark"] = hs_plate_dark.name
        models["plate_dark"] = describe_model(hs_plate_dark.model)
    return {
        "kind": kind.value,
        "materials": materials,
        "models": models,
        "radius_m": radius,
        "temperature": cfg.temperature,
        "config": asdict(cfg),
        "version": config.APP_VERSION,
    }


# --- SERIALIZATION ---

def render_curves_csv(curves, columns, extra_comments=()):
    """One CSV with a shared z column; curves must share their grid."""
    base = curves[0]
    for other in curves[1:]:
        if len(other) != len(base) or np.any(other.z != base.z):
            raise DomainError("curves written together must share their separation grid")
    comments = [f"{config.APP_NAME} {config.APP_VERSION}", f"kind={base.kind.value}"]
    comments.extend(extra_comments)
    rows = [(z, *[c.points[i][1] for c in curves]) for i, (z, _) in enumerate(base.points)]
    return render_csv(("z_m", *columns), rows, comments)


def write_force_curve(path, curve):
    """CSV `z_m,<value column>` plus a `<path>.json` metadata sidecar."""
    text = render_curves_csv([curve], [VALUE_COLUMNS[curve.kind]],
                             [f"metadata={canonical_json(curve.metadata).replace(chr(10), '')}"])
    atomic_write_text(path, text)
    atomic_write_text(str(path) + ".json", canonical_json(curve.metadata))


def read_force_curve(path, kind=None, column=None):
    """
    Read a curve written by write_force_curve or by the command line. Files
    with several value columns yield `column`, by default the first one.
    """
    kind_found = None
    header = None
    for line in read_text_lines(path):
        body = line.strip()
        if not body:
            continue
        if body.startswith("#"):
            body = body[1:].strip()
            if body.startswith("kind="):
                kind_found = body[len("kind="):]
            continue
        header = [c.strip() for c in body.split(",")]
        break
    if header is None:
        raise InvalidInputError("missing header line", path=path)
    try:
        kind = CurveKind(kind_found) if kind_found else CurveKind(kind or CurveKind.FORCE_DIFFERENCE)
    except ValueError:
        raise InvalidInputError(f"unknown curve kind {kind_found!r}", path=path)
    if len(header) < 2 or header[0] != "z_m":
        raise InvalidInputError(f"expected z_m and at least one value column, got {','.join(header)!r}", path=path)
    if column is None:
        column = VALUE_COLUMNS[kind] if VALUE_COLUMNS[kind] in header else header[1]
    if column not in header[1:]:
        raise InvalidInputError(f"no column {column!r}", path=path)
    index = header.index(column)
    rows = read_numeric_csv(path, tuple(header))
    metadata = {}
    try:
        with open(str(path) + ".json", "r", encoding="utf-8") as f:
            metadata = json.load(f)
    except (OSError, ValueError):
        pass
    try:
        return ForceCurve(tuple((v[0], v[index]) for _, v in rows), kind, metadata)
    except DomainError as e:
        raise InvalidInputError(str(e), path=path)
