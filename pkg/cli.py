"""
Command-line front end.

    permittivity   eps(i xi) of the four material profiles on a log grid
    force          absolute sphere-plate force curves
    delta-force    light-minus-dark force difference for both dark models
    calibrate      electrostatic calibration fit from deflection curves
    analyze        measured dF_tot -> dF_d statistics (optionally vs theory)
    synth          deterministic synthetic measurements

Every output carries the resolved run configuration in its `#` header and
in a JSON sidecar, so a file is enough to re-run the command.
"""
import argparse
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

import analysis
import config
import lifshitz
import materials
import reference
from errors import ConfigurationError, ConvergenceError, GridParseError, InvalidInputError, OptoCasimirError
from utils import atomic_write_text, canonical_json, log_grid, render_csv, split_length

log = logging.getLogger("CLI")

COMMANDS = ("permittivity", "force", "delta-force", "calibrate", "analyze", "synth")
READ_COMMANDS = {"calibrate": "input", "analyze": "input"}

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_CONVERGENCE = 3


# --- GRIDS ---

def parse_grid(spec):
    """'100nm:500nm:1201' -> linear grid in metres, endpoints included."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise GridParseError("grid must look like min:max:count", spec)
    lo_tok, hi_tok, count_tok = parts
    lo = _parse_length(lo_tok)
    hi = _parse_length(hi_tok)
    try:
        count = int(count_tok)
    except ValueError:
        raise GridParseError("count is not an integer", count_tok)
    if count < 1:
        raise GridParseError("count must be >= 1", count_tok)
    if not 0 < lo < hi:
        raise GridParseError("need 0 < min < max", spec)
    if count == 1:
        return [lo]
    return [float(z) for z in np.linspace(lo, hi, count)]


def _parse_length(token):
    try:
        number, factor = split_length(token)
    except ValueError:
        raise GridParseError("not a length", token)
    if not math.isfinite(number):
        raise GridParseError("not a finite length", token)
    return number * factor


def parse_log_grid(spec):
    """'1e11:1e18:141' -> log-spaced frequencies in rad/s."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise GridParseError("grid must look like min:max:count", spec)
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise GridParseError("not a frequency", spec)
    try:
        count = int(parts[2])
    except ValueError:
        raise GridParseError("count is not an integer", parts[2])
    if count < 1:
        raise GridParseError("count must be >= 1", parts[2])
    if not 0 < lo < hi:
        raise GridParseError("need 0 < min < max", spec)
    return log_grid(lo, hi, count)


def _grid_type(parser):
    def convert(text):
        try:
            parser(text)
        except GridParseError as e:
            raise argparse.ArgumentTypeError(str(e))
        return text
    return convert


# --- RUN CONFIG ---

@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str = None
    input: str = None
    fmt: str = "csv"
    profiles: tuple = ()
    table: str = None
    radius: float = config.SPHERE_RADIUS_M
    grid: str = config.DEFAULT_Z_GRID
    xi_grid: str = config.DEFAULT_XI_GRID
    temperature: float = config.TEMPERATURE_K
    tol_matsubara: float = config.MATSUBARA_REL_TOL
    tol_quad: float = config.QUAD_REL_TOL
    workers: int = config.WORKERS
    units: str = "lab"
    seed: int = config.SYNTH_SEED
    truth: str = None
    pairs: int = config.SYNTH_PAIRS
    noise_pn: float = config.SYNTH_NOISE_PN
    calibration: str = None
    theory: str = None
    theory_error: float = 0.0
    v0_light: float = config.V0_LIGHT_V
    v0_dark: float = config.V0_DARK_V
    confidence: float = config.CONFIDENCE
    systematic_pn: float = config.SYSTEMATIC_ERROR_N * 1e12

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.fmt not in ("csv", "json"):
            raise ConfigurationError(f"unknown format {self.fmt!r}")
        if self.units not in ("lab", "si"):
            raise ConfigurationError(f"unknown units {self.units!r}")
        if not self.radius > 0:
            raise ConfigurationError(f"radius must be positive, got {self.radius}")
        if self.pairs < 2:
            raise ConfigurationError(f"need at least 2 voltage pairs, got {self.pairs}")
        if self.noise_pn < 0:
            raise ConfigurationError("noise must be non-negative")
        parse_grid(self.grid)
        parse_log_grid(self.xi_grid)

    @property
    def out_path(self):
        if self.out:
            return self.out
        return f"{self.command}.{self.fmt}"

    def lifshitz_config(self):
        return lifshitz.LifshitzConfig(
            temperature=self.temperature,
            matsubara_rel_tol=self.tol_matsubara,
            quad_rel_tol=self.tol_quad,
        )

    def as_dict(self):
        # the output path does not change results
        d = asdict(self)
        d.pop("out")
        return d

    def check_paths(self):
        """Files a command reads must exist before any work starts."""
        needed = []
        if self.command in READ_COMMANDS:
            if not self.input:
                raise InvalidInputError(f"`{self.command}` needs --input")
            needed.append(self.input)
        for name in ("table", "truth", "theory"):
            value = getattr(self, name)
            if value:
                needed.append(value)
        for path in needed:
            if not os.path.exists(path):
                raise InvalidInputError("file not found", path=path)


# --- OUTPUT ---

def _header(cfg, *extra):
    return [f"{config.APP_NAME} {config.APP_VERSION}", f"config={canonical_json(cfg.as_dict()).replace(chr(10), '')}",
            *extra]


def _write_table(cfg, header, rows, metadata, comments=()):
    """CSV with config header plus sidecar, or one JSON document."""
    path = cfg.out_path
    document = {"config": cfg.as_dict(), "version": config.APP_VERSION, "units": reference.UNITS,
                "metadata": metadata}
    if cfg.fmt == "json":
        document["columns"] = list(header)
        document["rows"] = [list(r) for r in rows]
        atomic_write_text(path, canonical_json(document))
    else:
        atomic_write_text(path, render_csv(header, rows, _header(cfg, *comments)))
        atomic_write_text(path + ".json", canonical_json(document))
    log.info("Wrote %s (%d rows)", path, len(rows))
    return path


def _write_curves(cfg, curves, columns, comments=()):
    metadata = {label: c.metadata for label, c in zip(columns, curves)}
    base = curves[0]
    rows = [(z, *[c.points[i][1] for c in curves]) for i, (z, _) in enumerate(base.points)]
    comments = (f"kind={base.kind.value}", *comments)
    return _write_table(cfg, ("z_m", *columns), rows, metadata, comments)


def _dump_partial(cfg, error):
    path = cfg.out_path + ".partial.csv"
    header = ("z_m", "value_N")
    comments = _header(cfg, f"error={error}", f"failed_z={error.z}", f"terms={error.terms}",
                       f"partial_sum={error.partial}", f"last_term={error.last_term}")
    atomic_write_text(path, render_csv(header, [(float(z), float(v)) for z, v in error.points], comments))
    return path


def _fmt_force(value, units):
    if units == "si":
        return f"{value:.6e} N"
    label, factor = reference.DISPLAY_UNITS["force"]
    return f"{value * factor:.4f} {label}"


def _fmt_length(value, units):
    if units == "si":
        return f"{value:.6e} m"
    label, factor = reference.DISPLAY_UNITS["separation"]
    return f"{value * factor:.2f} {label}"


# --- MODELS ---

def _experiment_models(cfg):
    si_table = materials.load_optical_table(cfg.table) if cfg.table else None
    return materials.experiment_profiles(si_table=si_table)


def _resolve_models(names, models):
    """Profile names map to the experiment's models; anything else is a JSON profile."""
    out = []
    for name in names:
        try:
            profile = materials.Profile(name)
        except ValueError:
            out.append(materials.load_material_profile(name))
            continue
        if profile in models:
            out.append(models[profile])
        else:
            out.append(materials.build_material_profile(profile, materials.ProfileInputs()))
    return out


def _sphere(models):
    return lifshitz.HalfSpace(models[materials.Profile.GOLD_TABULATED], label="Au")


# --- COMMANDS ---

def cmd_permittivity(cfg):
    models = _experiment_models(cfg)
    experiment_names = {p.value for p in models}
    chosen = list(models.values()) + _resolve_models([p for p in cfg.profiles if p not in experiment_names], models)
    xi = parse_log_grid(cfg.xi_grid)
    rows = [(x, *[materials.eval_permittivity(m, x) for m in chosen]) for x in xi]
    labels = [m.label for m in chosen]
    _write_table(cfg, ("xi_rad_s", *[f"eps_{label}" for label in labels]), rows,
                 {"models": {m.label: materials.describe_model(m) for m in chosen}})
    print(f"[CLI] eps(i xi) for {', '.join(labels)} on {len(xi)} frequencies")
    return EXIT_OK


def cmd_force(cfg):
    models = _experiment_models(cfg)
    names = cfg.profiles or (materials.Profile.SI_DARK_DIELECTRIC.value, materials.Profile.SI_DARK_WITH_DC.value,
                             materials.Profile.SI_ILLUMINATED.value)
    plates = _resolve_models(names, models)
    grid = parse_grid(cfg.grid)
    lcfg = cfg.lifshitz_config()
    sphere = _sphere(models)
    curves = [lifshitz.force_curve(grid, cfg.radius, sphere, lifshitz.HalfSpace(m), lcfg, workers=cfg.workers)
              for m in plates]
    _write_curves(cfg, curves, [f"F_{m.label}_N" for m in plates])
    for m, c in zip(plates, curves):
        print(f"[CLI] {m.label}: F({_fmt_length(c.z[0], cfg.units)}) = {_fmt_force(c.values[0], cfg.units)}")
    return EXIT_OK


def cmd_delta_force(cfg):
    models = _experiment_models(cfg)
    light = lifshitz.HalfSpace(models[materials.Profile.SI_ILLUMINATED])
    names = cfg.profiles or (materials.Profile.SI_DARK_DIELECTRIC.value, materials.Profile.SI_DARK_WITH_DC.value)
    darks = _resolve_models(names, models)
    grid = parse_grid(cfg.grid)
    lcfg = cfg.lifshitz_config()
    sphere = _sphere(models)
    curves = [lifshitz.force_curve(grid, cfg.radius, sphere, light, lcfg, hs_plate_dark=lifshitz.HalfSpace(m),
                                   workers=cfg.workers) for m in darks]
    _write_curves(cfg, curves, [f"dF_{m.label}_N" for m in darks])
    for m, c in zip(darks, curves):
        print(f"[CLI] dark={m.label}: dF({_fmt_length(c.z[0], cfg.units)}) = {_fmt_force(c.values[0], cfg.units)}")
    return EXIT_OK


def cmd_calibrate(cfg):
    points = analysis.read_calibration_curves(cfg.input)
    fit = analysis.fit_deflection_calibration(points, cfg.radius)
    c = fit.calib
    rows = [
        ("deflection_coeff_m", c.deflection_coeff_m, fit.std_errors["deflection_coeff_m"]),
        ("contact_separation_m", c.contact_separation_z0, fit.std_errors["contact_separation_z0"]),
        ("residual_potential_V", c.residual_potential_V0, fit.std_errors["residual_potential_V0"]),
        ("force_per_signal_N", c.force_per_signal, fit.std_errors["force_per_signal"]),
    ]
    _write_table(cfg, ("parameter", "value", "std_error"), rows,
                 {"n_points": fit.n_points, "nfev": fit.nfev, "residual_rms_N": fit.residual_rms})
    for name, value, err in rows:
        print(f"[CLI] {name:22s} {value: .6e} +/- {err:.2e}")
    return EXIT_OK


def cmd_analyze(cfg):
    measurements = analysis.read_measurements(cfg.input)
    summaries = analysis.analyze_measurements(
        measurements, cfg.v0_light, cfg.v0_dark, cfg.radius, cfg.confidence, cfg.systematic_pn * 1e-12)
    metadata = {"separations": len(summaries), "measurements": len(measurements)}
    if cfg.theory:
        theory = lifshitz.read_force_curve(cfg.theory)
        comparisons = analysis.compare_with_theory(summaries, theory, cfg.theory_error)
        fraction = analysis.exclusion_fraction(comparisons)
        metadata["exclusion_fraction"] = fraction
        metadata["excluded_z_m"] = [m.z for m in comparisons if m.excluded]
        print(f"[CLI] theory {cfg.theory}: excluded at {fraction:.1%} of separations")
    rows = [(s.z, s.mean_delta_fd, s.random_error, s.systematic_error, s.total_error) for s in summaries]
    _write_table(cfg, analysis.SUMMARY_HEADER, rows, metadata)
    for s in summaries[:: max(1, len(summaries) // 5)]:
        print(f"[CLI] z={_fmt_length(s.z, cfg.units)}: dF_d={_fmt_force(s.mean_delta_fd, cfg.units)} "
              f"+/- {_fmt_force(s.total_error, cfg.units)} ({s.relative_error:.1%})")
    return EXIT_OK


def cmd_synth(cfg):
    if cfg.truth:
        truth = lifshitz.read_force_curve(cfg.truth, kind=lifshitz.CurveKind.FORCE_DIFFERENCE)
    else:
        models = _experiment_models(cfg)
        truth = lifshitz.force_curve(
            parse_grid(cfg.grid), cfg.radius, _sphere(models),
            lifshitz.HalfSpace(models[materials.Profile.SI_ILLUMINATED]), cfg.lifshitz_config(),
            hs_plate_dark=lifshitz.HalfSpace(models[materials.Profile.SI_DARK_DIELECTRIC]), workers=cfg.workers)
    pairs = analysis.default_voltage_pairs(cfg.pairs, cfg.v0_light, cfg.v0_dark)
    measurements = analysis.synthesize_measurements(
        truth, pairs, (cfg.v0_light, cfg.v0_dark), cfg.noise_pn * 1e-12, cfg.seed, radius=cfg.radius)
    rows = [(m.z, m.delta_f_tot, m.pair.v_light, m.pair.v_dark) for m in measurements]
    _write_table(cfg, analysis.MEASUREMENT_HEADER, rows, {"truth": cfg.truth, "pairs": len(pairs)})

    if cfg.calibration:
        cal = reference.CALIBRATION
        calib = analysis.ElectrostaticCalib(cal["deflection_coeff_m"], cal["contact_separation_m"],
                                            cal["residual_potential_V"], cal["force_per_signal_N"])
        points = analysis.synthesize_calibration_curves(
            calib, cfg.radius, config.SYNTH_CALIB_VOLTAGES, parse_grid(config.SYNTH_CALIB_Z_PIEZO),
            seed=cfg.seed)
        analysis.write_calibration_curves(cfg.calibration, points, _header(cfg))
        log.info("Wrote %s (%d rows)", cfg.calibration, len(points))
    print(f"[CLI] {len(measurements)} synthetic readings at {len(truth)} separations")
    return EXIT_OK


HANDLERS = {
    "permittivity": cmd_permittivity,
    "force": cmd_force,
    "delta-force": cmd_delta_force,
    "calibrate": cmd_calibrate,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def run(cfg):
    """Execute one command; returns the process exit status."""
    try:
        cfg.check_paths()
        return HANDLERS[cfg.command](cfg)
    except ConvergenceError as e:
        path = _dump_partial(cfg, e)
        log.error("%s (partial results in %s)", e, path)
        return EXIT_CONVERGENCE
    except OptoCasimirError as e:
        log.error("%s", e)
        return EXIT_INPUT


# --- ARGUMENTS ---

def build_parser():
    p = argparse.ArgumentParser(prog=config.APP_NAME, description="Casimir force difference between a gold "
                                "sphere and a silicon plate in the dark and under illumination.")
    p.add_argument("--version", action="version", version=f"{config.APP_NAME} {config.APP_VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output path (default: <command>.<format>).")
    common.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    common.add_argument("--units", choices=("lab", "si"), default="lab",
                        help="Console display units; files are always SI.")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    theory = argparse.ArgumentParser(add_help=False)
    theory.add_argument("--profile", dest="profiles", action="append", default=[],
                        help="Profile name (GoldTabulated, SiDarkDielectric, ...) or JSON profile path/name.")
    theory.add_argument("--table", help="Optical table (omega_rad_s,eps1,eps2) for dark silicon.")
    theory.add_argument("--radius", type=float, default=config.SPHERE_RADIUS_M, help="Sphere radius in m.")
    theory.add_argument("--grid", type=_grid_type(parse_grid), default=config.DEFAULT_Z_GRID,
                        help="Separations min:max:count with unit suffixes.")
    theory.add_argument("--temperature", type=float, default=config.TEMPERATURE_K)
    theory.add_argument("--tol-matsubara", dest="tol_matsubara", type=float, default=config.MATSUBARA_REL_TOL)
    theory.add_argument("--tol-quad", dest="tol_quad", type=float, default=config.QUAD_REL_TOL)
    theory.add_argument("--workers", type=int, default=config.WORKERS)

    residuals = argparse.ArgumentParser(add_help=False)
    residuals.add_argument("--v0-light", dest="v0_light", type=float, default=config.V0_LIGHT_V)
    residuals.add_argument("--v0-dark", dest="v0_dark", type=float, default=config.V0_DARK_V)

    perm = sub.add_parser("permittivity", parents=[common, theory], help="eps(i xi) tables.")
    perm.add_argument("--xi-grid", dest="xi_grid", type=_grid_type(parse_log_grid), default=config.DEFAULT_XI_GRID,
                      help="Log grid min:max:count in rad/s.")

    sub.add_parser("force", parents=[common, theory], help="Absolute force curves.")
    sub.add_parser("delta-force", parents=[common, theory], help="Light-minus-dark force difference.")

    cal = sub.add_parser("calibrate", parents=[common], help="Electrostatic calibration fit.")
    cal.add_argument("--input", required=True, help="Calibration CSV.")
    cal.add_argument("--radius", type=float, default=config.SPHERE_RADIUS_M)

    an = sub.add_parser("analyze", parents=[common, residuals], help="Reduce measured differences.")
    an.add_argument("--input", required=True, help="Measurement CSV.")
    an.add_argument("--radius", type=float, default=config.SPHERE_RADIUS_M)
    an.add_argument("--confidence", type=float, default=config.CONFIDENCE)
    an.add_argument("--systematic-pn", dest="systematic_pn", type=float, default=config.SYSTEMATIC_ERROR_N * 1e12)
    an.add_argument("--theory", help="ForceDifference curve CSV to compare with.")
    an.add_argument("--theory-error", dest="theory_error", type=float, default=0.0,
                    help="Relative error of the theory curve.")

    syn = sub.add_parser("synth", parents=[common, theory, residuals], help="Synthetic measurements.")
    syn.add_argument("--truth", help="ForceDifference curve CSV (computed when omitted).")
    syn.add_argument("--pairs", type=int, default=config.SYNTH_PAIRS)
    syn.add_argument("--noise-pn", dest="noise_pn", type=float, default=config.SYNTH_NOISE_PN)
    syn.add_argument("--seed", type=int, default=config.SYNTH_SEED)
    syn.add_argument("--calibration", help="Also write synthetic calibration curves to this CSV.")
    return p


def config_from_args(args):
    fields = set(RunConfig.__dataclass_fields__)
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    if "profiles" in values:
        values["profiles"] = tuple(values["profiles"])
    return RunConfig(**values)


def setup_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(format="[%(name)s] %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        cfg = config_from_args(args)
    except (ConfigurationError, GridParseError) as e:
        log.error("%s", e)
        return EXIT_USAGE
    log.debug("Run configuration: %s", cfg.as_dict())
    return run(cfg)

