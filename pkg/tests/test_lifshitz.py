import math
import pickle
import warnings

import numpy as np
import pytest
from scipy.integrate import trapezoid

import lifshitz
import materials
import reference
from errors import ConfigurationError, ConvergenceError, DomainError, GeometryError, InvalidInputError, PfaValidityWarning
from lifshitz import CurveKind, ForceCurve, HalfSpace, LifshitzConfig, SpherePlateGeometry

R = reference.SPHERE["radius_m"]


# --- scalar pieces ---

def test_first_matsubara_frequency_at_room_temperature():
    assert lifshitz.matsubara_frequency(1, 300.0) == pytest.approx(reference.QUOTED["xi_1_300K_rad_s"], rel=0.005)
    assert lifshitz.matsubara_frequency(0, 300.0) == 0.0


@pytest.mark.parametrize("j, t", [(-1, 300.0), (1.5, 300.0), (1, 0.0)])
def test_matsubara_frequency_domain(j, t):
    with pytest.raises(DomainError):
        lifshitz.matsubara_frequency(j, t)


def test_fresnel_vacuum_and_ideal_limits():
    assert lifshitz.fresnel_coefficients(1.0, 1e14, 1e6) == (0.0, 0.0)
    assert lifshitz.fresnel_coefficients(math.inf, 1e14, 1e6) == (1.0, -1.0)


def test_fresnel_normal_incidence():
    eps = 11.66
    r_tm, r_te = lifshitz.fresnel_coefficients(eps, 1e14, 0.0)
    n = math.sqrt(eps)
    assert r_tm == pytest.approx((n - 1) / (n + 1), rel=1e-12)
    assert r_te == pytest.approx(-r_tm, rel=1e-12)


@pytest.mark.parametrize("kperp", [0.0, 1e5, 1e7, 1e9])
def test_fresnel_coefficients_are_bounded(kperp):
    r_tm, r_te = lifshitz.fresnel_coefficients(20.0, 3e15, kperp)
    assert 0.0 <= r_tm <= 1.0
    assert -1.0 <= r_te <= 0.0


def test_fresnel_rejects_eps_below_one():
    with pytest.raises(DomainError):
        lifshitz.fresnel_coefficients(0.5, 1e14, 1e6)


def test_fresnel_silicon_at_first_matsubara_frequency():
    eps, xi, kperp = 11.66, lifshitz.matsubara_frequency(1, 300.0), 1.0 / 100e-9
    k0 = xi / reference.C_LIGHT
    q = math.sqrt(kperp ** 2 + k0 ** 2)
    k = math.sqrt(kperp ** 2 + eps * k0 ** 2)
    r_tm, r_te = lifshitz.fresnel_coefficients(eps, xi, kperp)
    assert r_tm == pytest.approx((eps * q - k) / (eps * q + k), rel=1e-12)
    assert r_te == pytest.approx((q - k) / (q + k), rel=1e-12)
    # kperp >> xi/c: TM is close to its electrostatic value, TE nearly vanishes
    assert r_tm == pytest.approx((eps - 1) / (eps + 1), rel=1e-2)
    assert -1e-2 < r_te < 0


def test_zero_frequency_tm_of_dielectric_silicon(si_dark):
    r_tm, r_te = lifshitz.zero_frequency_coefficients(si_dark)
    assert r_tm == pytest.approx((11.66 - 1) / (11.66 + 1), abs=1e-12)
    assert r_te == 0.0


def test_zero_frequency_of_conductors(si_dark_dc, gold, ideal):
    assert lifshitz.zero_frequency_coefficients(si_dark_dc) == (1.0, 0.0)
    assert lifshitz.zero_frequency_coefficients(gold) == (1.0, 0.0)
    assert lifshitz.zero_frequency_coefficients(ideal) == (1.0, 1.0)
    assert lifshitz.zero_frequency_coefficients(HalfSpace(gold.model, r_te0=1.0)) == (1.0, 1.0)


def test_r_te0_override_range(gold):
    with pytest.raises(ConfigurationError):
        HalfSpace(gold.model, r_te0=1.5)


# --- configuration and geometry ---

@pytest.mark.parametrize("kwargs", [
    {"temperature": 0.0},
    {"matsubara_rel_tol": 0.1},
    {"quad_rel_tol": 0.0},
    {"matsubara_max_terms": 10},
    {"y_cutoff": 20.0},
])
def test_lifshitz_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        LifshitzConfig(**kwargs)


def test_geometry_rejects_non_positive_values():
    with pytest.raises(GeometryError):
        SpherePlateGeometry(R, 0.0)
    with pytest.raises(GeometryError):
        SpherePlateGeometry(-1.0, 100e-9)


def test_geometry_warns_outside_proximity_regime():
    with pytest.warns(PfaValidityWarning):
        SpherePlateGeometry(1e-6, 100e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SpherePlateGeometry(R, 500e-9)


def test_force_curve_invariants():
    with pytest.raises(DomainError):
        ForceCurve(((2e-7, -1.0), (1e-7, -2.0)), CurveKind.FORCE)
    with pytest.raises(DomainError):
        ForceCurve(((1e-7, -1.0), (2e-7, 0.0)), CurveKind.FORCE)
    curve = ForceCurve(((1e-7, -1.0), (2e-7, 0.5)), CurveKind.FORCE_DIFFERENCE)
    assert len(curve) == 2
    assert curve.z.tolist() == [1e-7, 2e-7]


# --- ideal metals ---

def test_ideal_metal_reference_at_zero_temperature():
    z = 1e-6
    expected = -math.pi ** 2 * reference.HBAR * reference.C_LIGHT / (720 * z ** 3)
    assert lifshitz.ideal_metal_reference(z) == pytest.approx(expected, rel=1e-14)


def test_ideal_metal_thermal_correction_lowers_energy():
    assert lifshitz.ideal_metal_reference(3e-6, 300.0) < lifshitz.ideal_metal_reference(3e-6)


def test_ideal_metals_near_zero_temperature(ideal):
    z = 1e-6
    cfg = LifshitzConfig(temperature=1.0)
    energy = lifshitz.free_energy_per_area(z, ideal, ideal, cfg)
    assert energy == pytest.approx(reference.ideal_casimir_energy(z), rel=0.005)


@pytest.mark.parametrize("z", [100e-9, 0.3e-6, 1e-6, 3e-6])
def test_ideal_metals_match_closed_form_at_room_temperature(ideal, cfg, z):
    energy = lifshitz.free_energy_per_area(z, ideal, ideal, cfg)
    assert energy == pytest.approx(lifshitz.ideal_metal_reference(z, 300.0), rel=1e-6)


# --- Matsubara series ---

def test_matsubara_terms_layout(gold, si_dark, cfg):
    terms = lifshitz.matsubara_terms(200e-9, gold, si_dark, cfg)
    assert terms[0].j == 0 and terms[0].weight == 0.5 and terms[0].xi == 0.0
    assert [t.j for t in terms] == list(range(len(terms)))
    assert all(t.weight == 1.0 for t in terms[1:])
    assert all(t.value < 0 for t in terms)
    # zero-frequency TE term vanishes when one body has r_TE(0) = 0
    assert terms[0].te == 0.0


def test_free_energy_is_attractive_and_decays(gold, si_dark, cfg):
    e1 = lifshitz.free_energy_per_area(100e-9, gold, si_dark, cfg)
    e2 = lifshitz.free_energy_per_area(200e-9, gold, si_dark, cfg)
    assert e1 < e2 < 0


def test_free_energy_rejects_bad_separation(gold, si_dark, cfg):
    with pytest.raises(DomainError):
        lifshitz.free_energy_per_area(0.0, gold, si_dark, cfg)


def test_sphere_plate_force_is_pfa(gold, si_dark, cfg):
    geom = SpherePlateGeometry(R, 150e-9)
    force = lifshitz.sphere_plate_force(geom, gold, si_dark, cfg)
    energy = lifshitz.free_energy_per_area(150e-9, gold, si_dark, cfg)
    assert force == pytest.approx(2 * math.pi * R * energy, rel=1e-14)
    assert force < 0


def test_vacuum_plate_gives_no_energy(gold, cfg):
    table = materials.OpticalDataTable(((1e13, 1.0, 0.0), (1e17, 1.0, 0.0)))
    vacuum = HalfSpace(materials.PermittivityModel(materials.Tabulated(table), static_value=1.0))
    assert lifshitz.free_energy_per_area(100e-9, gold, vacuum, cfg) == 0.0


def test_free_energy_matches_brute_force_quadrature(gold, si_dark, cfg):
    z, temperature = 100e-9, cfg.temperature
    eps_static = reference.SILICON["eps_static"]
    r0 = (eps_static - 1) / (eps_static + 1)
    y = np.linspace(0.0, 60.0, 6001)
    total = 0.5 * trapezoid(y * np.log1p(-r0 * np.exp(-y)), y)
    for j in range(1, 250):
        xi = 2 * math.pi * reference.K_B * temperature * j / reference.HBAR
        y0 = 2 * xi * z / reference.C_LIGHT
        y = y0 + np.linspace(0.0, 40.0, 2001)
        damp = np.exp(-y)
        parts = []
        for hs in (gold, si_dark):
            eps = materials.eval_permittivity(hs.model, xi)
            s = np.sqrt(y * y + (eps - 1) * y0 * y0)
            parts.append(((eps * y - s) / (eps * y + s), (y - s) / (y + s)))
        (tm1, te1), (tm2, te2) = parts
        total += trapezoid(y * (np.log1p(-tm1 * tm2 * damp) + np.log1p(-te1 * te2 * damp)), y)
    expected = reference.K_B * temperature / (2 * math.pi) / (4 * z * z) * total
    assert lifshitz.free_energy_per_area(z, gold, si_dark, cfg) == pytest.approx(expected, rel=0.01)


def test_tighter_tolerances_agree_within_the_looser_one(gold, si_dark):
    loose = LifshitzConfig(matsubara_rel_tol=1e-6, quad_rel_tol=1e-6)
    tight = LifshitzConfig(matsubara_rel_tol=1e-7, quad_rel_tol=1e-7)
    for z in (100e-9, 150e-9):
        a = lifshitz.free_energy_per_area(z, gold, si_dark, loose)
        b = lifshitz.free_energy_per_area(z, gold, si_dark, tight)
        assert abs(a - b) < 1e-6 * abs(b)


def test_force_is_linear_in_radius(gold, si_dark, cfg):
    one = lifshitz.sphere_plate_force(SpherePlateGeometry(R, 200e-9), gold, si_dark, cfg)
    three = lifshitz.sphere_plate_force(SpherePlateGeometry(3 * R, 200e-9), gold, si_dark, cfg)
    assert three == pytest.approx(3 * one, rel=1e-14)


def test_identical_plates_give_no_difference(gold, si_dark, cfg):
    geom = SpherePlateGeometry(R, 150e-9)
    assert lifshitz.force_difference(geom, gold, si_dark, si_dark, cfg) == 0.0


def test_illumination_increases_attraction(gold, si_light, si_dark, cfg):
    zs = [100e-9, 150e-9, 250e-9, 400e-9, 500e-9]
    diffs = [lifshitz.force_difference(SpherePlateGeometry(R, z), gold, si_light, si_dark, cfg) for z in zs]
    assert all(d < 0 for d in diffs)
    magnitudes = [abs(d) for d in diffs]
    assert all(b < a for a, b in zip(magnitudes, magnitudes[1:]))
    assert diffs[0] == pytest.approx(reference.QUOTED["delta_force_100nm_N"], rel=0.35)


def test_dc_conductivity_model_shrinks_difference(gold, si_light, si_dark, si_dark_dc, cfg):
    for z in (100e-9, 150e-9, 200e-9):
        geom = SpherePlateGeometry(R, z)
        dielectric = lifshitz.force_difference(geom, gold, si_light, si_dark, cfg)
        with_dc = lifshitz.force_difference(geom, gold, si_light, si_dark_dc, cfg)
        assert abs(with_dc) < abs(dielectric)


def test_dark_models_differ_only_at_zero_frequency(gold, si_dark, si_dark_dc, cfg):
    z = 150e-9
    plain = lifshitz.matsubara_terms(z, gold, si_dark, cfg)
    dc = lifshitz.matsubara_terms(z, gold, si_dark_dc, cfg)
    rest_plain = math.fsum(t.value for t in plain[1:])
    rest_dc = math.fsum(t.value for t in dc[1:])
    assert rest_dc == pytest.approx(rest_plain, rel=1e-3)
    assert dc[0].tm < plain[0].tm


@pytest.mark.parametrize("plate", ["si_dark", "si_light"])
def test_gold_te_zero_frequency_choice_is_irrelevant(request, gold, cfg, plate):
    hs_plate = request.getfixturevalue(plate)
    geom = SpherePlateGeometry(R, 120e-9)
    drude = lifshitz.sphere_plate_force(geom, HalfSpace(gold.model, r_te0=0.0), hs_plate, cfg)
    plasma = lifshitz.sphere_plate_force(geom, HalfSpace(gold.model, r_te0=1.0), hs_plate, cfg)
    assert plasma == pytest.approx(drude, rel=1e-12)


def test_convergence_failure_reports_partial_sum(ideal):
    cfg = LifshitzConfig(temperature=0.01, matsubara_max_terms=100)
    with pytest.raises(ConvergenceError) as exc:
        lifshitz.free_energy_per_area(1e-6, ideal, ideal, cfg)
    err = exc.value
    assert err.terms == 100
    assert err.partial < 0
    assert err.last_term < 0


def test_convergence_error_survives_pickling():
    err = ConvergenceError("stuck", partial=-1.0, last_term=-1e-3, terms=100, z=1e-7, points=[(1e-7, -2.0)])
    copy = pickle.loads(pickle.dumps(err))
    assert (copy.partial, copy.terms, copy.z, copy.points) == (-1.0, 100, 1e-7, [(1e-7, -2.0)])


# --- curves ---

def test_force_curve_keeps_grid_order(ideal, cfg):
    grid = [1e-6, 1.5e-6, 2e-6]
    curve = lifshitz.force_curve(grid, 1e-4, ideal, ideal, cfg)
    assert curve.kind is CurveKind.FORCE
    assert curve.z.tolist() == grid
    expected = [2 * math.pi * 1e-4 * lifshitz.ideal_metal_reference(z, 300.0) for z in grid]
    np.testing.assert_allclose(curve.values, expected, rtol=1e-6)
    assert curve.metadata["radius_m"] == 1e-4


def test_force_curve_workers_match_serial(ideal, cfg):
    grid = [1e-6, 1.2e-6, 1.4e-6, 1.6e-6, 1.8e-6]
    serial = lifshitz.force_curve(grid, 1e-4, ideal, ideal, cfg, workers=1)
    pooled = lifshitz.force_curve(grid, 1e-4, ideal, ideal, cfg, workers=2)
    assert pooled.points == serial.points


def test_force_curve_rejects_unsorted_grid(ideal, cfg):
    with pytest.raises(DomainError):
        lifshitz.force_curve([2e-6, 1e-6], 1e-4, ideal, ideal, cfg)


def test_force_curve_failure_names_the_separation(ideal):
    cfg = LifshitzConfig(matsubara_max_terms=100)
    # at 1 nm the series needs far more than 100 terms
    with pytest.raises(ConvergenceError) as exc:
        lifshitz.force_curve([1e-9, 1e-6], 1e-4, ideal, ideal, cfg)
    assert exc.value.z == 1e-9
    assert exc.value.points == []


def test_free_energy_curve(ideal, cfg):
    curve = lifshitz.free_energy_curve([1e-6, 2e-6], ideal, ideal, cfg)
    assert curve.kind is CurveKind.FREE_ENERGY_PER_AREA
    assert curve.values[0] < curve.values[1] < 0


def test_written_curve_reads_back(tmp_path, ideal, cfg):
    curve = lifshitz.force_curve([1e-6, 2e-6], 1e-4, ideal, ideal, cfg)
    path = tmp_path / "force.csv"
    lifshitz.write_force_curve(str(path), curve)
    text = path.read_text()
    assert text.splitlines()[1] == "# kind=Force"
    assert "z_m,value_N" in text
    back = lifshitz.read_force_curve(str(path))
    assert back.kind is CurveKind.FORCE
    assert back.points == curve.points
    assert back.metadata["radius_m"] == 1e-4


def test_read_curve_picks_named_column(tmp_path):
    path = tmp_path / "delta.csv"
    path.write_text("# kind=ForceDifference\nz_m,dF_a_N,dF_b_N\n1e-7,-3e-12,-2e-12\n2e-7,-1e-12,-0.5e-12\n")
    first = lifshitz.read_force_curve(str(path))
    second = lifshitz.read_force_curve(str(path), column="dF_b_N")
    assert first.values.tolist() == [-3e-12, -1e-12]
    assert second.values.tolist() == [-2e-12, -0.5e-12]
    with pytest.raises(InvalidInputError):
        lifshitz.read_force_curve(str(path), column="dF_c_N")


def test_read_curve_reports_bad_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# kind=Force\nz_m,value_N\n1e-7,-3e-12\n2e-7,oops\n")
    with pytest.raises(InvalidInputError) as exc:
        lifshitz.read_force_curve(str(path))
    assert exc.value.line == 4
