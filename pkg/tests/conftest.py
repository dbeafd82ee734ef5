import pytest

import analysis
import lifshitz
import materials
import reference
from materials import Profile


@pytest.fixture(scope="session")
def experiment_models():
    return materials.experiment_profiles()


@pytest.fixture(scope="session")
def gold(experiment_models):
    return lifshitz.HalfSpace(experiment_models[Profile.GOLD_TABULATED], label="Au")


@pytest.fixture(scope="session")
def si_light(experiment_models):
    return lifshitz.HalfSpace(experiment_models[Profile.SI_ILLUMINATED])


@pytest.fixture(scope="session")
def si_dark(experiment_models):
    return lifshitz.HalfSpace(experiment_models[Profile.SI_DARK_DIELECTRIC])


@pytest.fixture(scope="session")
def si_dark_dc(experiment_models):
    return lifshitz.HalfSpace(experiment_models[Profile.SI_DARK_WITH_DC])


@pytest.fixture(scope="session")
def ideal():
    model = materials.build_material_profile(Profile.PERFECT_REFLECTOR, materials.ProfileInputs())
    return lifshitz.HalfSpace(model)


@pytest.fixture
def cfg():
    return lifshitz.LifshitzConfig()


@pytest.fixture
def experiment_calib():
    cal = reference.CALIBRATION
    return analysis.ElectrostaticCalib(cal["deflection_coeff_m"], cal["contact_separation_m"],
                                       cal["residual_potential_V"], cal["force_per_signal_N"])


@pytest.fixture
def truth_curve():
    """Smooth attractive difference curve on 100-500 nm, shaped like the measured one."""
    zs = [100e-9 + 10e-9 * i for i in range(41)]
    return lifshitz.ForceCurve(tuple((z, -3.4e-12 * (100e-9 / z) ** 2.5) for z in zs),
                               lifshitz.CurveKind.FORCE_DIFFERENCE)


@pytest.fixture
def profile_dir(tmp_path, monkeypatch):
    import config
    d = tmp_path / "profiles"
    d.mkdir()
    monkeypatch.setattr(config, "CONFIG_DIR", str(d))
    return d
