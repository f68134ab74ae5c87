import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmlmg import labmap as lm
from nmlmg.model import ModelParams

TARGET = ModelParams(V=1.3, h=1.0, gamma=2.5, kappa=0.7, omega=1.1, N=50)
KEYS = ("V", "h", "gamma", "kappa", "omega")


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def rel_error(a, b):
    return max(abs(getattr(a, k) - getattr(b, k)) / max(abs(getattr(b, k)), 1e-300)
               if getattr(b, k) != 0 else abs(getattr(a, k)) for k in KEYS)


def blank_lab(**kw):
    d = dict(Omega=np.zeros((2, 2, 2)), g=np.full((2, 2, 2), 0.1), Delta0=100.0, Delta1=100.0,
             kappa_modes={k: 0.01 for k in lm.MODES}, omega_modes={k: 5.0 for k in lm.MODES},
             omega_frame={k: 4.0 for k in lm.MODES}, omega_1g=10.0, omega_1g_frame=9.25, N=10)
    d.update(kw)
    return lm.LabParams(**d)


def test_equal_detunings_cancel_delta_minus():
    eff = lm.effective_parameters(lm.design_lab_point(TARGET))
    for m in eff.modes.values():
        assert m.delta_minus == 0.0


def test_undriven_point():
    eff = lm.effective_parameters(blank_lab())
    assert eff.omega0 == pytest.approx(0.75, abs=1e-15)
    assert all(m.lam == 0 for m in eff.modes.values())


def test_symmetric_drive_cancels_light_shift():
    Omega = np.full((2, 2, 2), 0.3 + 0.4j)
    eff = lm.effective_parameters(blank_lab(Omega=Omega))
    assert eff.omega0 == pytest.approx(0.75, abs=1e-15)
    unequal = Omega.copy()
    unequal[0, 1, 0] *= 2
    assert abs(lm.effective_parameters(blank_lab(Omega=unequal)).omega0 - 0.75) > 1e-4


def test_undriven_lab_maps_to_free_spins():
    red = lm.reduce_to_model(blank_lab())
    assert red.params.V == 0 and red.params.gamma == 0 and red.params.h == pytest.approx(0.75)


@settings(max_examples=40, deadline=None)
@given(V=st.floats(-3, 3), h=st.floats(0.1, 3), gamma=st.floats(0.01, 10), kappa=st.floats(0.05, 5),
       omega=st.floats(-5, 5), N=st.integers(1, 200), retained=st.sampled_from(lm.SLOW_MODES))
def test_round_trip(V, h, gamma, kappa, omega, N, retained):
    target = ModelParams(V=V, h=h, gamma=gamma, kappa=kappa, omega=omega, N=N)
    red = lm.reduce_to_model(lm.design_lab_point(target, retained=retained))
    assert red.retained == retained and red.params.N == N
    # omega comes out of a difference of cavity frequencies, so tiny values carry absolute error
    for k in KEYS:
        assert abs(getattr(red.params, k) - getattr(target, k)) < 1e-10 * max(1.0, abs(getattr(target, k)))


@pytest.mark.parametrize("retained", lm.SLOW_MODES)
@pytest.mark.parametrize("target", [TARGET, ModelParams(V=-0.4, h=0.5, gamma=1.0, kappa=2.0, omega=3.0, N=7)])
def test_round_trip_relative(target, retained):
    red = lm.reduce_to_model(lm.design_lab_point(target, retained=retained))
    assert rel_error(red.params, target) < 1e-10


def test_zero_V_round_trip():
    target = TARGET.with_(V=0.0)
    red = lm.reduce_to_model(lm.design_lab_point(target))
    assert red.params.V == 0.0
    assert red.effective.modes["a1"].lam == 0 and red.effective.modes["b1"].lam == 0
    assert rel_error(red.params, target) < 1e-10


def _failed(lab):
    with pytest.raises(lm.LabConditionError) as info:
        lm.reduce_to_model(lab)
    return info.value


def test_condition_1_break():
    err = _failed(lm.design_lab_point(TARGET, Delta1=1.01 * lm.design_lab_point(TARGET).Delta0))
    assert err.failed == [1] and "condition 1" in str(err)


def test_condition_2_break():
    err = _failed(lm.design_lab_point(TARGET, fast_detuning_ratio=5, fast_kappa=10))
    assert err.failed == [2] and "condition 2" in str(err)


def test_condition_3_break():
    lab = lm.design_lab_point(TARGET)
    lab.Omega[0, 0, 0] *= -1
    err = _failed(lab)
    assert err.failed == [3] and "condition 3" in str(err)


def test_condition_4_break():
    lab = lm.design_lab_point(TARGET)
    lab.Omega[0, 0, 0] *= 1.1
    lab.Omega[0, 1, 1] *= 1.1
    err = _failed(lab)
    assert err.failed == [4] and "condition 4" in str(err)


def test_same_sign_fast_detunings_are_flagged():
    lab = lm.design_lab_point(TARGET)
    eff = lm.effective_parameters(lab)
    # move the a1 cavity so delta_a1 flips sign onto delta_b1's side
    lab.omega_modes["a1"] -= 2 * eff.modes["a1"].delta
    err = _failed(lab)
    assert err.failed == [4] and "opposite signs" in str(err)


def test_both_slow_modes_driven():
    lab = lm.design_lab_point(TARGET)
    lab.Omega[1] = lm.design_lab_point(TARGET, retained="b2").Omega[1] + lab.Omega[1]
    with pytest.raises(lm.RetainedModeError):
        lm.reduce_to_model(lab)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.1, 10), t=st.floats(0.1, 10))
def test_couplings_scale_with_drive_and_cavity(s, t):
    lab = lm.design_lab_point(TARGET)
    base = lm.effective_parameters(lab).modes
    lab.Omega = lab.Omega * s
    lab.g = lab.g * t
    scaled = lm.effective_parameters(lab).modes
    for k in lm.MODES:
        for attr in ("alpha", "beta"):
            a = base[k].lam * getattr(base[k], attr)
            b = scaled[k].lam * getattr(scaled[k], attr)
            assert abs(b - s * t * a) < 1e-10 * max(1, abs(s * t * a))


def test_dominance_warning():
    lab = lm.design_lab_point(TARGET)
    lab.Delta0 = lab.Delta1 = 1.0
    with pytest.warns(UserWarning, match="Delta_0"):
        lm.effective_parameters(lab)


def test_resonance_bookkeeping():
    lab = lm.design_lab_point(TARGET)
    assert lab.resonance_mismatch() < 1e-9
    lab.drive_freqs[0, 0, 1] += 1.0
    assert lab.resonance_mismatch() == pytest.approx(1.0)
    assert any("bookkeeping" in w for w in lm.effective_parameters(lab).warnings)


def test_lab_file_round_trip(tmp_path):
    lab = lm.design_lab_point(TARGET, retained="b2")
    path = tmp_path / "lab.txt"
    lm.write_lab(lab, path)
    back = lm.read_lab(path)
    np.testing.assert_array_equal(back.Omega, lab.Omega)
    np.testing.assert_array_equal(back.g, lab.g)
    np.testing.assert_array_equal(back.drive_freqs, lab.drive_freqs)
    assert back.omega_modes == lab.omega_modes and back.omega_frame == lab.omega_frame
    assert lm.reduce_to_model(back).params == lm.reduce_to_model(lab).params


def test_lab_file_errors():
    text = lm.dumps_lab(lm.design_lab_point(TARGET))
    with pytest.raises(ValueError, match="unknown"):
        lm.loads_lab(text + "bogus = 1\n")
    with pytest.raises(ValueError, match="missing"):
        lm.loads_lab(text.replace("Delta1", "# Delta1"))
    with pytest.raises(ValueError, match="malformed"):
        lm.loads_lab(text + "nonsense\n")


def test_diagnostics_json():
    red = lm.reduce_to_model(lm.design_lab_point(TARGET))
    d = json.loads(red.diagnostics_json())
    assert [c["id"] for c in d["conditions"]] == [1, 2, 3, 4]
    assert all(c["ok"] for c in d["conditions"])
    assert d["retained_mode"] == "a2" and set(d["modes"]) == set(lm.MODES)
