import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nmlmg import observables as ob, spin_algebra as sa, thermolimit
from nmlmg.model import ModelParams

FIG2 = ModelParams(V=1.25, h=1.0, gamma=10.0, kappa=10.0, omega=10.0)


def mixed(N):
    return np.eye(N + 1, dtype=complex) / (N + 1)


def pole(N, index):
    rho = np.zeros((N + 1, N + 1), dtype=complex)
    rho[index, index] = 1.0
    return rho


def test_expectation_examples():
    alg = sa.build(6)
    assert abs(ob.expectation(mixed(6), alg.Sz)) < 1e-15
    assert ob.expectation(pole(6, 0), alg.Sz) == -3.0


def test_expectation_guards():
    alg = sa.build(3)
    with pytest.raises(ValueError, match="normalized"):
        ob.expectation(2 * mixed(3), alg.Sz)
    with pytest.raises(ob.NonHermitianExpectationError):
        ob.expectation(pole(3, 0), 1j * alg.Sz.toarray() + np.eye(4))
    assert ob.expectation(mixed(3), alg.Splus.toarray(), hermitian=False) == 0


@pytest.mark.parametrize("N", [1, 2, 7, 20])
def test_maximally_mixed_values(N):
    alg = sa.build(N)
    J = N / 2
    assert ob.order_parameter_sy2(mixed(N), alg) == pytest.approx((J + 1) / (3 * J), rel=1e-13)
    assert ob.squeezing_xi2(mixed(N), alg) == pytest.approx((N + 2) / 3, rel=1e-13)


@pytest.mark.parametrize("N", [1, 4, 15])
def test_coherent_state_is_unsqueezed(N):
    assert ob.squeezing_xi2(pole(N, 0), sa.build(N)) == pytest.approx(1.0, abs=1e-13)


def test_squeezing_guard():
    alg = sa.build(4)
    psi = sa.coherent_state(alg, 1.0, 0.0)
    with pytest.raises(ob.MeanSpinNotAlongZError):
        ob.squeezing_xi2(np.outer(psi, psi.conj()), alg)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(2, 12), phi=st.floats(0, 2 * np.pi), seed=st.integers(0, 2**32 - 1))
def test_xi2_rotation_invariant(N, phi, seed):
    alg = sa.build(N)
    rng = np.random.default_rng(seed)
    # random z-symmetric state: only even coherences, so <Sx> = <Sy> = 0
    A = rng.normal(size=(N + 1, N + 1)) + 1j * rng.normal(size=(N + 1, N + 1))
    mask = (np.add.outer(np.arange(N + 1), np.arange(N + 1)) % 2 == 0)
    A = A * mask
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    R = expm(1j * phi * alg.Sz.toarray())
    rot = R @ rho @ R.conj().T
    assert abs(ob.squeezing_xi2(rot, alg) - ob.squeezing_xi2(rho, alg)) < 1e-10


def _sweep(axis, values):
    return ob.SweepResult(np.asarray(axis), {"o": np.asarray(values, dtype=float)})


def test_susceptibility_examples():
    v = np.linspace(-1, 2, 13)
    np.testing.assert_array_equal(ob.susceptibility(_sweep(v, np.full(13, 0.3)), "o"), 0.0)
    np.testing.assert_allclose(ob.susceptibility(_sweep(v, 2 * v), "o"), 2.0, rtol=1e-12)
    u = np.array([0.0, 0.1, 0.35, 0.4, 1.0])
    np.testing.assert_allclose(ob.susceptibility(_sweep(u, 2 * u), "o"), 2.0, rtol=1e-12)
    with pytest.raises(ValueError):
        ob.susceptibility(_sweep([1.0], [1.0]), "o")


def test_susceptibility_antisymmetric_about_centre():
    v = np.linspace(0.25, 2.25, 21)  # symmetric about 1.25
    chi = ob.susceptibility(_sweep(v, np.exp(-((v - 1.25) / 0.3) ** 2)), "o")
    np.testing.assert_allclose(chi, -chi[::-1], atol=1e-14)


def test_sweep_result_validation():
    with pytest.raises(ValueError):
        ob.SweepResult(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        _sweep([0.0, 1.0], [1.0])
    s = _sweep([0.0, 0.5], [1.0, 2.0])
    lines = s.to_csv("hdr").splitlines()
    assert lines[:2] == ["# hdr", "V_over_h,o"]
    assert lines[3].startswith("0.5,2.0")


def test_peak_location():
    x = np.linspace(0, 1, 11)
    xv, yv = ob.peak_location(x, -(x - 0.437) ** 2 + 3)
    assert xv == pytest.approx(0.437, abs=1e-12) and yv == pytest.approx(3.0, abs=1e-12)
    assert ob.peak_location(x, x) == (1.0, 1.0)


def test_husimi_pole_and_normalization():
    alg = sa.build(8)
    field = ob.husimi(pole(8, 8), alg, grid=(121, 61))
    theta, _, Q = field.maxima(1)[0]
    assert theta == 0.0 and Q == pytest.approx(1.0, abs=1e-14)
    assert abs(field.normalization() - 1) < 1e-3


@settings(max_examples=15, deadline=None)
@given(N=st.integers(1, 15), seed=st.integers(0, 2**32 - 1))
def test_husimi_positive_and_normalized(N, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(N + 1, N + 1)) + 1j * rng.normal(size=(N + 1, N + 1))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    field = ob.husimi(rho, sa.build(N), grid=(181, 91))
    assert field.Q.min() >= -1e-12
    assert abs(field.normalization() - 1) < 2e-3


def test_husimi_maxima_on_equator():
    alg = sa.build(10)
    psi = sa.coherent_state(alg, np.pi / 2, np.pi / 2) + sa.coherent_state(alg, np.pi / 2, 3 * np.pi / 2)
    rho = np.outer(psi, psi.conj())
    rho /= np.trace(rho)
    peaks = ob.husimi(rho, alg, grid=(91, 181)).maxima(2)
    angles = sorted(min(ob.angle_to(t, p, [0, 1, 0]), ob.angle_to(t, p, [0, -1, 0])) for t, p, _ in peaks)
    assert angles[-1] < 1e-6


def test_husimi_csv_shape():
    field = ob.husimi(mixed(2), sa.build(2), grid=(3, 5))
    lines = field.to_csv().splitlines()
    assert lines[0] == "theta,phi,Q" and len(lines) == 16


def test_angle_to():
    assert ob.angle_to(np.pi / 2, 0.0, [1, 0, 0]) == pytest.approx(0.0, abs=1e-6)
    assert ob.angle_to(np.pi, 0.0, [0, 0, 1]) == pytest.approx(180.0)


def test_gap_fit_examples():
    Ns = np.array([12, 16, 20, 24, 28])
    fit = ob.gap_scaling_fit(np.column_stack([Ns, 3 * Ns**-0.63]))
    assert abs(fit.exponent + 0.63) < 1e-12 and abs(fit.prefactor - 3) < 1e-11 and fit.r2 > 1 - 1e-12
    flat = ob.gap_scaling_fit(np.column_stack([Ns, np.full(5, 0.2)]))
    assert abs(flat.exponent) < 1e-12
    with pytest.raises(ValueError):
        ob.gap_scaling_fit([[12, 1.0], [16, 0.0], [20, 1.0], [24, 1.0]])
    with pytest.raises(ValueError):
        ob.gap_scaling_fit([[12, 1.0], [16, 1.0], [20, 1.0]])


def test_heom_sweep_columns():
    s = ob.heom_sweep(FIG2, [1.0, 1.5], N=4, k_max=4, gap0=True, gap1=True)
    assert set(s.observables) == {"sy2_norm", "sz_norm", "xi2", "gap0", "gap1"}
    assert np.all(s.observables["gap0"] > 0) and np.all(s.observables["gap1"] > 0)


@pytest.mark.slow
def test_phase_trends_with_N():
    def obs(p, v, N, key):
        return ob.heom_sweep(p, [v], N, 8, gap0=False).observables[key][0]

    deep_III = [obs(FIG2, 5.0, N, "sy2_norm") for N in (8, 16, 24)]
    assert deep_III[0] < deep_III[1] < deep_III[2] < 0.96
    deep_I = [obs(FIG2, -5.0, N, "sy2_norm") for N in (8, 16, 24)]
    assert deep_I[0] > deep_I[1] > deep_I[2] > 0
    phase_II = ModelParams(V=0.0, h=1.0, gamma=1.0, kappa=1.0, omega=1.0)
    sz = [obs(phase_II, 0.0, N, "sz_norm") for N in (8, 16, 24)]
    assert -1 < sz[2] < sz[1] < sz[0]


@pytest.mark.slow
def test_finite_N_squeezing_peaks_between_the_critical_lines():
    # gamma = h/(2 q2), h = omega/2, kappa = omega: V1 = -0.75h, V2 = h, midpoint 0.125h
    h = 0.5
    p = ModelParams(V=0.0, h=h, gamma=h / (2 * thermolimit.q2_of(1.0, 1.0)), kappa=1.0, omega=1.0)
    v = np.array([0.075, 0.1, 0.125, 0.15, 0.175])
    xi2 = ob.heom_sweep(p, v, 24, 8, gap0=False).observables["xi2"]
    assert int(np.argmax(xi2)) == 2
    assert abs(ob.peak_location(v, xi2)[0] - 0.125) < 0.025
