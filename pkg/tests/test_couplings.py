import numpy as np
import pytest

from nvbath.constants import DEFAULT_CONSTANTS as CONSTS
from nvbath.constants import PhysicalConstants
from nvbath.couplings import (
    CouplingSet,
    FieldProfile,
    effective_larmor,
    gradient_larmor,
    hyperfine_field,
    hyperfine_vector,
    internuclear_couplings,
    nv_couplings,
)

# hand-evaluated secular dipolar components at r = (1, 0, 3) nm with the
# CODATA gyromagnetic ratios (fixture frozen before the implementation)
A_X_FIXTURE = 0.014138496029210213
A_Z_FIXTURE = -0.02670604805517484
C_EN_FIXTURE = 0.4967761126838978
C_NN_FIXTURE = 7.547372320403378e-4


def test_prefactors_match_codata_products():
    assert CONSTS.c_en == pytest.approx(C_EN_FIXTURE, rel=1e-9)
    assert CONSTS.c_nn == pytest.approx(C_NN_FIXTURE, rel=1e-9)


def test_hyperfine_fixture():
    hv = hyperfine_vector((1.0, 0.0, 3.0), CONSTS)
    assert hv.a_x == pytest.approx(A_X_FIXTURE, rel=1e-12)
    assert hv.a_y == 0.0
    assert hv.a_z == pytest.approx(A_Z_FIXTURE, rel=1e-12)


def test_hyperfine_on_axis_transverse_vanishes():
    hv = hyperfine_vector((0.0, 0.0, 2.5), CONSTS)
    assert hv.a_x == 0.0 and hv.a_y == 0.0
    assert hv.a_z == pytest.approx(-2.0 * CONSTS.c_en / 2.5**3)


def test_hyperfine_scaling_law():
    rng = np.random.default_rng(3)
    for _ in range(25):
        r = rng.uniform(-4, 4, 3)
        if np.linalg.norm(r) < 0.5:
            continue
        c = rng.uniform(0.5, 3.0)
        a1 = hyperfine_field(r.reshape(1, 3), CONSTS)[0]
        a2 = hyperfine_field((c * r).reshape(1, 3), CONSTS)[0]
        assert np.allclose(a2, a1 / c**3, rtol=1e-12)


def test_hyperfine_magic_angle_and_plane():
    # A_z changes sign across cos^2 = 1/3
    theta_magic = np.arccos(np.sqrt(1.0 / 3.0))
    for eps, sign in ((-0.01, -1.0), (0.01, 1.0)):
        th = theta_magic + eps
        r = np.array([np.sin(th), 0.0, np.cos(th)]) * 2.0
        assert np.sign(hyperfine_vector(r, CONSTS).a_z) == sign
    # transverse magnitude vanishes in the equatorial plane
    hv = hyperfine_vector((2.0, 1.0, 0.0), CONSTS)
    assert hv.transverse == 0.0


def test_hyperfine_singularity():
    with pytest.raises(ValueError):
        hyperfine_vector((0.0, 0.0, 0.0), CONSTS)


def test_nv_coupling_magnitude_and_phase():
    pos = np.array([[1.2, -0.7, 3.1]])
    a = hyperfine_field(pos, CONSTS)[0]
    g = nv_couplings(pos, CONSTS)[0]
    assert abs(g) == pytest.approx(0.25 * np.hypot(a[0], a[1]), rel=1e-12)
    assert np.angle(g) == pytest.approx(-np.arctan2(a[1], a[0]))


def test_nv_coupling_on_axis_zero():
    assert nv_couplings(np.array([[0.0, 0.0, 3.0]]), CONSTS)[0] == 0


def test_mirror_pair_cancellation():
    pos = np.array([[1.0, 0.7, 3.0], [-1.0, -0.7, 3.0]])
    g = nv_couplings(pos, CONSTS)
    assert abs(g[0]) == pytest.approx(abs(g[1]), rel=1e-12)
    assert abs(g.sum()) < 1e-15


def test_transverse_scale_multiplies_g():
    scaled = PhysicalConstants(transverse_scale=2.0)
    pos = np.array([[1.0, 0.5, 3.0]])
    assert abs(nv_couplings(pos, scaled)[0]) == pytest.approx(
        2.0 * abs(nv_couplings(pos, CONSTS)[0])
    )


def test_internuclear_stacked_pair():
    pos = np.array([[0.0, 0.0, 3.0], [0.0, 0.0, 3.2]])
    h = internuclear_couplings(pos, CONSTS)
    assert h[0, 1] == pytest.approx(-2.0 * CONSTS.c_nn / 0.2**3, rel=1e-12)


def test_internuclear_in_plane_pair():
    pos = np.array([[0.0, 0.0, 3.0], [0.3, 0.0, 3.0]])
    h = internuclear_couplings(pos, CONSTS)
    assert h[0, 1] == pytest.approx(CONSTS.c_nn / 0.3**3, rel=1e-12)


def test_internuclear_intramolecular_oracle():
    # 0.151 nm pair at arbitrary orientation against the direct formula
    d = np.array([0.09, 0.05, 0.11])
    d = d / np.linalg.norm(d) * 0.151
    pos = np.vstack([[0.4, -0.2, 3.0], [0.4, -0.2, 3.0] + d])
    h = internuclear_couplings(pos, CONSTS)
    r = 0.151
    expect = CONSTS.c_nn * (1.0 - 3.0 * d[2] ** 2 / r**2) / r**3
    assert h[0, 1] == pytest.approx(expect, rel=1e-10)


def test_internuclear_symmetry_and_errors():
    rng = np.random.default_rng(5)
    pos = rng.uniform([-3, -3, 2], [3, 3, 5], (12, 3))
    h = internuclear_couplings(pos, CONSTS)
    assert np.array_equal(h, h.T)
    assert np.all(np.diag(h) == 0.0)
    with pytest.raises(ValueError):
        internuclear_couplings(pos[:1], CONSTS)
    with pytest.raises(ValueError):
        internuclear_couplings(np.vstack([pos[0], pos[0]]), CONSTS)


def test_effective_larmor():
    b0 = 234.86595139286462
    assert effective_larmor(0.0, b0, CONSTS) == pytest.approx(2 * np.pi)
    a_z = hyperfine_vector((0.0, 0.0, 3.0), CONSTS).a_z
    assert effective_larmor(a_z, b0, CONSTS) == pytest.approx(
        2 * np.pi - 0.5 * a_z
    )
    # deep-proton limit
    far = hyperfine_vector((0.0, 0.0, 300.0), CONSTS).a_z
    assert effective_larmor(far, b0, CONSTS) == pytest.approx(2 * np.pi, rel=1e-8)
    with pytest.raises(ValueError):
        effective_larmor(0.0, -1.0, CONSTS)


def test_gradient_larmor():
    field0 = FieldProfile(b0=235.0, grad_lambda=0.0)
    z = np.array([2.0, 5.0, 9.0])
    w = gradient_larmor(z, field0, CONSTS)
    assert np.allclose(w, CONSTS.gamma_h * 235.0)

    field = FieldProfile(b0=235.0, grad_lambda=60.0)
    assert gradient_larmor(3.0, field, CONSTS) == pytest.approx(
        11.102170778760001, rel=1e-12
    )
    # adjacent layer detuning gamma_H * lambda * d
    d = 0.3678
    det = gradient_larmor(3.0 + d, field, CONSTS) - gradient_larmor(3.0, field, CONSTS)
    assert det == pytest.approx(CONSTS.gamma_h * 60.0 * d, rel=1e-12)


def test_field_profile_validation():
    with pytest.raises(ValueError):
        FieldProfile(b0=-5.0)
    with pytest.raises(ValueError):
        FieldProfile(b0=100.0, grad_lambda=-1.0)


def test_coupling_set_validation():
    with pytest.raises(ValueError):
        CouplingSet(g=[1.0], h=np.zeros((2, 2)), omega=[1.0])
    with pytest.raises(ValueError):
        CouplingSet(g=[1.0, 1.0], h=np.zeros((2, 2)), omega=[1.0])
