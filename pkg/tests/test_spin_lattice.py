import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import golden as G
import oracles as O
from lrstripes.model_core import ModelParams
from lrstripes.spin_lattice import (AllMinus, AllPlus, BoxGeometry, ExplicitExterior, Periodic,
                                    SpinConfiguration, boundary_term, from_text, interior_energy,
                                    make_striped, model_energy, quadratic_model,
                                    random_configuration, to_text, total_energy)
from lrstripes.stripe_analytics import stripe_energy_per_site

P7 = ModelParams(G.BOX_J, 7.0, 2)


def _oracle_tol(n_minus, d=2, R=300):
    return 2 * n_minus * O._outside_cube_bound(d, 7.0, R) + 1e-10


def test_all_plus_is_zero():
    cfg = SpinConfiguration(BoxGeometry((5, 4)), np.ones((5, 4)))
    assert total_energy(cfg, P7).value == 0.0
    assert boundary_term(cfg, P7).value == 0.0


def test_all_minus_4x4_golden():
    cfg = SpinConfiguration(BoxGeometry((4, 4)), -np.ones((4, 4)))
    assert total_energy(cfg, P7).value == pytest.approx(G.ALLMINUS_4X4_PLUS, abs=_oracle_tol(16))


def test_random_box_goldens():
    g = BoxGeometry((4, 5))
    s = np.array(G.RANDOM_4X5)
    nm = int((s < 0).sum())
    plus = total_energy(SpinConfiguration(g, s), P7).value
    torus = total_energy(SpinConfiguration(g, s, Periodic((0, 1))), P7).value
    assert plus == pytest.approx(G.RANDOM_4X5_PLUS, abs=_oracle_tol(nm))
    assert torus == pytest.approx(G.RANDOM_4X5_TORUS, abs=_oracle_tol(20))


def test_random_3d_golden():
    s = np.array(G.RANDOM_3X3X3)
    cfg = SpinConfiguration(BoxGeometry((3, 3, 3)), s, AllMinus())
    val = total_energy(cfg, ModelParams(G.BOX_J, 7.0, 3)).value
    assert val == pytest.approx(G.RANDOM_3X3X3_MINUS, abs=_oracle_tol(27, d=3, R=40))


def test_single_minus_spin():
    s = np.ones((9, 9))
    s[4, 4] = -1
    J = 1.3
    val = total_energy(SpinConfiguration(BoxGeometry((9, 9)), s), ModelParams(J, 7.0, 2)).value
    # 4 broken bonds at 2J each, and -2 |n|^-p against every other site
    assert val == pytest.approx(8 * J - 2 * G.SP_P7_D2, abs=1e-9)
    assert val > 0


def test_boundary_term_all_minus_2x2_p5():
    J = 1.1
    cfg = SpinConfiguration(BoxGeometry((2, 2)), -np.ones((2, 2)))
    # 8 nn bonds cross the boundary at 2J each; every site couples with -2 |n|^-5
    # to all lattice sites except its 3 partners inside the box
    inner = 2 * 1.0 + 2 ** -2.5
    ref = 8 * 2 * J - 2 * 4 * (G.SP_P5_D2 - inner)
    val = boundary_term(cfg, ModelParams(J, 5.0, 2)).value
    # the golden S_5 is low by at most its 2.6e-10 tail bound
    assert val == pytest.approx(ref, abs=8 * 2.7e-10 + 1e-10)


def test_total_is_interior_plus_boundary():
    cfg = random_configuration(BoxGeometry((6, 7)), AllPlus(), seed=3, minus_density=0.4)
    tot = total_energy(cfg, P7).value
    assert tot == pytest.approx(interior_energy(cfg, P7).value + boundary_term(cfg, P7).value,
                                abs=1e-12)


def test_explicit_exterior_matches_uniform():
    cfg = random_configuration(BoxGeometry((5, 5)), AllMinus(), seed=1)
    ext = ExplicitExterior(lambda xs: -np.ones(xs.shape[:-1], dtype=int), margin=3, far_sign=-1)
    a = total_energy(cfg, P7).value
    b = total_energy(SpinConfiguration(cfg.geometry, cfg.spins, ext), P7).value
    assert a == pytest.approx(b, abs=1e-9)


def test_explicit_exterior_bruteforce():
    # exterior: minus on the half plane x_0 < 0, plus elsewhere
    def rule(xs):
        return np.where(xs[..., 0] < 0, -1, 1)

    g = BoxGeometry((3, 3))
    s = np.array([[1, -1, 1], [-1, -1, 1], [1, 1, 1]])
    ext = ExplicitExterior(rule, margin=60, far_sign=1)
    val = total_energy(SpinConfiguration(g, s, ext), P7).value
    # oracle: explicit sum over pairs within |o|_inf <= 60 of each site
    J, p = G.BOX_J, 7.0
    E = 0.0
    offsets = [o for o in itertools.product(range(-60, 61), repeat=2) if any(o)]
    for x in itertools.product(range(3), range(3)):
        for o in offsets:
            y = (x[0] + o[0], x[1] + o[1])
            w = (o[0] ** 2 + o[1] ** 2) ** (-p / 2) - (J if abs(o[0]) + abs(o[1]) == 1 else 0.0)
            if 0 <= y[0] < 3 and 0 <= y[1] < 3:
                E += 0.5 * w * (s[x] * s[y] - 1)
            else:
                E += w * (s[x] * (-1 if y[0] < 0 else 1) - 1)
    # the half-plane exterior beyond 60 is still minus: that tail is missing from E
    assert val == pytest.approx(E, abs=2 * 9 * O._outside_cube_bound(2, 7.0, 60) + 1e-10)


def test_make_striped_examples():
    g = BoxGeometry((6, 3))
    hom = make_striped(g, 0, [6], first_sign=1)
    assert np.all(hom.spins == 1)
    alt = make_striped(g, 0, [1] * 6, first_sign=-1)
    assert alt.spins[:, 0].tolist() == [-1, 1, -1, 1, -1, 1]
    assert np.all(alt.spins == alt.spins[:, :1])
    with pytest.raises(ValueError):
        make_striped(g, 0, [2, 2])


def test_striped_ring_matches_stripe_energy():
    # d = 2 strip of h-wide columns, periodic both ways: per site -> e_s(h)
    h, M = 3, 6
    params = ModelParams(G.BOX_J, 7.0, 2)
    cfg = make_striped(BoxGeometry((2 * h * M, 12)), 0, [h] * (2 * M), bc=Periodic((0, 1)))
    per_site = total_energy(cfg, params).value / cfg.geometry.volume
    assert per_site == pytest.approx(stripe_energy_per_site(h, params).value, rel=1e-6)


def test_random_configuration_contract():
    g = BoxGeometry((4, 6))
    assert np.all(random_configuration(g, AllPlus(), 7, 0.0).spins == 1)
    assert np.all(random_configuration(g, AllPlus(), 7, 1.0).spins == -1)
    assert random_configuration(g, AllPlus(), 7) == random_configuration(g, AllPlus(), 7)
    with pytest.raises(ValueError):
        random_configuration(g, AllPlus(), 7, 1.5)


def test_validation():
    with pytest.raises(ValueError):
        SpinConfiguration(BoxGeometry((2, 2)), np.array([[1, 0], [1, 1]]))
    with pytest.raises(ValueError):
        SpinConfiguration(BoxGeometry((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        BoxGeometry((0, 3))
    with pytest.raises(ValueError):
        Periodic((0, 0))
    cfg = SpinConfiguration(BoxGeometry((2, 2, 2)), np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        total_energy(cfg, P7)


def test_quadratic_model_agrees_with_total_energy():
    for bc in (AllPlus(), AllMinus(), Periodic((1,)), Periodic((0, 1))):
        g = BoxGeometry((3, 4))
        W, f, c = quadratic_model(g, bc, P7)
        for seed in range(5):
            cfg = random_configuration(g, bc, seed)
            assert model_energy(cfg.spins, W, f, c) == pytest.approx(
                total_energy(cfg, P7).value, abs=1e-10)


def test_text_roundtrip_examples():
    cfg = random_configuration(BoxGeometry((3, 5)), Periodic((1,)), 2)
    text = to_text(cfg)
    assert text.splitlines()[0].split()[:3] == ["2", "3", "5"]
    assert set("".join(text.splitlines()[1:])) <= {"+", "-"}
    assert from_text(text) == cfg
    cfg3 = random_configuration(BoxGeometry((2, 3, 4)), AllMinus(), 2)
    assert from_text(to_text(cfg3)) == cfg3


configs = st.builds(
    lambda dims, seed, rho, bc: random_configuration(BoxGeometry(dims), bc, seed, rho),
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    st.integers(0, 10 ** 6), st.floats(0, 1),
    st.sampled_from([AllPlus(), AllMinus(), Periodic((0,)), Periodic((1,)), Periodic((0, 1))]))


@settings(max_examples=40, deadline=None)
@given(configs)
def test_text_roundtrip_property(cfg):
    assert from_text(to_text(cfg)) == cfg


@settings(max_examples=30, deadline=None)
@given(configs)
def test_global_flip_covariance(cfg):
    a = total_energy(cfg, P7).value
    b = total_energy(cfg.flipped(), P7).value
    assert a == pytest.approx(b, abs=1e-9 * (1 + abs(a)))


@settings(max_examples=30, deadline=None)
@given(configs, st.integers(0, 7), st.tuples(st.integers(-20, 20), st.integers(-20, 20)))
def test_symmetry_invariance(cfg, g_index, shift):
    if isinstance(cfg.bc, Periodic) and len(cfg.bc.axes) == 1:
        return  # mixed boundaries are not symmetric under axis swaps
    a = total_energy(cfg, P7).value
    s = cfg.spins
    if g_index & 1:
        s = s[::-1]
    if g_index & 2:
        s = s[:, ::-1]
    if g_index & 4:
        s = s.T
    moved = SpinConfiguration(BoxGeometry(s.shape, origin=shift), s, cfg.bc)
    assert total_energy(moved, P7).value == pytest.approx(a, abs=1e-9 * (1 + abs(a)))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 24), st.floats(0.0, 0.5))
def test_single_flip_positive_above_jc(n, m, k, excess):
    params = ModelParams(G.JC_P7_D2 + 0.01 + excess, 7.0, 2)
    s = np.ones((n, m))
    s.flat[k % (n * m)] = -1
    assert total_energy(SpinConfiguration(BoxGeometry((n, m)), s), params).value > 0
