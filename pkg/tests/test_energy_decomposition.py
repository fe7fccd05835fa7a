import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import golden as G
import oracles as O
from lrstripes import droplet_geometry as dg
from lrstripes import energy_decomposition as ed
from lrstripes.model_core import ModelParams, critical_coupling
from lrstripes.spin_lattice import (AllMinus, AllPlus, BoxGeometry, Periodic, SpinConfiguration,
                                    random_configuration, total_energy)

P7 = ModelParams.from_tau(-0.02, 7.0, 2)
P5 = ModelParams.from_tau(-0.02, 5.0, 2)


def _config(minus_sites, dims):
    s = np.ones(dims, dtype=np.int8)
    for x in minus_sites:
        s[tuple(x)] = -1
    return SpinConfiguration(BoxGeometry(dims), s)


def test_decompose_all_plus():
    b = ed.decompose(_config([], (5, 5)), P7)
    assert b.contour_term == 0 and b.self_energies == [] and b.interactions == {}
    assert b.total == 0


def test_decompose_single_spin():
    b = ed.decompose(_config([(4, 4)], (9, 9)), P7)
    assert b.contour_term == pytest.approx(8 * P7.J, rel=1e-15)
    assert b.self_energies[0] == pytest.approx(-2 * G.SP_P7_D2, abs=1e-10)
    assert b.interactions == {}


def test_two_single_sites_interaction():
    b = ed.decompose(_config([(1, 1), (1, 4)], (3, 6)), P7)
    (w,) = b.interactions.values()
    assert w == pytest.approx(4 * 3.0 ** -7, rel=1e-14)
    a, c = dg.split_droplets(_config([(0, 0), (2, 1)], (4, 4)))
    assert ed.interaction(a, c, P7) == ed.interaction(c, a, P7) == pytest.approx(4 * 5 ** -3.5)
    a2, c2 = dg.split_droplets(_config([(1, 2), (3, 3)], (5, 5)))
    assert ed.interaction(a2, c2, P7) == pytest.approx(ed.interaction(a, c, P7), rel=1e-15)
    with pytest.raises(ValueError):
        ed.interaction(a, a, P7)


def test_decompose_rejects_other_bc():
    cfg = random_configuration(BoxGeometry((4, 4)), AllMinus(), 1)
    with pytest.raises(ValueError):
        ed.decompose(cfg, P7)
    with pytest.raises(ValueError):
        ed.decompose(random_configuration(BoxGeometry((4, 4)), Periodic((0, 1)), 1), P7)


def test_self_energy_examples():
    assert ed.self_energy(dg.droplet_from_sites([(0, 0)]), P7).value == pytest.approx(
        -2 * G.SP_P7_D2, abs=1e-10)
    # domino: every site loses S_p, minus its partner at distance 1, counted twice
    dom = ed.self_energy(dg.droplet_from_sites([(0, 0), (0, 1)]), P7).value
    assert dom == pytest.approx(-4 * G.SP_P7_D2 + 4.0, abs=1e-10)


def test_self_energy_monotone_on_small_polyominoes():
    # removing a cell that keeps the droplet connected makes U less negative
    for poly in dg.fixed_polyominoes(5):
        if len(poly) == 1:
            continue
        u = ed.self_energy(dg.droplet_from_sites(list(poly)), P7).value
        for c in poly:
            rest = dg.droplet_from_sites([x for x in poly if x != c])
            if dg.label_components(rest.mask, rest.modes)[1] == 1:
                assert u < ed.self_energy(rest, P7).value


@pytest.mark.parametrize("p", [5.0, 7.0, 9.0])
def test_single_site_bound(p):
    params = ModelParams.from_tau(-0.02, p, 2)
    rep = ed.self_energy_lower_bound(dg.droplet_from_sites([(0, 0)]), params)
    assert rep.passed
    assert rep.lhs == pytest.approx(-2 * O.lattice_sum_bruteforce(p, 2, 400)[0], abs=1e-6)
    # four bonds with d_b = 1, each contributing F(1) = sum_{n_1 != 0} |n|^-p, plus 4 corners
    n = np.arange(-300, 301, dtype=float)
    sq = n[:, None] ** 2 + n[None, :] ** 2
    F1 = math.fsum(sq[n != 0].ravel() ** (-p / 2))
    assert rep.rhs == pytest.approx(-4 * F1 + 4 * 2 ** (1 - p / 2), abs=1e-6)


def test_bars_bound():
    for k in range(1, 21):
        bar = dg.droplet_from_sites([(0, j) for j in range(k)])
        assert len(dg.shadowed_pairs(bar)) == 0
        assert dg.corner_count(bar) == 4
        assert ed.self_energy_lower_bound(bar, P7).passed
        crude = ed.crude_lower_bound(bar, P7)
        assert crude.passed
        assert crude.rhs == pytest.approx(-2 * P7.jc * (2 * k + 2))


def test_single_site_crude():
    rep = ed.crude_lower_bound(dg.droplet_from_sites([(0, 0)]), P7)
    assert rep.passed and G.SP_P7_D2 <= 4 * G.JC_P7_D2


def test_rectangle_crude():
    for h, w in [(2, 3), (4, 4), (3, 7)]:
        r = dg.droplet_from_sites([(i, j) for i in range(h) for j in range(w)])
        assert ed.crude_lower_bound(r, P5).passed


def test_window_sum_is_a_lower_estimate():
    drop = dg.droplet_from_sites([(0, 0), (1, 0), (1, 1), (2, 1), (0, 2)])
    exact, _ = ed.self_energy_rhs(dg.split_droplets(
        SpinConfiguration(BoxGeometry((5, 5)), np.where(np.pad(drop.mask, 1), -1, 1)))[0], P7)
    windowed, _ = ed.self_energy_rhs(drop, P7, n_window=8)
    assert windowed <= exact + 1e-12


def test_self_energy_bound_3d():
    params = ModelParams.from_tau(-0.02, 8.0, 3)
    for sites in ([(0, 0, 0)], [(0, 0, 0), (1, 0, 0), (1, 1, 0)],
                  [(i, j, k) for i in range(2) for j in range(2) for k in range(2)]):
        assert ed.self_energy_lower_bound(dg.droplet_from_sites(sites), params).passed


def test_counting_consistent_with_self_energy():
    # summing N_n over all n counts each (inside, outside) pair twice, which is -U
    drop = dg.droplet_from_sites([(0, 0), (0, 1), (1, 1)])
    R = 40
    total = 0.0
    for n1 in range(-R, R + 1):
        for n2 in range(-R, R + 1):
            if (n1, n2) != (0, 0):
                total += dg.boundary_pair_count(drop, (n1, n2)) * (n1 * n1 + n2 * n2) ** -3.5
    U = ed.self_energy(drop, P7).value
    tail = 2 * 3 * O._outside_cube_bound(2, 7.0, R)
    assert -total == pytest.approx(U, abs=tail + 1e-12)


def test_localization_single_box_degenerates():
    cfg = random_configuration(BoxGeometry((8, 8)), AllPlus(), 4, 0.3)
    energies, rep, boxes = ed.localized_energy(cfg, 8, P7)
    assert len(energies) == 1 and rep.passed
    assert rep.rhs <= ed.decompose(cfg, P7).total + 1e-9


def test_localization_all_plus():
    energies, rep, _ = ed.localized_energy(_config([], (6, 6)), 3, P7)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed


def test_corner_positivity_examples():
    params = ModelParams.from_tau(-0.01, 7.0, 2)
    # threshold |tau| ell < 2^(1 - p/2) / 4 = 0.0442 admits ell = 4
    for sites in ([(1, 1), (2, 1), (1, 2)], [(1, 1), (1, 2), (2, 1), (2, 2)]):
        (b,) = [b for bs in dg.localize(_config(sites, (4, 4)), 4).values() for b in bs]
        rep = ed.corner_positivity_check(b, params, 4)
        assert rep.passed and rep.lhs > 0
    stripe = SpinConfiguration(BoxGeometry((4, 4)), np.array([[-1] * 4, [1] * 4, [1] * 4,
                                                              [1] * 4]), Periodic((1,)))
    bubbles = [b for bs in dg.localize(stripe, 4).values() for b in bs]
    assert ed.corner_positivity_check(bubbles[0], params, 4).passed is None
    # 6x6 box sits above the threshold: no claim
    (b,) = [b for bs in dg.localize(_config([(1, 1), (2, 1), (1, 2)], (6, 6)), 6).values()
            for b in bs]
    assert ed.corner_positivity_check(b, params, 6).passed is None


def test_report_semantics_and_csv():
    r = ed.BoundReport("x", 1.0, 1.0 + 1e-12, slack=1e-11)
    assert r.passed and r.margin == pytest.approx(-1e-12)
    assert not ed.BoundReport("x", 0.0, 1.0).passed
    assert ed.not_applicable("x").status == "n/a"
    text = ed.reports_to_csv([r])
    assert text.startswith("# schema=1\n")
    assert text.splitlines()[2].endswith(",pass")


def test_polyomino_bounds_small():
    for batch in dg.polyomino_batches(7):
        m, slack = ed.self_energy_bound_margins(batch, P5)
        assert np.all(m >= -slack)
        assert np.all(dg.counting_margins(batch) >= 0)
        assert np.all(dg.refined_counting_margins(batch) >= 0)


def test_batch_bound_matches_single_droplet_path():
    batch = next(iter(dg.polyomino_batches(5)))
    m, _ = ed.self_energy_bound_margins(batch, P7)
    for k in range(0, len(batch.sizes), max(1, len(batch.sizes) // 5)):
        sites = [tuple(x) for x in np.argwhere(batch.masks[k])]
        rep = ed.self_energy_lower_bound(dg.droplet_from_sites(sites), P7)
        assert m[k] == pytest.approx(rep.margin, abs=1e-10)


# --- properties ---------------------------------------------------------------

plus_configs = st.builds(
    lambda n, m, seed, rho: random_configuration(BoxGeometry((n, m)), AllPlus(), seed, rho),
    st.integers(1, 9), st.integers(1, 9), st.integers(0, 10 ** 6), st.floats(0.0, 0.8))


@settings(max_examples=40, deadline=None)
@given(plus_configs, st.sampled_from([5.0, 7.0]))
def test_decomposition_identity(cfg, p):
    params = ModelParams.from_tau(-0.02, p, 2)
    b = ed.decompose(cfg, params)
    H = total_energy(cfg, params).value
    assert abs(b.total - H) <= 1e-9 * (1 + abs(H))
    assert all(u < 0 for u in b.self_energies)
    assert all(w > 0 for w in b.interactions.values())
    assert b.contour_term >= 0


@settings(max_examples=25, deadline=None)
@given(plus_configs)
def test_bound_chain(cfg):
    for drop in dg.split_droplets(cfg):
        U = ed.self_energy(drop, P7).value
        rhs, err = ed.self_energy_rhs(drop, P7)
        crude = -2 * P7.jc * drop.contour_length
        assert crude - err <= rhs <= U + err


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3, 4, 6]), st.floats(0.05, 0.7))
def test_localization_never_overestimates(seed, ell, rho):
    cfg = random_configuration(BoxGeometry((12, 12)), AllPlus(), seed, rho)
    _, rep, _ = ed.localized_energy(cfg, ell, P7)
    assert rep.passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 0.6))
def test_decomposition_identity_3d(seed, rho):
    params = ModelParams.from_tau(-0.02, 8.0, 3)
    cfg = random_configuration(BoxGeometry((4, 3, 4)), AllPlus(), seed, rho)
    H = total_energy(cfg, params).value
    assert abs(ed.decompose(cfg, params).total - H) <= 1e-9 * (1 + abs(H))
