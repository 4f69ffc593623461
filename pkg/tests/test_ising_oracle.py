import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from massive_sholo.fermion_solver import residual_sholo, solve_fermion, singularity_values
from massive_sholo.ising_oracle import (
    CapExceeded,
    ContourFermion,
    dual_beta,
    enumerate_contours,
    fermion_contour_sum,
    partition_function,
    path_phase,
    reference_path,
    spin_expectation_direct,
    spin_expectation_lowtemp,
)
from massive_sholo.lattice_geometry import BETA_C, MassParams, build_rect_domain, cover_from_faces, lift_path

betas = st.floats(min_value=0.05, max_value=1.5)


def _even(dom, omega):
    deg = {}
    for e in omega:
        for v in dom.edges[e]:
            deg[v] = deg.get(v, 0) + 1
    return all(d % 2 == 0 for d in deg.values())


@pytest.mark.parametrize("dims,count", [((1, 1), 2), ((2, 1), 4)])
def test_contour_counts(dims, count):
    dom = build_rect_domain(*dims)
    cs = enumerate_contours(dom)
    assert len(cs) == count
    assert frozenset() in cs


@pytest.mark.parametrize("dims", [(2, 2), (3, 2), (3, 3)])
def test_contours_closed_and_distinct(dims):
    dom = build_rect_domain(*dims)
    cs = enumerate_contours(dom)
    assert len(set(cs)) == len(cs)
    assert all(_even(dom, w) for w in cs)
    # cycle space dimension E - V + 1 over interior vertices equals number of faces
    assert len(cs) == 2 ** len(dom.faces)


def test_cap():
    with pytest.raises(CapExceeded):
        enumerate_contours(build_rect_domain(5, 5))


@given(betas)
def test_partition_function_closed_forms(beta):
    assert partition_function(build_rect_domain(1, 1), beta) == pytest.approx(1 + math.exp(-8 * beta))
    assert partition_function(build_rect_domain(2, 1), beta) == pytest.approx(
        1 + 2 * math.exp(-8 * beta) + math.exp(-12 * beta))


def test_partition_function_zero_temperature():
    assert partition_function(build_rect_domain(2, 2), 50.0) == pytest.approx(1.0)


@given(betas)
def test_single_spin_tanh(beta):
    dom = build_rect_domain(1, 1)
    f = next(iter(dom.faces))
    assert spin_expectation_lowtemp(dom, beta, [f]) == pytest.approx(math.tanh(4 * beta), abs=1e-14)


@given(betas)
def test_even_identical_marks(beta):
    dom = build_rect_domain(2, 2)
    f = sorted(dom.faces)[1]
    assert spin_expectation_lowtemp(dom, beta, [f, f]) == pytest.approx(1.0)


def test_mark_outside():
    dom = build_rect_domain(1, 1)
    with pytest.raises(ValueError):
        spin_expectation_lowtemp(dom, 0.5, [(100, 100)])


@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)])
@pytest.mark.parametrize("beta", [0.3, BETA_C, 0.6])
def test_oracles_agree(dims, beta):
    dom = build_rect_domain(*dims)
    cs = enumerate_contours(dom)
    faces = sorted(dom.faces)
    for marks in ([faces[0]], [faces[-1]], [faces[0], faces[-1]]):
        a = spin_expectation_lowtemp(dom, beta, marks, cs)
        b = spin_expectation_direct(dom, beta, marks)
        assert abs(a - b) <= 1e-12


def test_free_and_infinite_temperature():
    dom = build_rect_domain(2, 2)
    f = sorted(dom.faces)[0]
    assert spin_expectation_direct(dom, 0.7, [f], bc="free") == pytest.approx(0.0, abs=1e-15)
    assert spin_expectation_direct(dom, 0.0, [f]) == pytest.approx(0.0, abs=1e-15)
    assert spin_expectation_lowtemp(dom, 40.0, [f]) == pytest.approx(1.0)


def test_magnetisation_monotone_in_beta():
    dom = build_rect_domain(3, 3)
    cs = enumerate_contours(dom)
    f = sorted(dom.faces)[4]
    vals = [spin_expectation_lowtemp(dom, b, [f], cs) for b in np.linspace(0.05, 1.2, 15)]
    assert all(y >= x - 1e-15 for x, y in zip(vals, vals[1:]))


def test_dual_beta_involution():
    assert dual_beta(dual_beta(0.37)) == pytest.approx(0.37)
    assert dual_beta(BETA_C) == pytest.approx(BETA_C)


@pytest.fixture(scope="module")
def cover3():
    dom = build_rect_domain(3, 3)
    return cover_from_faces(dom, [sorted(dom.faces)[4]])


@pytest.fixture(scope="module")
def fermion3(cover3):
    return ContourFermion(cover3)


def test_spinor_flip(fermion3):
    for z in fermion3.sites()[:20]:
        assert fermion3.value(0.5, z, 1) == -fermion3.value(0.5, z, 0)


def test_phase_modulus_and_wind_quantised(cover3, fermion3):
    for z in fermion3.sites()[::7]:
        g0 = set(reference_path(cover3, z))
        for hw in fermion3._halves[::5]:
            p, _ = path_phase(g0 ^ hw, cover3, z)
            assert abs(abs(p.phi) - 1) < 1e-14
            assert abs(p.wind / (math.pi / 4) - round(p.wind / (math.pi / 4))) < 1e-12


def test_phase_independent_of_path_extraction(fermion3):
    # exhaustive over all contours (512 on 3x3) and many sites: left vs right turning rule
    checked = 0
    for z in fermion3.sites()[::3]:
        _, a = fermion3.terms(z, "right")
        _, b = fermion3.terms(z, "left")
        assert np.max(np.abs(a - b)) < 1e-12
        checked += len(a)
    assert checked >= 1000


@pytest.mark.parametrize("beta", [BETA_C, BETA_C + 0.05])
def test_contour_sum_is_s_holomorphic(cover3, fermion3, beta):
    vals = {z: fermion3.value(beta, z) for z in fermion3.sites()}
    F = solve_fermion(cover3, MassParams.from_beta(beta))
    F.edge_values.update({z: v for z, v in vals.items() if z in F.edge_values})
    F.corner_values.update({z: v for z, v in vals.items() if z in F.corner_values})
    dom = cover3.base
    for c in dom.all_corners:
        if c != cover3.origin_corner:
            assert residual_sholo(F, c) <= 1e-12
    for got, want in zip(singularity_values(F), (-1j, 1j)):
        assert abs(got - want) <= 1e-12


def test_wrapper_matches_class(cover3, fermion3):
    z = fermion3.sites()[5]
    assert fermion_contour_sum(cover3, 0.5, z) == pytest.approx(fermion3.value(0.5, z))


def test_singular_corner_rejected(cover3, fermion3):
    with pytest.raises(ValueError):
        fermion3.value(0.5, cover3.origin_corner)


@pytest.mark.parametrize("beta", [BETA_C, BETA_C + 0.08])
@pytest.mark.parametrize("n", [1, 2])
def test_ising_identification(beta, n):
    dom = build_rect_domain(3, 3)
    faces = sorted(dom.faces)
    marks = [faces[4]] + ([faces[0]] if n == 2 else [])
    cov = cover_from_faces(dom, marks)
    cf = ContourFermion(cov)
    a1 = marks[0]
    den = spin_expectation_direct(dom, beta, marks)
    for v, (dx, dy) in ((-1, (0, -1)), (0, (1, 0)), (1, (0, 1))):
        z = (a1[0] + 2 + dx, a1[1] + dy)
        face = (a1[0] + 2 + 2 * dx, a1[1] + 2 * dy)
        sheet, _ = lift_path(cov, [cov.origin_corner, (a1[0] + 2, a1[1]), z], 0)
        moved = [face] + marks[1:]
        want = np.exp(-1j * v * math.pi / 4) * spin_expectation_direct(dom, beta, moved) / den
        assert abs(cf.value(beta, z, sheet) - want) <= 1e-10
    if n == 2:
        a2 = marks[1]
        num = spin_expectation_direct(dom, dual_beta(beta), [(a1[0] + 2, a1[1]), (a2[0] + 2, a2[1])],
                                      "free", "dual")
        assert abs(abs(cf.value(beta, (a2[0] + 1, a2[1]))) - num / den) <= 1e-10
