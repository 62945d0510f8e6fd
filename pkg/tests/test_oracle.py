import math

import numpy as np
import pytest

from mbridge import (
    AtomOutOfRange,
    Coupling,
    GeneratorSpec,
    NonConvergence,
    ShapeMismatch,
    check_feasibility,
    coupling_distance,
    coupling_from_potentials,
    dykstra_solve,
    generate_instance,
    solve,
    two_point_closed_form,
    validate_measure,
)
from mbridge.core import rel_entropy

from conftest import pair

MART = np.array([[3 / 8, 1 / 8], [1 / 8, 3 / 8]])


def test_dykstra_dirac():
    inst = pair([0.0], [1.0], [-1.0, 1.0], [0.5, 0.5])
    c = dykstra_solve(inst)
    np.testing.assert_array_equal(c.weights, [[0.5, 0.5]])


def test_dykstra_two_point(two_point):
    np.testing.assert_allclose(dykstra_solve(two_point).weights, MART, atol=1e-12)


def test_dykstra_matches_solver_10x15():
    inst = generate_instance(GeneratorSpec(3, 10, 15))
    assert coupling_distance(dykstra_solve(inst), solve(inst).coupling) <= 1e-6


def test_dykstra_nonconvergence():
    inst = generate_instance(GeneratorSpec(3, 10, 15))
    with pytest.raises(NonConvergence):
        dykstra_solve(inst, tol=1e-14, max_iter=2)


def test_dykstra_iterates_approach_solution():
    inst = generate_instance(GeneratorSpec(4, 12, 20))
    iterates = []
    star = dykstra_solve(inst, callback=iterates.append).log_weights
    w_star = np.exp(star)
    kl = [float(np.sum(w_star * (star - it))) for it in iterates]
    assert np.all(np.diff(kl) <= 1e-10)
    masses = [np.exp(it).sum() for it in iterates]
    assert abs(masses[-1] - 1) <= 1e-12
    assert all(np.all(np.exp(it) >= 0) for it in iterates)


def test_closed_form_symmetric_row():
    mu = validate_measure([0.0], [1.0])
    c, p = two_point_closed_form(mu, 0.5)
    np.testing.assert_allclose(c.weights, [[0.5, 0.5]], atol=1e-15)
    assert p.h[0] == 0.0


def test_closed_form_quarter():
    mu = validate_measure([-0.25, 0.25], [0.5, 0.5])
    c, p = two_point_closed_form(mu, 0.5)
    np.testing.assert_allclose(c.weights[1] / 0.5, [0.25, 0.75], atol=1e-15)
    # canonical gauge keeps h since sum(mu h) is already 0 by symmetry
    assert p.h[1] == pytest.approx(math.log(1 / 3), abs=1e-12)
    assert p.h[0] == pytest.approx(math.log(3), abs=1e-12)


def test_closed_form_potentials_reproduce_kernel(rng):
    x = np.sort(rng.uniform(-0.45, 0.45, 9))
    w = rng.dirichlet(np.ones(9))
    x = x - np.dot(w, x)
    mu = validate_measure(x, w)
    nu = validate_measure([-0.5, 0.5], [0.5, 0.5])
    c, p = two_point_closed_form(mu, 0.5)
    np.testing.assert_allclose(coupling_from_potentials(p, mu, nu).weights, c.weights, rtol=1e-12)


def test_closed_form_printed_f_differs_by_constant():
    # at b = 1/2 the printed f and the normalization-derived f differ by log 2
    b = 0.5
    x = np.array([-0.3, 0.1, 0.2])
    w = np.array([0.25, 0.25, 0.5])
    x = x - np.dot(w, x)
    mu = validate_measure(x, w)
    _, p = two_point_closed_form(mu, b)
    printed = np.log((b - x) / (2 * b)) - (b + x) * np.log((b - x) / (b + x))
    h = np.log((b - x) / (b + x)) / (2 * b)
    derived = np.log((b - x) / b) - (b + x) / (2 * b) * np.log((b - x) / (b + x))
    np.testing.assert_allclose(derived - printed, math.log(2), atol=1e-12)
    # and the derived f is what row normalization gives with g = 0
    norm = -np.log(0.5 * np.exp(h * (b + x)) + 0.5 * np.exp(-h * (b - x)))
    np.testing.assert_allclose(derived, norm, atol=1e-12)


def test_closed_form_h_blows_up_at_boundary():
    h = []
    for a in (0.49, 0.4999):
        mu = validate_measure([-a, a], [0.5, 0.5])
        _, p = two_point_closed_form(mu, 0.5)
        h.append(abs(p.h[1]))
    assert h[1] > h[0]


def test_closed_form_out_of_range():
    with pytest.raises(AtomOutOfRange):
        two_point_closed_form(validate_measure([-0.5, 0.5], [0.5, 0.5]), 0.5)


def test_generator_flags():
    for seed in range(10):
        inst = generate_instance(GeneratorSpec(seed, 1 + seed % 6, 2 + seed))
        rep = check_feasibility(inst.mu, inst.nu)
        assert rep.convex_order and rep.irreducible and rep.endpoint_assumption


def test_generator_deterministic():
    a = generate_instance(GeneratorSpec(9, 6, 11))
    b = generate_instance(GeneratorSpec(9, 6, 11))
    assert a.mu == b.mu and a.nu == b.nu and a.shift == b.shift


def test_generator_seed1_crosscheck():
    inst = generate_instance(GeneratorSpec(1, 5, 8))
    assert coupling_distance(dykstra_solve(inst), solve(inst).coupling) <= 1e-6


def test_generator_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(0, 0, 3)
    with pytest.raises(ValueError):
        GeneratorSpec(0, 2, 1)


def test_coupling_distance_examples(two_point):
    mu, nu = two_point.mu, two_point.nu
    prod = Coupling.from_weights(np.outer(mu.weights, nu.weights))
    mart = Coupling.from_weights(MART)
    assert coupling_distance(mart, mart) == 0.0
    assert coupling_distance(prod, mart) == pytest.approx(0.25, abs=1e-15)
    a = Coupling.from_weights([[0.5, 0.0], [0.0, 0.5]])
    b = Coupling.from_weights([[0.0, 0.5], [0.5, 0.0]])
    assert coupling_distance(a, b) == 1.0


def test_coupling_distance_shape():
    with pytest.raises(ShapeMismatch):
        coupling_distance(Coupling(np.zeros((2, 2))), Coupling(np.zeros((2, 3))))


def test_all_methods_agree_two_point(two_point):
    closed, _ = two_point_closed_form(two_point.mu, 0.5)
    d = dykstra_solve(two_point)
    s = solve(two_point).coupling
    assert max(coupling_distance(closed, d), coupling_distance(closed, s), coupling_distance(d, s)) <= 1e-8


def test_gauge_reconciliation_with_closed_form(rng):
    x = np.array([-0.3, -0.1, 0.05, 0.2, 0.35])
    w = rng.dirichlet(np.ones(5))
    x = x - np.dot(w, x)
    inst = pair(x, w, [-0.5, 0.5], [0.5, 0.5])
    rep = solve(inst)
    _, p = two_point_closed_form(inst.mu, 0.5)
    for k in "fgh":
        np.testing.assert_allclose(getattr(rep.potentials, k), getattr(p, k), atol=1e-6)
    assert rep.primal == pytest.approx(rel_entropy(two_point_closed_form(inst.mu, 0.5)[0], inst.mu, inst.nu), abs=1e-10)
