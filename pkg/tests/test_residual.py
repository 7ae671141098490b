import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpwave.jumps import LogGrid, convolved_design_matrix, precompute_kernel
from jumpwave.market import log_jump_density
from jumpwave.residual import (GramObjective, LossWeights, RankDeficientError, assemble,
                               boundary_target, loss_and_gradient, objective, pide_operator,
                               pide_operator_log, solve_least_squares, trace_scale)
from jumpwave.sampling import TrainingSets, sample_training_sets
from jumpwave.wavelets import FamilyConfig, WaveletAtom, WaveletFamily, atom_eval, build_family, design_matrices

from .conftest import CANON


def _point_residual(atom, x, t, p, compensated=True, h=1e-4):
    """PIDE residual of one atom from finite differences and a direct jump quadrature."""
    f = lambda x_, t_: atom_eval(atom, x_, t_)[0]  # noqa: E731
    s = math.exp(x)
    # derivatives in S-space by central differences in S
    dS = 1e-3 * s
    V = f(x, t)
    V_S = (f(math.log(s + dS), t) - f(math.log(s - dS), t)) / (2 * dS)
    V_SS = (f(math.log(s + dS), t) - 2 * V + f(math.log(s - dS), t)) / dS**2
    V_t = (f(x, t + h) - f(x, t - h)) / (2 * h)
    y = np.linspace(p.mu_j - 10 * p.sigma_j, p.mu_j + 10 * p.sigma_j, 4001)
    jump = np.trapezoid(atom_eval(atom, x + y, t)[0] * log_jump_density(y, p), y)
    drift = p.r - p.lam * p.kappa if compensated else p.r
    return (V_t + 0.5 * p.sigma**2 * s * s * V_SS + drift * s * V_S - p.r * V
            + p.lam * (jump - V))


@pytest.mark.parametrize("compensated", [True, False])
def test_operator_matches_direct_residual(rng, compensated):
    p = CANON
    atoms = [WaveletAtom(4.0, 4.0 * 4.5, 2.0, 1.0), WaveletAtom(8.0, 8.0 * 4.7, 1.0, 0.5),
             WaveletAtom(2.0, 2.0 * 4.4, 2.0, 0.7)]
    fam = WaveletFamily.from_atoms(atoms)
    grid = LogGrid.for_family(fam, p, n=8192)
    k = precompute_kernel(grid, p)
    pts = np.column_stack([rng.uniform(4.2, 5.0, 8), rng.uniform(0.1, 0.9, 8)])
    m = design_matrices(fam, pts)
    A = pide_operator(p, m, convolved_design_matrix(fam, grid, k, pts), compensated)
    for i, a in enumerate(fam.atoms):
        want = np.array([_point_residual(a, x, t, p, compensated) for x, t in pts])
        assert np.max(np.abs(A[:, i] - want)) <= 2e-5 * (1 + np.max(np.abs(want)))


def test_s_space_equals_log_space(small_problem, rng):
    sp = small_problem
    fam, grid, k = sp["family"], sp["grid"], sp["kernel"]
    pts = sp["sets"].collocation[:200]
    m = design_matrices(fam, pts)
    WJ = convolved_design_matrix(fam, grid, k, pts)
    a = pide_operator(sp["params"], m, WJ)
    b = pide_operator_log(sp["params"], m, WJ)
    assert np.max(np.abs(a - b)) <= 1e-12 * (1 + np.max(np.abs(a)))


def test_constant_field_residual(small_problem):
    sys_ = small_problem["system"]
    pde, _, _ = sys_.split(np.zeros(sys_.n_atoms), 1.0)
    assert np.allclose(pde, -small_problem["params"].r, rtol=0, atol=1e-15)


def test_boundary_targets():
    p = CANON
    bc = np.array([[p.x_min, 0.3], [p.x_max, 0.3], [p.x_max, 1.0]])
    tgt = boundary_target(p, bc)
    assert tgt[0] == 0.0
    assert tgt[1] == pytest.approx(250 - 100 * math.exp(-0.05 * 0.7))
    assert tgt[2] == pytest.approx(150.0)


def test_system_shapes_and_weights(small_problem):
    s = small_problem["system"]
    n_c, n_ic, n_bc = small_problem["sets"].sizes
    assert s.M.shape == (n_c + n_ic + n_bc, s.n_atoms + 1)
    c = np.random.default_rng(0).standard_normal(s.n_atoms)
    loss, _, _ = loss_and_gradient(s, c, 0.2)
    t = s.loss_terms(c, 0.2)
    w = s.weights
    assert loss == pytest.approx(w.pde * t["pde"] + w.ic * t["ic"] + w.bc * t["bc"], rel=1e-12)
    assert s.ridge == pytest.approx(1e-10 * trace_scale(s))


def test_gradient_matches_finite_differences(small_problem, rng):
    s = small_problem["system"]
    c, b = 0.1 * rng.standard_normal(s.n_atoms), 0.3
    _, gc, gb = loss_and_gradient(s, c, b)
    # central differences are exact on a quadratic, so a wide step only removes roundoff
    h = 1e-1
    for i in rng.choice(s.n_atoms, 10, replace=False):
        e = np.zeros_like(c)
        e[i] = h
        fd = (loss_and_gradient(s, c + e, b)[0] - loss_and_gradient(s, c - e, b)[0]) / (2 * h)
        assert abs(fd - gc[i]) <= 1e-6 * (1 + abs(gc[i]))
    fd_b = (loss_and_gradient(s, c, b + h)[0] - loss_and_gradient(s, c, b - h)[0]) / (2 * h)
    assert abs(fd_b - gb) <= 1e-6 * (1 + abs(gb))


def test_doubling_weights_doubles_terms(small_problem, rng):
    sp = small_problem
    args = (sp["params"], sp["family"], sp["sets"], sp["grid"], sp["kernel"])
    base = assemble(*args, weights=LossWeights(1.0, 5000.0, 10.0))
    twice_ic = assemble(*args, weights=LossWeights(1.0, 10000.0, 10.0))
    c, b = rng.standard_normal(base.n_atoms), 0.1
    d = loss_and_gradient(twice_ic, c, b)[0] - loss_and_gradient(base, c, b)[0]
    assert d == pytest.approx(5000.0 * base.loss_terms(c, b)["ic"], rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-2, 2))
def test_loss_is_exact_quadratic(small_problem, seed, a):
    s = small_problem["system"]
    r = np.random.default_rng(seed)
    z0, d = r.standard_normal(s.n_atoms + 1), r.standard_normal(s.n_atoms + 1)
    f = lambda z: loss_and_gradient(s, z[:-1], z[-1])[0]  # noqa: E731
    f0, g0 = f(z0), np.append(*loss_and_gradient(s, z0[:-1], z0[-1])[1:])
    curv = float(np.sum((s.M @ d) ** 2))
    want = f0 + a * (g0 @ d) + a * a * curv
    assert f(z0 + a * d) == pytest.approx(want, rel=1e-9, abs=1e-9 * (1 + abs(f0)))


def test_toy_two_atom_least_squares():
    p = CANON
    fam = WaveletFamily.from_atoms([WaveletAtom(2.0, 2.0 * 4.3, 1.0, 0.5), WaveletAtom(2.0, 2.0 * 4.9, 1.0, 0.5)])
    sets = sample_training_sets(p, (64, 32, 16), seed=1)
    grid = LogGrid.for_family(fam, p)
    sys_ = assemble(p, fam, sets, grid, precompute_kernel(grid, p), ridge_scale=0.0)
    # normal-equation oracle on a 3-unknown problem
    z_ne = np.linalg.solve(sys_.M.T @ sys_.M, sys_.M.T @ sys_.y)
    c, b = solve_least_squares(sys_)
    assert np.allclose(np.append(c, b), z_ne, rtol=1e-8, atol=1e-8)


def test_gradient_vanishes_at_solution(small_problem):
    s = small_problem["system"]
    c, b = solve_least_squares(s)
    f, gc, gb = objective(s, c, b)
    assert np.linalg.norm(np.append(gc, gb)) <= 1e-8 * (1 + f) * math.sqrt(s.n_atoms)


def test_solution_minimises_objective(small_problem, rng):
    s = small_problem["system"]
    c, b = solve_least_squares(s)
    f = objective(s, c, b)[0]
    for _ in range(5):
        dc = 1e-3 * rng.standard_normal(s.n_atoms)
        assert objective(s, c + dc, b + 1e-3 * rng.standard_normal())[0] >= f


def test_gram_objective_matches_direct(small_problem, rng):
    s = small_problem["system"]
    gram = GramObjective(s)
    for _ in range(3):
        z = rng.standard_normal(s.n_atoms + 1)
        f, gc, gb = objective(s, z[:-1], z[-1])
        fg, g = gram(z)
        assert fg == pytest.approx(f, rel=1e-9)
        assert np.allclose(g, np.append(gc, gb), rtol=1e-8, atol=1e-8 * (1 + np.max(np.abs(g))))


def test_rank_deficiency_reported():
    p = CANON
    a = WaveletAtom(2.0, 2.0 * 4.5, 1.0, 0.5)
    fam = WaveletFamily.from_atoms([a, a])
    sets = sample_training_sets(p, (64, 32, 16), seed=1)
    grid = LogGrid.for_family(fam, p)
    sys_ = assemble(p, fam, sets, grid, precompute_kernel(grid, p), ridge_scale=0.0)
    with pytest.raises(RankDeficientError):
        solve_least_squares(sys_)
    c, _ = solve_least_squares(sys_, ridge=1e-8)
    assert c[0] == pytest.approx(c[1], rel=1e-6)
    with pytest.raises(ValueError):
        solve_least_squares(sys_, ridge=-1.0)


def test_non_finite_inputs_rejected():
    p = CANON
    fam = build_family(p, FamilyConfig(jx_max=2, jt_max=1))
    bad = TrainingSets(np.array([[4.5, 0.5]]), np.array([[np.nan, 1.0]]), np.array([[p.x_min, 0.5]]))
    grid = LogGrid.for_family(fam, p)
    with pytest.raises((FloatingPointError, ValueError)):
        assemble(p, fam, bad, grid, precompute_kernel(grid, p))


def test_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(ic=-1.0)
