import numpy as np
import pytest

import robust_batches as rb
from robust_batches.estimate import fit_piecewise
from robust_batches.simulate import PiecewisePolynomialTarget, UniformTarget


def test_piecewise_polynomial_invariants():
    pp = rb.PiecewisePolynomial((0.0, 1.0), ((1.0,),))
    assert pp.integral() == pytest.approx(1.0)
    assert pp.pdf(np.array([0.5]))[0] == 1.0
    assert pp.pdf(np.array([2.0]))[0] == 0.0
    with pytest.raises(rb.UsageError):
        rb.PiecewisePolynomial((0.0, 1.0), ((2.0,),))  # mass 2
    with pytest.raises(rb.UsageError):
        rb.PiecewisePolynomial((0.0, 0.5, 1.0), ((3.0,), (-1.0,)))  # negative piece
    with pytest.raises(rb.UsageError):
        rb.PiecewisePolynomial((1.0, 0.0), ((1.0,),))


def test_piecewise_polynomial_serialization():
    pp = rb.PiecewisePolynomial((0.0, 0.5, 1.0), ((1.5,), (0.5,)))
    clone = rb.PiecewisePolynomial.from_dict(pp.to_dict())
    assert clone == pp


def test_fit_uniform_exact():
    part = rb.IntervalPartition((0.25, 0.5, 0.75))
    res = fit_piecewise(np.full(4, 0.25), part, 1, 0, (0.0, 1.0))
    assert res.density.breakpoints == (0.0, 1.0)
    assert res.density.coefficients == ((1.0,),)
    assert res.fk_to_input == 0.0
    assert not res.best_effort


def test_fit_two_bin_histogram_exact():
    part = rb.IntervalPartition((0.5,))
    res = fit_piecewise(np.array([0.75, 0.25]), part, 2, 0, (0.0, 1.0))
    assert res.density.coefficients == ((1.5,), (0.5,))
    assert res.fk_to_input == 0.0


def test_fit_d0_t_equals_ell_reproduces_histogram():
    rng = np.random.default_rng(3)
    ell = 9
    masses = rng.multinomial(256, np.full(ell, 1.0 / ell)) / 256.0
    part = rb.IntervalPartition(tuple(np.linspace(0.1, 0.9, ell - 1)))
    res = fit_piecewise(masses, part, ell, 0, (0.0, 1.0))
    assert res.fk_to_input <= 1e-12
    np.testing.assert_allclose(res.density.bin_masses(part), masses, atol=1e-12)


def test_fit_linear_pieces_recovers_linear_density():
    dens = rb.PiecewisePolynomial((0.0, 1.0), ((0.5, 1.0),))
    part = rb.IntervalPartition(tuple(np.linspace(0.05, 0.95, 19)))
    masses = dens.bin_masses(part)
    res = fit_piecewise(masses / masses.sum(), part, 1, 1, (0.0, 1.0))
    assert res.fk_to_input <= 1e-8
    xs = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(res.density.pdf(xs), dens.pdf(xs), atol=1e-6)


def test_fit_requires_enough_bins():
    part = rb.IntervalPartition((0.5,))
    with pytest.raises(rb.UsageError):
        fit_piecewise(np.array([0.5, 0.5]), part, 2, 2, (0.0, 1.0))
    with pytest.raises(rb.DomainError):
        fit_piecewise(np.array([0.5, 0.5]), part, 2, 9, (0.0, 1.0))


def test_fit_nonnegative_under_rough_input():
    rng = np.random.default_rng(8)
    ell = 40
    masses = rng.multinomial(400, np.full(ell, 1.0 / ell)) / 400.0
    part = rb.IntervalPartition(tuple(np.linspace(0.025, 0.975, ell - 1)))
    res = fit_piecewise(masses, part, 4, 3, (0.0, 1.0))
    from robust_batches.estimate import _cheb_nodes

    for j in range(res.density.t):
        nodes = _cheb_nodes(res.density.breakpoints[j], res.density.breakpoints[j + 1])
        assert res.density.pdf(nodes).min() >= -1e-9
    # between check-points a bounded-degree piece cannot dip far
    xs = np.linspace(0, 1, 500)
    assert res.density.pdf(xs).min() >= -1e-4
    assert res.density.integral() == pytest.approx(1.0, abs=1e-6)


def test_fit_triangle_inequality_chain():
    # TV(fit, target) <= TV(empirical, target) + 2 * fk(fit, empirical)
    dens = rb.PiecewisePolynomial(
        (0.0, 0.3, 0.7, 1.0), ((0.5, 1.0), (2.0, -1.5), (0.33666666666666667, 0.8))
    )
    target = PiecewisePolynomialTarget(dens)
    rng = np.random.default_rng(0)
    xs = np.sort(target.sample(rng, 100_000))
    part = rb.build_partition(xs, 200)
    counts = np.bincount(part.bin_of(xs), minlength=part.ell)
    emp = counts / counts.sum()
    t, d = 3, 1
    res = fit_piecewise(emp, part, t, d, (float(xs[0]), float(xs[-1])))
    tv_fit_target = rb.evaluate_density(res.density, target)
    ref = target.bin_masses(part)
    tv_emp_target_binned = 0.5 * np.abs(emp - ref).sum()
    # within-bin placement costs at most the largest bin mass on each side
    slack = emp.max() + ref.max()
    assert tv_fit_target <= tv_emp_target_binned + 2 * res.fk_to_input + slack


def test_yatracos_select_examples():
    ref = np.array([0.5, 0.3, 0.2])
    far = np.array([0.1, 0.1, 0.8])
    assert rb.yatracos_select([ref, far], ref, 2) == 0
    assert rb.yatracos_select([far], ref, 2) == 0
    with pytest.raises(rb.UsageError):
        rb.yatracos_select([], ref, 2)


def test_yatracos_selection_is_3_competitive():
    rng = np.random.default_rng(12)
    for _ in range(25):
        ell, k = 10, 3
        ref = rng.dirichlet(np.ones(ell))
        candidates = [rng.dirichlet(np.ones(ell)) for _ in range(5)]
        chosen = rb.yatracos_select(candidates, ref, k)
        dists = [rb.fk_distance(c, ref, k) for c in candidates]
        assert dists[chosen] <= 3.0 * min(dists) + 1e-9


def test_evaluate_density_examples():
    flat = rb.PiecewisePolynomial((0.0, 1.0), ((1.0,),))
    assert rb.evaluate_density(flat, UniformTarget(0, 1)) == pytest.approx(0.0, abs=1e-9)
    assert rb.evaluate_density(flat, UniformTarget(0.5, 1.5)) == pytest.approx(0.5, abs=1e-7)
    assert rb.evaluate_density(flat, UniformTarget(5, 6)) == pytest.approx(1.0, abs=1e-9)
