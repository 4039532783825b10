import os

import numpy as np
import pytest

from pq_lab.descriptors import Affine
from pq_lab.errors import InputRejected, NonFiniteField
from pq_lab.fields import Field
from pq_lab.integrands import Integrand, X1Power, change_of_x_check, classify_case, convexity_audit, d_density, \
    density, energy, energy_analytic, hypothesis_audit, required_N, richardson, thresholds

SQUARE_PLAN = {'n_samples': 2000, 'seed': 7, 'z_scale': 10.0, 'n_balls': 4}


def _integrand(data_path, name):
    return Integrand.from_json(os.path.join(data_path, 'integrands', f'{name}.json'))


def test_density_examples():
    power = Integrand(kind='power', p=2.0, q=2.0, Lambda=1.0)
    assert density(power, None, np.array([3.0, 0.0])) == pytest.approx(9.0)
    dp = Integrand(kind='double_phase', p=2.0, q=3.0, alpha=0.5, a={'type': 'x1_power', 'params': {'alpha': 0.5}})
    assert density(dp, np.array([0.25, 0.5]), np.array([0.0, 2.0])) == pytest.approx(8.0)
    blend = Integrand(kind='pq_blend', p=2.0, q=2.5, mu=1.0)
    assert density(blend, None, np.zeros(2)) == pytest.approx(2.0)


def test_d_density_examples(rng):
    power = Integrand(kind='power', p=2.0, q=2.0, Lambda=1.0)
    z = rng.normal(size=(5, 2))
    assert np.allclose(d_density(power, None, z), 2 * z)
    dp = Integrand(kind='double_phase', p=2.0, q=3.0, a={'type': 'constant', 'value': 1.0})
    x = np.array([0.3, 0.3])
    z = np.array([0.6, 0.8])
    grad = d_density(dp, x, z)
    assert np.allclose(grad, 5.0 * z)
    step = 1e-6
    fd = [(density(dp, x, z + step * e) - density(dp, x, z - step * e)) / (2 * step) for e in np.eye(2)]
    assert np.allclose(grad, fd, rtol=1e-6)
    assert np.array_equal(d_density(dp, x, np.zeros(2)), np.zeros(2))


def test_tabulated_profile():
    F = Integrand(kind='custom_tabulated', p=2.0, q=2.0, table={'r': [0.0, 1.0, 2.0], 'f': [0.0, 1.0, 4.0]})
    assert density(F, None, np.array([0.5, 0.0])) == pytest.approx(0.5)
    assert density(F, None, np.array([4.0, 0.0])) == pytest.approx(16.0)
    assert d_density(F, None, np.array([1.5, 0.0]))[0] == pytest.approx(3.0, rel=1e-6)
    with pytest.raises(InputRejected):
        Integrand(kind='custom_tabulated', p=2.0, q=2.0, table={'r': [0.5, 1.0], 'f': [0.0, 1.0]})


def test_integrand_validation():
    for bad in ({'p': 3.0, 'q': 2.0}, {'p': 1.0}, {'nu': 0.0}, {'nu': 2.0, 'Lambda': 1.0}, {'mu': 2.0},
                {'alpha': 0.0}, {'kind': 'exotic'}, {'kind': 'double_phase'}):
        with pytest.raises(InputRejected):
            Integrand(**bad)
    with pytest.raises(InputRejected):
        Integrand(kind='double_phase', a={'type': 'spline'})


def test_integrand_files(data_path):
    F = _integrand(data_path, 'double_phase_x1')
    assert isinstance(F.a, X1Power)
    assert not F.autonomous
    again = Integrand.from_dict(F.to_dict())
    x, z = np.array([[0.7, 0.2]]), np.array([[1.0, -2.0]])
    assert density(again, x, z) == pytest.approx(density(F, x, z))
    assert _integrand(data_path, 'power_p2').autonomous


def test_energy_examples(unit_square, square_grid):
    F = Integrand(kind='power', p=2.0, q=2.0, Lambda=1.0)
    u = Field.from_function(square_grid, lambda X, Y: X)
    assert energy(F, u.gradient()) == pytest.approx(1.0, rel=1e-12)
    u2 = Field.from_function(square_grid, lambda X, Y: X ** 2)
    h = square_grid.h
    assert energy(F, u2.gradient()) == pytest.approx(4 / 3 - h * h / 3, rel=1e-12)


def test_energy_is_additive_over_cells(square_grid):
    F = Integrand(kind='double_phase', p=2.0, q=2.4, a={'type': 'x1_power'})
    Du = Field.from_function(square_grid, lambda X, Y: np.sin(3 * X) * Y).gradient()
    Xc, _ = square_grid.cell_centers()
    left = square_grid.active_cells & (Xc < 0.5)
    right = square_grid.active_cells & ~left
    total = energy(F, Du)
    assert energy(F, Du, cells=left) + energy(F, Du, cells=right) == pytest.approx(total, rel=1e-13)


def test_energy_rejects_nan_gradients(square_grid):
    values = np.zeros((2,) + square_grid.shape)
    values[0, 5, 5] = np.nan
    F = Integrand(kind='power', p=2.0, q=2.0, Lambda=1.0)
    with pytest.raises(NonFiniteField) as info:
        energy(F, Field(square_grid, values, check=False))
    assert info.value.node == (4, 4)


def test_energy_analytic_and_richardson(square_grid):
    F = Integrand(kind='power', p=2.0, q=2.0, Lambda=1.0)
    assert energy_analytic(F, Affine(slope=[1.0, 2.0]), square_grid) == pytest.approx(5.0, rel=1e-12)
    assert richardson(1.0, 0.75) == pytest.approx(0.75 - 0.25 / 3)
    assert richardson(2.0, 1.0, order=1) == pytest.approx(0.0)


def test_hypothesis_audit_power(data_path, unit_square):
    F = _integrand(data_path, 'power_p2')
    report = hypothesis_audit(F, SQUARE_PLAN, unit_square)
    assert all(r.passed for r in report.values()), {k: r for k, r in report.items() if not r.passed}
    assert 'nonneg_a' not in report
    assert report['ellipticity'].measured_constant == pytest.approx(1.0)
    again = hypothesis_audit(F, SQUARE_PLAN, unit_square)
    assert again['diff_bound'].measured_constant == report['diff_bound'].measured_constant


def test_hypothesis_audit_sign_changing_coefficient(data_path, unit_square):
    F = _integrand(data_path, 'double_phase_oscillating')
    report = hypothesis_audit(F, SQUARE_PLAN, unit_square)
    assert not report['nonneg_a'].passed
    assert report['nonneg_a'].measured_constant < 0


def test_hypothesis_audit_rejects_empty_plan(data_path):
    F = _integrand(data_path, 'power_p2')
    with pytest.raises(InputRejected):
        hypothesis_audit(F, {})
    with pytest.raises(InputRejected):
        convexity_audit(F, {'n_samples': 0})


def test_convexity_audit():
    power = Integrand(kind='power', p=4.0, q=4.0, nu=0.25, Lambda=10.0)
    assert convexity_audit(power, {'n_samples': 500}).passed
    # Linear ramp up to r = 0.1, then flat: not convex
    plateau = Integrand(kind='custom_tabulated', p=2.0, q=2.0,
                        table={'r': [0.0, 0.1, 1.0, 5.0, 10.0], 'f': [0.0, 1.0, 1.0, 1.0, 1.0]})
    result = convexity_audit(plateau, {'n_samples': 500})
    assert not result.passed
    assert result.measured_constant > 0.1


def test_change_of_x_check(data_path):
    power = _integrand(data_path, 'power_p2')
    out = change_of_x_check(power, [0.5, 0.5], 0.1)
    assert out['max_oscillation'] == 0.0 and out['passed']
    assert out['z_max'] == pytest.approx(0.1 ** -1)
    dp = _integrand(data_path, 'double_phase_x1')
    assert change_of_x_check(dp, [0.5, 0.5], 0.1)['max_oscillation'] > 0


def test_thresholds():
    t = thresholds(3.0, 4.0, 3, alpha=1.0)
    assert t['nonautonomous'] == pytest.approx(4.0)
    assert t['np_over_n_minus_1'] == pytest.approx(4.5)
    assert t['p_plus_1'] == pytest.approx(4.0)
    assert thresholds(2.0, 3.0, 2)['np_over_n_minus_p'] == np.inf


def test_classify_nonautonomous_case():
    case = classify_case(2.0, 2.4, 2, 1, 1.0, {'growth': 'natural', 'holder_x': True, 'x_condition': True})
    assert case.applicable_cases == [1]
    assert case.conclusion == 'relaxation_equality'
    assert case.required_N == 2
    assert case.active_constraints == [('case_1:nonautonomous', pytest.approx(3.0))]


def test_classify_equal_exponents():
    case = classify_case(2.0, 2.0, 2, 1, 1.0, {'autonomous': True, 'growth': 'natural'})
    assert 2 in case.applicable_cases
    full = classify_case(2.0, 2.0, 2, 1, 1.0, {'autonomous': True, 'growth': 'controlled_duality',
                                                'bounded_u': True, 'doubling': True, 'is_minimizer': True})
    assert full.applicable_cases == [1, 2, 3, 4, 5, 6, 8]
    assert full.conclusion == 'relaxation_and_min_equality'


def test_classify_empty_and_unbounded_cases():
    case = classify_case(2.0, 4.0, 3, 1, 1.0, {'autonomous': True, 'growth': 'natural', 'bounded_u': True})
    assert case.applicable_cases == []
    assert case.conclusion == 'none'
    assert case.required_N == 1
    # p = n: the Sobolev bound is +inf
    case6 = classify_case(2.0, 5.0, 2, 1, 1.0, {'autonomous': True, 'controlled_duality': True,
                                                 'is_minimizer': True})
    assert case6.applicable_cases == [6]
    assert case6.conclusion == 'min_equality'


def test_classify_monotone_in_q():
    flags = {'autonomous': True, 'growth': 'controlled_duality', 'bounded_u': True, 'doubling': True,
             'is_minimizer': True}
    for n in (2, 3):
        previous = None
        for q in np.arange(2.0, 6.0, 0.05):
            cases = set(classify_case(2.5, float(q), n, 1, 1.0, flags).applicable_cases)
            if previous is not None:
                assert cases <= previous
            previous = cases


def test_classify_rejects_bad_exponents():
    with pytest.raises(InputRejected):
        classify_case(1.0, 2.0)
    with pytest.raises(InputRejected):
        classify_case(3.0, 2.0)
    with pytest.raises(InputRejected):
        classify_case(2.0, 3.0, n=1)


def test_required_n():
    assert required_N(2.0, 2.0, 2, []) == 1
    # decay 1 - 2(1/2 - 1/3) = 2/3 and crossing 3 - 3 = 0
    assert required_N(2.0, 3.0, 2, [1]) == 2
    # theta = 1 - 0.25 = 0.75, (p+1)/((p+1-q) theta) = 3 / (0.5 * 0.75) = 8, strict bound
    assert required_N(2.0, 2.5, 2, [2]) == 9
