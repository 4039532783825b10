import numpy as np
from sklearn.linear_model import LinearRegression


def lp_norm(values, h, p, mask=None):
    """Discrete L^p norm (nodal quadrature) of an (m, ...) array over mask."""
    mag = np.sqrt(np.sum(np.asarray(values) ** 2, axis=0))
    if mask is not None:
        mag = mag[mask]
    if np.isinf(p):
        return float(mag.max(initial=0.0))
    return float((h * h * np.sum(mag ** p)) ** (1.0 / p))


def calc_w1p_norm(field_, p, mask=None):
    h = field_.grid.h
    grad = field_.gradient().values
    return float((lp_norm(field_.values, h, p, mask) ** p + lp_norm(grad, h, p, mask) ** p) ** (1.0 / p))


def calc_w1p_error(u_eps, u, p, mask=None):
    return calc_w1p_norm(u_eps - u, p, mask)


def calc_relative_gap(value, reference):
    return abs(value - reference) / max(abs(reference), 1e-300)


def fit_slope(eps, values):
    """Least-squares slope of log(values) against log(eps)."""
    x = np.log(np.asarray(eps, dtype=np.float64)).reshape(-1, 1)
    y = np.log(np.asarray(values, dtype=np.float64))
    return float(LinearRegression().fit(x, y).coef_[0])


def is_nonincreasing(series, rtol=1e-12):
    s = np.asarray(series, dtype=np.float64)
    return bool(np.all(s[1:] <= s[:-1] + rtol * np.maximum(np.abs(s[:-1]), 1.0)))


def is_eventually_decreasing(series, last=3, rtol=1e-12):
    return is_nonincreasing(np.asarray(series)[-last:], rtol)


def calc_convergence_flags(table, energy_ref, rel_tol=0.05):
    """Flags over a per-eps table ordered by decreasing eps."""
    gap = np.abs(table['energy_u_eps'].to_numpy() - energy_ref)
    finite = np.isfinite(energy_ref) and np.all(np.isfinite(table['energy_u_eps']))
    return {
        'w1p_error_decreasing': is_nonincreasing(table['w1p_error']),
        'energy_gap_eventually_decreasing': bool(finite and is_eventually_decreasing(gap)),
        'energy_within_tol': bool(finite and calc_relative_gap(table['energy_u_eps'].iloc[-1], energy_ref) <= rel_tol),
        'energy_growth': bool(np.all(np.diff(table['energy_u_eps'].to_numpy()) > 0)),
    }
