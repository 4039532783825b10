"""End-to-end experiments: energy convergence under boundary-adapted smoothing, Lavrentiev gap
probes, exponent sweeps and truncation studies."""
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from utils.basics import logger, time_logger, to_plain
from .descriptors import snap_singular_centers
from .errors import InputRejected
from .fields import Field
from .integrands import classify_case, energy, energy_analytic, richardson, thresholds
from .metrics import calc_convergence_flags, calc_relative_gap, calc_w1p_error, fit_slope, lp_norm
from .partition import adapted_partition, standard_partition
from .smoothing import SmoothingParams, blend_source, boundary_adapted_smooth, extend_boundary_data, truncate
from .solver import minimize

GAP_MARGIN = 0.10
GAP_FLAGS = ('gap_suspected', 'no_gap_consistent', 'inconclusive')
DISCLAIMER = ('Discrete minima over conforming bilinear fields approximate the infimum over g + W^{1,q}_0; '
              'a gap flag is numerical evidence about the exact infima, not a proof.')


def integrand_flags(F, report=None, **extra):
    """Classifier flags for an integrand, optionally taken from a hypothesis audit."""
    flags = {'autonomous': bool(F.autonomous)}
    if report is not None:
        for level in ('controlled_duality', 'controlled', 'natural'):
            if report[level].passed:
                flags['growth'] = level
                break
        for name in ('holder_x', 'x_condition', 'doubling'):
            flags[name] = bool(report[name].passed)
    flags.update({k: v for k, v in extra.items() if v is not None})
    return flags


def _check_schedule(eps_schedule, grid):
    eps = [float(e) for e in eps_schedule]
    if len(eps) == 0 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputRejected(f'eps schedule must be non-empty and strictly decreasing, got {eps}.')
    if eps[-1] < 2 * grid.h:
        raise InputRejected(f'Smallest eps {eps[-1]:g} is below 2h = {2 * grid.h:g}.')
    return eps


# ! Energy convergence

@dataclass(eq=False)
class ConvergenceReport:
    table: pd.DataFrame
    verdict: object
    flags: dict
    in_range: bool
    a2_slope: float = float('nan')
    a2_slope_predicted: float = float('nan')

    def to_dict(self):
        return {'verdict': asdict(self.verdict), 'flags': self.flags, 'in_range': self.in_range,
                'a2_slope': self.a2_slope, 'a2_slope_predicted': self.a2_slope_predicted}


def _needs_adapted_shells(cases):
    return bool({2, 5} & set(cases))


@time_logger('convergence experiment')
def convergence_experiment(F, u, g, covering, eps_schedule, smoothing=None, flags=None, n=2, exp_logger=None,
                           profile='polynomial'):
    """Smooth u at every eps of the schedule and tabulate W^{1,p} errors, ||A2||_q and energies."""
    grid = u.grid
    eps_schedule = _check_schedule(eps_schedule, grid)
    smoothing = dict(to_plain(smoothing) or {})
    flags = dict(to_plain(flags) or {'autonomous': F.autonomous, 'growth': 'natural'})
    verdict = classify_case(F.p, F.q, n, u.m, F.alpha, flags)
    in_range = bool(verdict.applicable_cases)
    if not in_range:
        logger.warning(f'(p, q) = ({F.p}, {F.q}) is outside every case for flags {flags}: run labeled out-of-range.')
    N = int(smoothing.pop('N', None) or verdict.required_N)
    adapted = _needs_adapted_shells(verdict.applicable_cases)
    inside = grid.inside_mask
    energy_u = energy(F, u.gradient())
    pou = None if adapted else standard_partition(covering, grid, profile)

    rows = []
    for eps in tqdm(eps_schedule, 'Smoothing schedule'):
        params = SmoothingParams(eps=eps, N=N, **smoothing).resolve(covering, eps_max=eps_schedule[0])
        if adapted:
            v = blend_source(u, g, grid.domain, eps)
            weight = Field(grid, v.gradient().norm_pointwise() ** F.p)
            pou = adapted_partition(covering, grid, weight, profile=profile)
        res = boundary_adapted_smooth(u, g, covering, pou, params)
        e_eps = energy(F, res.u_eps.gradient())
        row = {
            'eps': eps,
            'w1p_error': calc_w1p_error(res.u_eps, u, F.p, inside),
            'a2_lq': lp_norm(res.A2.values, grid.h, F.q, inside),
            'energy_A1': energy(F, res.A1),
            'energy_u_eps': e_eps,
            'energy_u': energy_u,
            'rel_gap': calc_relative_gap(e_eps, energy_u),
            'split_defect_l1': lp_norm(res.split_defect, grid.h, 1, inside),
            'n_unresolved': res.n_unresolved,
            'unresolved_fraction': res.n_unresolved / len(covering),
            'N': N,
            'C0': params.C0,
        }
        rows.append(row)
        if exp_logger is not None:
            exp_logger.metric_log(row)
    table = pd.DataFrame(rows)
    report_flags = calc_convergence_flags(table, energy_u)
    report_flags['in_range'] = in_range
    predicted = 1 - n * (1 / F.p - 1 / F.q)
    a2 = table['a2_lq'].to_numpy()
    slope = fit_slope(table.eps, a2) if len(table) >= 2 and np.all(a2 > 0) else float('nan')
    logger.info(f'Convergence: cases={verdict.applicable_cases}, N={N}, adapted={adapted}, flags={report_flags}')
    return ConvergenceReport(table, verdict, report_flags, in_range, slope, predicted)


# ! Gap probe

@dataclass
class GapReport:
    singular_energy: float
    smooth_min_per_mesh: list  # (h, min energy)
    gap_estimate: float
    classifier_verdict: object
    flag: str
    solver_status: list = field(default_factory=list)
    singular_energy_raw: list = field(default_factory=list)  # (h, Gauss energy)
    margin: float = GAP_MARGIN
    disclaimer: str = DISCLAIMER

    def to_dict(self):
        d = asdict(self)
        d['classifier_verdict'] = asdict(self.classifier_verdict)
        return d


def gap_flag(p, q, singular_energy, mins, converged, margin=GAP_MARGIN):
    if p == q:
        return 'no_gap_consistent'
    if not all(converged) or len(mins) < 2:
        return 'inconclusive'
    threshold = singular_energy * (1 + margin)
    last = mins[-2:]
    if all(e > threshold for e in last):
        return 'gap_suspected'
    if all(e <= threshold for e in last):
        return 'no_gap_consistent'
    return 'inconclusive'


@time_logger('gap probe')
def gap_probe(F, g_desc, u_star, grid, n_meshes=3, solver=None, flags=None, n=2, margin=GAP_MARGIN, exp_logger=None):
    """Compare F(u*) for a singular competitor with discrete minima over refined meshes."""
    if n_meshes < 2:
        raise InputRejected(f'gap_probe needs at least two meshes, got {n_meshes}.')
    flags = dict(to_plain(flags) or {'autonomous': F.autonomous, 'growth': 'natural'})
    verdict = classify_case(F.p, F.q, n, u_star.m, F.alpha, flags)
    grids = [grid]
    for _ in range(n_meshes - 1):
        grids.append(grids[-1].refined())
    u_star, g_desc = snap_singular_centers(u_star, grids[-1]), snap_singular_centers(g_desc, grids[-1])

    raw = [(gk.h, energy_analytic(F, u_star, gk)) for gk in grids[-2:]]
    if not all(np.isfinite(e) for _, e in raw):
        raise InputRejected('F(u*) is not finite on the quadrature grid: move the singular point off the Gauss points.')
    singular = richardson(raw[0][1], raw[1][1])

    mins, status = [], []
    for gk in tqdm(grids, 'Gap probe meshes'):
        g = extend_boundary_data(g_desc, gk, gk.domain)
        res = minimize(F, g, gk, solver)
        mins.append((gk.h, res.energy))
        status.append(res.status)
        if exp_logger is not None:
            exp_logger.metric_log({'h': gk.h, 'min_energy': res.energy, 'residual': res.residual,
                                   'el_sign': res.el_sign, 'singular_energy': singular})
    values = [e for _, e in mins]
    flag = gap_flag(F.p, F.q, singular, values, [s != 'line_search_failed' for s in status], margin)
    gap = float(np.nanmin(values[-2:]) - singular) if np.any(np.isfinite(values[-2:])) else float('nan')
    logger.info(f'Gap probe: F(u*)={singular:.10g}, minima={values}, flag={flag}')
    return GapReport(float(singular), mins, gap, verdict, flag, status, raw, margin)


# ! Exponent sweep

THRESHOLD_COLUMNS = list(thresholds(2.0, 2.0, 2).keys())


def q_grid(p, q_step=0.1, q_span=3.0):
    if not 0 < q_span <= 3.0 + 1e-12:
        raise InputRejected(f'q range must satisfy p <= q <= p + 3, got span {q_span}.')
    k = int(round(q_span / q_step))
    return [round(p + i * q_step, 10) for i in range(k + 1)]


def sweep(p_values, n_values=(2,), alpha=1.0, flags=None, q_step=0.1, q_span=3.0, minimizer_settings=(False, True)):
    """One classifier row per (p, q, n, is_minimizer)."""
    base = dict(to_plain(flags) or {})
    rows = []
    for p in p_values:
        if p <= 1:
            raise InputRejected(f'Sweep needs p > 1, got {p}.')
        for n in n_values:
            for mini in minimizer_settings:
                for q in q_grid(p, q_step, q_span):
                    case = classify_case(p, q, n, 1, alpha, {**base, 'is_minimizer': mini})
                    rows.append({'p': p, 'q': q, 'n': n, 'alpha': alpha, 'is_minimizer': mini,
                                 'cases': ';'.join(str(c) for c in case.applicable_cases),
                                 'conclusion': case.conclusion, **case.thresholds, 'required_N': case.required_N})
    df = pd.DataFrame(rows)
    logger.info(f'Sweep: {len(df)} rows, {int((df.cases != "").sum())} with an applicable case.')
    return df


# ! Truncation

def truncation_study(F, u, g, k_list):
    """Energy of T_k u and its W^{1,p} distance to u for increasing k."""
    k_list = sorted(float(k) for k in k_list)
    inside = u.grid.inside_mask
    rows = []
    for k in k_list:
        uk = truncate(u, g, k)
        rows.append({'k': k, 'energy': energy(F, uk.gradient()), 'w1p_error': calc_w1p_error(uk, u, F.p, inside)})
    df = pd.DataFrame(rows)
    e = df.energy.to_numpy()
    err = df.w1p_error.to_numpy()
    flags = {'energy_monotone': bool(np.all(np.diff(e) >= -1e-12 * np.abs(e[:-1]).clip(1.0))),
             'error_decreasing': bool(np.all(np.diff(err) <= 1e-12))}
    logger.info(f'Truncation study: {flags}')
    return df, flags
