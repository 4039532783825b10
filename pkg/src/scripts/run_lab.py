import os
import sys

root_path = os.path.abspath(os.path.dirname(__file__)).split('src')[0]
os.chdir(root_path)
sys.path.append(root_path + 'src')

import hydra
import numpy as np
from dataclasses import asdict

from utils.basics import csv_save, get_abs_path, json_save, time_logger, to_plain, wandb_finish
from utils.data.lab_data import LabData
from utils.project.exp import init_experiment
from pq_lab.errors import ExperimentFailed, LabError
from pq_lab.experiments import convergence_experiment, gap_probe, integrand_flags, sweep, truncation_study
from pq_lab.fields import Field
from pq_lab.integrands import classify_case, energy, hypothesis_audit
from pq_lab.partition import covered_mask, standard_partition
from pq_lab.smoothing import SmoothingParams, boundary_adapted_smooth, jensen_check, rate_table
from pq_lab.solver import minimize
from pq_lab.wb_cover import audit_covering


# ! Tasks, each returns the summary logged at the end of the run

def task_cover(cfg, data, logger):
    cov = data.covering
    cov.save(cfg.out_dir + 'covering.json')
    audit = audit_covering(cov, data.domain, cfg.covering.get('probe_h') or data.grid.h)
    json_save(audit.to_dict(), cfg.out_dir + 'covering_audit.json', log_func=logger.info)
    if not audit.passed:
        raise ExperimentFailed(f'Covering audit failed: {audit.violations}')
    return {'n_balls': len(cov), 'delta': cov.delta, 'M': cov.M, 'eps_ov': cov.eps_ov,
            'coverage_defect': audit.coverage_defect, 'max_multiplicity': audit.max_multiplicity}


def task_partition(cfg, data, logger):
    pou = standard_partition(data.covering, data.grid, cfg.smoothing.profile)
    total = pou.total()
    covered = covered_mask(data.covering, data.grid)
    grid, min_on_ball = data.grid, 1.0
    for pt, b in zip(pou.psi, data.covering.balls):
        d2 = (grid.x[pt.cols][None, :] - b.cx) ** 2 + (grid.y[pt.rows][:, None] - b.cy) ** 2
        min_on_ball = min(min_on_ball, float(pt.values[d2 <= b.r ** 2].min(initial=1.0)))
    Field(data.grid, total).write(cfg.out_dir + 'partition_sum.pqf')
    return {'n_weights': len(pou), 'max_sum_defect': float(np.abs(total - 1).max()),
            'max_sum_defect_covered': float(np.abs(total[covered] - 1).max(initial=0.0)),
            'deriv_bound_c': pou.deriv_bound_c, 'chain_constant': pou.chain_constant,
            'min_psi_on_ball': min_on_ball, 'M': data.covering.M}


def task_smooth(cfg, data, logger):
    pou = standard_partition(data.covering, data.grid, cfg.smoothing.profile)
    smoothing = {k: v for k, v in to_plain(cfg.smoothing).items() if k not in ('profile', 'eps')}
    smoothing['N'] = smoothing.get('N') or 1
    params = SmoothingParams(eps=cfg.smoothing.eps, **smoothing)
    res = boundary_adapted_smooth(data.u, data.g, data.covering, pou, params)
    for name, fld in (('u_eps', res.u_eps), ('A1', res.A1), ('A2', res.A2)):
        fld.write(cfg.out_dir + f'{name}.pqf')
    boundary = data.grid.sdist <= 0
    return {'eps': params.eps, 'C0': params.C0, 'n_unresolved': res.n_unresolved,
            'boundary_agreement': float(np.abs(res.u_eps.values - data.g.values)[:, boundary].max(initial=0.0)),
            'split_defect_max': float(np.abs(res.split_defect)[:, data.grid.inside_mask].max(initial=0.0))}


def task_rates(cfg, data, logger):
    F = data.integrand
    report = rate_table(data.u, F.p, F.q, cfg.eps_schedule, cfg.smoothing.mollifier)
    csv_save(report.table, cfg.out_dir + 'rates.csv')
    return {**{f'slope/{k}': v for k, v in report.slopes.items()}, **{f'flag/{k}': v for k, v in report.flags.items()}}


def task_energy(cfg, data, logger):
    u = Field.read(get_abs_path(cfg.field_file), data.domain, data.grid) if cfg.get('field_file') else data.u
    return {'energy': energy(data.integrand, u.gradient())}


def task_audit(cfg, data, logger):
    report = hypothesis_audit(data.integrand, cfg.audit, data.domain)
    out = {k: asdict(v) for k, v in report.items()}
    json_save(out, cfg.out_dir + 'hypothesis_audit.json', log_func=logger.info)
    return {f'{k}/pass': v.passed for k, v in report.items()}


def task_classify(cfg, data, logger):
    c = cfg.classify
    case = classify_case(c.p, c.q, c.n, c.m, c.alpha, cfg.flags)
    json_save(asdict(case), cfg.out_dir + 'theorem_case.json', log_func=logger.info)
    return {'cases': str(case.applicable_cases), 'conclusion': case.conclusion, 'required_N': case.required_N}


def _flags(cfg, data):
    return integrand_flags(data.integrand, **to_plain(cfg.flags))


def task_converge(cfg, data, logger):
    report = convergence_experiment(data.integrand, data.u, data.g, data.covering, cfg.eps_schedule,
                                    smoothing={k: v for k, v in to_plain(cfg.smoothing).items()
                                               if k not in ('profile', 'eps')},
                                    flags=_flags(cfg, data), n=2, exp_logger=logger, profile=cfg.smoothing.profile)
    csv_save(report.table, cfg.out_dir + 'convergence.csv')
    json_save(report.to_dict(), cfg.out_dir + 'convergence.json', log_func=logger.info)
    return {**report.flags, 'a2_slope': report.a2_slope, 'a2_slope_predicted': report.a2_slope_predicted}


def task_gap(cfg, data, logger):
    report = gap_probe(data.integrand, data.g_desc, data.u_desc, data.grid, cfg.gap.n_meshes, cfg.solver,
                       flags=_flags(cfg, data), margin=cfg.gap.margin, exp_logger=logger)
    json_save(report.to_dict(), cfg.out_dir + 'gap_report.json', log_func=logger.info)
    if report.flag == 'inconclusive':
        raise ExperimentFailed('Gap probe is inconclusive.')
    return {'flag': report.flag, 'gap_estimate': report.gap_estimate, 'singular_energy': report.singular_energy}


def task_minimize(cfg, data, logger):
    res = minimize(data.integrand, data.g, data.grid, cfg.solver)
    res.v.write(cfg.out_dir + 'minimizer.pqf')
    return res.to_dict()


def task_sweep(cfg, data, logger):
    s = cfg.sweep
    df = sweep(s.p_values, s.n_values, s.alpha, cfg.flags, s.q_step, s.q_span, s.minimizer_settings)
    csv_save(df, cfg.out_dir + 'sweep.csv')
    return {'n_rows': len(df), 'n_applicable': int((df.cases != '').sum())}


def task_truncate(cfg, data, logger):
    df, flags = truncation_study(data.integrand, data.u, data.g, cfg.truncation.k_list)
    csv_save(df, cfg.out_dir + 'truncation.csv')
    return flags


def task_jensen(cfg, data, logger):
    return {f'jensen_excess/eps={eps:g}': jensen_check(data.integrand, data.u, eps, cfg.smoothing.mollifier)
            for eps in cfg.eps_schedule}


TASKS = {
    'cover': task_cover, 'partition': task_partition, 'smooth': task_smooth, 'rates': task_rates,
    'energy': task_energy, 'audit': task_audit, 'classify': task_classify, 'converge': task_converge,
    'gap': task_gap, 'minimize': task_minimize, 'sweep': task_sweep, 'truncate': task_truncate,
    'jensen': task_jensen,
}


@time_logger()
@hydra.main(config_path=f'{root_path}/configs', config_name='main', version_base=None)
def run_lab(cfg):
    cfg, logger = init_experiment(cfg)
    if cfg.task not in TASKS:
        logger.error(f'Unknown task {cfg.task}, choose from {sorted(TASKS)}.')
        sys.exit(2)
    try:
        data = LabData(cfg=cfg)
        result = TASKS[cfg.task](cfg, data, logger)
    except LabError as e:
        logger.error(f'{type(e).__name__}: {e}')
        wandb_finish({'exit_code': e.exit_code})
        sys.exit(e.exit_code)
    logger.summary_update(result, finish_wandb=True)


if __name__ == "__main__":
    run_lab()
