import os

import pytest
from hydra import compose, initialize_config_dir
from omegaconf import OmegaConf

from utils.basics import cfg_dict, get_important_cfg, lambda_cut, to_plain

CONFIG_DIR = os.path.join(os.path.abspath(os.path.dirname(__file__)).split('tests')[0], 'configs')


def _compose(*overrides):
    with initialize_config_dir(config_dir=CONFIG_DIR, version_base=None):
        return compose(config_name='main', overrides=list(overrides))


def test_resolvers():
    cfg = OmegaConf.create({'h': '${dyadic:6}', 'r': '${scale:${h},4}', 'eps': '${geometric:0.2,0.5,3}',
                            'cut': '${lambda_cut:0.25}', 'k': '${ceil_div:7,2}',
                            'pick': '${condition:true,1,2}'})
    assert cfg.h == 1 / 64
    assert cfg.r == pytest.approx(1 / 16)
    assert list(cfg.eps) == pytest.approx([0.2, 0.1, 0.05])
    assert cfg.cut == 8.0
    assert cfg.k == 4 and cfg.pick == 1


def test_lambda_cut():
    assert lambda_cut(0.25) == 8.0
    assert lambda_cut(0.1) == pytest.approx(11.0)


def test_to_plain_and_cfg_dict():
    node = OmegaConf.create({'a': {'b': '${dyadic:1}'}, 'l': [1, 2]})
    plain = to_plain(node)
    assert plain == {'a': {'b': 0.5}, 'l': [1, 2]}
    assert to_plain({'x': 1}) == {'x': 1}
    assert cfg_dict(node).a.b == 0.5
    with pytest.raises(ValueError):
        cfg_dict([1, 2])


def test_main_config_defaults():
    cfg = _compose()
    assert cfg.task == 'classify'
    assert cfg.grid.h == 1 / 64
    assert cfg.covering.r_min == pytest.approx(4 / 64)
    assert list(cfg.eps_schedule) == pytest.approx([0.2, 0.1, 0.05])
    important = get_important_cfg(cfg)
    assert 'uid' not in important and 'wandb' not in important
    assert important['boundary']['_target_'] == 'pq_lab.descriptors.Affine'


@pytest.mark.parametrize('exp, task', [('converge', 'converge'), ('converge_out_of_range', 'converge'),
                                       ('gap', 'gap'), ('sweep', 'sweep'), ('truncate', 'truncate'),
                                       ('cover', 'cover'), ('audit', 'audit')])
def test_exp_configs_compose(exp, task):
    cfg = _compose(f'exp={exp}')
    assert cfg.task == task
    assert os.path.isfile(os.path.join(CONFIG_DIR, '..', cfg.integrand.file))


def test_converge_config_overrides_integrand():
    cfg = _compose('exp=converge')
    assert cfg.integrand.name == 'double_phase_x1'
    assert cfg.smoothing.C0 == 'auto'
    assert _compose('exp=converge_out_of_range').integrand.q == 3.5
    for exp in ['converge', 'converge_out_of_range', 'smooth']:
        cfg = _compose(f'exp={exp}')
        assert cfg.covering.lam == 0.75
        assert cfg.smoothing.max_unresolved_fraction == 0.2
    assert _compose('exp=converge').grid.h == 1 / 1024
    assert _compose('exp=smooth').grid.h == 1 / 256
