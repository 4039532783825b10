import math

from easydict import EasyDict
from omegaconf import DictConfig, ListConfig, OmegaConf

from .logging import logger
from .os_utils import append_header_to_file, subset_dict_by_condition

UNIMPORTANT_CFG = EasyDict(
    fields=['debug', 'wandb', 'env', 'uid', 'cmd', 'logging', 'use_wandb', 'wandb_on', 'alias'],
    prefix=['_'],
    postfix=['_path', '_file', '_dir']
)


def cfg_dict(cfg):
    if isinstance(cfg, (DictConfig, ListConfig)):
        return EasyDict(OmegaConf.to_object(cfg))
    elif isinstance(cfg, dict):
        return EasyDict(cfg)
    else:
        raise ValueError(f'Unsupported config type for {type(cfg)}')


def to_plain(node):
    """Resolve an OmegaConf node (or pass a plain object through) into builtin containers."""
    if isinstance(node, (DictConfig, ListConfig)):
        return OmegaConf.to_container(node, resolve=True)
    return node


# ! Get config

def save_cfg(cfg: DictConfig, path, as_global=True):
    processed_cfg = get_important_cfg(cfg)
    OmegaConf.save(config=DictConfig(processed_cfg), f=path)
    if as_global:
        append_header_to_file(path, header='# @package _global_\n')
    return cfg


def get_important_cfg(cfg: DictConfig, reserve_file_cfg=True, unimportant_cfg=UNIMPORTANT_CFG):
    uimp_cfg = cfg.get('_unimportant_cfg', unimportant_cfg)
    imp_cfg = OmegaConf.to_object(cfg)

    def is_preserve(k: str):
        judge_file_setting = (k == '_file_' and reserve_file_cfg) or k == '_target_'
        prefix_allowed = (not any([k.startswith(_) for _ in uimp_cfg.prefix])) or judge_file_setting
        postfix_allowed = not any([k.endswith(_) for _ in uimp_cfg.postfix])
        field_allowed = k not in uimp_cfg.fields
        return prefix_allowed and postfix_allowed and field_allowed

    imp_cfg = subset_dict_by_condition(imp_cfg, is_preserve)
    return imp_cfg


def print_important_cfg(cfg, log_func=logger.info):
    log_func(OmegaConf.to_yaml(get_important_cfg(cfg, reserve_file_cfg=False)))


# ! Custom OmegaConf Resolvers

def dyadic(level):
    # Grid spacing 2^-level
    return 2.0 ** (-int(level))


def lambda_cut(lam):
    # Width factor of the uncovered boundary strip, in units of r_min
    return max(8.0, (1.0 + lam) / lam)


def ternary_operator(condition, val_if_true, val_if_false):
    return val_if_true if condition else val_if_false


def geometric_schedule(start, ratio, n):
    return [float(start) * float(ratio) ** k for k in range(int(n))]


def ceil_div(a, b):
    return int(math.ceil(a / b))


def scale(x, factor):
    return float(x) * float(factor)


# Register resolvers
OmegaConf.register_new_resolver('dyadic', dyadic, replace=True)
OmegaConf.register_new_resolver('lambda_cut', lambda_cut, replace=True)
OmegaConf.register_new_resolver('condition', ternary_operator, replace=True)
OmegaConf.register_new_resolver('geometric', geometric_schedule, replace=True)
OmegaConf.register_new_resolver('ceil_div', ceil_div, replace=True)
OmegaConf.register_new_resolver('scale', scale, replace=True)
