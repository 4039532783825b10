import logging
from collections import defaultdict

import hydra
import numpy as np
import wandb
from rich.console import Console
from rich.logging import RichHandler
from rich.traceback import install

install()
logging.basicConfig(
    level="INFO", format="%(message)s", datefmt="[%X]",
    handlers=[RichHandler(
        rich_tracebacks=False, tracebacks_suppress=[hydra],
        console=Console(width=165),
        enable_link_path=False
    )],
)
# Default logger
logger = rich_logger = logging.getLogger("rich")
logger.debug("Rich Logger initialized.")


def metric_processing(log_dict, n_digits=6):
    # Round floats for display only, the stored history keeps full precision
    out = {}
    for k, v in log_dict.items():
        if isinstance(v, (float, np.floating)):
            v = float(v)
            out[k] = v if not np.isfinite(v) else float(f'{v:.{n_digits}g}')
        else:
            out[k] = v
    return out


class LabExpLogger:
    '''Experiment logger: rich console output, metric history and optional wandb mirroring.'''

    def __init__(self, cfg):
        self.wandb_on = bool(cfg.get('wandb_on', False))
        self.logger = rich_logger  # Rich logger
        self.logger.setLevel(getattr(logging, cfg.logging.level.upper()))
        self.info = self.logger.info
        self.critical = self.logger.critical
        self.warning = self.logger.warning
        self.debug = self.logger.debug
        self.error = self.logger.error
        self.log_metric_to_stdout = not self.wandb_on or cfg.logging.log_wandb_metric_to_stdout
        # ! Experiment Metrics
        self.results = defaultdict(list)

    # ! Log functions
    def log(self, *args, level='info', **kwargs):
        self.logger.log(getattr(logging, level.upper()), *args, **kwargs)

    def metric_log(self, metric_dict, level='info'):
        for metric, value in metric_dict.items():
            self.results[metric].append(value)
        if self.wandb_on:
            wandb.log({k: v for k, v in metric_dict.items() if isinstance(v, (int, float, np.number))})
        if self.log_metric_to_stdout:
            self.log(metric_processing(metric_dict), level=level)

    # ! Experiment summary functions
    def summary_update(self, result, finish_wandb=True):
        if self.wandb_on:
            wandb.summary.update(result)
            if finish_wandb:
                wandb.finish()
        self.info(metric_processing(result))

    def save_file_to_wandb(self, file, base_path, policy='now', **kwargs):
        if self.wandb_on:
            wandb.save(file, base_path=base_path, policy=policy, **kwargs)


def wandb_finish(result=None):
    if wandb.run is not None:
        wandb.summary.update(result or {})
        wandb.finish()
