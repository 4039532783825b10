from functools import cached_property

from omegaconf import DictConfig

import utils.basics as uf
from pq_lab.descriptors import build_descriptor, snap_singular_centers
from pq_lab.errors import InputRejected
from pq_lab.fields import Field
from pq_lab.geometry import Domain, build_grid
from pq_lab.integrands import Integrand
from pq_lab.smoothing import extend_boundary_data
from pq_lab.wb_cover import Covering, build_wb_covering
from utils.basics import logger


def _load_with_overrides(node):
    """A `file` entry is loaded first; the remaining keys of the node override it."""
    d = dict(uf.to_plain(node) or {})
    file_name = d.pop('file', None)
    base = uf.json_load(uf.get_abs_path(file_name)) if file_name else {}
    return {**base, **{k: v for k, v in d.items() if v is not None}}


class LabData:
    @uf.time_logger("lab data initialization")
    def __init__(self, cfg: DictConfig):
        self.cfg = cfg
        # ! Domain and grid
        self.domain = Domain.from_dict(_load_with_overrides(cfg.domain), name=cfg.domain.get('name'))
        logger.info(f'Loaded domain {self.domain.name}: area={self.domain.area:.6g}, bbox={self.domain.bbox}')
        self.grid = build_grid(self.domain, cfg.grid.h, cfg.grid.get('margin', 0.0),
                               cfg.grid.get('max_nodes', 20_000_000))
        # ! Integrand
        self.integrand = Integrand.from_dict(_load_with_overrides(cfg.integrand))
        logger.info(f'Loaded integrand {self.integrand.name}: kind={self.integrand.kind}, '
                    f'p={self.integrand.p}, q={self.integrand.q}, autonomous={self.integrand.autonomous}')
        # ! Boundary data and test function
        self.g_desc = snap_singular_centers(build_descriptor(cfg.boundary), self.grid)
        self.u_desc = (snap_singular_centers(build_descriptor(cfg.test_function), self.grid)
                       if cfg.get('test_function') else self.g_desc)
        if self.u_desc.m != self.g_desc.m:
            raise InputRejected(f'Test function has {self.u_desc.m} components, boundary data {self.g_desc.m}.')

    @cached_property
    def g(self):
        return extend_boundary_data(self.g_desc, self.grid, self.domain)

    @cached_property
    def u(self):
        """Test function on the grid, equal to the boundary data outside the domain."""
        values = self.u_desc.field(self.grid).values
        outside = self.grid.sdist < 0
        values[:, outside] = self.g.values[:, outside]
        return Field(self.grid, values)

    @cached_property
    def covering(self):
        cov_cfg = self.cfg.covering
        if cov_cfg.get('file'):
            cov = Covering.load(uf.get_abs_path(cov_cfg.file))
            logger.info(f'Loaded covering of {len(cov)} balls from {cov_cfg.file}')
            return cov
        if cov_cfg.r_min < 4 * self.grid.h:
            raise InputRejected(f'r_min={cov_cfg.r_min} must be at least 4h={4 * self.grid.h:g}.')
        return build_wb_covering(self.domain, cov_cfg.r_min, cov_cfg.get('lam', 0.25), cov_cfg.get('delta_cap', 0.25))
