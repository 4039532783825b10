class LabError(Exception):
    exit_code = 1


class InputRejected(LabError):
    """Input violates a precondition; the CLI exits with code 2."""
    exit_code = 2


class ExperimentFailed(LabError):
    """Experiment could not reach a verdict; the CLI exits with code 3."""
    exit_code = 3


class InvalidPolygon(InputRejected):
    def __init__(self, loop_index, reason):
        self.loop_index = loop_index
        super().__init__(f'Invalid polygon loop {loop_index}: {reason}')


class GridTooLarge(InputRejected):
    def __init__(self, n_nodes, max_nodes, n_bytes):
        self.n_nodes, self.required_bytes = n_nodes, n_bytes
        super().__init__(f'Grid with {n_nodes} nodes exceeds the cap of {max_nodes} nodes '
                         f'(requires about {n_bytes / 2 ** 20:.1f} MiB per scalar field).')


class UnderResolvedKernel(InputRejected):
    pass


class PartitionDefect(InputRejected):
    def __init__(self, node, value):
        self.node = node
        super().__init__(f'Partition sum {value:.3e} < 1 at covered node (row, col)={node}.')


class NonFiniteField(InputRejected):
    def __init__(self, node, what='field'):
        self.node = node
        super().__init__(f'Non-finite {what} value at node {node}.')


class NonConvexIntegrand(InputRejected):
    pass
