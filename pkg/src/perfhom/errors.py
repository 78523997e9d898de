"""Exception hierarchy; the CLI maps each class to an exit code."""


class PerfhomError(Exception):
    exit_code = 1


class ConfigError(PerfhomError, ValueError):
    exit_code = 2


class MeshError(PerfhomError, ValueError):
    exit_code = 2


class SolverError(PerfhomError, RuntimeError):
    exit_code = 3


class InvariantError(PerfhomError, RuntimeError):
    exit_code = 4
