

class FluoroError(Exception):
    exit_code = 2


class ConfigError(FluoroError):
    exit_code = 1


class NumericalError(FluoroError):
    exit_code = 2


class SingularConditioning(NumericalError):
    pass


class EmptySelection(NumericalError):
    pass


class StatisticalFailure(FluoroError):
    exit_code = 4
