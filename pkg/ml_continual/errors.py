'''
Exceptions raised by ml_continual. Everything derives from
:class:`ContinualError` so callers may catch the whole family.
'''


class ContinualError(Exception):
    pass


class FormatError(ContinualError, ValueError):
    '''
    Malformed binary file. ``offset`` is the byte position
    at which the problem was detected.
    '''
    def __init__(self, message: str, offset: int):
        super().__init__('{} at offset {}'.format(message, offset))
        self.offset = offset


class NotFittedError(ContinualError, RuntimeError):
    pass


class SingularCovarianceError(ContinualError, ArithmeticError):
    def __init__(self, condition: float):
        super().__init__(
            'shrunk covariance is numerically singular '
            '(condition estimate {:.3e})'.format(condition))
        self.condition = condition


class BufferCapacityError(ContinualError, ValueError):
    pass


class ConfigError(ContinualError, ValueError):
    pass


class ExperimentError(ContinualError):
    '''
    Failure of one phase of :func:`~ml_continual.experiment.run_experiment`.
    '''
    def __init__(self, phase: str, cause: Exception):
        super().__init__('{}: {}'.format(phase, cause))
        self.phase = phase
        self.cause = cause
