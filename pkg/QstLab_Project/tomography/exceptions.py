class QstLabException(Exception):
    pass


class DimensionException(QstLabException, ValueError):
    """ shapes that do not fit together, empty inputs, non-square matrices """
    pass


class DomainException(QstLabException, ValueError):
    """ values outside the range an operation is defined on """
    pass


class NumericalException(QstLabException, ArithmeticError):
    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(message)
        self.residual = residual


class DegenerateStepException(NumericalException):
    pass


class StudyConfigException(QstLabException, ValueError):
    pass
