"""
Error types raised by the PEDS library.

Each error carries a human readable ``detail`` and a short machine ``code``
the same way REST framework exceptions do, plus the process exit code the
``peds`` management command reports when the error reaches it.
"""


class PedsError(Exception):
    default_detail = 'PEDS computation failed.'
    default_code = 'error'
    exit_code = 1

    def __init__(self, detail=None, code=None):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        super().__init__(self.detail)

    def __str__(self):
        return str(self.detail)


class InvalidDimension(PedsError):
    default_detail = 'Dimension must be a positive integer.'
    default_code = 'invalid_dimension'


class DimensionMismatch(PedsError):
    default_detail = 'Operand dimensions do not match.'
    default_code = 'dimension_mismatch'


class IdempotenceError(PedsError):
    default_detail = 'Matrix is not idempotent within tolerance.'
    default_code = 'not_idempotent'


class SingularGram(PedsError):
    default_detail = 'Gram matrix B B^t is singular or ill-conditioned.'
    default_code = 'singular_gram'


class DomainError(PedsError):
    default_detail = 'Argument outside the domain of a scalar function.'
    default_code = 'domain'

    def __init__(self, detail=None, code=None, variable=None):
        self.variable = variable
        if detail is not None and variable is not None:
            detail = f'{detail} (variable {variable})'
        super().__init__(detail, code)


class NumericError(PedsError):
    default_detail = 'Linear algebra routine failed.'
    default_code = 'numeric'


class NormalizationError(PedsError):
    default_detail = 'Ordering weights must sum to 1.'
    default_code = 'normalization'


class SizeLimitExceeded(PedsError):
    default_detail = 'Permutation sums are limited to 8 factors.'
    default_code = 'size_limit'


class ScopeError(PedsError):
    default_detail = 'Configuration not supported by this operation.'
    default_code = 'scope'


class PreconditionError(PedsError):
    default_detail = 'Operation precondition not met.'
    default_code = 'precondition'


class DivergenceError(PedsError):
    default_detail = 'Integration diverged.'
    default_code = 'divergence'
    exit_code = 3

    def __init__(self, detail=None, code=None, step=None):
        self.step = step
        if detail is None and step is not None:
            detail = f'State became non-finite or exceeded the divergence limit at step {step}.'
        super().__init__(detail, code)
