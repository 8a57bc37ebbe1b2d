"""
Exception hierarchy for the domlm pipeline.

Every error carries an ``exit_code`` used by the command line front end:

    0  success
    1  unexpected error
    2  usage or configuration error
    3  input / IO error
    4  schema or label error
    5  data error (empty inputs, budgets, lengths, spans)
    6  numerical failure
"""


class DomLMError(Exception):
    """Base class for all domlm errors."""

    exit_code = 1


# Usage / configuration

class ConfigInvalid(DomLMError, ValueError):
    exit_code = 2


class InvalidStride(DomLMError, ValueError):
    exit_code = 2


# Input / IO

class IoError(DomLMError, OSError):
    exit_code = 3


class MissingFile(DomLMError, FileNotFoundError):
    exit_code = 3


class EncodingError(DomLMError, ValueError):
    exit_code = 3


# Schema / labels

class SchemaError(DomLMError, ValueError):
    exit_code = 4


class LabelNodeMismatch(DomLMError, ValueError):
    exit_code = 4


class LabelOutOfRange(DomLMError, ValueError):
    exit_code = 4


class PlanMismatch(DomLMError, ValueError):
    exit_code = 4


class MissingTokenization(DomLMError, KeyError):
    exit_code = 4

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


# Data

class EmptyDocument(DomLMError, ValueError):
    exit_code = 5


class EmptyCorpus(DomLMError, ValueError):
    exit_code = 5


class BudgetTooSmall(DomLMError, ValueError):
    exit_code = 5


class SequenceTooLong(DomLMError, ValueError):
    exit_code = 5


class IndexOutOfTable(DomLMError, IndexError):
    exit_code = 5


class NoSelectedPositions(DomLMError, ValueError):
    exit_code = 5


class PairBudgetExceeded(DomLMError, ValueError):
    exit_code = 5


class NoValidSpan(DomLMError, ValueError):
    exit_code = 5


# Numerical

class NonFiniteActivation(DomLMError, ArithmeticError):
    exit_code = 6


class DivergenceDetected(DomLMError, ArithmeticError):
    exit_code = 6
