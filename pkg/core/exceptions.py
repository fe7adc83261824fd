"""
Exception hierarchy shared by every module.
"""

from typing import Optional, Sequence


class KeapError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(KeapError):
    """Invalid hyperparameters or inconsistent configuration"""


class ContractError(KeapError):
    """A precondition of an operation was violated"""


class DimensionError(ContractError):
    """Tensor shapes are incompatible"""

    def __init__(self, op: str, *shapes: Sequence[int]):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " vs ".join(str(list(s)) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class DegenerateRowError(ContractError):
    """A softmax row has no unmasked entry"""


class VocabularyError(ContractError):
    """A token id falls outside the vocabulary"""


class TripletParseError(KeapError):
    """A triplet file line could not be parsed"""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ConstructionError(KeapError):
    """A derived batch (e.g. mismatched triplets) cannot be built"""


class CheckpointError(KeapError):
    """Base class for checkpoint I/O failures"""


class CheckpointCorruptionError(CheckpointError):
    """Manifest and blob disagree"""


class CheckpointVersionError(CheckpointError):
    """Unknown format version or checkpoint incompatible with the run config"""


class NumericalError(KeapError):
    """Non-finite value encountered during optimization"""

    def __init__(self, step: int, message: str, value: Optional[float] = None):
        self.step = step
        self.value = value
        super().__init__(f"step {step}: {message}")


class UndefinedMetricError(KeapError):
    """The metric has no defined value for this input (distinct from 0)"""
