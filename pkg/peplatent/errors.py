"""Domain errors raised by peplatent services"""
from typing import Optional


class PepLatentError(ValueError):
    """Base class for every error raised on purpose by this package"""


class InvalidArgumentError(PepLatentError):
    """An argument is outside its documented range"""


class ShapeError(PepLatentError):
    """Array shapes do not agree"""


class ConfigurationError(PepLatentError):
    """A configuration object violates its invariants"""


class CheckpointFormatError(PepLatentError):
    """A checkpoint file is malformed, truncated or from another version"""


class EmbeddingFormatError(PepLatentError):
    """An embedding container is malformed or truncated"""


class AlphabetError(PepLatentError):
    """A sequence holds a letter outside the 20 standard amino acids"""

    def __init__(self, letter: str, position: int, sequence: str = ""):
        self.letter = letter
        self.position = position
        self.sequence = sequence
        super().__init__(
            f"Invalid residue '{letter}' at position {position}"
            + (f" in sequence {sequence!r}" if sequence else "")
        )


class DegenerateNormalizationError(PepLatentError):
    """A similarity normalizer evaluated to zero"""


class ParseError(PepLatentError):
    """An input file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingClusterError(PepLatentError):
    """A record has no cluster assignment"""


class FetchError(PepLatentError):
    """A remote sequence fetch failed"""

    def __init__(self, message: str, status: Optional[int] = None):
        self.status = status
        super().__init__(message)


class CacheMissError(PepLatentError):
    """Offline mode was requested but the cache has no entry"""


class TrainingDivergenceError(PepLatentError):
    """The training loss became non-finite"""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step} (loss={loss})")


class SamplingDivergenceError(PepLatentError):
    """Reverse diffusion produced non-finite values"""
