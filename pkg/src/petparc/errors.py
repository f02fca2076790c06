"""Exception hierarchy.

Every error raised on purpose by the package derives from ``PetparcError`` so
callers (and the CLI) can tell data problems from bugs.  ``DataError`` and
``NumericError`` decide the CLI exit code.
"""


class PetparcError(Exception):
    pass


class DataError(PetparcError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class NumericError(PetparcError):
    """A computation produced non-finite values (CLI exit code 3)."""


# geometry
class DegenerateStreamline(DataError, ValueError):
    pass


class EmptyTractogram(DataError, ValueError):
    pass


# embedding
class AmbiguousReconstruction(PetparcError):
    """The embedding does not pin down a unique streamline (up to reversal).

    ``candidates`` holds every streamline consistent with the embedding, one
    representative per reversal pair.
    """

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class InconsistentEmbedding(DataError, ValueError):
    pass


# nn
class ShapeMismatch(DataError, ValueError):
    pass


class GraphNotRecorded(PetparcError, RuntimeError):
    pass


class NonFiniteActivation(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class LabelOutOfRange(DataError, ValueError):
    pass


# pipeline
class ModelConfigMismatch(DataError, ValueError):
    pass


class UnknownCluster(DataError, KeyError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


# synth
class ConfigInvalid(DataError, ValueError):
    pass


class TooManyBundles(ConfigInvalid):
    pass


# io
class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class CountMismatch(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class MissingTensor(DataError):
    pass


class ParseError(DataError, ValueError):
    pass


class SparseMap(DataError, ValueError):
    pass
