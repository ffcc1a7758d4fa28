"""Exception hierarchy. Every error raised on a contract violation lives here."""


class CauserlError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(CauserlError):
    pass


class NotScalarError(CauserlError):
    """Backward was requested on a non-scalar tensor."""


class ZeroNormError(CauserlError):
    """A vector with norm below the guard epsilon reached a normalization."""


class NonFiniteInputError(CauserlError):
    pass


class NonDeterministicError(CauserlError):
    """Two evaluations of a supposedly deterministic function disagreed."""


class EmptySequenceError(CauserlError):
    pass


class OutOfVocabError(CauserlError):
    pass


class SpanOutOfRangeError(CauserlError):
    pass


class BatchTooSmallError(CauserlError):
    pass


class EmptyBatchError(CauserlError):
    pass


class EmptyCorpusError(CauserlError):
    pass


class NoPositivesError(CauserlError):
    """A contrastive batch contained no causal pair; the caller should skip
    the contrastive term."""


class MarkerNotFoundError(CauserlError):
    pass


class MultipleMarkersError(CauserlError):
    pass


class InvalidSpecError(CauserlError):
    pass


class TooFewDocumentsError(CauserlError):
    pass


class ParseError(CauserlError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingArtifactError(CauserlError):
    pass


class UnknownVariantError(CauserlError):
    pass
