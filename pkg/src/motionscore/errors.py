"""Exception types shared across the package."""


class MotionScoreError(Exception):
    """Base class for all package errors."""


class MissingFile(MotionScoreError, FileNotFoundError):
    pass


class UnsupportedFormat(MotionScoreError):
    pass


class CorruptData(MotionScoreError):
    pass


class EmptyImage(MotionScoreError):
    pass


class IoFailure(MotionScoreError, OSError):
    pass


class BadMagic(MotionScoreError):
    pass


class DimensionMismatch(MotionScoreError):
    pass


class UnresolvedPrecomputedFlow(MotionScoreError):
    pass


class NonFiniteLoss(MotionScoreError):
    pass


class DegenerateGroup(MotionScoreError):
    pass


class AllGroupsFiltered(MotionScoreError):
    pass


class ParseError(MotionScoreError):
    pass


class DuplicateId(MotionScoreError):
    pass


class MissingReferencedFile(MotionScoreError):
    def __init__(self, paths):
        self.paths = list(paths)
        super().__init__(
            "missing referenced files:\n" + "\n".join(f"  {p}" for p in self.paths)
        )


class InsufficientModels(MotionScoreError):
    pass


class WeightMismatch(MotionScoreError):
    pass


class WeightSumInvalid(MotionScoreError):
    pass
