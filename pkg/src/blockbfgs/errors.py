"""
Exception hierarchy.

Everything derives from ValueError so callers (the CLI included) can keep the
plain `except ValueError` convention and still match a specific kind when it
matters, e.g. the optimizer's rank-repair loop catching RankDeficient.
"""


class BlockBFGSError(ValueError):
    """Base class for every error raised by blockbfgs."""


# ── linear algebra ─────────────────────────────────────────────────────────────

class DimensionMismatch(BlockBFGSError):
    pass


class NotPositiveDefinite(BlockBFGSError):
    pass


class NotSymmetric(BlockBFGSError):
    pass


class TooLarge(BlockBFGSError):
    pass


class NonFiniteEntries(BlockBFGSError):
    """A matrix operand holds NaN or Inf."""


# ── dataset ───────────────────────────────────────────────────────────────────

class ParseError(BlockBFGSError):
    """A LIBSVM line could not be read. `line_number` is 1-based."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        self.detail = message
        super().__init__(f"line {line_number}: {message}")


class MalformedLine(ParseError):
    pass


class NonFiniteValue(ParseError):
    pass


class NonPositiveIndex(ParseError):
    pass


class UnrecognizedLabel(ParseError):
    pass


class BiasAlreadyAdded(BlockBFGSError):
    pass


class SizeOutOfRange(BlockBFGSError):
    pass


# ── objective / sketch / metric ─────────────────────────────────────────────────

class EmptySample(BlockBFGSError):
    pass


class BadShape(BlockBFGSError):
    pass


class ZeroDirection(BlockBFGSError):
    pass


class BufferNotFactored(BlockBFGSError):
    pass


class RankDeficient(BlockBFGSError):
    pass


# ── optimizer / analysis / harness ──────────────────────────────────────────────

class NonFiniteIterate(BlockBFGSError):
    pass


class BadConstants(BlockBFGSError):
    pass


class StepTooLarge(BlockBFGSError):
    pass


class InnerLoopTooShort(BlockBFGSError):
    pass


class TooManySubsets(BlockBFGSError):
    pass


class OptimumNotConverged(BlockBFGSError):
    pass


class AllRunsDiverged(BlockBFGSError):
    pass


class ConfigError(BlockBFGSError):
    pass
