"""Exception hierarchy.

Two families matter to callers: bad or insufficient input data, and inputs
that are well-formed but mathematically degenerate.  The CLI maps them to
exit codes 2 and 3 respectively.
"""


class ArtdirError(Exception):
    pass


class DataError(ArtdirError):
    pass


class DegenerateError(ArtdirError):
    pass


# data problems
class InsufficientPoints(DataError):
    pass


class EmptyScene(DataError):
    pass


class UnknownPart(DataError):
    pass


class InsufficientField(DataError):
    pass


class NoComparablePoints(DataError):
    pass


class InsufficientInliers(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class EmptyTable(DataError):
    pass


class JointLimit(DataError):
    pass


class ContactLost(DataError):
    pass


# degenerate math
class DegenerateDisplacement(DegenerateError):
    pass


class DegenerateConfiguration(DegenerateError):
    pass


class DegenerateResultant(DegenerateError):
    pass


class NonConvergence(DegenerateError):
    pass


class TooManyDegenerateSubsets(DegenerateError):
    pass


class DegenerateModel(DegenerateError):
    pass


class NoValidGrasp(DegenerateError):
    pass
