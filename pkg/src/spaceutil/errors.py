"""Exception hierarchy.

Everything raised on bad input derives from :class:`SpaceUtilError`; the CLI
maps those to exit code 1 and ``OSError`` to exit code 2.
"""


class SpaceUtilError(Exception):
    """Base class for validation-type failures."""


class MalformedLine(SpaceUtilError):
    pass


class AllTokensGarbage(SpaceUtilError):
    pass


class InvalidSelector(SpaceUtilError):
    pass


class EmptyInput(SpaceUtilError):
    pass


class ZeroVariance(SpaceUtilError):
    pass


class InsufficientBins(SpaceUtilError):
    pass


class DeductionAtCapacity(SpaceUtilError):
    pass


class DegenerateData(SpaceUtilError):
    pass


class TooFewSamples(SpaceUtilError):
    pass


class TooFewNodes(SpaceUtilError):
    pass


class EmptySelection(SpaceUtilError):
    pass


class InvalidScenario(SpaceUtilError):
    pass


class InvalidConfig(SpaceUtilError):
    pass
