"""Exception hierarchy for the risk engine.

Every domain-level failure raises a subclass of CrqRiskError so the CLI can
map them to exit code 1 uniformly.
"""


class CrqRiskError(Exception):
    """Base class for all domain errors."""


# domain
class MissingId(CrqRiskError):
    pass


class UnknownRiskLevel(CrqRiskError):
    pass


class EmptyQaMap(CrqRiskError):
    pass


class ValidationError(CrqRiskError):
    pass


# corpus
class InvalidConfig(CrqRiskError):
    pass


class ParseError(CrqRiskError):
    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


# features
class SchemaMismatch(CrqRiskError):
    pass


class AllMissingFeature(CrqRiskError):
    def __init__(self, feature_name):
        super().__init__(f"feature {feature_name!r} has no observed values")
        self.feature_name = feature_name


# imbalance
class TooFewMinority(CrqRiskError):
    pass


class MissingValuesPresent(CrqRiskError):
    pass


# gbdt
class EmptyDataset(CrqRiskError):
    pass


class SingleClassDataset(CrqRiskError):
    pass


class TooManyMembers(CrqRiskError):
    pass


# drift
class EmptySample(CrqRiskError):
    pass


class InvalidAlpha(CrqRiskError):
    pass


# uncertainty
class OutOfRange(CrqRiskError):
    pass


class EmptyEnsemble(CrqRiskError):
    pass


# feedback
class NoPendingItem(CrqRiskError):
    pass


class DuplicateVerdict(CrqRiskError):
    pass


# evaluation
class SingleClassValidation(CrqRiskError):
    pass


class ZeroCrq(CrqRiskError):
    pass


# service
class NoActiveModel(CrqRiskError):
    pass


class TrainingFailed(CrqRiskError):
    pass


class UnknownVersion(CrqRiskError):
    pass
