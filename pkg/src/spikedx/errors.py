"""Exception hierarchy shared by every stage of the pipeline."""


class SpikedxError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class SchemaError(SpikedxError):
    """Input file does not follow the CSV schema."""


class MissingHeader(SchemaError):
    pass


class NonNumericFeature(SchemaError):
    def __init__(self, row: int, col: int, name: str = "", value: str = ""):
        self.row = row
        self.col = col
        self.name = name
        self.value = value
        super().__init__(
            f"non-numeric feature value {value!r} at line {row}, column {col} ({name})"
        )


class UnknownLabelValue(SchemaError):
    pass


class EmptyDataset(SchemaError):
    pass


class DatasetError(SpikedxError):
    pass


class AllFeaturesRemoved(DatasetError):
    pass


class LengthMismatch(DatasetError):
    pass


class KTooLarge(DatasetError):
    pass


class NotBinary(DatasetError):
    pass


class AlreadyAboveTarget(DatasetError):
    pass


class TooFewSamplesPerClass(DatasetError):
    pass


class UnknownFeatureGroup(DatasetError):
    pass


class EncodingError(SpikedxError):
    """Dimension or parameter problems in SOM/GSN/spike encoding."""


class EmptyInput(EncodingError):
    pass


class DimensionMismatch(EncodingError):
    pass


class ZeroVarianceFeature(EncodingError):
    pass


class RateTooHighForDt(EncodingError):
    pass


class EmptyWindow(EncodingError):
    pass


class NetworkError(SpikedxError):
    pass


class InvalidConfig(NetworkError):
    pass


class ChannelMismatch(NetworkError):
    pass


class EmptyStimuli(NetworkError):
    pass


class UntrainedNetwork(NetworkError):
    pass


class DecodingError(SpikedxError):
    pass


class EmptyResponses(DecodingError):
    pass


class AllZeroResponse(DecodingError):
    """No output neuron spiked; the decoder abstains."""


class NoAssignedNeurons(DecodingError):
    pass


class MetricError(SpikedxError):
    pass


class EmptySet(MetricError):
    pass


class ZeroVariance(MetricError):
    pass
