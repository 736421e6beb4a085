"""Exception types raised across the benchmark library."""


class BenchmarkError(Exception):
    """Base class for all library errors."""


class NormTooSmall(BenchmarkError):
    """Vector norm below the normalization guard epsilon."""


class DimensionMismatch(BenchmarkError):
    """Operands disagree on embedding dimension or class count."""


class EmptyClassTexts(BenchmarkError):
    """A class has no text embeddings."""


class EmptyLabelList(BenchmarkError):
    """Marginal estimation over an empty label list."""


class InsufficientClassSamples(BenchmarkError):
    """A class was requested more times than its pool size."""

    def __init__(self, class_index: int, requested: int, available: int):
        self.class_index = class_index
        self.requested = requested
        self.available = available
        super().__init__(
            f"class {class_index}: requested {requested} samples, pool has {available}"
        )


class EmptySupport(BenchmarkError):
    """Operation requires a non-empty support set."""


class SingleClass(BenchmarkError):
    """Prototype repulsion needs at least two classes."""


class StepOutOfRange(BenchmarkError):
    """Learning-rate schedule queried outside [0, total_steps)."""


class NonFiniteGradient(BenchmarkError):
    """A training step produced NaN/Inf gradients."""


class UnknownMethod(BenchmarkError):
    """Adapter method name not recognized."""


class MissingClassForRebalancing(BenchmarkError):
    """Class-weighted / margin losses need every class present in the support."""


class EmptyTestSet(BenchmarkError):
    """Balanced accuracy over zero samples."""


class EmptyGroup(BenchmarkError):
    """Aggregation over an empty record group."""


class MissingScenario(BenchmarkError):
    """Scenario delta requested for a scenario with no records."""


class DegenerateConfig(BenchmarkError):
    """Synthetic task configuration cannot produce a valid task."""


class BadMagic(BenchmarkError):
    """Interchange file does not start with the expected magic bytes."""


class TruncatedPayload(BenchmarkError):
    """Interchange file shorter than its declared record count."""


class NormViolation(BenchmarkError):
    """Stored embedding norms deviate beyond the loader's hard tolerance."""


class InsufficientPool(BenchmarkError):
    """Pool too small for the requested study split."""


class EmptyReport(BenchmarkError):
    """Report rendering requires at least one record."""


class ConfigError(BenchmarkError):
    """Benchmark configuration file is invalid."""
