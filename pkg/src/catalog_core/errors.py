"""Exception hierarchy shared across the package.

Every error raised by this package derives from :class:`CatalogError` so
callers (and the CLI) can distinguish our failures from genuine bugs.
Messages always name the offending file, field, or index.
"""


class CatalogError(Exception):
    """Base class for all errors raised by catalog-core."""


class ConfigError(CatalogError):
    """Invalid configuration value (hyperparameter range, env var, config file)."""


class MissingFileError(CatalogError):
    """A file required by a bundle or checkpoint directory is absent."""


class ManifestSchemaError(CatalogError):
    """A manifest or metadata document does not match the expected schema."""


class DimensionMismatchError(CatalogError):
    """A blob or array does not have the size declared for it."""


class ChecksumMismatchError(CatalogError):
    """Stored CRC-32 does not match the bytes on disk."""


class NonFiniteValueError(CatalogError):
    """An embedding or parameter contains NaN or Inf."""


class LabelOutOfRangeError(CatalogError):
    """A label index is negative or >= the catalog size."""


class IoError(CatalogError):
    """Filesystem write failure."""


class SchemaError(CatalogError):
    """A checkpoint document is malformed or internally inconsistent."""


class EmptyBlockError(CatalogError):
    """A prompt-embedding block has zero classes or zero prompts."""


class EmptyClassNameError(CatalogError):
    """A class name is the empty string."""


class ZeroNormRowError(CatalogError):
    """A row with zero l2 norm reached a cosine-similarity computation."""


class DimMismatchError(CatalogError):
    """Two matrices that must share a dimension do not."""


class ShapeMismatchError(CatalogError):
    """Two arrays that must share a full shape do not."""


class InvalidTauError(CatalogError):
    """Temperature must be a positive finite real."""


class InvalidDimsError(CatalogError):
    """MLP layer dims must list at least two positive sizes."""


class CacheMismatchError(CatalogError):
    """A backward pass received a cache produced by a different forward call."""


class MissingSplitError(CatalogError):
    """The bundle does not contain a required split."""


class MissingParamsError(CatalogError):
    """Projection parameters are required for this operation but absent."""


class LengthMismatchError(CatalogError):
    """Two sequences that must have equal length do not."""


class AllBranchesDisabledError(CatalogError):
    """An ablation spec disabled both similarity branches."""


class InvalidSpecError(CatalogError):
    """A synthetic-bundle spec violates its invariants."""
