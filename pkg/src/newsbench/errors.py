"""Exception taxonomy shared across the pipeline.

Every error raised on purpose derives from NewsbenchError so the CLI can map
failures onto its documented exit codes.
"""


class NewsbenchError(Exception):
    """Base class for all deliberate pipeline errors."""

    exit_code = 1


class UsageError(NewsbenchError):
    """Bad command line or mutually inconsistent options."""

    exit_code = 2


class RegistryFormatError(NewsbenchError):
    """Source registry file does not parse; message names the line."""

    exit_code = 3


class DuplicateSourceError(RegistryFormatError):
    """Two registry sources share a name."""


class ConfigurationError(NewsbenchError):
    """Resolved run configuration is internally inconsistent."""

    exit_code = 3


class TransientFetchError(NewsbenchError):
    """HTTP-level feed failure; retryable."""

    exit_code = 4


class FeedParseError(NewsbenchError):
    """Feed body is not well-formed XML/RSS."""

    exit_code = 4


class HarvestEmptyError(NewsbenchError):
    """Every source in the registry failed."""

    exit_code = 4


class PersistenceError(NewsbenchError):
    """Corpus store could not write or replace a day file."""

    exit_code = 5


class CredentialError(NewsbenchError):
    """Provider rejected or is missing credentials; not retryable."""

    exit_code = 3


class TransientProviderError(NewsbenchError):
    """Provider kept failing after the configured retry budget."""

    exit_code = 4


class GenerationParseError(NewsbenchError):
    """Agent output could not be recovered into a JSON array."""

    exit_code = 5

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class SystemicFailureError(NewsbenchError):
    """More than half of the agent calls in a batch failed; signals a
    prompt or provider regression rather than bad single articles."""

    exit_code = 5


class SignatureParseError(NewsbenchError):
    """Rendered signature string violates the documented grammar."""

    exit_code = 5


class PackagingError(NewsbenchError):
    """Snapshot contents are inconsistent (e.g. dangling article id)."""

    exit_code = 5


class EmptyCorpusError(NewsbenchError):
    """Index build requested over an empty corpus slice."""

    exit_code = 5


class IndexBuildError(NewsbenchError):
    """Corpus slice violates index preconditions (e.g. duplicate ids)."""

    exit_code = 5


class DenseUnavailableError(NewsbenchError):
    """Embedding sidecar is unreachable; BM25 paths are unaffected."""

    exit_code = 4


class EmbedProtocolError(NewsbenchError):
    """Sidecar reply violates the embedding wire contract."""

    exit_code = 5


class ScoringError(NewsbenchError):
    """Retrieval run references a query with no gold label."""

    exit_code = 5
