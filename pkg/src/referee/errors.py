"""Exception types shared across the package.

Everything raised on purpose derives from RefereeError so callers can catch
one base class at the CLI boundary.
"""


class RefereeError(Exception):
    """Base class for all errors raised by this package."""


# ---- scan / trajectory loading ----

class UnreadableFile(RefereeError):
    """File missing or not decodable at all."""


class MalformedHeader(RefereeError):
    """Structured binary file whose header disagrees with its payload."""


class NonGrayscaleImage(RefereeError):
    """Polar PNG input that is not 8-bit single-channel grayscale."""


class ParseError(RefereeError):
    """Text input that fails to parse; carries the offending row number."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateTimestamp(RefereeError):
    """Two trajectory rows share a timestamp."""


class EmptyTrajectory(RefereeError):
    """Operation that needs at least one pose got none."""


# ---- feature extraction / descriptor ----

class DimensionMismatch(RefereeError):
    """Internal shape inconsistency between a scan and derived arrays."""


class IndivisibleAlpha(RefereeError):
    """Requested sector count does not divide the partition axis length."""


# ---- descriptor serialization ----

class BadMagic(RefereeError):
    """Descriptor bytes do not start with the expected magic."""


class VersionUnsupported(RefereeError):
    """Descriptor format version this build does not understand."""


class TruncatedPayload(RefereeError):
    """Descriptor byte length disagrees with the advertised element count."""


# ---- retrieval ----

class MixedAlpha(RefereeError):
    """Index build got descriptors of different dimensionality."""


# ---- evaluation / benchmarking ----

class NoPositives(RefereeError):
    """Ground truth contains no true loops, so a PR curve is undefined."""


class InsufficientSamples(RefereeError):
    """Benchmark needs more scans than were provided."""


# ---- synthetic data ----

class DiskWriteFailure(RefereeError):
    """Session generation could not write an output file."""


# ---- configuration ----

class ConfigError(RefereeError):
    """One or more invalid configuration values, aggregated into one report."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
