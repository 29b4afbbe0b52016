"""Exception taxonomy for the segmentation engine.

Every failure mode that callers are expected to handle gets a named class so
that CLI error reporting and tests can match on type instead of message text.
All of them derive from :class:`SpecsegError`.
"""

from __future__ import annotations


class SpecsegError(Exception):
    """Base class for all engine errors."""


# ---------------------------------------------------------------------------
# tensor container + label PNG I/O


class IoFailure(SpecsegError):
    """Underlying OS-level read/write failed."""


class BadMagic(IoFailure):
    """File does not start with the DCFT magic bytes."""


class UnsupportedVersion(IoFailure):
    """Container version or dtype code is not one this reader supports."""


class TruncatedPayload(IoFailure):
    """Payload length disagrees with the header dimensions."""


class NonFiniteValue(SpecsegError):
    """A tensor contains NaN or infinity where finite values are required."""


class UnsupportedPng(IoFailure):
    """Label PNG is not 8/16-bit single channel (or indexed without alpha)."""


# ---------------------------------------------------------------------------
# graph construction and spectral machinery


class ZeroNormPatch(SpecsegError):
    """A patch feature vector has zero norm, so its cosine is undefined."""


class EmptySubset(SpecsegError):
    """Subgraph extraction was given no node indices."""


class IndexOutOfRange(SpecsegError):
    """Subgraph extraction was given a node index outside the graph."""


class ConvergenceFailure(SpecsegError):
    """Eigensolver exhausted its iteration budget above the residual bound."""


class EmptySide(SpecsegError):
    """A cut was requested with one side of the bipartition empty."""


class NoValidSplit(SpecsegError):
    """No threshold candidate satisfies the minimum side size (or x is constant)."""


# ---------------------------------------------------------------------------
# model-selection baselines


class TooFewEigenvalues(SpecsegError):
    """Eigen-gap scan needs at least k_max + 1 eigenvalues."""


class SingularAnchors(SpecsegError):
    """CPQR anchor submatrix is numerically singular; k is too large."""


class KTooLarge(SpecsegError):
    """Requested more clusters than there are samples."""


# ---------------------------------------------------------------------------
# high-resolution pipeline


class ZeroNormPixel(SpecsegError):
    """An upsampled pixel feature has zero norm and no fallback was provided."""


class DimensionMismatch(SpecsegError):
    """Two grids that must share a shape do not."""


# ---------------------------------------------------------------------------
# evaluation


class NonFiniteCost(SpecsegError):
    """Assignment cost matrix contains NaN or infinity."""


class DegenerateLabels(SpecsegError):
    """Coherence analysis needs at least one positive and one negative pair."""


class MissingPair(SpecsegError):
    """Directory pairing found a file with no counterpart of the same stem."""
