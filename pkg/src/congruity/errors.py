"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: any :class:`CongruityError` (and plain
``ValueError``/``OSError``) is a data error (exit 2), except
:class:`TransportError`, which signals an unreachable service (exit 3).
"""

from __future__ import annotations


class CongruityError(Exception):
    """Base class for pipeline errors caused by bad data or state."""


class CorpusError(CongruityError):
    """A corpus file is malformed or violates record invariants."""


class StoreFormatError(CongruityError):
    """An embedding store file is corrupt or not an embedding file."""


class MissingEmbeddingsError(CongruityError):
    """One or more required store keys are absent."""

    def __init__(self, missing_keys: list[str]):
        self.missing_keys = sorted(missing_keys)
        preview = ", ".join(self.missing_keys[:10])
        suffix = "" if len(self.missing_keys) <= 10 else f" (+{len(self.missing_keys) - 10} more)"
        super().__init__(f"missing embeddings for: {preview}{suffix}")


class TransportError(CongruityError):
    """The embedding service could not be reached; safe to retry."""


class ServiceError(CongruityError):
    """The embedding service answered with a non-2xx status."""

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class ServiceContractError(ServiceError):
    """The service response violates its advertised contract."""


class MissingLabelsError(CongruityError):
    """A precision curve was requested over ranks that lack usable labels.

    ``disagreed_ids`` are samples whose annotators disagree under the
    unanimous rule; they block the curve until re-reviewed.
    """

    def __init__(self, missing_ids: list[str], disagreed_ids: list[str] | None = None):
        self.missing_ids = sorted(missing_ids)
        self.disagreed_ids = sorted(disagreed_ids or [])
        parts = []
        if self.missing_ids:
            parts.append(f"unlabeled: {', '.join(self.missing_ids[:10])}")
        if self.disagreed_ids:
            parts.append(f"disagreed: {', '.join(self.disagreed_ids[:10])}")
        super().__init__("; ".join(parts) or "no labels available")


class DatagenError(CongruityError):
    """A pool cannot support the mismatch-sampling scheme."""


class TrainingDivergedError(CongruityError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"loss became non-finite at epoch {epoch}, batch {batch}")
