"""Domain error hierarchy.

Every error carries a stable machine-readable ``code`` so the CLI can emit
``error: <code>: <message>`` lines and callers can branch without string
matching.
"""

from __future__ import annotations


class SceneWatchError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "Error"

    def __str__(self) -> str:  # pragma: no cover - trivial
        return super().__str__()


# --- core ---------------------------------------------------------------

class RunSumMismatch(SceneWatchError):
    code = "RunSumMismatch"


# --- registration -------------------------------------------------------

class DimensionMismatch(SceneWatchError):
    code = "DimensionMismatch"


class ImageTooSmall(SceneWatchError):
    code = "ImageTooSmall"


class PointOutOfGrid(SceneWatchError):
    code = "PointOutOfGrid"


# --- segmentation -------------------------------------------------------

class ManifestNotFound(SceneWatchError):
    code = "ManifestNotFound"


class ManifestSchemaError(SceneWatchError):
    code = "ManifestSchemaError"


class BackendUnavailable(SceneWatchError):
    code = "BackendUnavailable"


class PointOutOfBounds(SceneWatchError):
    code = "PointOutOfBounds"


# --- features -----------------------------------------------------------

class LengthMismatch(SceneWatchError):
    code = "LengthMismatch"


class EmptyVector(SceneWatchError):
    code = "EmptyVector"


# --- classifier ---------------------------------------------------------

class SingleClassDataset(SceneWatchError):
    code = "SingleClassDataset"


class EmptyDataset(SceneWatchError):
    code = "EmptyDataset"


class TooFewSamples(SceneWatchError):
    code = "TooFewSamples"


class FoldDegenerate(SceneWatchError):
    code = "FoldDegenerate"


class ModelSchemaError(SceneWatchError):
    code = "ModelSchemaError"


# --- pipeline / workspace -----------------------------------------------

class DanglingLabel(SceneWatchError):
    code = "DanglingLabel"


class MissingManifest(SceneWatchError):
    code = "MissingManifest"


class MaskReportMismatch(SceneWatchError):
    code = "MaskReportMismatch"


class WorkspaceError(SceneWatchError):
    code = "WorkspaceError"


class LabelSchemaError(SceneWatchError):
    code = "LabelSchemaError"


class ReportSchemaError(SceneWatchError):
    code = "ReportSchemaError"


class UnknownScene(SceneWatchError):
    code = "UnknownScene"


# --- vlm client ---------------------------------------------------------

class UnknownTemplate(SceneWatchError):
    code = "UnknownTemplate"


class TransportError(SceneWatchError):
    code = "TransportError"

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class EndpointError(SceneWatchError):
    code = "EndpointError"

    def __init__(self, message: str, status: int = 0, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ResponseSchemaError(SceneWatchError):
    code = "ResponseSchemaError"
