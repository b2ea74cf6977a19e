"""Exception hierarchy shared by every stage of the pipeline."""


class ClueFusionError(Exception):
    pass


class EmptyInput(ClueFusionError, ValueError):
    pass


class EmptyQuery(EmptyInput):
    pass


class LengthMismatch(ClueFusionError, ValueError):
    pass


class DimensionMismatch(ClueFusionError, ValueError):
    pass


class NormalizationFailed(ClueFusionError):
    """A candidate could not be brought into canonical form; callers discard it."""


class UnknownCountry(ClueFusionError):
    pass


class BadGoldLabel(ClueFusionError, ValueError):
    pass


class TaskFailed(ClueFusionError):
    pass


class ConfigError(ClueFusionError, ValueError):
    pass


class BackendError(ClueFusionError):
    """Transport-level failure talking to an external capability."""


class BackendTimeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class QuotaExceeded(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class InputUnreadable(BackendError):
    pass


class GeocodeUnavailable(BackendError):
    pass


class ReplayMiss(BackendError):
    """The replay fixture holds no response for a request digest."""


class DatasetError(ClueFusionError, ValueError):
    pass
