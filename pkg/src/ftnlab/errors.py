"""Exception types shared across the laboratory."""


class FtnError(Exception):
    """Base class for all laboratory errors."""


class NullSpectrumError(FtnError):
    """Spectral factorization requested on a folded spectrum with nulls and no regularizer."""


class StateExplosionError(FtnError):
    """A trellis construction exceeded the configured state budget."""


class AllNullError(FtnError):
    """Water-filling cannot allocate power because every band is null."""


class CpTooShortError(FtnError):
    """Cyclic prefix shorter than the channel memory; circulant model invalid."""


class IllConditionedError(FtnError):
    """Steering pair numerically collinear; least-squares fit would be meaningless."""


class ConfigError(FtnError):
    """Experiment configuration failed validation."""
