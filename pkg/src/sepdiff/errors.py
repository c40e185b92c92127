"""Error conditions raised across the package.

Every failure mode that callers are expected to branch on gets its own class;
messages name the violated condition and carry the offending numbers.
"""


class SepdiffError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SepdiffError):
    """Malformed or inconsistent run configuration."""


# --- kernel ---------------------------------------------------------------

class NotAProbabilityError(SepdiffError):
    """Kernel weights are not a strictly positive probability vector."""


class OriginMassError(SepdiffError):
    """Kernel places mass on the zero displacement."""


class ReducibleError(SepdiffError):
    """Kernel support does not generate the full integer lattice."""


class TorusSizeError(SepdiffError):
    """Torus too small for the kernel range (needs 2N > 2R)."""


# --- statespace -----------------------------------------------------------

class WrongCountError(SepdiffError):
    """Configuration particle count does not match the state space."""


class OutOfRangeError(SepdiffError):
    """Rank outside [0, size) or site outside the torus."""


class SiteIsOriginError(SepdiffError):
    """Site argument refers to the excluded origin."""


class TargetOccupiedError(SepdiffError):
    """Move target site is already occupied."""


class TargetIsOriginError(SepdiffError):
    """Move target site wraps onto the excluded origin."""


# --- generator ------------------------------------------------------------

class SizeCapError(SepdiffError):
    """State count or nonzero count beyond the configured cap."""


class NotStationaryError(SepdiffError):
    """Uniform measure is not invariant: column sums exceed tolerance."""


class NotConnectedError(SepdiffError):
    """Transition graph is not connected."""

    def __init__(self, message, n_components=None):
        super().__init__(message)
        self.n_components = n_components


# --- sobolev --------------------------------------------------------------

class NotConvergedError(SepdiffError):
    """Iterative solver failed to reach the requested tolerance."""


class NotMeanZeroError(SepdiffError):
    """Vector required to have zero mean does not."""


class PropertyViolatedError(SepdiffError):
    """A checked norm inequality failed; message carries the witness."""


# --- diffusion ------------------------------------------------------------

class NonPositiveDError(SepdiffError):
    """Diffusion form negative beyond tolerance (convention/assembly bug)."""


class SupportTooLargeError(SepdiffError):
    """Observable block does not fit the torus or exceeds the block cap."""


class BlockTooLargeError(SepdiffError):
    """Requested coarse-graining scale does not fit the torus."""


# --- montecarlo -----------------------------------------------------------

class FrozenError(SepdiffError):
    """No enabled transition from the current state."""


class InconclusiveError(SepdiffError):
    """Sign arbitration could not separate the two conventions."""
