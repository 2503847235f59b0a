"""
Error types for the AGB feedback library
Every failure a library function can signal has its own class here
"""


class AgbError(ValueError):
    """Base class for all library errors"""


# mathkit
class NonHermitian(AgbError):
    """Matrix fails the conjugate-symmetry check"""


class NotPSD(AgbError):
    """Matrix has an eigenvalue below the negative tolerance"""


class RankDeficient(AgbError):
    """Matrix lacks full row rank"""


class InvalidInterval(AgbError):
    """Integration bounds are reversed"""


# codebook
class CapExceeded(AgbError):
    """Requested size is beyond a configured enumeration or codebook cap"""


class NullSpaceHit(AgbError):
    """A rotated codeword vanished under the correlation transform"""


class DimMismatch(AgbError):
    """Vector and codebook (or pattern) dimensions disagree"""


# patterns
class NonDivisible(AgbError):
    """Antenna count or array shape does not split evenly"""


class ZeroMatrix(AgbError):
    """Matrix with zero Frobenius norm passed to a distance"""


class InfeasibleHeader(AgbError):
    """More header patterns requested than can be enumerated"""


class SizeMismatch(AgbError):
    """Sub-array pattern sets have inconsistent sizes"""


# agb
class ZeroVector(AgbError):
    """Channel vector has (numerically) zero norm"""


class ZeroReduced(AgbError):
    """Reduced channel vector vanished for a pattern"""


class AllPatternsDegenerate(AgbError):
    """Every candidate pattern produced a vanishing reduced vector"""


class IndexOutOfRange(AgbError):
    """Packet index does not address an entry of the context"""


# analysis
class InvalidTarget(AgbError):
    """Bit-scaling target has no real solution"""


# harness
class ConfigInvalid(AgbError):
    """Scenario configuration failed validation"""


class CacheFormatError(AgbError):
    """Cache file is truncated or has the wrong header"""
