"""Exception hierarchy shared across the package.

Three user-facing failure categories exist, and the CLI maps each to its
own exit code: bad arguments or parameters (:class:`InvalidInputError`,
exit 1), a malformed or inconsistent avatar asset (:class:`AssetError`,
exit 2), and numerical failures inside a solver (:class:`NumericError`,
exit 3).
"""


class GsrelightError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GsrelightError, ValueError):
    """A parameter violates a documented precondition (non-unit direction,
    roughness outside (0, 1), quadrature too coarse, mismatched orders...)."""


class AssetError(GsrelightError):
    """An avatar asset, mesh, or image file is malformed or inconsistent."""


class UVOverlapError(AssetError):
    """Two UV triangles claim the same texel interior.

    ``pairs`` holds (face_a, face_b, row, col) tuples for the offending
    texels, truncated to the first few occurrences.
    """

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(
            f"faces {a} and {b} at texel ({r}, {c})" for a, b, r, c in self.pairs[:8]
        )
        more = "" if len(self.pairs) <= 8 else f" (+{len(self.pairs) - 8} more)"
        super().__init__(f"ambiguous UV coverage: {shown}{more}")


class DegenerateNormalError(AssetError):
    """A shading normal could not be normalized (|n_hat + delta_n| ~ 0)."""


class NumericError(GsrelightError):
    """A solver failed to converge or produced non-finite values."""
