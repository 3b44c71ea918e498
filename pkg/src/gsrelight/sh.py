"""Real spherical harmonics on the unit sphere.

The basis is real, orthonormal, and carries no Condon-Shortley phase, so
every polynomial below has a positive leading constant.  Coefficients are
flattened in (l, m) order at index ``l*(l+1) + m``; an order-n expansion
has ``(n + 1)**2`` entries.  Orders 0 through 4 are supported.

Projection integrals are evaluated with a deterministic Fibonacci-lattice
quadrature by default; a seeded Monte Carlo rule is available through
:class:`QuadratureSpec` for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MAX_ORDER = 4

#: Default node count for sphere quadrature.  A 100k Fibonacci lattice
#: integrates products of order-4 harmonics to well below 1e-5.
DEFAULT_QUADRATURE_NODES = 100_000

_UNIT_TOL = 1e-6

# Basis constants, l = 0..4.  All positive (no Condon-Shortley phase).
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (
    1.0925484305920792,
    1.0925484305920792,
    0.31539156525252005,
    1.0925484305920792,
    0.5462742152960396,
)
_C3 = (
    0.5900435899266435,
    2.890611442640554,
    0.4570457994644658,
    0.3731763325901154,
    0.4570457994644658,
    1.445305721320277,
    0.5900435899266435,
)
_C4 = (
    2.5033429417967046,
    1.7701307697799304,
    0.9461746957575601,
    0.6690465435572892,
    0.10578554691520431,
    0.6690465435572892,
    0.47308734787878004,
    1.7701307697799304,
    0.6258357354491761,
)


def n_coeffs(order: int) -> int:
    """Number of basis functions in an order-``order`` expansion."""
    _check_order(order)
    return (order + 1) ** 2


def _check_order(order: int) -> None:
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise InvalidInputError(f"order must be an integer, got {order!r}")
    if not 0 <= order <= MAX_ORDER:
        raise InvalidInputError(f"order must be in [0, {MAX_ORDER}], got {order}")


def _check_unit(directions: np.ndarray, name: str = "direction") -> np.ndarray:
    d = np.asarray(directions, dtype=np.float64)
    if d.shape[-1] != 3:
        raise InvalidInputError(f"{name} must have 3 components, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InvalidInputError(f"{name} contains non-finite components")
    norms = np.linalg.norm(d, axis=-1)
    err = np.abs(norms - 1.0)
    if np.any(err > _UNIT_TOL):
        worst = float(np.max(err))
        raise InvalidInputError(
            f"{name} must be unit length within {_UNIT_TOL:g} (worst deviation {worst:.3e})"
        )
    return d


def eval_sh_basis(direction, order: int) -> np.ndarray:
    """Evaluate all basis functions up to ``order`` at one unit direction.

    Returns a ``((order + 1)**2,)`` float array in flattened (l, m) order.
    """
    d = _check_unit(direction)
    if d.ndim != 1:
        raise InvalidInputError(f"expected a single direction, got shape {d.shape}")
    return eval_sh_basis_many(d[None, :], order)[0]

def eval_sh_basis_many(directions, order: int) -> np.ndarray:
    """Vectorized :func:`eval_sh_basis` over an ``(..., 3)`` direction array."""
    _check_order(order)
    d = _check_unit(directions, "directions")
    x = d[..., 0]
    y = d[..., 1]
    z = d[..., 2]
    out = np.empty(d.shape[:-1] + (n_coeffs(order),), dtype=np.float64)
    out[..., 0] = _C0
    if order >= 1:
        out[..., 1] = _C1 * y
        out[..., 2] = _C1 * z
        out[..., 3] = _C1 * x
    if order >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[..., 4] = _C2[0] * xy
        out[..., 5] = _C2[1] * yz
        out[..., 6] = _C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = _C2[3] * xz
        out[..., 8] = _C2[4] * (xx - yy)
    if order >= 3:
        out[..., 9] = _C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = _C3[1] * xy * z
        out[..., 11] = _C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = _C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = _C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = _C3[5] * z * (xx - yy)
        out[..., 15] = _C3[6] * x * (xx - 3.0 * yy)
    if order >= 4:
        out[..., 16] = _C4[0] * xy * (xx - yy)
        out[..., 17] = _C4[1] * yz * (3.0 * xx - yy)
        out[..., 18] = _C4[2] * xy * (7.0 * zz - 1.0)
        out[..., 19] = _C4[3] * yz * (7.0 * zz - 3.0)
        out[..., 20] = _C4[4] * (zz * (35.0 * zz - 30.0) + 3.0)
        out[..., 21] = _C4[5] * xz * (7.0 * zz - 3.0)
        out[..., 22] = _C4[6] * (xx - yy) * (7.0 * zz - 1.0)
        out[..., 23] = _C4[7] * xz * (xx - 3.0 * yy)
        out[..., 24] = _C4[8] * (xx * (xx - 3.0 * yy) + yy * (yy - 3.0 * xx))
    return out


@dataclass(frozen=True)
class QuadratureSpec:
    """Recipe for numerical integration over the unit sphere.

    ``method`` is either ``"fibonacci"`` (deterministic lattice, the
    default) or ``"monte-carlo"`` (seeded uniform sampling).  Both use
    equal weights 4*pi/n.
    """

    n_nodes: int = DEFAULT_QUADRATURE_NODES
    method: str = "fibonacci"
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("fibonacci", "monte-carlo"):
            raise InvalidInputError(f"unknown quadrature method {self.method!r}")
        if self.n_nodes < 1:
            raise InvalidInputError("quadrature needs at least one node")

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (directions ``(n, 3)``, weights ``(n,)``)."""
        if self.method == "fibonacci":
            dirs = fibonacci_sphere(self.n_nodes)
        else:
            rng = np.random.default_rng(self.seed)
            v = rng.standard_normal((self.n_nodes, 3))
            dirs = v / np.linalg.norm(v, axis=1, keepdims=True)
        w = np.full(self.n_nodes, 4.0 * math.pi / self.n_nodes)
        return dirs, w


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic near-uniform lattice of ``n`` unit directions."""
    if n < 1:
        raise InvalidInputError("need at least one lattice point")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))  # golden angle
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class SHCoefficients:
    """An order-n expansion holding one RGB triplet per basis index."""

    order: int
    coeffs: np.ndarray  # ((order + 1)**2, 3) float64

    def __post_init__(self):
        _check_order(self.order)
        c = np.asarray(self.coeffs, dtype=np.float64)
        want = (n_coeffs(self.order), 3)
        if c.shape != want:
            raise InvalidInputError(
                f"coefficient array must have shape {want}, got {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("coefficients contain non-finite values")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, order: int) -> "SHCoefficients":
        return cls(order, np.zeros((n_coeffs(order), 3)))


def project_to_sh(f, order: int, quadrature: QuadratureSpec | None = None) -> SHCoefficients:
    """Project a function on the sphere onto the order-``order`` basis.

    ``f`` maps an ``(n, 3)`` array of unit directions to ``(n, 3)`` RGB
    values (an ``(n,)`` result is broadcast across channels).  The
    quadrature must supply at least ``4 * (order + 1)**2`` nodes; coarser
    rules are refused because the projection would alias badly.
    """
    _check_order(order)
    spec = quadrature if quadrature is not None else QuadratureSpec()
    m = n_coeffs(order)
    if spec.n_nodes < 4 * m:
        raise InvalidInputError(
            f"quadrature too coarse for order {order}: {spec.n_nodes} nodes < "
            f"required {4 * m} (= 4 * (order + 1)**2)"
        )
    dirs, w = spec.nodes()
    vals = np.asarray(f(dirs), dtype=np.float64)
    if vals.ndim == 1:
        vals = np.repeat(vals[:, None], 3, axis=1)
    if vals.shape != (spec.n_nodes, 3):
        raise InvalidInputError(
            f"integrand returned shape {vals.shape}, expected ({spec.n_nodes}, 3)"
        )
    basis = eval_sh_basis_many(dirs, order)  # (n, m)
    coeffs = basis.T @ (vals * w[:, None])
    return SHCoefficients(order, coeffs)


def sh_dot(a: SHCoefficients, b: SHCoefficients) -> np.ndarray:
    """Channel-wise inner product of two expansions of equal order."""
    if a.order != b.order:
        raise InvalidInputError(
            f"mismatched orders: {a.order} vs {b.order}; truncate explicitly first"
        )
    return np.sum(a.coeffs * b.coeffs, axis=0)
