"""Pointwise 3x3 tensor algebra for the quartic Q-tensor model.

Every function here is vectorised over leading axes: a ``Q`` of shape
``(..., 3, 3)`` is treated as a field of matrices, so the same code serves a
single point and a whole grid.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .energy import PotentialParams

_I3 = np.eye(3)

STRETCHING_VARIANTS = ("full", "antisym")

__all__ = [
    "contract",
    "norm",
    "transpose",
    "sym",
    "skew",
    "deviator",
    "is_symmetric",
    "is_traceless",
    "potential_F",
    "bulk_force_f",
    "bulk_force_f_pz",
    "stretching_S",
    "stretching_dual",
    "sigma_stress",
    "tau_stress",
    "uniaxial",
    "biaxial",
    "second_moment_deviation",
]


def contract(A, B):
    """Full contraction ``A:B = sum_ij A_ij B_ij`` over the last two axes."""
    return np.einsum("...ij,...ij->...", A, B)


def norm(A):
    return np.sqrt(contract(A, A))


def transpose(A):
    # contiguous copy: batched matmul on strided views is several times slower
    return np.ascontiguousarray(np.swapaxes(A, -1, -2))


def sym(A):
    return 0.5 * (A + transpose(A))


def skew(A):
    return 0.5 * (A - transpose(A))


def deviator(A):
    """Remove the isotropic part: ``A - tr(A)/3 I``."""
    tr = np.trace(A, axis1=-2, axis2=-1)
    return A - tr[..., None, None] * _I3 / 3.0


def is_symmetric(Q, rtol: float = 1e-14) -> bool:
    Q = np.asarray(Q)
    return bool(np.all(norm(Q - transpose(Q)) <= rtol * norm(Q) + 1e-300))


def is_traceless(Q, rtol: float = 1e-14) -> bool:
    Q = np.asarray(Q)
    tr = np.trace(Q, axis1=-2, axis2=-1)
    return bool(np.all(np.abs(tr) <= rtol * norm(Q) + 1e-300))


def _cube_contract(Q):
    # Q^2 : Q
    return contract(Q @ Q, Q)


def potential_F(Q, params: "PotentialParams"):
    """Quartic bulk potential ``a/2 |Q|^2 - b/3 (Q^2:Q) + c/4 |Q|^4``.

    ``params`` is anything with ``a``, ``b``, ``c`` attributes, so degenerate
    coefficient sets (``c = 0``) can be evaluated pointwise.
    """
    Q = np.asarray(Q, dtype=float)
    q2 = contract(Q, Q)
    return 0.5 * params.a * q2 - params.b / 3.0 * _cube_contract(Q) + 0.25 * params.c * q2 * q2


def bulk_force_f(Q, params: "PotentialParams"):
    """Derivative of :func:`potential_F` with respect to ``Q``.

    Valid for non-symmetric ``Q`` too, which is why the cubic term carries all
    three orderings ``Q^2 + Q Q^t + Q^t Q``.
    """
    Q = np.asarray(Q, dtype=float)
    q2 = contract(Q, Q)
    out = params.a * Q + params.c * q2[..., None, None] * Q
    if params.b != 0:
        Qt = transpose(Q)
        out -= params.b / 3.0 * (Q @ Q + Q @ Qt + Qt @ Q)
    return out


def bulk_force_f_pz(Q, params: "PotentialParams", rtol: float = 1e-8):
    """Trace-free bulk force ``a Q - b (Q^2 - tr(Q^2)/3 I) + c |Q|^2 Q``.

    Only defined for symmetric ``Q``; raises ``ValueError`` otherwise.
    """
    Q = np.asarray(Q, dtype=float)
    if not is_symmetric(Q, rtol):
        raise ValueError("bulk_force_f_pz requires a symmetric Q")
    Q2 = Q @ Q
    q2 = contract(Q, Q)
    tr2 = np.trace(Q2, axis1=-2, axis2=-1)
    return (
        params.a * Q
        - params.b * (Q2 - tr2[..., None, None] * _I3 / 3.0)
        + params.c * q2[..., None, None] * Q
    )


def stretching_S(G, Q, variant: str = "full"):
    """Stretching term coupling the velocity gradient ``G`` to ``Q``.

    ``full`` is ``G Q^t - Q^t G``; ``antisym`` is the commutator ``A Q - Q A``
    with ``A`` the antisymmetric part of ``G``, which keeps symmetric
    traceless tensors symmetric and traceless.
    """
    G = np.asarray(G, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if variant == "full":
        Qt = transpose(Q)
        return G @ Qt - Qt @ G
    if variant == "antisym":
        A = skew(G)
        return A @ Q - Q @ A
    raise ValueError(f"unknown stretching variant {variant!r}")


def sigma_stress(H, Q):
    """Antisymmetric molecular stress ``H Q - Q H``."""
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return H @ Q - Q @ H


def stretching_dual(H, Q, variant: str = "full"):
    """Stress ``M`` with ``stretching_S(G, Q, variant) : H == G : M`` for all ``G``.

    For ``full`` this is ``sigma_stress(H, Q)``; for ``antisym`` it is the
    antisymmetric part of ``H Q^t - Q^t H``. The flow solver uses it so that
    the work done by the stress cancels the stretching exactly.
    """
    if variant == "full":
        return sigma_stress(H, Q)
    if variant == "antisym":
        Qt = transpose(np.asarray(Q, dtype=float))
        return skew(np.asarray(H, dtype=float) @ Qt - Qt @ H)
    raise ValueError(f"unknown stretching variant {variant!r}")


def tau_stress(gradQ, epsilon: float):
    """Distortion stress ``tau_ij = -eps (d_j Q : d_i Q)``.

    ``gradQ`` has shape ``(..., n, 3, 3)`` with ``gradQ[..., i]`` holding the
    derivative along axis ``i``; ``n < 3`` means the missing derivatives vanish.
    The result is padded to ``(..., 3, 3)``.
    """
    gradQ = np.asarray(gradQ, dtype=float)
    n = gradQ.shape[-3]
    if n > 3:
        raise ValueError("at most three spatial derivatives")
    gram = np.einsum("...ikl,...jkl->...ij", gradQ, gradQ)
    out = np.zeros(gradQ.shape[:-3] + (3, 3))
    out[..., :n, :n] = -epsilon * gram
    return out


def _unit(v, name: str, atol: float = 1e-12):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > atol:
        raise ValueError(f"{name} must be a unit vector, |{name}| = {np.linalg.norm(v)!r}")
    return v


def uniaxial(s: float, n) -> np.ndarray:
    """``s (n n^t - I/3)`` for a unit director ``n``."""
    n = _unit(n, "n")
    return s * (np.outer(n, n) - _I3 / 3.0)


def biaxial(s: float, r: float, n, m) -> np.ndarray:
    n = _unit(n, "n")
    m = _unit(m, "m")
    return s * (np.outer(n, n) - _I3 / 3.0) + r * (np.outer(m, m) - _I3 / 3.0)


def second_moment_deviation(directions: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Deviation of a discrete orientation distribution's second moment from isotropy."""
    P = np.asarray(directions, dtype=float).reshape(-1, 3)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if P.shape[0] != w.shape[0]:
        raise ValueError("one weight per direction")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    if np.any(np.abs(np.linalg.norm(P, axis=1) - 1.0) > 1e-12):
        raise ValueError("directions must be unit vectors")
    M = np.einsum("k,ki,kj->ij", w, P, P)
    return M - _I3 / 3.0
