"""Complex 3x3 dyadic algebra and curls of two-point tensor fields.

A dyadic is a plain ``numpy`` array whose last two axes have length 3;
any leading axes are batch axes.  Points are arrays whose last axis has
length 3.  All functions broadcast over batch axes.

Curl conventions (Levi-Civita with ``eps[0, 1, 2] = +1``)::

    left:       [curl_r x T]^{ab}        = eps^{agd} d^g_r  T^{db}
    right:      [T x curl_r']^{ab}       = eps^{bgd} d^g_r' T^{ad}
    two-sided:  [curl_r x T x curl_r']^{ab}
                                         = eps^{agd} eps^{bmn} d^g_r d^m_r' T^{dn}
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateStep

LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_a, _b, _c] = 1.0
    LEVI_CIVITA[_a, _c, _b] = -1.0

IDENTITY = np.eye(3)

# first-derivative central stencils: (offsets, weights)
_STENCILS = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
    6: (np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]),
        np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0),
}

DEFAULT_REL_STEP = 1e-4


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def transpose(a):
    return np.swapaxes(a, -1, -2)


def outer(u, v):
    """``u (x) v`` for batches of 3-vectors (no conjugation)."""
    return u[..., :, None] * v[..., None, :]


def cross_matrix(v):
    """Matrix ``[v]_x`` with entries ``eps^{abg} v_g``."""
    return np.einsum("abg,...g->...ab", LEVI_CIVITA, v)


def hermitian_part(a, b):
    """``(A + B^dagger) / 2`` where ``A = T(r, r')`` and ``B = T(r', r)``."""
    return 0.5 * (a + dagger(b))


def anti_hermitian_part(a, b):
    """``(A - B^dagger) / 2i`` where ``A = G(r, r')`` and ``B = G(r', r)``."""
    return (a - dagger(b)) / 2j


def re_im_split_AH(g_rrp, g_rpr):
    """Real and imaginary parts of the anti-Hermitian part of G.

    Written through the symmetric/antisymmetric combinations of
    ``G(r, r')`` and ``G^T(r', r)``::

        Re G_AH =  1/2 Im[G(r, r') + G^T(r', r)]
        Im G_AH = -1/2 Re[G(r, r') - G^T(r', r)]
    """
    gt = transpose(g_rpr)
    return 0.5 * np.imag(g_rrp + gt), -0.5 * np.real(g_rrp - gt)


def as_points(r):
    r = np.asarray(r, dtype=float)
    if r.shape[-1:] != (3,):
        raise ValueError(f"points must have a trailing axis of length 3, got shape {r.shape}")
    return r


@dataclass(frozen=True)
class TensorField2:
    """A dyadic-valued function of two points, ``T(r, r')``.

    ``eval`` must broadcast over leading axes of its two point arguments.
    With ``deriv_mode="analytic"`` the curl callables are used; with
    ``"fd"`` curls come from central finite differences of ``eval`` with
    step ``step`` (relative, scaled by ``max(1, |r|)``; may be an array
    over the batch axes) and stencil ``order`` 2, 4 or 6.
    """

    eval: Callable
    deriv_mode: str = "fd"
    step: Optional[float] = None
    order: int = 2
    left: Optional[Callable] = None
    right: Optional[Callable] = None
    two_sided: Optional[Callable] = None

    def __call__(self, r, rp):
        return self.eval(r, rp)

    def with_fd(self, step=None, order=None):
        return TensorField2(self.eval, "fd", step if step is not None else self.step,
                            order if order is not None else self.order)


def _steps(field, r):
    rel = DEFAULT_REL_STEP if field.step is None else field.step
    scale = np.maximum(1.0, np.linalg.norm(r, axis=-1))
    h = rel * scale
    if np.any(h <= 64 * np.finfo(float).eps * scale) or not np.all(np.isfinite(h)):
        raise DegenerateStep(f"finite-difference step {rel!r} underflows relative to |r|")
    return h


def _shifted(points, h, offsets):
    """points + o*h*e_g for every offset o and axis g: shape (n_off, 3, ..., 3)."""
    e = np.eye(3).reshape((1, 3) + (1,) * (points.ndim - 1) + (3,))
    o = offsets.reshape((-1, 1) + (1,) * points.ndim)
    return points[None, None] + o * h[..., None][None, None] * e


def _gradient(field, r, rp, wrt):
    """d/dr_g T^{ij} (wrt=0) or d/dr'_g T^{ij} (wrt=1); gradient axis first."""
    offsets, weights = _STENCILS[field.order]
    base = r if wrt == 0 else rp
    h = _steps(field, base)
    shifted = _shifted(base, h, offsets)
    other = np.broadcast_to((rp if wrt == 0 else r)[None, None], shifted.shape)
    vals = field.eval(shifted, other) if wrt == 0 else field.eval(other, shifted)
    w = weights.reshape((-1,) + (1,) * (vals.ndim - 1))
    return np.sum(w * vals, axis=0) / h[None, ..., None, None]


def _mixed_hessian(field, r, rp):
    """d/dr_g d/dr'_m T^{ij} with axes (g, m, ..., i, j)."""
    offsets, weights = _STENCILS[field.order]
    h = _steps(field, r)
    hp = _steps(field, rp)
    k = len(offsets)
    rs = _shifted(r, h, offsets)          # (k, 3, ..., 3)
    rps = _shifted(rp, hp, offsets)
    nb = r.ndim - 1
    rs = rs.reshape((k, 1, 3, 1) + rs.shape[2:])
    rps = rps.reshape((1, k, 1, 3) + rps.shape[2:])
    shape = np.broadcast_shapes(rs.shape, rps.shape)
    vals = field.eval(np.broadcast_to(rs, shape), np.broadcast_to(rps, shape))
    w = (weights[:, None] * weights[None, :]).reshape((k, k) + (1,) * (vals.ndim - 2))
    acc = np.sum(w * vals, axis=(0, 1))
    denom = (h * hp)[None, None, ..., None, None] if nb else h * hp
    return acc / denom


def left_curl(field, r, rp):
    r, rp = as_points(r), as_points(rp)
    if field.deriv_mode == "analytic":
        if field.left is None:
            raise ValueError("field has no analytic left curl")
        return field.left(r, rp)
    grad = _gradient(field, r, rp, 0)
    return np.einsum("agd,g...db->...ab", LEVI_CIVITA, grad)


def right_curl(field, r, rp):
    r, rp = as_points(r), as_points(rp)
    if field.deriv_mode == "analytic":
        if field.right is None:
            raise ValueError("field has no analytic right curl")
        return field.right(r, rp)
    grad = _gradient(field, r, rp, 1)
    return np.einsum("bgd,g...ad->...ab", LEVI_CIVITA, grad)


def two_sided_curl(field, r, rp):
    r, rp = as_points(r), as_points(rp)
    if field.deriv_mode == "analytic":
        if field.two_sided is None:
            raise ValueError("field has no analytic two-sided curl")
        return field.two_sided(r, rp)
    hess = _mixed_hessian(field, r, rp)
    return np.einsum("agd,bmn,gm...dn->...ab", LEVI_CIVITA, LEVI_CIVITA, hess)


def left_curl_field(field, step=None, order=None):
    """The field ``(r, r') -> curl_r x T`` as a new finite-difference field."""
    return TensorField2(lambda r, rp: left_curl(field, r, rp), "fd",
                        step if step is not None else field.step,
                        order if order is not None else field.order)


def right_curl_field(field, step=None, order=None):
    return TensorField2(lambda r, rp: right_curl(field, r, rp), "fd",
                        step if step is not None else field.step,
                        order if order is not None else field.order)


def radial_curls(h_of_r, dh_of_r, R):
    """Curls of a field whose left curl is ``h(R) [n]_x`` with ``R = r - r'``.

    Used by providers built from ``g(R) I`` plus pure gradient terms, for
    which the left and right curls coincide and equal ``h [n]_x``, and the
    two-sided curl is ``(h' - h/R)(I - n n) + 2 h / R  I``.  Returns
    ``(single, two_sided)``.
    """
    dist = np.linalg.norm(R, axis=-1)
    n = R / dist[..., None]
    h = h_of_r(dist)
    dh = dh_of_r(dist)
    single = h[..., None, None] * cross_matrix(n)
    nn = outer(n, n)
    two = ((dh - h / dist)[..., None, None] * (IDENTITY - nn)
           + (2 * h / dist)[..., None, None] * IDENTITY)
    return single, two
