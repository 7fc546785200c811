"""Green's-tensor providers and their zero-frequency limits.

Natural units throughout (hbar = c = eps0 = mu0 = 1), so ``k = omega``.
Every provider evaluates the regular part of ``G(r, r', omega)`` and,
separately and more stably, ``omega**2 G / c**2``.  The free-space delta
term ``-n n delta(R) / k**2`` is never evaluated; its coefficient in the
static limit is exposed as :attr:`GreensProvider.static_delta_nn` and
carried symbolically by :mod:`cavity_kernels.couplings`.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import neville_zero
from .errors import CoincidentPoints, NonConvergent, OutOfDomain, StaticPole, ValidationError
from .tensor_core import (IDENTITY, TensorField2, as_points, cross_matrix, outer,
                          radial_curls, transpose)

SERIES_SWITCH = 1e-2
RICHARDSON_REL_STEP = 1e-2
RICHARDSON_LEVELS = 4
RICHARDSON_TOL = 1e-6

# S(x) = e^{ix}(ix - 1)/x^2 = -1/x^2 + sum_{m>=2} (m-1)/m! (ix)^m / x^2
_SERIES = [(m, (m - 1) / math.factorial(m) * 1j ** m) for m in range(2, 8)]


def _geometry(r, rp, policy="error"):
    r, rp = as_points(r), as_points(rp)
    R = r - rp
    dist = np.linalg.norm(R, axis=-1)
    if np.any(dist == 0):
        if policy == "error":
            raise CoincidentPoints("r == r': the regular part of G diverges")
        safe = np.where(dist == 0, 1.0, dist)
        R = np.where((dist == 0)[..., None], np.array([0.0, 0.0, 1.0]), R)
        dist = safe
    n = R / dist[..., None]
    return R, dist, n


def _free_w2g(dist, nn, omega):
    """omega^2 G0 / c^2 (regular part) for R > 0; exact at omega = 0."""
    x = omega * dist
    e = np.exp(1j * x)
    a = (e * x * x)[..., None, None]
    b = (e * (1j * x - 1.0))[..., None, None]
    return (a * (IDENTITY - nn) + b * (IDENTITY - 3 * nn)) / (4 * np.pi * dist**3)[..., None, None]


def _free_g(dist, nn, omega):
    x = np.asarray(omega * dist, dtype=complex)
    if np.any(x == 0):
        raise StaticPole("G itself has a pole at omega = 0; use w2G instead")
    e = np.exp(1j * x)
    small = np.abs(x) < SERIES_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        s_direct = e * (1j * x - 1.0) / x**2
    s_series = -1.0 / x**2 + sum(c * x ** (m - 2) for m, c in _SERIES)
    s = np.where(small, s_series, s_direct)
    return ((e[..., None, None] * (IDENTITY - nn) + s[..., None, None] * (IDENTITY - 3 * nn))
            / (4 * np.pi * dist)[..., None, None])


def _free_g_branches(r, rp, omega):
    """Both evaluation branches of G0, for cross-checking."""
    _, dist, n = _geometry(r, rp)
    nn = outer(n, n)
    x = np.asarray(omega * dist, dtype=complex)
    e = np.exp(1j * x)
    direct = e * (1j * x - 1.0) / x**2
    series = -1.0 / x**2 + sum(c * x ** (m - 2) for m, c in _SERIES)
    pref = 1.0 / (4 * np.pi * dist)[..., None, None]
    base = e[..., None, None] * (IDENTITY - nn)
    return (pref * (base + direct[..., None, None] * (IDENTITY - 3 * nn)),
            pref * (base + series[..., None, None] * (IDENTITY - 3 * nn)))


def _scalar_green_derivs(k):
    """g, g', g'' of e^{ikR}/(4 pi R) as functions of R."""
    def g(d):
        return np.exp(1j * k * d) / (4 * np.pi * d)

    def dg(d):
        return g(d) * (1j * k - 1.0 / d)

    def d2g(d):
        return g(d) * ((1j * k - 1.0 / d) ** 2 + 1.0 / d**2)

    return g, dg, d2g


def _free_curls(r, rp, omega):
    """Curls of G0 at frequency omega (R != 0).

    The gradient part of G0 is curl-free, so only ``g I`` contributes and
    the results stay finite at omega = 0.
    """
    _, dg, d2g = _scalar_green_derivs(omega)
    R = as_points(r) - as_points(rp)
    return radial_curls(lambda d: -dg(d), lambda d: -d2g(d), R)


@dataclass(frozen=True)
class StaticLimits:
    """Zero-frequency data of ``W(omega) = omega^2 G / c^2``.

    ``w2G`` is the limit itself, ``d_w2G`` and ``d2_w2G`` its first and
    second omega-derivatives at zero.
    """

    w2G: np.ndarray
    d_w2G: np.ndarray
    d2_w2G: np.ndarray

    def swapped_transpose(self):
        return StaticLimits(transpose(self.w2G), transpose(self.d_w2G), transpose(self.d2_w2G))


class GreensProvider:
    """Base class: a named geometry supplying ``G(r, r', omega)``.

    Subclasses implement :meth:`w2G`.  Curls at finite frequency default to
    finite differences; providers that know them analytically override
    :meth:`field`.
    """

    name = "provider"
    reciprocal = True
    has_analytic_limits = False
    translation_invariant = False
    coincident_policy = "error"
    scattering_free = False
    # coefficient of n(x)n delta(R) inside lim omega^2 G / c^2
    static_delta_nn = -1.0

    def w2G(self, r, rp, omega):
        raise NotImplementedError

    def G(self, r, rp, omega):
        omega = np.asarray(omega, dtype=complex)
        if np.any(omega == 0):
            raise StaticPole("G has a pole at omega = 0")
        return self.w2G(r, rp, omega) / (omega**2)[..., None, None]

    def __call__(self, r, rp, omega):
        return self.G(r, rp, omega)

    def field(self, omega, step=None, order=2):
        """``G(., ., omega)`` as a :class:`TensorField2`."""
        return TensorField2(lambda r, rp: self.G(r, rp, omega), "fd", step, order)

    def analytic_static_limits(self, r, rp):
        raise NotImplementedError

    def static_fields(self):
        """Static-limit fields with analytic curls, if the provider has them."""
        raise NotImplementedError

    def characteristic_distance(self, r):
        """Typical distance from ``r`` to the nearest medium, or None."""
        return None

    def path_length(self, r, rp):
        """Longest propagation distance entering ``G(r, r')``; sets omega scales."""
        return np.linalg.norm(as_points(r) - as_points(rp), axis=-1)

    def scattering_part(self):
        """Provider for ``G - G0``, finite at ``r = r'``; None if not separable."""
        return None

    def describe(self):
        return {"name": self.name, "reciprocal": self.reciprocal,
                "has_analytic_limits": self.has_analytic_limits,
                "coincident_policy": self.coincident_policy}


class FreeSpace(GreensProvider):
    """Vacuum dyadic Green's tensor."""

    # no scattered field: self-interaction kernels vanish identically
    scattering_free = True

    name = "free_space"
    reciprocal = True
    has_analytic_limits = True
    translation_invariant = True

    def __init__(self, coincident_policy="error"):
        self.coincident_policy = coincident_policy

    def _masked(self, fn, r, rp, omega):
        # with "exclude-delta" the divergent direct term is dropped at r == r'
        _, dist, n = _geometry(r, rp, self.coincident_policy)
        val = fn(dist, outer(n, n), np.asarray(omega))
        hit = np.all(as_points(r) == as_points(rp), axis=-1)
        return np.where(hit[..., None, None], 0.0, val) if np.any(hit) else val

    def w2G(self, r, rp, omega):
        return self._masked(_free_w2g, r, rp, omega)

    def G(self, r, rp, omega):
        return self._masked(_free_g, r, rp, omega)

    def field(self, omega, step=None, order=2):
        def single(r, rp):
            return _free_curls(r, rp, omega)[0]

        def two(r, rp):
            return _free_curls(r, rp, omega)[1]

        return TensorField2(lambda r, rp: self.G(r, rp, omega), "analytic", step, order,
                            left=single, right=single, two_sided=two)

    def analytic_static_limits(self, r, rp):
        _, dist, n = _geometry(r, rp, self.coincident_policy)
        nn = outer(n, n)
        d = dist[..., None, None]
        w2 = (3 * nn - IDENTITY) / (4 * np.pi * d**3)
        d2 = (IDENTITY + nn) / (4 * np.pi * d)
        return StaticLimits(w2.astype(complex), np.zeros_like(w2, dtype=complex), d2.astype(complex))

    def static_fields(self):
        return _static_fields_free(lambda r, rp: self.analytic_static_limits(r, rp))


def _zero_curl(r, rp):
    shape = np.broadcast_shapes(np.shape(r), np.shape(rp))[:-1]
    return np.zeros(shape + (3, 3))


def _free_static_curls(r, rp):
    """Curls of the free-space d2 field (I + n n)/(4 pi R) = (2 I/R - dd R)/(4 pi)."""
    R = as_points(r) - as_points(rp)
    return radial_curls(lambda d: 2.0 / (4 * np.pi * d**2),
                        lambda d: -4.0 / (4 * np.pi * d**3), R)


def _static_fields_free(limits):
    def pick(attr):
        return lambda r, rp: getattr(limits(r, rp), attr)

    def single(r, rp):
        return _free_static_curls(r, rp)[0]

    def two(r, rp):
        return _free_static_curls(r, rp)[1]

    return {
        # lim omega^2 G0 = grad grad 1/(4 pi R): curl-free away from R = 0
        "w2G": TensorField2(pick("w2G"), "analytic", left=_zero_curl, right=_zero_curl,
                            two_sided=_zero_curl),
        "d_w2G": TensorField2(pick("d_w2G"), "analytic", left=_zero_curl, right=_zero_curl,
                              two_sided=_zero_curl),
        "d2_w2G": TensorField2(pick("d2_w2G"), "analytic", left=single, right=single,
                               two_sided=two),
    }


_S = np.diag([-1.0, -1.0, 1.0])   # image electric dipole: p -> S p
_P = np.diag([1.0, 1.0, -1.0])    # mirror reflection of positions


class MirrorHalfSpace(GreensProvider):
    """Perfectly conducting plane ``z = z0`` with the field region above it.

    ``G = G0(r, r') + G0(r, r'_img) S`` with ``r'_img`` the mirror image of
    ``r'`` and ``S = diag(-1, -1, 1)``.  With ``include_direct=False`` only
    the image (scattering) term is returned, which stays finite at r = r'.
    """

    name = "mirror_halfspace"
    reciprocal = True
    has_analytic_limits = True

    def __init__(self, z0=0.0, include_direct=True, coincident_policy="error"):
        self.z0 = float(z0)
        self.include_direct = bool(include_direct)
        self.coincident_policy = coincident_policy

    def scattering_part(self):
        return MirrorHalfSpace(self.z0, include_direct=False,
                               coincident_policy=self.coincident_policy)

    def describe(self):
        out = super().describe()
        out.update(z0=self.z0, include_direct=self.include_direct)
        return out

    def _check(self, r, rp):
        r, rp = as_points(r), as_points(rp)
        if np.any(r[..., 2] <= self.z0) or np.any(rp[..., 2] <= self.z0):
            raise OutOfDomain(f"points must lie strictly above the mirror plane z = {self.z0}")
        return r, rp

    def image(self, rp):
        img = np.array(rp, dtype=float, copy=True)
        img[..., 2] = 2 * self.z0 - img[..., 2]
        return img

    def _direct_mask(self, r, rp):
        coincident = np.all(r == rp, axis=-1)
        if np.any(coincident) and self.include_direct and self.coincident_policy == "error":
            raise CoincidentPoints("r == r': the direct term of G diverges")
        return coincident

    def _combine(self, direct_fn, image_fn, r, rp, right_factor):
        r, rp = self._check(r, rp)
        img = image_fn(r, self.image(rp)) @ right_factor
        if not self.include_direct:
            return img
        coincident = self._direct_mask(r, rp)
        if np.any(coincident):
            rp_safe = np.where(coincident[..., None], rp + np.array([0, 0, 1.0]), rp)
            d = direct_fn(r, rp_safe)
            d = np.where(coincident[..., None, None], 0.0, d)
        else:
            d = direct_fn(r, rp)
        return d + img

    def w2G(self, r, rp, omega):
        def f(a, b):
            _, dist, n = _geometry(a, b)
            return _free_w2g(dist, outer(n, n), np.asarray(omega))

        return self._combine(f, f, r, rp, _S)

    def G(self, r, rp, omega):
        def f(a, b):
            _, dist, n = _geometry(a, b)
            return _free_g(dist, outer(n, n), np.asarray(omega))

        return self._combine(f, f, r, rp, _S)

    def field(self, omega, step=None, order=2):
        def left(r, rp):
            return self._combine(lambda a, b: _free_curls(a, b, omega)[0],
                                 lambda a, b: _free_curls(a, b, omega)[0], r, rp, _S)

        def right(r, rp):
            return self._combine(lambda a, b: _free_curls(a, b, omega)[0],
                                 lambda a, b: _free_curls(a, b, omega)[0], r, rp, _P)

        def two(r, rp):
            return self._combine(lambda a, b: _free_curls(a, b, omega)[1],
                                 lambda a, b: _free_curls(a, b, omega)[1], r, rp, _P)

        return TensorField2(lambda r, rp: self.G(r, rp, omega), "analytic", step, order,
                            left=left, right=right, two_sided=two)

    def analytic_static_limits(self, r, rp):
        free = FreeSpace()
        parts = [self._combine(lambda a, b, k=k: getattr(free.analytic_static_limits(a, b), k),
                               lambda a, b, k=k: getattr(free.analytic_static_limits(a, b), k),
                               r, rp, _S)
                 for k in ("w2G", "d_w2G", "d2_w2G")]
        return StaticLimits(*parts)

    def static_fields(self):
        def pick(attr):
            return lambda r, rp: getattr(self.analytic_static_limits(r, rp), attr)

        def single(factor):
            return lambda r, rp: self._combine(lambda a, b: _free_static_curls(a, b)[0],
                                               lambda a, b: _free_static_curls(a, b)[0],
                                               r, rp, factor)

        def two(r, rp):
            return self._combine(lambda a, b: _free_static_curls(a, b)[1],
                                 lambda a, b: _free_static_curls(a, b)[1], r, rp, _P)

        return {
            "w2G": TensorField2(pick("w2G"), "analytic", left=_zero_curl, right=_zero_curl,
                                two_sided=_zero_curl),
            "d_w2G": TensorField2(pick("d_w2G"), "analytic", left=_zero_curl, right=_zero_curl,
                                  two_sided=_zero_curl),
            "d2_w2G": TensorField2(pick("d2_w2G"), "analytic", left=single(_S), right=single(_P),
                                   two_sided=two),
        }

    def characteristic_distance(self, r):
        return np.asarray(r, dtype=float)[..., 2] - self.z0

    def path_length(self, r, rp):
        img = np.linalg.norm(as_points(r) - self.image(as_points(rp)), axis=-1)
        if not self.include_direct:
            return img
        return np.maximum(img, np.linalg.norm(as_points(r) - as_points(rp), axis=-1))


class SyntheticNonreciprocal(GreensProvider):
    """Free space plus a small gyrotropic, Onsager-violating perturbation.

    ``omega^2 G = omega^2 G0 + [g]_x * i omega e^{i omega R} / (4 pi R^2)``.
    The perturbation obeys Schwarz reflection, is analytic in the upper
    half plane and flips sign under ``(r, r', T)`` exchange, so it feeds only
    the electric-magnetic cross kernels.  Static limits are obtained
    numerically (no analytic shortcut) on purpose.
    """

    name = "synthetic_nonreciprocal"
    reciprocal = False
    has_analytic_limits = False

    def __init__(self, gyration=(0.0, 0.0, 0.05), coincident_policy="error"):
        g = np.asarray(gyration, dtype=float)
        if g.shape != (3,):
            raise ValidationError("gyration must be a 3-vector")
        if np.linalg.norm(g) > 0.1:
            raise ValidationError("|g| must not exceed 0.1")
        self.gyration = g
        self.coincident_policy = coincident_policy

    def describe(self):
        out = super().describe()
        out.update(gyration=self.gyration.tolist())
        return out

    def w2G(self, r, rp, omega):
        _, dist, n = _geometry(r, rp, self.coincident_policy)
        omega = np.asarray(omega)
        base = _free_w2g(dist, outer(n, n), omega)
        pert = 1j * omega * np.exp(1j * omega * dist) / (4 * np.pi * dist**2)
        return base + pert[..., None, None] * cross_matrix(self.gyration)

    def field(self, omega, step=None, order=2):
        # perturbation of G is [g]_x f(R), f = i e^{i w R} / (4 pi w R^2)
        g = self.gyration

        def radial(r, rp):
            R = as_points(r) - as_points(rp)
            dist = np.linalg.norm(R, axis=-1)
            n = R / dist[..., None]
            w = np.asarray(omega)
            pre = 1j * np.exp(1j * w * dist) / (4 * np.pi * w)
            f1 = pre * (1j * w / dist**2 - 2 / dist**3)
            f2 = pre * (-w**2 / dist**2 - 4j * w / dist**3 + 6 / dist**4)
            return n, dist, f1[..., None, None], f2

        def left(r, rp):
            n, _, f1, _ = radial(r, rp)
            gn = (n @ g)[..., None, None]
            return _free_curls(r, rp, omega)[0] + f1 * (gn * IDENTITY - outer(np.broadcast_to(g, n.shape), n))

        def right(r, rp):
            n, _, f1, _ = radial(r, rp)
            gn = (n @ g)[..., None, None]
            return _free_curls(r, rp, omega)[0] + f1 * (gn * IDENTITY - outer(n, np.broadcast_to(g, n.shape)))

        def two(r, rp):
            n, dist, f1, f2 = radial(r, rp)
            gn = n @ g
            f1 = f1[..., 0, 0]
            hg = (f2 * gn)[..., None] * n + (f1 / dist)[..., None] * (g - gn[..., None] * n)
            return _free_curls(r, rp, omega)[1] - cross_matrix(hg)

        return TensorField2(lambda r, rp: self.G(r, rp, omega), "analytic", step, order,
                            left=left, right=right, two_sided=two)


def static_limits(p, r, rp, method="auto", rel_step=RICHARDSON_REL_STEP,
                  levels=RICHARDSON_LEVELS, tol=RICHARDSON_TOL):
    """Zero-frequency limits of ``omega^2 G / c^2`` and its derivatives.

    ``method="auto"`` uses the provider's analytic limits when it has them;
    ``"fd"`` always uses Richardson-extrapolated central differences along
    the real axis with steps ``h, h/2, ...`` and ``h = rel_step * c / L``,
    ``L`` being the provider's longest path length (``R`` in free space).
    """
    r, rp = as_points(r), as_points(rp)
    if method not in ("auto", "fd", "analytic"):
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic" or (method == "auto" and p.has_analytic_limits):
        return p.analytic_static_limits(r, rp)

    dist = p.path_length(r, rp)
    if np.any(dist == 0):
        raise CoincidentPoints("static limits need r != r'")
    h0 = rel_step / dist
    w0 = p.w2G(r, rp, np.zeros_like(h0))
    steps, d1, d2 = [], [], []
    scale = np.abs(w0).max(axis=(-2, -1))
    for j in range(levels):
        h = h0 / 2**j
        wp = p.w2G(r, rp, h)
        wm = p.w2G(r, rp, -h)
        hh = h[..., None, None]
        d1.append((wp - wm) / (2 * hh))
        d2.append((wp - 2 * w0 + wm) / hh**2)
        steps.append(1.0 / 4**j)          # extrapolate in h^2
        scale = np.maximum(scale, np.abs(wp).max(axis=(-2, -1)))
    d1_est, d1_err = neville_zero(steps, d1)
    d2_est, d2_err = neville_zero(steps, d2)
    s1 = (scale * dist)[..., None, None]
    s2 = (scale * dist**2)[..., None, None]
    if np.any(d1_err > tol * s1) or np.any(d2_err > tol * s2) or not (
            np.all(np.isfinite(d1_est)) and np.all(np.isfinite(d2_est))):
        raise NonConvergent("Richardson ladder for the static limits did not settle; "
                            "the provider may not be smooth in omega at zero")
    return StaticLimits(np.asarray(w0, dtype=complex), d1_est, d2_est)


PROVIDERS = {
    "free_space": FreeSpace,
    "mirror_halfspace": MirrorHalfSpace,
    "synthetic_nonreciprocal": SyntheticNonreciprocal,
}


def make_provider(name, **params):
    try:
        cls = PROVIDERS[name]
    except KeyError:
        raise ValidationError(f"unknown provider {name!r}; choose from {sorted(PROVIDERS)}") from None
    return cls(**params)


# Public functional aliases.

def free_space_G(r, rp, omega):
    return FreeSpace().G(r, rp, omega)


def mirror_halfspace_G(r, rp, omega, z0=0.0):
    return MirrorHalfSpace(z0).G(r, rp, omega)


def synthetic_nonreciprocal_G(r, rp, omega, gyration):
    return SyntheticNonreciprocal(gyration).G(r, rp, omega)
