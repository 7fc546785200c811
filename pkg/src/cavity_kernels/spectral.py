"""Frequency-domain route: contour identities and the diamagnetic integral.

Integrands ``chi(omega)`` are built from a provider's ``G`` and its curls:

``wG``            ``omega G``
``G_curl``        ``G x curl_r'``
``curl_G``        ``curl_r x G``
``curlGcurl/w``   ``curl_r x G x curl_r' / omega``

Each has at most a simple pole at ``omega = 0`` and is analytic in the
upper half plane, so the closed contour (two real segments, a small arc
over the origin, a large arc) integrates to zero.  Real-axis integrals over
the whole line are obtained from Abel-damped half-line integrals
``int_0^inf e^{-eps w} [chi(w) + chi(-w)] dw`` extrapolated to ``eps = 0``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from ._numerics import neville_zero
from .errors import CoincidentPoints, NonConvergent, QuadratureFail, ValidationError
from .tensor_core import as_points, left_curl, right_curl, transpose, two_sided_curl

KINDS = ("wG", "G_curl", "curl_G", "curlGcurl/w")
QUAD_EPSREL = 1e-11
ABEL_LEVELS = 7
ABEL_EPS0 = 0.25      # largest damping time, in units of R/c
ABEL_SPAN = 40.0      # integrate up to ABEL_SPAN / eps
ABEL_TOL = 1e-6
FOLD_MAX_PANELS = 200_000   # memory budget for one folded evaluation


@dataclass(frozen=True)
class ContourSpec:
    """Closed upper-half-plane contour ``[-rho,-eta] + small arc + [eta,rho] + large arc``."""

    eta: float
    rho: float
    n_points: int = 64
    integrand_kind: str = "wG"

    def __post_init__(self):
        if not (0 < self.eta < self.rho):
            raise ValidationError("need 0 < eta < rho")
        if self.n_points < 16:
            raise ValidationError("n_points must be >= 16")
        if self.integrand_kind not in KINDS:
            raise ValidationError(f"integrand_kind must be one of {KINDS}")


def _vectorizable(p, kind):
    return kind == "wG" or p.field(1.0).deriv_mode == "analytic"


def integrand(p, kind, r, rp, combine=None):
    """``chi(omega)`` for one kind, optionally combined with its swapped transpose.

    ``combine`` is None (plain ``chi`` built from ``G(r, r')``), ``"+"`` or
    ``"-"`` for ``chi[G] +/- chi[G^T(r', r)]``.  ``chi`` accepts a scalar
    frequency or a 1-D array of them (frequency axis first in the output).
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown integrand kind {kind!r}")
    r, rp = as_points(r), as_points(rp)
    sign = {None: 0.0, "+": 1.0, "-": -1.0}[combine]
    nb = len(np.broadcast_shapes(r.shape, rp.shape)) - 1
    vec = _vectorizable(p, kind)

    def one(omega):
        if kind == "wG":
            val = p.G(r, rp, omega)
            if sign:
                val = val + sign * transpose(p.G(rp, r, omega))
            return np.asarray(omega)[..., None, None] * val
        f = p.field(omega)
        if kind == "G_curl":
            val = right_curl(f, r, rp)
            if sign:
                # right curl of G^T(r', r) is the transposed left curl of G(r', r)
                val = val + sign * transpose(left_curl(f, rp, r))
            return val
        if kind == "curl_G":
            val = left_curl(f, r, rp)
            if sign:
                val = val + sign * transpose(right_curl(f, rp, r))
            return val
        val = two_sided_curl(f, r, rp)
        if sign:
            val = val + sign * transpose(two_sided_curl(f, rp, r))
        return val / np.asarray(omega)[..., None, None]

    def chi(omega):
        omega = np.asarray(omega, dtype=complex)
        if omega.ndim == 0:
            return one(complex(omega))
        if vec:
            return one(omega.reshape((-1,) + (1,) * nb))
        return np.stack([one(complex(w)) for w in omega])

    return chi


def _fold(fn, upper, period, points=None):
    """Fold ``int_0^upper fn`` onto ``[0, P]`` with ``P ~ period``.

    Returns ``(g, P, pts)`` with ``g(u) = sum_k fn(u + k P)`` evaluated in
    one vectorized call, so long oscillatory ranges cost one quadrature.
    """
    m = max(1, int(np.ceil(upper / period)))
    if m > FOLD_MAX_PANELS:
        raise QuadratureFail(f"range {upper:.3g} needs {m} panels of width {period:.3g}; "
                             "raise the damping or set omega_max")
    panel = upper / m
    shifts = np.arange(m) * panel

    def g(u):
        w = u + shifts
        w = np.where(w == 0.0, 1e-12 * panel, w)
        return fn(w).sum(axis=0)

    pts = None
    if points is not None:
        pts = sorted({float(q % panel) for q in points if 0 < q < upper})
    return g, panel, pts


def _quad(fn, a, b, what, points=None, epsrel=QUAD_EPSREL):
    def safe(x):
        v = np.asarray(fn(x))
        if not np.all(np.isfinite(v)):
            raise QuadratureFail(f"non-finite integrand sample in {what} at {x!r}")
        return v

    kw = {}
    if points is not None:
        pts = [q for q in points if a < q < b]
        if pts:
            kw["points"] = pts
    # absolute floor from a coarse sample, so identically-cancelling
    # integrands (pure roundoff) terminate
    probe = max(float(np.max(np.abs(safe(a + (b - a) * t)))) for t in (0.1, 0.37, 0.5, 0.71, 0.9))
    epsabs = max(1e-15 * probe * abs(b - a), 1e-300)
    val, err = quad_vec(safe, a, b, epsabs=epsabs, epsrel=epsrel, limit=20000, **kw)
    return val, err


def _split(fn):
    """Real-parameter wrapper returning stacked real and imaginary parts."""
    def g(t):
        v = np.asarray(fn(t), dtype=complex)
        return np.stack([v.real, v.imag])
    return g


def _cquad(fn, a, b, what, points=None):
    v, e = _quad(_split(fn), a, b, what, points)
    return v[0] + 1j * v[1], float(np.max(e))


def _segments(chi, spec, points=None):
    eta, rho = spec.eta, spec.rho
    neg, _ = _cquad(lambda w: chi(w), -rho, -eta, "real segment",
                    None if points is None else [-q for q in points])
    pos, _ = _cquad(lambda w: chi(w), eta, rho, "real segment", points)

    def arc(radius):
        return lambda phi: chi(radius * np.exp(1j * phi)) * 1j * radius * np.exp(1j * phi)

    # small arc traversed clockwise (phi from pi to 0) as part of the contour
    small, _ = _cquad(arc(eta), np.pi, 0.0, "small arc")
    large, _ = _cquad(arc(rho), 0.0, np.pi, "large arc")
    return neg, pos, small, large


def contour_integral(p, spec, r, rp):
    """Closed-contour integral of ``chi``; zero for an upper-half analytic integrand.

    Returns ``(value, scale)`` where ``scale`` is the largest segment
    magnitude, so ``|value| / scale`` is the closure diagnostic.
    """
    _require_distinct(p, r, rp)
    chi = integrand(p, spec.integrand_kind, r, rp)
    segs = _segments(chi, spec, getattr(p, "resonances", None))
    total = sum(segs)
    scale = max(float(np.max(np.abs(s))) for s in segs)
    return total, scale


def contour_integral_fn(chi, spec):
    """Closed-contour integral of an arbitrary callable ``chi`` (for diagnostics)."""
    segs = _segments(chi, spec)
    return sum(segs), max(float(np.max(np.abs(s))) for s in segs)


def _require_distinct(p, r, rp):
    if np.any(np.all(as_points(r) == as_points(rp), axis=-1)) and p.coincident_policy == "error":
        raise CoincidentPoints("spectral integrals need r != r'")


def _lengths(p, r, rp):
    """Shortest and longest propagation distance, for damping and folding."""
    long_ = np.asarray(p.path_length(r, rp), dtype=float)
    direct = np.linalg.norm(as_points(r) - as_points(rp), axis=-1)
    short = np.where(direct > 0, np.minimum(direct, long_), long_)
    return float(np.min(short)), float(np.max(long_))


def _bcast(w, v):
    return w.reshape((-1,) + (1,) * (v.ndim - 1))


def abel_real_axis(chi, length, levels=ABEL_LEVELS, eps0=None, span=ABEL_SPAN, points=None,
                   tol=ABEL_TOL, period_length=None):
    """``int_{-inf}^{inf} chi`` via damped half-line integrals and eps -> 0.

    ``chi(w) + chi(-w)`` is integrated against ``e^{-eps w}`` for
    ``eps = eps0 / 2^k``; the sequence is extrapolated polynomially in eps.
    ``chi`` must accept 1-D frequency arrays.  Returns
    ``(value, error_estimate, ladder)``.  ``length`` is the shortest
    propagation distance (sets the damping); ``period_length`` the longest
    (sets the folding panel), defaulting to ``length``.
    """
    eps0 = ABEL_EPS0 * length if eps0 is None else eps0
    period_length = length if period_length is None else period_length

    def damped(w, eps):
        v = chi(w) + chi(-w)
        return v * _bcast(np.exp(-eps * w), v)

    epss, vals = [], []
    for k in range(levels):
        eps = eps0 / 2**k
        g, panel, pts = _fold(lambda w, eps=eps: damped(w, eps), span / eps,
                              2 * np.pi / period_length, points)
        v, _ = _cquad(g, 0.0, panel, "damped real axis", pts)
        epss.append(eps)
        vals.append(v)
    est, err = neville_zero(epss, vals)
    scale = max(float(np.max(np.abs(est))), float(np.max(np.abs(vals[0]))))
    if not np.all(np.isfinite(est)) or float(np.max(err)) > max(tol * scale, 1e-300):
        raise NonConvergent("damped real-axis integral did not extrapolate cleanly")
    return est, err, list(zip(epss, vals))


def residue_decomposition(p, spec, r, rp, eta_levels=4, real_axis_limit=True):
    """Pieces of the contour identity for one integrand kind.

    Keys: ``real_axis`` (both finite segments), ``small_arc`` (counter-
    clockwise value, ``i pi Res`` after eta -> 0 extrapolation),
    ``large_arc``, ``closure`` and, unless disabled, ``real_axis_limit``,
    the full-line integral from the damped route.
    """
    _require_distinct(p, r, rp)
    chi = integrand(p, spec.integrand_kind, r, rp)
    pts = getattr(p, "resonances", None)
    neg, pos, small, large = _segments(chi, spec, pts)
    etas, arcs = [], []
    for k in range(eta_levels):
        eta = spec.eta / 2**k

        def arc(phi, eta=eta):
            w = eta * np.exp(1j * phi)
            return chi(w) * 1j * w

        v, _ = _cquad(arc, 0.0, np.pi, "small arc")
        etas.append(eta)
        arcs.append(v)
    res_arc, res_err = neville_zero(etas, arcs)
    out = {
        "real_axis": neg + pos,
        "small_arc": res_arc,
        "small_arc_error": res_err,
        "small_arc_ladder": list(zip(etas, arcs)),
        "large_arc": large,
        "closure": neg + pos + small + large,
        "scale": max(float(np.max(np.abs(s))) for s in (neg, pos, small, large)),
    }
    if real_axis_limit:
        short, long_ = _lengths(p, r, rp)
        val, err, _ = abel_real_axis(chi, short, points=pts, period_length=long_)
        out["real_axis_limit"] = val
        out["real_axis_limit_error"] = err
    return out


def lambda_spectral(p, kind, r, rp):
    """Coupling kernel regular part from full-line frequency integrals.

    ``ee = int w[G + G^T] / (4 i pi)``, ``em = int [G - G^T] x curl' / (4 pi)``,
    ``me = -int curl x [G - G^T] / (4 pi)``,
    ``mm = int curl x [G + G^T] x curl' / w / (4 i pi)``.
    """
    from .couplings import KernelResult

    _require_distinct(p, r, rp)
    table = {"ee": ("wG", "+", 1 / (4j * np.pi)), "em": ("G_curl", "-", 1 / (4 * np.pi)),
             "me": ("curl_G", "-", -1 / (4 * np.pi)), "mm": ("curlGcurl/w", "+", 1 / (4j * np.pi))}
    try:
        ik, comb, pref = table[kind]
    except KeyError:
        raise ValidationError(f"unknown kernel kind {kind!r}") from None
    chi = integrand(p, ik, r, rp, combine=comb)
    short, long_ = _lengths(p, r, rp)
    val, err, _ = abel_real_axis(chi, short, points=getattr(p, "resonances", None),
                                 period_length=long_)
    reg = pref * val
    delta = np.zeros(np.shape(reg))
    return KernelResult(np.real(reg), delta, kind, "spectral",
                        diagnostics={"imag_residue": float(np.max(np.abs(np.imag(reg)))),
                                     "error": float(np.max(np.abs(pref * err)))})


def diamagnetic_omega_spectral(p, r, rp, omega_max=None, damping_eta=None, levels=6,
                               tol=1e-5):
    """``Omega = (1/2 pi) int_0^inf dw curl x Im[G + G^T] x curl'``, damped.

    The integrand carries ``e^{-eta w}``; ``eta`` runs over a halving ladder
    starting at ``damping_eta`` (default ``0.25 L / c``) and the results are
    extrapolated to ``eta = 0``.  ``damping_eta=0`` integrates undamped up
    to ``omega_max``, for integrands that already decay.  Each level integrates to ``omega_max`` or,
    if that is None, to ``40 / eta``.  Returns ``(value, error_estimate)``.
    """
    r, rp = as_points(r), as_points(rp)
    short, length = _lengths(p, r, rp)
    if short == 0:
        raise CoincidentPoints("Omega needs r != r' or an image-only provider")
    eta0 = ABEL_EPS0 * short if damping_eta is None else float(damping_eta)

    nb = len(np.broadcast_shapes(r.shape, rp.shape)) - 1
    vec = _vectorizable(p, "curlGcurl/w")

    def im_one(w):
        f = p.field(w)
        a = two_sided_curl(f, r, rp)
        b = transpose(two_sided_curl(f, rp, r))
        return np.imag(a + b) / (2 * np.pi)

    def im_sum(w):
        if vec:
            return im_one(w.reshape((-1,) + (1,) * nb))
        return np.stack([im_one(float(x)) for x in w])

    pts = getattr(p, "resonances", None)
    if damping_eta is not None and float(damping_eta) == 0.0:
        # integrand already decays: one undamped integral
        if omega_max is None:
            raise ValidationError("an undamped integral needs omega_max")
        g, panel, fpts = _fold(im_sum, float(omega_max), 2 * np.pi / length, pts)
        return _quad(g, 0.0, panel, "diamagnetic integral", fpts)
    etas, vals = [], []
    for k in range(levels):
        eta = eta0 / 2**k
        top = ABEL_SPAN / eta if omega_max is None else float(omega_max)

        def damped(w, eta=eta):
            v = im_sum(w)
            return v * _bcast(np.exp(-eta * w), v)

        g, panel, fpts = _fold(damped, top, 2 * np.pi / length, pts)
        v, _ = _quad(g, 0.0, panel, "diamagnetic integral", fpts)
        etas.append(eta)
        vals.append(v)
    est, err = neville_zero(etas, vals)
    scale = max(float(np.max(np.abs(est))), float(np.max(np.abs(vals[0]))))
    if not np.all(np.isfinite(est)) or float(np.max(err)) > tol * scale:
        raise NonConvergent("eta-extrapolation of the diamagnetic integral diverged")
    return est, err


def free_space_omega_closed_form(r, rp):
    """Undamped limit for vacuum: ``(2 n n - I) / (pi^2 R^4)``."""
    R = as_points(r) - as_points(rp)
    d = np.linalg.norm(R, axis=-1)
    n = R / d[..., None]
    nn = n[..., :, None] * n[..., None, :]
    return (2 * nn - np.eye(3)) / (np.pi**2 * d**4)[..., None, None]


def diamagnetic_ratio(lambda_compton, r):
    """Order-of-magnitude ratio ``lambda_gamma / r`` of diamagnetic to dipole terms."""
    lambda_compton, r = float(lambda_compton), float(r)
    if lambda_compton <= 0 or r <= 0:
        raise ValidationError("lengths must be positive")
    return lambda_compton / r
