"""Discrete-mode route to the coupling kernels and the diamagnetic tensor.

With ``F_n = E_n (x) E_n*`` and ``B_n = curl E_n / (i omega_n)`` the mode
sums reduce to outer products of field vectors (natural units, hbar = 1)::

    ee = sum Re[E (x) E*] / w      em = sum Re[E (x) B*] / w
    me = sum Re[B (x) E*] / w      mm = sum Re[B (x) B*] / w
    Omega = sum Re[B (x) B*]

The curl forms (one curl on ``Im F / w^2`` for em/me, two on
``Re F / w^3`` for mm) are algebraically identical; the E-sum curl-curl
form of Omega is also evaluated numerically as a diagnostic.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .couplings import KernelResult
from .errors import OutOfDomain, ValidationError
from .greens import GreensProvider
from .tensor_core import TensorField2, as_points, outer, two_sided_curl, LEVI_CIVITA

KINDS = ("ee", "em", "me", "mm")


@dataclass(frozen=True)
class Mode:
    """A single cavity mode: frequency and complex field profiles."""

    omega: float
    e_field: Callable
    b_field: Optional[Callable] = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("mode frequency must be positive")

    def b(self, r, step=1e-6):
        """Magnetic profile; falls back to a central-difference curl of E."""
        if self.b_field is not None:
            return self.b_field(r)
        r = as_points(r)
        h = step * np.maximum(1.0, np.linalg.norm(r, axis=-1))
        grad = np.stack([(self.e_field(r + h[..., None] * e) - self.e_field(r - h[..., None] * e))
                         / (2 * h[..., None]) for e in np.eye(3)])   # (g, ..., d)
        curl = np.einsum("agd,g...d->...a", LEVI_CIVITA, grad)
        return curl / (1j * self.omega)


class ModeFamily:
    """An indexed family of modes, ``n = 1, 2, ...``.

    Subclasses may override the vectorized accessors :meth:`omegas`,
    :meth:`e_fields` and :meth:`b_fields` (mode axis first).
    """

    geometry_tag = "generic"

    def __init__(self, generator, truncation=None, geometry_tag=None):
        self.generator = generator
        self.truncation = truncation
        if geometry_tag is not None:
            self.geometry_tag = geometry_tag

    def mode(self, n):
        return self.generator(n)

    def check_domain(self, r):
        return as_points(r)

    def omegas(self, ns):
        return np.array([self.mode(int(n)).omega for n in ns])

    def e_fields(self, ns, r):
        r = self.check_domain(r)
        return np.stack([np.asarray(self.mode(int(n)).e_field(r), dtype=complex) for n in ns])

    def b_fields(self, ns, r):
        r = self.check_domain(r)
        return np.stack([np.asarray(self.mode(int(n)).b(r), dtype=complex) for n in ns])


class PlanarCavityModes(ModeFamily):
    """Perfect-mirror pair at ``z = 0`` and ``z = L``, one transverse polarization.

    ``E_n = A_n sin(n pi z / L) e``, ``omega_n = n pi / L``.  The amplitude
    ``A_n^2 = 2 / (L omega_n)`` makes the summed ``E_n E_n / omega_n``
    equal to the Green function of ``-d^2/dz^2`` with Dirichlet walls,
    ``z_< (L - z_>) / L``, i.e. the boxed 1D electrostatic kernel.
    """

    geometry_tag = "planar"

    def __init__(self, L, polarization="x", truncation=None):
        if not L > 0:
            raise ValidationError("cavity length L must be positive")
        if polarization not in ("x", "y"):
            raise ValidationError("polarization must be 'x' or 'y'")
        self.L = float(L)
        self.polarization = polarization
        self.truncation = truncation
        self._e = np.eye(3)[0 if polarization == "x" else 1]
        # curl(E_x x) = dE/dz y ; curl(E_y y) = -dE/dz x
        self._curl_dir = np.eye(3)[1] if polarization == "x" else -np.eye(3)[0]

    def describe(self):
        return {"family": "planar", "L": self.L, "polarization": self.polarization}

    def check_domain(self, r):
        r = as_points(r)
        z = r[..., 2]
        if np.any(z <= 0) or np.any(z >= self.L):
            raise OutOfDomain(f"points must satisfy 0 < z < L = {self.L}")
        return r

    def _k(self, ns):
        return np.asarray(ns, dtype=float) * np.pi / self.L

    def omegas(self, ns):
        return self._k(ns)

    def amplitudes(self, ns):
        return np.sqrt(2.0 / (self.L * self._k(ns)))

    def e_fields(self, ns, r):
        r = self.check_domain(r)
        k = self._k(ns).reshape((-1,) + (1,) * (r.ndim - 1))
        a = self.amplitudes(ns).reshape(k.shape)
        s = a * np.sin(k * r[..., 2])
        return (s[..., None] * self._e).astype(complex)

    def b_fields(self, ns, r):
        r = self.check_domain(r)
        k = self._k(ns).reshape((-1,) + (1,) * (r.ndim - 1))
        a = self.amplitudes(ns).reshape(k.shape)
        # B = curl E / (i w) with w = k
        c = a * np.cos(k * r[..., 2]) / 1j
        return c[..., None] * self._curl_dir

    def mode(self, n):
        if n < 1:
            raise ValidationError("mode index starts at 1")

        def e(r):
            return self.e_fields([n], r)[0]

        def b(r):
            return self.b_fields([n], r)[0]

        return Mode(float(self._k([n])[0]), e, b)


def planar_cavity_modes(L, polarization="x"):
    return PlanarCavityModes(L, polarization)


def planar_closed_form(kind, z, zp, L, polarization="x"):
    """N -> infinity limits of the planar-cavity mode sums.

    ee: ``z_<(L - z_>)/L e e``; mm: the Neumann counterpart built from
    ``C(x) = sum cos(n x)/n^2 = pi^2/6 - pi |x|/2 + x^2/4``; Omega from
    ``sum cos(n x)/n = -ln|2 sin(x/2)|``; em/me vanish.
    """
    z, zp = np.asarray(z, dtype=float), np.asarray(zp, dtype=float)
    e = np.eye(3)[0 if polarization == "x" else 1]
    bdir = np.eye(3)[1] if polarization == "x" else np.eye(3)[0]
    if kind == "ee":
        s = np.minimum(z, zp) * (L - np.maximum(z, zp)) / L
        return s[..., None, None] * np.outer(e, e)
    if kind in ("em", "me"):
        return np.zeros(np.broadcast_shapes(z.shape, zp.shape) + (3, 3))
    if kind == "mm":
        def c2(x):
            x = np.abs(x)
            return np.pi**2 / 6 - np.pi * x / 2 + x**2 / 4

        s = (L / np.pi**2) * (c2(np.pi * (z - zp) / L) + c2(np.pi * (z + zp) / L))
        return s[..., None, None] * np.outer(bdir, bdir)
    if kind == "omega":
        def c1(x):
            return -np.log(np.abs(2 * np.sin(x / 2)))

        s = (c1(np.pi * (z - zp) / L) + c1(np.pi * (z + zp) / L)) / np.pi
        return s[..., None, None] * np.outer(bdir, bdir)
    raise ValidationError(f"unknown kind {kind!r}")


def f_tensor(f, n, r, rp):
    """``F_n(r, r') = E_n(r) (x) E_n*(r')``."""
    e = f.e_fields([n], r)[0]
    ep = f.e_fields([n], rp)[0]
    return outer(e, np.conj(ep))


def _terms(f, kind, ns, r, rp):
    w = f.omegas(ns).reshape((-1,) + (1,) * (np.ndim(r) - 1) + (1, 1))
    if kind == "ee":
        a, b = f.e_fields(ns, r), f.e_fields(ns, rp)
    elif kind == "em":
        a, b = f.e_fields(ns, r), f.b_fields(ns, rp)
    elif kind == "me":
        a, b = f.b_fields(ns, r), f.e_fields(ns, rp)
    elif kind == "mm":
        a, b = f.b_fields(ns, r), f.b_fields(ns, rp)
    else:
        raise ValidationError(f"unknown kernel kind {kind!r}")
    return np.real(outer(a, np.conj(b))) / w


def accelerate(s_n, s_half, s_quarter, s_eighth):
    """Richardson step with a fitted algebraic tail order, per entry.

    For ``S_N = S + C N^-p`` the ratio of successive differences is
    ``2^p``.  The step is applied only where two successive ratios agree
    to 10 percent and indicate ``p > 0.5``; oscillating or already
    converged entries keep the raw partial sum.
    Returns ``(estimate, fitted_order, error_estimate)``.
    """
    d1 = s_n - s_half
    d2 = s_half - s_quarter
    d3 = s_quarter - s_eighth
    with np.errstate(divide="ignore", invalid="ignore"):
        q = d2 / d1
        q_prev = d3 / d2
        ok = (np.isfinite(q) & np.isfinite(q_prev) & (q > 2**0.5) & (q < 64.0)
              & (np.abs(q - q_prev) < 0.1 * q))
        qs = np.where(ok, q, 2.0)
        corr = np.where(ok, d1 / (qs - 1.0), 0.0)
        order = np.where(ok, np.log2(qs), np.nan)
    est = s_n + corr
    # leftover after the step is of the size of the change in the fitted ratio
    err = np.where(ok, np.abs(corr) * np.abs(q - q_prev) / qs, np.abs(d1))
    return est, order, err


@dataclass
class ConvergenceRecord:
    """Partial sums at decade checkpoints plus the accelerated estimate."""

    checkpoints: list
    partial_sums: list
    accelerated: np.ndarray
    fitted_order: np.ndarray
    error_estimate: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def csv_rows(self):
        rows = []
        for n, s in zip(self.checkpoints, self.partial_sums):
            rows.append([n] + [format(float(v), ".17g") for v in np.ravel(s)])
        rows.append(["accelerated"] + [format(float(v), ".17g") for v in np.ravel(self.accelerated)])
        return rows


def _checkpoints(N):
    pts = sorted({N, N // 2, N // 4, N // 8} | {10**k for k in range(int(np.log10(N)) + 1) if 10**k <= N})
    return [p for p in pts if p >= 1]


def lambda_modesum(f, kind, r, rp, N, accelerate_tail=True, chunk=4096):
    """Mode-sum kernel through ``N`` modes with tail acceleration.

    Returns a :class:`KernelResult` (route ``mode-sum``) whose
    ``diagnostics["record"]`` holds the :class:`ConvergenceRecord`.
    """
    if int(N) < 1:
        raise ValidationError("N must be >= 1")
    N = int(N)
    r, rp = f.check_domain(r), f.check_domain(rp)
    if kind not in KINDS:
        raise ValidationError(f"unknown kernel kind {kind!r}")
    checkpoints = _checkpoints(N)
    shape = np.broadcast_shapes(r.shape, rp.shape)[:-1] + (3, 3)
    total = np.zeros(shape)
    partial = {}
    start = 1
    for stop in checkpoints:
        # deterministic chunked summation in mode order
        for lo in range(start, stop + 1, chunk):
            ns = np.arange(lo, min(stop, lo + chunk - 1) + 1)
            total = total + _terms(f, kind, ns, r, rp).sum(axis=0)
        partial[stop] = total.copy()
        start = stop + 1
    s_n = partial[N]
    if accelerate_tail and N >= 8:
        est, order, err = accelerate(s_n, partial[N // 2], partial[N // 4], partial[N // 8])
    else:
        est, order, err = s_n, np.full(shape, np.nan), np.zeros(shape)
    rec = ConvergenceRecord(checkpoints, [partial[c] for c in checkpoints], est, order, err)
    return KernelResult(est, np.zeros(shape), kind, "mode-sum", diagnostics={"record": rec})


def diamagnetic_omega_modesum(f, r, rp, N, rel_step=2e-2, order=6):
    """Omega through ``N`` modes by the B-sum and by the curl-curl of the E-sum.

    Returns ``(omega_b, omega_e, difference)``.  The E-sum route takes a
    finite-difference two-sided curl with a step tied to the shortest
    wavelength ``1 / omega_N``.
    """
    r, rp = f.check_domain(r), f.check_domain(rp)
    ns = np.arange(1, int(N) + 1)
    b, bp = f.b_fields(ns, r), f.b_fields(ns, rp)
    omega_b = np.real(outer(b, np.conj(bp))).sum(axis=0)

    w = f.omegas(ns)

    def esum(a, c):
        acc = 0.0
        for lo in range(0, len(ns), 256):
            sl = ns[lo:lo + 256]
            ea, ec = f.e_fields(sl, a), f.e_fields(sl, c)
            ww = w[lo:lo + 256].reshape((-1,) + (1,) * (ea.ndim - 1) + (1,))
            acc = acc + np.real(outer(ea, np.conj(ec)) / ww**2).sum(axis=0)
        return acc

    h = rel_step / w[-1]
    scale = np.maximum(1.0, np.maximum(np.linalg.norm(r, axis=-1), np.linalg.norm(rp, axis=-1)))
    tf = TensorField2(esum, "fd", step=h / scale, order=order)
    omega_e = two_sided_curl(tf, r, rp)
    return omega_b, omega_e, omega_e - omega_b


class ModeFamilyGreens(GreensProvider):
    """Transverse Green's tensor of a finite mode family with Lorentzian damping.

    ``G = sum_n (2 / w_n) F_n / (w_n^2 - w^2 - i gamma w)``.  Its spectral
    weight reproduces the discrete mode sums as ``gamma -> 0``; it carries
    no longitudinal part, so its zero-frequency data are not electrostatic.
    """

    name = "mode_family"
    reciprocal = True
    has_analytic_limits = False
    static_delta_nn = 0.0

    def __init__(self, family, N, gamma=1e-3):
        self.family = family
        self.ns = np.arange(1, int(N) + 1)
        self.gamma = float(gamma)
        self.w = family.omegas(self.ns)
        # quadrature breakpoints
        self.resonances = list(self.w)

    def _weights(self, omega):
        omega = np.asarray(omega, dtype=complex)
        w = self.w.reshape((-1,) + (1,) * omega.ndim)
        return (2.0 / w) / (w**2 - omega**2 - 1j * self.gamma * omega)

    def _sum(self, a, b, omega):
        # a, b: (mode, *batch, 3); omega scalar or (M, 1, ..., 1) over batch
        wt = self._weights(omega)
        prod = outer(a, np.conj(b))
        if np.ndim(omega):
            prod = prod[:, None]
            wt = wt[..., None, None]
        else:
            wt = wt.reshape(wt.shape + (1,) * (prod.ndim - 1))
        return (wt * prod).sum(axis=0)

    def G(self, r, rp, omega):
        return self._sum(self.family.e_fields(self.ns, r), self.family.e_fields(self.ns, rp), omega)

    def w2G(self, r, rp, omega):
        omega = np.asarray(omega, dtype=complex)
        return (omega**2)[..., None, None] * self.G(r, rp, omega)

    def field(self, omega, step=None, order=2):
        # curl E_n = i w_n B_n, curl' E_n* = -i w_n B_n*
        w = self.w.reshape(-1, 1)

        def left(r, rp):
            b = self.family.b_fields(self.ns, r) * (1j * w.reshape((-1,) + (1,) * (np.ndim(r))))
            return self._sum(b, self.family.e_fields(self.ns, rp), omega)

        def right(r, rp):
            b = self.family.b_fields(self.ns, rp) * (1j * w.reshape((-1,) + (1,) * (np.ndim(rp))))
            return self._sum(self.family.e_fields(self.ns, r), b, omega)

        def two(r, rp):
            ww = w.reshape((-1,) + (1,) * np.ndim(r))
            return self._sum(self.family.b_fields(self.ns, r) * ww,
                             self.family.b_fields(self.ns, rp) * ww, omega)

        return TensorField2(lambda r, rp: self.G(r, rp, omega), "analytic", step, order,
                            left=left, right=right, two_sided=two)
