"""Zero-frequency effective coupling kernels between P and M densities.

Natural units (eps0 = mu0 = c = 1).  Each kernel is split into a regular
part, evaluated at ``r != r'``, and symbolic delta-function pieces::

    lambda(r, r') = regular + delta_coefficient delta(R) + delta_nn n(x)n delta(R)

``delta_nn`` multiplies the direction-dependent ``n (x) n delta(R)`` term.
For smooth densities it may be replaced by ``I / 3`` (``smoothing=True``).
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ImaginaryResidue, ValidationError
from .greens import static_limits
from .tensor_core import (IDENTITY, TensorField2, as_points, left_curl, outer,
                          right_curl, transpose, two_sided_curl)

KINDS = ("ee", "em", "me", "mm")
ROUTES = ("closed-form", "mode-sum", "spectral", "reference")
IMAG_TOL = 1e-8
# Curls of numerically obtained static fields amplify the roundoff of the
# omega ladder by (R/h)^2, so a wider sixth-order stencil and a slightly
# coarser omega ladder are used on that path.
STATIC_CURL_REL_STEP = 3e-2
STATIC_CURL_ORDER = 6
KERNEL_OMEGA_REL_STEP = 3e-2


@dataclass(frozen=True)
class KernelResult:
    """One evaluated coupling kernel with its delta-function bookkeeping."""

    regular: np.ndarray
    delta_coefficient: np.ndarray
    kind: str
    route: str
    delta_nn: float = 0.0
    smoothing: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.route not in ROUTES:
            raise ValidationError(f"unknown route {self.route!r}")

    def smoothed(self):
        """Apply ``n (x) n delta -> I delta / 3``, valid for smooth densities."""
        if self.smoothing:
            return self
        return replace(self, delta_coefficient=self.delta_coefficient + self.delta_nn * IDENTITY / 3,
                       delta_nn=0.0, smoothing=True)

    def effective_delta(self):
        """Delta coefficient seen by a smooth density."""
        return self.smoothed().delta_coefficient


def _zero_delta(shape):
    return np.zeros(shape + (3, 3))


def _delta_I(shape, c):
    return np.broadcast_to(c * IDENTITY, shape + (3, 3)).copy()


def _batch(r, rp):
    return np.broadcast_shapes(np.shape(r), np.shape(rp))[:-1]


def _real_or_raise(value, what):
    scale = max(1.0, float(np.max(np.abs(value.real), initial=0.0)))
    resid = float(np.max(np.abs(value.imag), initial=0.0))
    if resid > IMAG_TOL * scale:
        raise ImaginaryResidue(f"{what} has an imaginary part {resid:.3e}; "
                               "the provider may violate Schwarz reflection")
    return np.real(value)


def _fd_limits(p, r, rp):
    return static_limits(p, r, rp, method="fd", rel_step=KERNEL_OMEGA_REL_STEP)


def _static_field(p, attr, method, sym, r, rp):
    """``S(r, r') +/- S^T(r', r)`` for one static-limit quantity as a field.

    The analytic route uses the provider's closed-form fields and curls; the
    numerical route differentiates Richardson-extrapolated static limits with
    a fourth-order stencil whose step is a fixed fraction of ``R``.
    """
    sign = 1.0 if sym else -1.0
    if method != "fd" and p.has_analytic_limits:
        base = p.static_fields()[attr]

        def ev(a, b):
            return base(a, b) + sign * transpose(base(b, a))

        def left(a, b):
            # curl_r of S^T(r', r) is the transposed right curl of S(r', .)
            return base.left(a, b) + sign * transpose(base.right(b, a))

        def right(a, b):
            return base.right(a, b) + sign * transpose(base.left(b, a))

        def two(a, b):
            return base.two_sided(a, b) + sign * transpose(base.two_sided(b, a))

        return TensorField2(ev, "analytic", left=left, right=right, two_sided=two)

    def ev(a, b):
        return (getattr(_fd_limits(p, a, b), attr)
                + sign * transpose(getattr(_fd_limits(p, b, a), attr)))

    dist = np.linalg.norm(r - rp, axis=-1)
    scale = np.maximum(1.0, np.maximum(np.linalg.norm(r, axis=-1), np.linalg.norm(rp, axis=-1)))
    step = STATIC_CURL_REL_STEP * dist / scale
    return TensorField2(ev, "fd", step=step, order=STATIC_CURL_ORDER)


def _check_method(method):
    if method not in ("auto", "fd"):
        raise ValidationError(f"method must be 'auto' or 'fd', got {method!r}")


def lambda_ee(p, r, rp, method="auto", smoothing=False):
    """Electric-electric kernel from ``lim omega^2 G`` at both argument orders."""
    _check_method(method)
    r, rp = as_points(r), as_points(rp)
    a = static_limits(p, r, rp, method=method).w2G
    b = static_limits(p, rp, r, method=method).w2G
    reg = _real_or_raise(0.25 * (a + transpose(b)), "lambda_ee")
    shape = _batch(r, rp)
    res = KernelResult(reg, _delta_I(shape, 0.5), "ee", "closed-form",
                       delta_nn=0.5 * p.static_delta_nn)
    return res.smoothed() if smoothing else res


def lambda_ee_reciprocal(p, r, rp, method="auto"):
    """Single-term form valid for reciprocal providers: ``[omega^2 G]_0 / 2``."""
    r, rp = as_points(r), as_points(rp)
    a = static_limits(p, r, rp, method=method).w2G
    return KernelResult(_real_or_raise(0.5 * a, "lambda_ee"), _delta_I(_batch(r, rp), 0.5),
                        "ee", "closed-form", delta_nn=0.5 * p.static_delta_nn)


def lambda_em(p, r, rp, method="auto"):
    """Electric-magnetic kernel ``(i/4) {d/dw [w^2 G - w^2 G^T]}_0 x curl_r'``."""
    _check_method(method)
    r, rp = as_points(r), as_points(rp)
    f = _static_field(p, "d_w2G", method, False, r, rp)
    val = 0.25j * right_curl(f, r, rp)
    return KernelResult(_real_or_raise(val, "lambda_em"), _zero_delta(_batch(r, rp)),
                        "em", "closed-form")


def lambda_me(p, r, rp, method="auto"):
    """Magnetic-electric kernel ``-(i/4) curl_r x {d/dw [w^2 G - w^2 G^T]}_0``."""
    _check_method(method)
    r, rp = as_points(r), as_points(rp)
    f = _static_field(p, "d_w2G", method, False, r, rp)
    val = -0.25j * left_curl(f, r, rp)
    return KernelResult(_real_or_raise(val, "lambda_me"), _zero_delta(_batch(r, rp)),
                        "me", "closed-form")


def lambda_mm(p, r, rp, method="auto"):
    """Magnetic-magnetic kernel ``(1/8) curl x {d2/dw2 [w^2 G + w^2 G^T]}_0 x curl'``.

    Only the regular part is produced; the free-space delta piece lives in
    :func:`free_space_lambda_mm_reference`.
    """
    _check_method(method)
    r, rp = as_points(r), as_points(rp)
    f = _static_field(p, "d2_w2G", method, True, r, rp)
    val = 0.125 * two_sided_curl(f, r, rp)
    return KernelResult(_real_or_raise(val, "lambda_mm"), _zero_delta(_batch(r, rp)),
                        "mm", "closed-form")


def lambda_mm_reciprocal(p, r, rp, method="auto"):
    """Single-term reciprocal form ``(1/4) curl x {d2/dw2 w^2 G}_0 x curl'``."""
    _check_method(method)
    r, rp = as_points(r), as_points(rp)
    if method != "fd" and p.has_analytic_limits:
        f = p.static_fields()["d2_w2G"]
    else:
        dist = np.linalg.norm(r - rp, axis=-1)
        scale = np.maximum(1.0, np.linalg.norm(r, axis=-1))
        f = TensorField2(lambda a, b: _fd_limits(p, a, b).d2_w2G, "fd",
                         step=STATIC_CURL_REL_STEP * dist / scale, order=STATIC_CURL_ORDER)
    val = 0.25 * two_sided_curl(f, r, rp)
    return KernelResult(_real_or_raise(val, "lambda_mm"), _zero_delta(_batch(r, rp)),
                        "mm", "closed-form")


def delta_coefficients(p, kind, smoothing=True):
    """Coefficient ``C`` of ``delta(R)`` in one kernel, as a 3x3 matrix.

    ee: ``I/2 + (d/2) n n`` with ``d = p.static_delta_nn``; mm: the
    curl-curl of the local ``1/R`` singularity, ``(|d|/2)(I - n n)``; the
    cross kernels have none.  With ``smoothing`` the ``n n`` part becomes
    ``I/3``; without it the direction-dependent part is dropped, since it
    is undefined for a single cell.
    """
    d = p.static_delta_nn
    if kind == "ee":
        iso, nn = 0.5, 0.5 * d
    elif kind == "mm":
        iso, nn = 0.5 * abs(d), -0.5 * abs(d)
    elif kind in ("em", "me"):
        iso, nn = 0.0, 0.0
    else:
        raise ValidationError(f"unknown kernel kind {kind!r}")
    return (iso + (nn / 3 if smoothing else 0.0)) * IDENTITY


LAMBDA = {"ee": lambda_ee, "em": lambda_em, "me": lambda_me, "mm": lambda_mm}


def lambda_kernel(p, kind, r, rp, method="auto"):
    try:
        fn = LAMBDA[kind]
    except KeyError:
        raise ValidationError(f"unknown kernel kind {kind!r}") from None
    return fn(p, r, rp, method=method)


def _dipolar(r, rp):
    R = as_points(r) - as_points(rp)
    d = np.linalg.norm(R, axis=-1)
    n = R / d[..., None]
    return (3 * outer(n, n) - IDENTITY) / (4 * np.pi * d**3)[..., None, None]


def free_space_lambda_ee_reference(r, rp, smoothing=False):
    """Closed-form vacuum ee kernel.

    ``(1/2)[-n n delta + (3 n n - I)/(4 pi R^3)] + (1/2) I delta``.  The last
    term cancels the polarization self-energy of the bare matter
    Hamiltonian; with smoothing the net delta coefficient is ``I / 3``.
    """
    reg = 0.5 * _dipolar(r, rp)
    res = KernelResult(reg, _delta_I(reg.shape[:-2], 0.5), "ee", "reference", delta_nn=-0.5)
    return res.smoothed() if smoothing else res


def free_space_lambda_mm_reference(r, rp, smoothing=False):
    """Closed-form vacuum mm kernel ``(1/2)[(I - n n) delta + (3 n n - I)/(4 pi R^3)]``.

    With smoothing the delta coefficient becomes ``I / 3``, the familiar
    2/3 factor of the magnetostatic contact term times the overall 1/2.
    """
    reg = 0.5 * _dipolar(r, rp)
    res = KernelResult(reg, _delta_I(reg.shape[:-2], 0.5), "mm", "reference", delta_nn=-0.5)
    return res.smoothed() if smoothing else res


CSV_HEADER = (["x", "y", "z", "xp", "yp", "zp", "kind", "route"]
              + [f"reg_{a}{b}" for a in "xyz" for b in "xyz"]
              + [f"delta_{a}{b}" for a in "xyz" for b in "xyz"])


def _fmt(x):
    return format(float(x), ".17g")


def kernel_csv_rows(r, rp, result):
    """Long-format CSV rows, one per point pair in ``result``."""
    r, rp = np.broadcast_arrays(as_points(r), as_points(rp))
    reg = np.broadcast_to(result.regular, r.shape[:-1] + (3, 3)).reshape(-1, 3, 3)
    dl = np.broadcast_to(result.delta_coefficient, r.shape[:-1] + (3, 3)).reshape(-1, 3, 3)
    rows = []
    for a, b, g, d in zip(r.reshape(-1, 3), rp.reshape(-1, 3), reg, dl):
        rows.append([_fmt(v) for v in a] + [_fmt(v) for v in b] + [result.kind, result.route]
                    + [_fmt(v) for v in g.ravel()] + [_fmt(v) for v in d.ravel()])
    return rows


def write_kernel_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        w.writerows(rows)
