"""Brute-force check of tracing out the field: oscillators in a Fock basis.

Matter oscillators ``a_i`` (frequencies ``w_m``) couple bilinearly to field
modes ``b_n`` (frequencies ``w_c``) through the electric field operator
``E(r) = sum_n i (E_n b_n - E_n* b_n^dag)``::

    H = sum_i w_m a_i^dag a_i + sum_n w_c b_n^dag b_n
        - sum_{i n} g_{in} (a_i + a_i^dag) i (b_n - b_n^dag)

Completing the square in each ``b_n`` gives the matter-only form
``H_eff = sum_i w_m a_i^dag a_i - sum_{ij} K_ij x_i x_j`` with
``K_ij = sum_n g_in g_jn / w_c,n`` and ``x = a + a^dag``; that is the
mode-sum ``ee`` kernel contracted with the dipole directions.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cubature, quad
from scipy.sparse.linalg import eigsh

from ._numerics import loglog_slope
from .errors import (DimensionCap, NotPositiveDefinite, QuadratureFail, RegimeViolation,
                     ValidationError)
from .hamiltonian import DipoleSite, effective_operator_matrix

DIMENSION_CAP = 4096
MAX_RATIO = 0.2
DENSE_LIMIT = 2000


@dataclass(frozen=True)
class OscillatorModel:
    """Harmonic matter oscillators bilinearly coupled to field modes.

    ``coupling[i, n]`` is ``d_i . E_n(r_i)`` (real modes).
    """

    matter_omegas: tuple
    mode_omegas: tuple
    coupling: np.ndarray
    n_max: int = 20

    def __post_init__(self):
        wm = tuple(float(w) for w in np.atleast_1d(self.matter_omegas))
        wc = tuple(float(w) for w in np.atleast_1d(self.mode_omegas))
        g = np.asarray(self.coupling, dtype=float).reshape(len(wm), len(wc))
        if min(wm + wc) <= 0:
            raise ValidationError("all frequencies must be positive")
        if self.n_max < 4:
            raise ValidationError("n_max must be at least 4")
        object.__setattr__(self, "matter_omegas", wm)
        object.__setattr__(self, "mode_omegas", wc)
        object.__setattr__(self, "coupling", g)

    @property
    def dims(self):
        return [self.n_max] * (len(self.matter_omegas) + len(self.mode_omegas))

    @property
    def ratio(self):
        return max(self.matter_omegas) / min(self.mode_omegas)

    def effective_kernel(self):
        return self.coupling @ np.diag(1 / np.array(self.mode_omegas)) @ self.coupling.T

    def with_coupling(self, coupling):
        return OscillatorModel(self.matter_omegas, self.mode_omegas, coupling, self.n_max)


def ladder(n):
    """Truncated annihilation operator (sparse)."""
    return sp.diags(np.sqrt(np.arange(1, n)), 1, format="csr")


def _embed(op, k, dims):
    out = sp.identity(1, format="csr")
    for j, d in enumerate(dims):
        out = sp.kron(out, op if j == k else sp.identity(d, format="csr"), format="csr")
    return out


def _check_dim(dims, cap):
    total = int(np.prod(dims))
    if total > cap:
        raise DimensionCap(f"truncated dimension {total} exceeds cap {cap}")
    return total


def build_full_hamiltonian(m, cap=DIMENSION_CAP):
    """Sparse Hermitian matrix of the coupled system in the product Fock basis."""
    dims = m.dims
    _check_dim(dims, cap)
    a = ladder(m.n_max)
    num = a.T @ a
    x = a + a.T
    y = 1j * (a - a.T)
    nm = len(m.matter_omegas)
    H = sp.csr_matrix((int(np.prod(dims)),) * 2, dtype=complex)
    for k, w in enumerate(m.matter_omegas + m.mode_omegas):
        H = H + w * _embed(num, k, dims)
    for i in range(nm):
        xi = _embed(x, i, dims)
        for n, g in enumerate(m.coupling[i]):
            if g:
                H = H - g * (xi @ _embed(y, nm + n, dims))
    return H.tocsr()


def lowest_eigenvalues(H, k):
    """The ``k`` lowest eigenvalues, dense for small matrices, Lanczos otherwise."""
    dim = H.shape[0]
    if dim <= DENSE_LIMIT or k >= dim - 1:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        return np.linalg.eigvalsh(dense)[:k]
    vals = eigsh(H, k=k, sigma=_lower_bound(H), which="LM", v0=_start(dim), tol=1e-13,
                 return_eigenvectors=False)
    return np.sort(vals.real)


def _lower_bound(H):
    # Gershgorin; shift-invert below the spectrum converges to the lowest levels
    diag = H.diagonal().real
    off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off)) - 1.0


def _start(dim):
    # fixed seed: a generic vector that overlaps every eigenvector
    return np.random.default_rng(0).standard_normal(dim)


def ground_state(H):
    dim = H.shape[0]
    if dim <= DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(H.toarray() if sp.issparse(H) else H)
        return vals[0], vecs[:, 0]
    vals, vecs = eigsh(H, k=1, sigma=_lower_bound(H), which="LM", v0=_start(dim), tol=1e-13)
    return vals[0], vecs[:, 0]


def partition_function(H, beta):
    """``sum_k exp(-beta E_k)`` over all eigenvalues of a Hermitian matrix."""
    if not beta > 0:
        raise ValidationError("beta must be positive")
    E = np.linalg.eigvalsh(H.toarray() if sp.issparse(H) else np.asarray(H))
    # shift for stability, then undo
    e0 = E[0]
    return float(np.exp(-beta * e0) * np.sum(np.exp(-beta * (E - e0))))


def normal_mode_ground_energy(w_a, w_c, g):
    """Exact ground energy of one matter oscillator and one mode.

    Zero-point energies of the free oscillators are subtracted, matching
    the ``w a^dag a`` convention of :func:`build_full_hamiltonian`.
    """
    c = 2 * g * math.sqrt(w_a * w_c)
    A = np.array([[w_a**2, c], [c, w_c**2]])
    lam = np.linalg.eigvalsh(A)
    if lam[0] <= 0:
        raise ValidationError("coupling too strong: the quadratic form is not positive")
    return 0.5 * float(np.sum(np.sqrt(lam))) - 0.5 * (w_a + w_c)


def effective_hamiltonian(m):
    """Matter-only matrix built by the hamiltonian module from ``K = g g^T / w_c``.

    Each oscillator is a site with operator dipole ``x = a + a^dag`` along
    z; the induced kernel enters as the ee entry including self pairs.
    """
    n = m.n_max
    a = ladder(n).toarray()
    x = a + a.T
    ops = np.zeros((3, n, n), dtype=complex)
    ops[2] = x
    nm = len(m.matter_omegas)
    sites = [DipoleSite([0.0, 0.0, float(i)], d=ops) for i in range(nm)]
    K = m.effective_kernel()
    kernels = {}
    for i in range(nm):
        for j in range(nm):
            t = np.zeros((3, 3))
            t[2, 2] = K[i, j]
            kernels[(i, j)] = {"ee": t}
    h_le = [w * (a.T @ a) for w in m.matter_omegas]
    return effective_operator_matrix(sites, None, h_le=h_le, kernels=kernels, include_self=True,
                                     cap=n, total_cap=DIMENSION_CAP)


def _excitations(vals, k):
    return np.asarray(vals[1:k + 1]) - vals[0]


def spectrum_deviation(m, n_levels=3, cap=DIMENSION_CAP):
    """Relative deviation of coupling-induced shifts of low excitation energies.

    Both sides subtract their own ``g = 0`` baseline, so zero-point field
    constants drop out.  Returns ``(deviation, exact_shift, effective_shift)``.
    """
    k = n_levels + 1
    free = m.with_coupling(np.zeros_like(m.coupling))
    ex = _excitations(lowest_eigenvalues(build_full_hamiltonian(m, cap), k), n_levels)
    ex0 = _excitations(lowest_eigenvalues(build_full_hamiltonian(free, cap), k), n_levels)
    ef = _excitations(np.linalg.eigvalsh(effective_hamiltonian(m)), n_levels)
    ef0 = _excitations(np.linalg.eigvalsh(effective_hamiltonian(free)), n_levels)
    d_ex, d_ef = ex - ex0, ef - ef0
    dev = float(np.max(np.abs(d_ex - d_ef)) / np.max(np.abs(d_ex)))
    return dev, d_ex, d_ef


@dataclass(frozen=True)
class SweepTable:
    ratios: np.ndarray
    deviations: np.ndarray
    order: float
    monotone: bool

    def csv_rows(self):
        rows = [["ratio", "deviation", "fitted_order"]]
        for r, d in zip(self.ratios, self.deviations):
            rows.append([format(float(r), ".17g"), format(float(d), ".17g"),
                         format(self.order, ".17g")])
        return rows


def model_at_ratio(template, ratio, kappa):
    """Rescale matter frequencies to ``ratio * min(w_c)`` at fixed ``g^2 / (w_m w_c)``.

    The template's coupling pattern (signs and relative sizes) is kept.
    """
    wc = np.array(template.mode_omegas)
    wm = ratio * wc.min() * np.array(template.matter_omegas) / max(template.matter_omegas)
    shape = template.coupling / np.max(np.abs(template.coupling))
    g = shape * np.sqrt(kappa * np.outer(wm, wc))
    return OscillatorModel(tuple(wm), tuple(wc), g, template.n_max)


def effective_vs_exact_sweep(m, beta=None, ratio_list=(0.2, 0.1, 0.05, 0.025), kappa=0.05,
                             n_levels=3, cap=DIMENSION_CAP):
    """Deviation of the effective spectrum from exact diagonalization per ratio.

    ``beta`` is accepted for interface symmetry; the comparison uses the
    low-lying spectrum, which does not depend on it.
    """
    ratios = np.asarray(ratio_list, dtype=float)
    if np.any(ratios > MAX_RATIO) or np.any(ratios <= 0):
        raise RegimeViolation(f"ratios must lie in (0, {MAX_RATIO}]")
    devs = np.array([spectrum_deviation(model_at_ratio(m, r, kappa), n_levels, cap)[0]
                     for r in ratios])
    order = loglog_slope(ratios, devs)
    srt = np.argsort(ratios)
    monotone = bool(np.all(np.diff(devs[srt]) > 0))
    return SweepTable(ratios, devs, float(order), monotone)


def vacuum_bb_correlation(family, ns, r, rp, n_max=6, coupling=None, matter_omega=1.0):
    """``Re <0| B(r) (x) B(r') |0>`` in the exact ground state.

    ``B(r) = sum_n (B_n(r) b_n + B_n*(r) b_n^dag)`` over the modes ``ns`` of
    ``family``; an optional single matter oscillator couples with
    ``coupling[n]``.  With no coupling the result equals the mode sum
    ``sum_n Re[B_n (x) B_n*]``.
    """
    ns = np.asarray(ns)
    wc = family.omegas(ns)
    g = np.zeros((1, len(ns))) if coupling is None else np.asarray(coupling, float).reshape(1, -1)
    model = OscillatorModel((matter_omega,), tuple(wc), g, n_max)
    H = build_full_hamiltonian(model)
    _, psi = ground_state(H)
    dims = model.dims
    a = ladder(n_max)
    Br, Brp = family.b_fields(ns, r), family.b_fields(ns, rp)

    def field_op(B, c):
        out = sp.csr_matrix((psi.size,) * 2, dtype=complex)
        for k in range(len(ns)):
            op = B[k, c] * a + np.conj(B[k, c]) * a.T
            out = out + _embed(op.tocsr(), 1 + k, dims)
        return out

    ops_r = [field_op(Br, c) for c in range(3)]
    ops_rp = [field_op(Brp, c) for c in range(3)]
    out = np.zeros((3, 3))
    for i in range(3):
        left = ops_r[i].conj().T @ psi
        for j in range(3):
            out[i, j] = np.real(np.vdot(left, ops_rp[j] @ psi))
    return out


def gaussian_closed_form(A, b, c):
    """``sqrt(det(2 pi A^-1)) exp(b^T A^-1 b / 2 + c)``."""
    A, b = _check_spd(A), np.asarray(b, dtype=float)
    sol = np.linalg.solve(A, b)
    return math.sqrt(np.linalg.det(2 * np.pi * np.linalg.inv(A))) * math.exp(0.5 * b @ sol + c)


def _check_spd(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("A must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NotPositiveDefinite("A must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("A is not positive definite") from None
    return A


def gaussian_integral_identity_check(A, b, c=0.0, epsrel=1e-10):
    """Relative residual between quadrature and the Gaussian closed form.

    Up to three dimensions the integral is done by adaptive cubature over
    a box holding all but ``e^-72`` of the mass; up to six it is rotated to the
    eigenbasis of ``A``, where it factorizes into one-dimensional integrals.
    """
    A = _check_spd(A)
    b = np.asarray(b, dtype=float).reshape(-1)
    dim = A.shape[0]
    if b.shape != (dim,):
        raise ValidationError("b must match A")
    if dim > 6:
        raise ValidationError("dimension must be at most 6")
    exact = gaussian_closed_form(A, b, c)
    x0 = np.linalg.solve(A, b)
    # integrate around the peak so the adaptive rule finds the mass
    peak = 0.5 * b @ x0 + c
    if dim <= 3:
        # the integrand is below e^-72 of its peak outside this box
        half = 12.0 / math.sqrt(float(np.linalg.eigvalsh(A)[0]))

        def f(x):
            y = x + x0
            return np.exp(-0.5 * np.einsum("ni,ij,nj->n", y, A, y) + y @ b + c - peak)

        res = cubature(f, [-half] * dim, [half] * dim, rtol=epsrel, atol=0.0,
                       max_subdivisions=100_000)
        if res.status != "converged":
            raise QuadratureFail("Gaussian cubature did not converge")
        num = float(res.estimate)
    else:
        lam, Q = np.linalg.eigh(A)
        bq = Q.T @ b
        num = 1.0
        for lk, bk in zip(lam, bq):
            mu = bk / lk

            def f1(y, lk=lk, bk=bk, mu=mu):
                t = y + mu
                return math.exp(-0.5 * lk * t * t + bk * t - 0.5 * bk * mu)

            v, _ = quad(f1, -np.inf, np.inf, epsabs=0.0, epsrel=epsrel, limit=200)
            num *= v
    num *= math.exp(peak)
    return abs(num - exact) / abs(exact)
