"""Effective matter Hamiltonians built from the coupling kernels.

Three levels are provided:

* point dipoles, ``H = -sum_{i != j} [d_i . ee . d_j + d_i . em . m_j
  + m_i . me . d_j + m_i . mm . m_j]`` with the kernel evaluated at
  ``(r_i, r_j)`` (every unordered pair appears twice);
* densities on a cell grid, the same double sum over cells plus the
  delta-function pieces on the diagonal;
* operator matrices on the tensor-product space of a few small sites.

Self terms (``i = j``) of point dipoles are never taken from the divergent
regular kernel.  They are reported separately, from the provider's
scattering part when it has one.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .couplings import KINDS, delta_coefficients, lambda_kernel
from .errors import CoincidentPoints, DimensionCap, ValidationError
from .spectral import diamagnetic_omega_spectral
from .tensor_core import as_points

NEGLIGIBLE_RATIO = 1e-2
HERMITIAN_TOL = 1e-12
OPERATOR_DIM_CAP = 8
TOTAL_DIM_CAP = 4096
# point pairs per kernel evaluation in the grid paths
_CHUNK = 200_000

# which dipole feeds each side of a kernel
_SIDES = {"ee": ("d", "d"), "em": ("d", "m"), "me": ("m", "d"), "mm": ("m", "m")}


@dataclass(frozen=True)
class Constituent:
    """A charged constituent of a site, for the diamagnetic term.

    ``displacement`` is either a 3-vector ``r~`` or its second moment
    ``<r~ (x) r~>`` as a 3x3 matrix.
    """

    charge: float
    mass: float
    displacement: np.ndarray

    def __post_init__(self):
        if not self.mass > 0:
            raise ValidationError("constituent mass must be positive")
        object.__setattr__(self, "displacement", np.asarray(self.displacement, dtype=float))
        if self.displacement.shape not in ((3,), (3, 3)):
            raise ValidationError("displacement must be a 3-vector or a 3x3 second moment")

    @property
    def compton_wavelength(self):
        # 2 pi hbar / (m c) in natural units
        return 2 * np.pi / self.mass

    def second_moment(self):
        u = self.displacement
        return np.outer(u, u) if u.ndim == 1 else u


@dataclass(frozen=True)
class DipoleSite:
    """Point site with electric and magnetic dipoles.

    ``d`` and ``m`` are 3-vectors (classical) or stacks of three Hermitian
    ``D x D`` operator matrices, shape ``(3, D, D)``.  Either may be None.
    """

    position: np.ndarray
    d: Optional[np.ndarray] = None
    m: Optional[np.ndarray] = None
    constituents: Sequence[Constituent] = ()

    def __post_init__(self):
        pos = as_points(self.position)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValidationError("site position must be a finite 3-vector")
        object.__setattr__(self, "position", pos)
        for name in ("d", "m"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v)
            if v.ndim == 1:
                if v.shape != (3,):
                    raise ValidationError(f"{name} must be a 3-vector")
                v = v.astype(float)
            elif v.ndim == 3 and v.shape[0] == 3 and v.shape[1] == v.shape[2]:
                v = v.astype(complex)
                if np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))) > HERMITIAN_TOL:
                    raise ValidationError(f"operator {name} must be Hermitian")
            else:
                raise ValidationError(f"{name} must have shape (3,) or (3, D, D)")
            object.__setattr__(self, name, v)

    def vector(self, which):
        v = getattr(self, which)
        if v is None:
            return np.zeros(3)
        if v.ndim != 1:
            raise ValidationError("classical energies need vector dipoles")
        return v

    @property
    def operator_dim(self):
        for v in (self.d, self.m):
            if v is not None and v.ndim == 3:
                return v.shape[-1]
        return None


@dataclass(frozen=True)
class PairwiseEnergy:
    """Point-dipole interaction energy.

    ``pair_matrix[i, j]`` holds the ordered-pair contribution; the total is
    its sum.  ``self_terms`` are per-site energies from the scattering part
    of the provider (zero for vacuum, NaN when unavailable) and are not
    included in ``total``.
    """

    total: float
    pair_matrix: np.ndarray
    by_kind: dict
    self_terms: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)


def _positions(sites):
    pos = np.array([s.position for s in sites]).reshape(-1, 3)
    for i in range(len(pos)):
        same = np.all(pos[i + 1:] == pos[i], axis=-1)
        if np.any(same):
            raise CoincidentPoints(f"sites {i} and {i + 1 + int(np.argmax(same))} coincide")
    return pos


def _self_provider(p):
    if p.scattering_free:
        return None, "vacuum"
    scat = p.scattering_part()
    return scat, ("scattering" if scat is not None else "unavailable")


def pairwise_dipole_energy(sites, p, kinds=KINDS, method="auto"):
    """Classical energy of point dipoles; self terms reported separately."""
    sites = list(sites)
    pos = _positions(sites)
    n = len(sites)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    pair = np.zeros((n, n))
    by_kind = {}
    vec = {w: np.array([s.vector(w) for s in sites]).reshape(n, 3) for w in ("d", "m")}
    scat, how = _self_provider(p)
    selfs = np.zeros(n) if how != "unavailable" else np.full(n, np.nan)
    for kind in kinds:
        left, right = (vec[w] for w in _SIDES[kind])
        if not (np.any(left) and np.any(right)):
            by_kind[kind] = 0.0
            continue
        e = np.zeros(len(ii))
        if len(ii):
            K = lambda_kernel(p, kind, pos[ii], pos[jj], method=method).regular
            e = -np.einsum("pa,pab,pb->p", left[ii], K, right[jj])
            pair[ii, jj] += e
        by_kind[kind] = float(e.sum())
        if scat is not None:
            K = lambda_kernel(scat, kind, pos, pos, method=method).regular
            selfs -= np.einsum("pa,pab,pb->p", left, K, right)
    return PairwiseEnergy(float(pair.sum()), pair, by_kind, selfs,
                          diagnostics={"self_terms": how, "provider": p.describe()})


@dataclass(frozen=True)
class DensityGrid:
    """Polarization and magnetization sampled on cells of equal volume.

    ``centers`` has shape ``(N, 3)``; ``P`` and ``M`` have shape ``(N, 3)``.
    Grids made by :meth:`regular` also carry ``shape`` and ``spacing``,
    which enables the FFT path for translation-invariant providers.
    """

    centers: np.ndarray
    volume: float
    P: np.ndarray
    M: np.ndarray
    shape: Optional[tuple] = None
    spacing: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "centers", c)
        for name in ("P", "M"):
            v = getattr(self, name)
            v = np.zeros_like(c) if v is None else np.asarray(v, dtype=float).reshape(-1, 3)
            if v.shape != c.shape:
                raise ValidationError(f"{name} must have one 3-vector per cell")
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"{name} has non-finite values")
            object.__setattr__(self, name, v)
        if not (np.isfinite(self.volume) and self.volume > 0):
            raise ValidationError("cell volume must be positive")

    @classmethod
    def regular(cls, origin, spacing, P=None, M=None):
        """Cubic cells on an ``nx x ny x nz`` lattice; fields shaped ``(nx, ny, nz, 3)``."""
        ref = P if P is not None else M
        if ref is None:
            raise ValidationError("need P or M")
        shape = tuple(np.shape(ref)[:3])
        if spacing <= 0:
            raise ValidationError("spacing must be positive")
        axes = [origin[k] + spacing * np.arange(shape[k]) for k in range(3)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        return cls(centers, float(spacing) ** 3, P, M, shape, float(spacing))

    def field(self, which):
        return getattr(self, "P" if which == "d" else "M")


@dataclass(frozen=True)
class DensityEnergy:
    total: float
    regular: float
    delta: float
    by_kind: dict
    diagnostics: dict = field(default_factory=dict, compare=False)


def _resolution(grid):
    """Largest neighbour-to-neighbour jump relative to the field maximum."""
    if grid.shape is None:
        return None
    worst = 0.0
    for f in (grid.P, grid.M):
        top = np.max(np.abs(f))
        if top == 0:
            continue
        a = f.reshape(grid.shape + (3,))
        for ax in range(3):
            if grid.shape[ax] > 1:
                worst = max(worst, float(np.max(np.abs(np.diff(a, axis=ax)))) / top)
    return worst


def _kernel_on_offsets(p, kind, grid, comps, method):
    """Kernel components ``K_ab(h k)`` for every lattice offset ``k``."""
    nx, ny, nz = grid.shape
    axes = [grid.spacing * np.arange(-(s - 1), s) for s in grid.shape]
    shape = tuple(len(a) for a in axes)
    flat = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    out = {c: np.zeros(len(flat)) for c in comps}
    centre = np.ravel_multi_index((nx - 1, ny - 1, nz - 1), shape)
    idx = np.delete(np.arange(len(flat)), centre)
    zero = np.zeros(3)
    for s in range(0, len(idx), _CHUNK):
        part = idx[s:s + _CHUNK]
        K = lambda_kernel(p, kind, flat[part], zero, method=method).regular
        for a, b in comps:
            out[(a, b)][part] = K[:, a, b]
    return {c: v.reshape(shape) for c, v in out.items()}


def _regular_fft(grid, p, kind, X, Y, method):
    comps = [(a, b) for a in range(3) for b in range(3) if np.any(X[:, a]) and np.any(Y[:, b])]
    if not comps:
        return 0.0
    K = _kernel_on_offsets(p, kind, grid, comps, method)
    sl = tuple(slice(s - 1, 2 * s - 1) for s in grid.shape)
    total = 0.0
    for a, b in comps:
        conv = fftconvolve(Y[:, b].reshape(grid.shape), K[(a, b)], mode="full")[sl]
        total += float(np.sum(X[:, a].reshape(grid.shape) * conv))
    return total


def _regular_direct(grid, p, kind, X, Y, method):
    c = grid.centers
    n = len(c)
    rows = max(1, _CHUNK // max(n, 1))
    total = 0.0
    for s in range(0, n, rows):
        a = np.arange(s, min(n, s + rows))
        ia = np.repeat(a, n)
        jb = np.tile(np.arange(n), len(a))
        keep = ia != jb
        ia, jb = ia[keep], jb[keep]
        if not len(ia):
            continue
        K = lambda_kernel(p, kind, c[ia], c[jb], method=method).regular
        total += float(np.einsum("pa,pab,pb->", X[ia], K, Y[jb]))
    return total


def density_interaction_energy(grid, p, smoothing=True, kinds=KINDS, method="auto",
                               path="auto"):
    """``-sum_{a != b} V^2 X_a . K . Y_b - sum_a V X_a . C . Y_a`` over all kinds.

    ``C`` is the delta coefficient of each kernel (``I/3`` for ee and mm in
    vacuum with ``smoothing``).  ``path`` is ``"fft"``, ``"direct"`` or
    ``"auto"`` (FFT for regular grids on translation-invariant providers).
    """
    if path not in ("auto", "fft", "direct"):
        raise ValidationError(f"unknown path {path!r}")
    use_fft = grid.shape is not None and p.translation_invariant
    if path == "fft" and not use_fft:
        raise ValidationError("the FFT path needs a regular grid and a translation-invariant provider")
    if path == "direct":
        use_fft = False
    V = grid.volume
    by_kind, reg_total, delta_total = {}, 0.0, 0.0
    for kind in kinds:
        X, Y = (grid.field(w) for w in _SIDES[kind])
        if not (np.any(X) and np.any(Y)):
            by_kind[kind] = 0.0
            continue
        fn = _regular_fft if use_fft else _regular_direct
        reg = -V * V * fn(grid, p, kind, X, Y, method)
        C = delta_coefficients(p, kind, smoothing)
        dl = -V * float(np.einsum("pa,ab,pb->", X, C, Y))
        by_kind[kind] = reg + dl
        reg_total += reg
        delta_total += dl
    return DensityEnergy(reg_total + delta_total, reg_total, delta_total, by_kind,
                         diagnostics={"path": "fft" if use_fft else "direct",
                                      "max_relative_jump": _resolution(grid),
                                      "smoothing": smoothing})


@dataclass(frozen=True)
class DiamagneticReport:
    energy: float
    omega: list
    ratio: Optional[float]
    negligible: Optional[bool]
    energy_ratio: Optional[float]
    diagnostics: dict = field(default_factory=dict, compare=False)


def _cross_trace(Q, T):
    # Tr{u x T x u} averaged over <u (x) u> = Q
    return float(np.trace(Q @ T) - np.trace(Q) * np.trace(T))


def diamagnetic_renormalization_dipole(sites, p, split=None, distance=None, omega_kw=None):
    """Dipole-level diamagnetic energy and its size relative to the dipole terms.

    For each site ``sum_gamma q^2 lambda_gamma / (8 pi) Tr{r~ x Omega x r~}``
    with ``Omega`` the damped spectral integral at ``r = r' = r_i``.  The
    coincident limit uses the provider's scattering part; without one,
    ``split`` evaluates the full provider at ``(r_i, r_i + split z)``.
    Vacuum contributes nothing (its coincident part renormalizes the mass).

    ``ratio`` is ``max lambda_gamma / r`` with ``r`` from ``distance`` or the
    provider's characteristic distance; it is flagged ``negligible`` below
    ``NEGLIGIBLE_RATIO``.  ``energy_ratio`` compares with the ee self term
    of ``d = sum q r~`` when that is available.
    """
    omega_kw = dict(omega_kw or {})
    energy, omegas, ratios, ee_self = 0.0, [], [], 0.0
    scat, how = _self_provider(p)
    for s in sites:
        if not s.constituents:
            omegas.append(np.zeros((3, 3)).tolist())
            continue
        charges = [c.charge for c in s.constituents]
        if how == "vacuum" or not any(charges):
            om = np.zeros((3, 3))
        elif scat is not None:
            om, _ = diamagnetic_omega_spectral(scat, s.position, s.position, **omega_kw)
        elif split is not None:
            rp = s.position + np.array([0.0, 0.0, float(split)])
            om, _ = diamagnetic_omega_spectral(p, s.position, rp, **omega_kw)
        else:
            raise ValidationError("provider has no scattering part; give a finite split")
        om = np.real(om)
        omegas.append(om.tolist())
        for c in s.constituents:
            energy += c.charge**2 * c.compton_wavelength / (8 * np.pi) * _cross_trace(
                c.second_moment(), om)
        r = distance if distance is not None else p.characteristic_distance(s.position)
        if r is not None:
            ratios.extend(c.compton_wavelength / float(r) for c in s.constituents if c.charge)
        if scat is not None:
            dvec = sum(c.charge * c.displacement for c in s.constituents
                       if c.displacement.ndim == 1)
            if np.ndim(dvec):
                K = lambda_kernel(scat, "ee", s.position, s.position).regular
                ee_self -= float(dvec @ K @ dvec)
    ratio = max(ratios) if ratios else None
    return DiamagneticReport(
        float(energy), omegas, ratio,
        None if ratio is None else bool(ratio < NEGLIGIBLE_RATIO),
        abs(energy / ee_self) if ee_self else None,
        diagnostics={"coincident": how, "threshold": NEGLIGIBLE_RATIO})


def _embed(ops, dims):
    """Kronecker product with ``ops[k]`` (or identity) on site ``k``."""
    out = np.ones((1, 1), dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, ops.get(k, np.eye(d)))
    return out


def _site_ops(site, which, dim):
    v = getattr(site, which)
    if v is None:
        return None
    if v.ndim == 1:
        raise ValidationError("operator matrices need operator-valued dipoles")
    if v.shape[-1] != dim:
        raise ValidationError("d and m of one site must act on the same space")
    return v


def effective_operator_matrix(sites, p=None, h_le=None, kernels=None, include_self=False,
                              cap=OPERATOR_DIM_CAP, total_cap=TOTAL_DIM_CAP, method="auto"):
    """Matter-only Hamiltonian on the tensor-product space of the sites.

    ``H = H_le - sum_{(i, j)} sum_kinds sum_ab K^{ab}_{ij} X_i^a Y_j^b``.
    ``kernels`` maps ``(i, j)`` to ``{kind: 3x3}``; missing pairs with
    ``i != j`` are evaluated from ``p``.  Self pairs ``(i, i)`` enter only
    with ``include_self`` and must then be supplied or come from the
    provider's scattering part.  ``h_le`` is None, a constant, a list of
    per-site matrices or a full matrix.
    """
    sites = list(sites)
    dims = []
    for s in sites:
        d = s.operator_dim
        if d is None:
            raise ValidationError("every site needs operator-valued dipoles")
        if d > cap:
            raise DimensionCap(f"site dimension {d} exceeds cap {cap}")
        dims.append(d)
    total = int(np.prod(dims))
    if total > total_cap:
        raise DimensionCap(f"product dimension {total} exceeds cap {total_cap}")
    n = len(sites)
    if h_le is None:
        H = np.zeros((total, total), dtype=complex)
    elif np.ndim(h_le) == 0:
        H = complex(h_le) * np.eye(total)
    elif isinstance(h_le, (list, tuple)):
        if len(h_le) != n:
            raise ValidationError("need one bare Hamiltonian per site")
        H = sum(_embed({k: np.asarray(h, dtype=complex)}, dims) for k, h in enumerate(h_le))
    else:
        H = np.array(h_le, dtype=complex)
        if H.shape != (total, total):
            raise ValidationError(f"h_le must be {total}x{total}")
    kernels = dict(kernels or {})
    if p is not None:
        pos = _positions(sites)
        todo = [(i, j) for i in range(n) for j in range(n) if i != j and (i, j) not in kernels]
        if todo:
            ii, jj = np.array(todo).T
            for kind in KINDS:
                K = lambda_kernel(p, kind, pos[ii], pos[jj], method=method).regular
                for (i, j), k in zip(todo, K):
                    kernels.setdefault((i, j), {})[kind] = k
        if include_self:
            scat, how = _self_provider(p)
            for i in range(n):
                if (i, i) in kernels:
                    continue
                if how == "unavailable":
                    raise ValidationError("self kernels unavailable for this provider")
                kernels[(i, i)] = {kind: (np.zeros((3, 3)) if scat is None else
                                          lambda_kernel(scat, kind, pos[i], pos[i]).regular)
                                   for kind in KINDS}
    for (i, j), table in sorted(kernels.items()):
        if i == j and not include_self:
            continue
        for kind, K in sorted(table.items()):
            wl, wr = _SIDES[kind]
            X = _site_ops(sites[i], wl, dims[i])
            Y = _site_ops(sites[j], wr, dims[j])
            if X is None or Y is None:
                continue
            K = np.asarray(K)
            for a in range(3):
                for b in range(3):
                    if K[a, b] == 0:
                        continue
                    if i == j:
                        term = _embed({i: X[a] @ Y[b]}, dims)
                    else:
                        term = _embed({i: X[a], j: Y[b]}, dims)
                    H -= K[a, b] * term
    return H
