import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose

from cavity_kernels.errors import CoincidentPoints, DimensionCap, ValidationError
from cavity_kernels.greens import FreeSpace, MirrorHalfSpace
from cavity_kernels.hamiltonian import (Constituent, DensityGrid, DipoleSite,
                                        density_interaction_energy,
                                        diamagnetic_renormalization_dipole,
                                        effective_operator_matrix, pairwise_dipole_energy)

from conftest import dyadics, rotations, separated_pairs, vectors
from oracles import blob_field, dipole_pair_energy, gaussian_blob_energy

I3 = np.eye(3)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def test_head_to_tail_coulomb_value():
    R = 1.3
    sites = [DipoleSite([0, 0, 0], d=[0, 0, 1.0]), DipoleSite([0, 0, R], d=[0, 0, 1.0])]
    out = pairwise_dipole_energy(sites, FreeSpace())
    assert out.total == pytest.approx(-1 / (2 * np.pi * R**3), rel=1e-13)
    assert out.pair_matrix[0, 1] == pytest.approx(out.pair_matrix[1, 0])
    assert out.by_kind["em"] == 0.0 and out.by_kind["mm"] == 0.0
    assert_allclose(out.self_terms, 0.0)


@settings(max_examples=100)
@given(separated_pairs(0.3, 5.0), vectors(), vectors(), vectors(), vectors())
def test_pairwise_matches_dipole_formulas(pair, d1, d2, m1, m2):
    r, rp = pair
    sites = [DipoleSite(r, d=d1, m=m1), DipoleSite(rp, d=d2, m=m2)]
    out = pairwise_dipole_energy(sites, FreeSpace())
    e_ref = dipole_pair_energy(d1, d2, r - rp)
    m_ref = dipole_pair_energy(m1, m2, r - rp)
    scale = (np.linalg.norm(d1) * np.linalg.norm(d2) + np.linalg.norm(m1) * np.linalg.norm(m2)
             ) / np.linalg.norm(r - rp) ** 3 + 1e-300
    assert abs(out.by_kind["ee"] - e_ref) < 1e-12 * scale
    assert abs(out.by_kind["mm"] - m_ref) < 1e-12 * scale
    assert out.by_kind["em"] == 0.0 and out.by_kind["me"] == 0.0


@settings(max_examples=100)
@given(separated_pairs(0.3, 5.0), vectors(), vectors(), rotations())
def test_pairwise_rotation_invariance(pair, d1, d2, rot):
    r, rp = pair
    e1 = pairwise_dipole_energy([DipoleSite(r, d=d1, m=d2), DipoleSite(rp, d=d2, m=d1)],
                                FreeSpace()).total
    e2 = pairwise_dipole_energy([DipoleSite(rot @ r, d=rot @ d1, m=rot @ d2),
                                 DipoleSite(rot @ rp, d=rot @ d2, m=rot @ d1)], FreeSpace()).total
    scale = 4 * np.linalg.norm(d1) * np.linalg.norm(d2) / np.linalg.norm(r - rp) ** 3 + 1e-300
    assert abs(e1 - e2) <= 1e-10 * scale


def test_pairwise_is_deterministic():
    rng = np.random.default_rng(7)
    sites = [DipoleSite(rng.normal(size=3) * 3, d=rng.normal(size=3), m=rng.normal(size=3))
             for _ in range(6)]
    a = pairwise_dipole_energy(sites, MirrorHalfSpace(z0=-20.0))
    b = pairwise_dipole_energy(sites, MirrorHalfSpace(z0=-20.0))
    assert a.total == b.total
    assert np.array_equal(a.pair_matrix, b.pair_matrix)


def test_mirror_cross_terms_zero_and_self_terms():
    sites = [DipoleSite([0, 0, 1.0], d=[0, 0, 1.0]), DipoleSite([0.5, 0, 1.0], d=[1.0, 0, 0])]
    out = pairwise_dipole_energy(sites, MirrorHalfSpace())
    assert abs(out.by_kind["em"]) < 1e-14 and abs(out.by_kind["me"]) < 1e-14
    # vertical dipole at height 1 and its image: -d . K . d with K = 2 / (4 pi (2)^3) / 2
    assert out.self_terms[0] == pytest.approx(-1 / (4 * np.pi * 8), rel=1e-12)


def test_duplicate_positions_rejected():
    with pytest.raises(CoincidentPoints):
        pairwise_dipole_energy([DipoleSite([0, 0, 0], d=[1, 0, 0]),
                                DipoleSite([0, 0, 0], d=[0, 1, 0])], FreeSpace())


def blob_grid(h, a=1.0, c=0.6, which="P"):
    origin, f = blob_field(h, a, c)
    return DensityGrid.regular(origin, h, **{which: f})


def test_single_blob_delta_convention_on_coarse_grid():
    ref = gaussian_blob_energy(1.0, 0.6)
    e = density_interaction_energy(blob_grid(0.4), FreeSpace())
    assert e.total == pytest.approx(ref, rel=1e-2)
    assert e.diagnostics["path"] == "fft"
    # without the 1/3 substitution the energy is visibly different
    raw = density_interaction_energy(blob_grid(0.4), FreeSpace(), smoothing=False)
    assert abs(raw.total - ref) > 0.1 * abs(ref)


def test_magnetization_grid_matches_polarization_grid():
    eP = density_interaction_energy(blob_grid(0.4), FreeSpace())
    eM = density_interaction_energy(blob_grid(0.4, which="M"), FreeSpace())
    assert eM.total == pytest.approx(eP.total, rel=1e-12)
    assert eM.by_kind["mm"] == eM.total


def test_fft_and_direct_paths_agree():
    origin, f = blob_field(0.5, 0.6, 0.6, ext=3.0)
    g = DensityGrid.regular(origin, 0.5, P=f, M=0.5 * f[..., ::-1])
    a = density_interaction_energy(g, FreeSpace(), path="fft")
    b = density_interaction_energy(g, FreeSpace(), path="direct")
    assert a.total == pytest.approx(b.total, rel=1e-11)
    with pytest.raises(ValidationError):
        density_interaction_energy(g, MirrorHalfSpace(z0=-50.0), path="fft")


def test_separated_blobs_approach_point_dipoles():
    h, s, R = 0.25, 0.4, 4.0
    axes = [np.arange(-8, 9) * h, np.arange(-8, 9) * h, np.arange(-8, 8 + int(R / h) + 1) * h]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")

    def blob(z0):
        f = np.zeros(X.shape + (3,))
        f[..., 2] = np.exp(-(X**2 + Y**2 + (Z - z0) ** 2) / (2 * s * s))
        return f

    origin = np.array([ax[0] for ax in axes])
    energies = [density_interaction_energy(DensityGrid.regular(origin, h, P=P), FreeSpace(),
                                           kinds=("ee",)).total
                for P in (blob(0.0) + blob(R), blob(0.0), blob(R))]
    inter = energies[0] - energies[1] - energies[2]
    # dipole moment of each blob on the lattice
    p = h**3 * blob(0.0)[..., 2].sum()
    ref = dipole_pair_energy(np.array([0, 0, p]), np.array([0, 0, p]), np.array([0, 0, R]))
    assert inter == pytest.approx(ref, rel=(s / R) ** 2)


def electron(position, z_unit_m=1e-9):
    # length unit 1 nm; electron mass in natural units with hbar = c = 1
    lam_nm = 2.42631023867e-12 / z_unit_m
    return DipoleSite(position, d=[0, 0, 0.0],
                      constituents=(Constituent(1.0, 2 * np.pi / lam_nm, [0.0, 0.0, 0.05]),))


def test_diamagnetic_electron_is_negligible():
    rep = diamagnetic_renormalization_dipole([electron([0, 0, 1.0])], MirrorHalfSpace())
    assert rep.ratio == pytest.approx(2.42631023867e-3, rel=1e-10)
    assert rep.negligible is True
    assert rep.energy_ratio < 1e-2
    assert np.all(np.isfinite(rep.omega))


def test_diamagnetic_zero_charge_and_vacuum():
    neutral = DipoleSite([0, 0, 1.0], constituents=(Constituent(0.0, 10.0, [0, 0, 0.1]),))
    assert diamagnetic_renormalization_dipole([neutral], MirrorHalfSpace()).energy == 0.0
    rep = diamagnetic_renormalization_dipole([electron([0, 0, 1.0])], FreeSpace(), distance=1.0)
    assert rep.energy == 0.0 and rep.negligible is True


def test_diamagnetic_ratio_linear_in_compton_wavelength():
    masses = np.array([50.0, 100.0, 200.0, 400.0])
    ratios = []
    for m in masses:
        site = DipoleSite([0, 0, 1.0], constituents=(Constituent(1.0, m, [0, 0, 0.1]),))
        ratios.append(diamagnetic_renormalization_dipole([site], FreeSpace(), distance=2.0).ratio)
    slope = np.polyfit(np.log(2 * np.pi / masses), np.log(ratios), 1)[0]
    assert slope == pytest.approx(1.0, abs=1e-12)


def two_level(vec):
    ops = np.zeros((3, 2, 2), dtype=complex)
    ops[np.argmax(np.abs(vec))] = SX
    return ops


def test_zero_kernels_leave_bare_hamiltonian():
    sites = [DipoleSite([0, 0, 0], d=two_level([0, 0, 1])),
             DipoleSite([0, 0, 1.0], d=two_level([0, 0, 1]))]
    h_le = [0.5 * SZ, 0.7 * SZ]
    zero = {(0, 1): {"ee": np.zeros((3, 3))}, (1, 0): {"ee": np.zeros((3, 3))}}
    H = effective_operator_matrix(sites, None, h_le=h_le, kernels=zero)
    assert_allclose(H, np.kron(0.5 * SZ, np.eye(2)) + np.kron(np.eye(2), 0.7 * SZ), atol=0)


def test_two_level_xx_coupling_block():
    R = 1.5
    sites = [DipoleSite([0, 0, 0], d=two_level([0, 0, 1])),
             DipoleSite([0, 0, R], d=two_level([0, 0, 1]))]
    H = effective_operator_matrix(sites, FreeSpace())
    # both orders of the pair contribute -lambda_zz sx sx with lambda_zz = 1 / (4 pi R^3)
    ref = -2 / (4 * np.pi * R**3) * np.kron(SX, SX)
    assert_allclose(H, ref, rtol=1e-13, atol=1e-16)


@settings(max_examples=100)
@given(dyadics(), dyadics())
def test_hermitian_for_exchange_symmetric_kernels(k, kmm):
    rng = np.random.default_rng(0)
    K = k.real
    sites = []
    for i in range(2):
        a = rng.normal(size=(3, 3, 3)) + 1j * rng.normal(size=(3, 3, 3))
        sites.append(DipoleSite([0, 0, float(i)], d=a + np.conj(np.swapaxes(a, -1, -2)),
                                m=a.conj() + np.swapaxes(a, -1, -2)))
    kernels = {(0, 1): {"ee": K, "mm": kmm.real}, (1, 0): {"ee": K.T, "mm": kmm.real.T}}
    H = effective_operator_matrix(sites, None, h_le=0.3, kernels=kernels)
    assert np.abs(H - H.conj().T).max() <= 1e-12 * max(1.0, np.abs(H).max())


def test_dimension_caps():
    big = np.zeros((3, 9, 9), dtype=complex)
    big[2] = np.eye(9)
    with pytest.raises(DimensionCap):
        effective_operator_matrix([DipoleSite([0, 0, 0], d=big)], None)
    ops = np.zeros((3, 8, 8), dtype=complex)
    sites = [DipoleSite([0, 0, float(i)], d=ops) for i in range(5)]
    with pytest.raises(DimensionCap):
        effective_operator_matrix(sites, None)


def test_site_validation():
    with pytest.raises(ValidationError):
        DipoleSite([0, 0, 0], d=np.array([[[0, 1j], [1j, 0]]] * 3))
    with pytest.raises(ValidationError):
        Constituent(1.0, 0.0, [0, 0, 1.0])
    with pytest.raises(ValidationError):
        DensityGrid(np.zeros((2, 3)), -1.0, None, None)
