import numpy as np
import pytest
from numpy.testing import assert_allclose

from cavity_kernels.errors import CoincidentPoints, ValidationError
from cavity_kernels.greens import FreeSpace, MirrorHalfSpace, SyntheticNonreciprocal, static_limits
from cavity_kernels.couplings import lambda_kernel
from cavity_kernels.mode_sum import ModeFamilyGreens, planar_cavity_modes
from cavity_kernels.spectral import (ContourSpec, contour_integral, contour_integral_fn,
                                     diamagnetic_omega_spectral, diamagnetic_ratio,
                                     free_space_omega_closed_form, lambda_spectral,
                                     residue_decomposition)
from cavity_kernels.tensor_core import two_sided_curl

I3 = np.eye(3)
N_DIR = np.array([0.36, 0.48, 0.8])


def pair(R, base=(0.1, 0.2, 0.6)):
    r = np.array(base)
    return r, r + R * N_DIR


def test_contour_spec_validation():
    with pytest.raises(ValidationError):
        ContourSpec(eta=1.0, rho=0.5)
    with pytest.raises(ValidationError):
        ContourSpec(eta=0.1, rho=1.0, n_points=8)
    with pytest.raises(ValidationError):
        ContourSpec(eta=0.1, rho=1.0, integrand_kind="nope")


def test_residue_theorem_negative_control():
    w0 = 1.0 + 0.5j
    val, _ = contour_integral_fn(lambda w: I3 / (w - w0), ContourSpec(1e-3, 10.0))
    assert_allclose(val, 2j * np.pi * I3, rtol=0, atol=1e-6)


@pytest.mark.parametrize("kind", ["wG", "G_curl", "curl_G", "curlGcurl/w"])
def test_free_space_closure_and_rho_doubling(kind):
    r, rp = pair(1.0)
    p = FreeSpace()
    val, scale = contour_integral(p, ContourSpec(1e-3, 50.0, integrand_kind=kind), r, rp)
    assert np.abs(val).max() < 1e-6 * scale
    a = residue_decomposition(p, ContourSpec(1e-3, 50.0, integrand_kind=kind), r, rp,
                              real_axis_limit=False)
    b = residue_decomposition(p, ContourSpec(1e-3, 100.0, integrand_kind=kind), r, rp,
                              real_axis_limit=False)
    # real axis plus large arc balances the small arc for every rho
    bal_a = a["real_axis"] + a["large_arc"]
    bal_b = b["real_axis"] + b["large_arc"]
    assert_allclose(bal_a, bal_b, rtol=0, atol=1e-6 * max(a["scale"], b["scale"]))


@pytest.mark.parametrize("p", [FreeSpace(), MirrorHalfSpace()], ids=["free", "mirror"])
@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_contour_identities(p, R):
    r, rp = pair(R)
    sl = static_limits(p, r, rp)
    d = residue_decomposition(p, ContourSpec(1e-4 / R, 50 / R, integrand_kind="wG"), r, rp)
    ref = 1j * np.pi * sl.w2G
    assert_allclose(d["real_axis_limit"], ref, rtol=0, atol=1e-5 * np.abs(ref).max())
    assert_allclose(d["small_arc"], ref, rtol=0, atol=1e-5 * np.abs(ref).max())
    assert np.abs(d["closure"]).max() < 1e-6 * d["scale"]
    d = residue_decomposition(p, ContourSpec(1e-4 / R, 50 / R, integrand_kind="curlGcurl/w"),
                              r, rp)
    ref = 0.5j * np.pi * two_sided_curl(p.static_fields()["d2_w2G"], r, rp)
    assert_allclose(d["real_axis_limit"], ref, rtol=0, atol=1e-5 * np.abs(ref).max())


@pytest.mark.parametrize("kind", ["ee", "mm"])
def test_spectral_route_matches_closed_form(kind):
    r, rp = pair(0.8)
    for p in (FreeSpace(), MirrorHalfSpace()):
        ref = lambda_kernel(p, kind, r, rp).regular
        out = lambda_spectral(p, kind, r, rp)
        assert out.route == "spectral"
        assert_allclose(out.regular, ref, rtol=0, atol=1e-7 * np.abs(ref).max())


def test_reciprocal_cross_kernels_vanish_spectrally():
    r, rp = pair(0.8)
    for kind in ("em", "me"):
        assert np.abs(lambda_spectral(MirrorHalfSpace(), kind, r, rp).regular).max() < 1e-10


def test_synthetic_cross_kernels_route_equivalence():
    p = SyntheticNonreciprocal((0.02, -0.03, 0.05))
    r, rp = pair(0.8)
    for kind in ("em", "me"):
        ref = lambda_kernel(p, kind, r, rp).regular
        assert_allclose(lambda_spectral(p, kind, r, rp).regular, ref, rtol=0,
                        atol=1e-6 * np.abs(ref).max())


def test_spectral_requires_distinct_points():
    with pytest.raises(CoincidentPoints):
        lambda_spectral(FreeSpace(), "ee", np.zeros(3), np.zeros(3))


def test_free_space_omega_closed_form_and_scaling():
    vals = []
    Rs = (0.5, 1.0, 2.0)
    for R in Rs:
        r, rp = pair(R)
        om, err = diamagnetic_omega_spectral(FreeSpace(), r, rp)
        ref = free_space_omega_closed_form(r, rp)
        assert_allclose(om, ref, rtol=0, atol=1e-5 * np.abs(ref).max())
        vals.append(abs(om[2, 2]))
    slope = np.polyfit(np.log(Rs), np.log(vals), 1)[0]
    assert abs(slope + 4) < 0.01


def test_mirror_omega_exchange_symmetry():
    p = MirrorHalfSpace()
    r, rp = pair(0.7)
    a, _ = diamagnetic_omega_spectral(p, r, rp)
    b, _ = diamagnetic_omega_spectral(p, rp, r)
    assert_allclose(a, b.T, rtol=0, atol=1e-8 * np.abs(a).max())


def lorentzian_weight(w0, gamma):
    """Integral over w > 0 of the normalized spectral weight of one damped mode."""
    a = w0**2 - gamma**2 / 2
    b = np.sqrt(w0**2 * gamma**2 - gamma**4 / 4)
    return (2 * w0) * (gamma / 2) / b * (np.pi - np.arctan(b / a)) / np.pi


def test_mode_family_omega_matches_mode_sum():
    f = planar_cavity_modes(1.0)
    N, gamma = 4, 1e-3
    r, rp = np.array([0.1, -0.2, 0.3]), np.array([0.1, -0.2, 0.55])
    om, _ = diamagnetic_omega_spectral(ModeFamilyGreens(f, N, gamma), r, rp,
                                       omega_max=2000.0, damping_eta=0)
    ns = np.arange(1, N + 1)
    B, Bp = f.b_fields(ns, r), f.b_fields(ns, rp)
    terms = np.real(B[:, :, None] * np.conj(Bp[:, None, :]))
    wt = np.array([lorentzian_weight(w, gamma) for w in f.omegas(ns)])
    assert_allclose(om, np.tensordot(wt, terms, 1), rtol=0, atol=1e-8)
    # gamma -> 0 leaves a relative O(gamma / (pi w)) difference
    assert_allclose(om, terms.sum(0), rtol=0, atol=gamma * np.abs(terms.sum(0)).max())


def test_undamped_needs_cutoff():
    with pytest.raises(ValidationError):
        diamagnetic_omega_spectral(FreeSpace(), *pair(1.0), damping_eta=0)


def test_diamagnetic_ratio_examples():
    assert diamagnetic_ratio(1e-12, 1e-9) == 1e-3
    assert diamagnetic_ratio(2.5, 2.5) == 1.0
    assert diamagnetic_ratio(2.43e-12, 10e-9) == pytest.approx(2.43e-4, rel=1e-14)
    with pytest.raises(ValidationError):
        diamagnetic_ratio(-1.0, 1.0)
