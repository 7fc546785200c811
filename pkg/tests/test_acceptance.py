"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even without ``-s``.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_kernels.couplings import lambda_em, lambda_kernel, lambda_me
from cavity_kernels.greens import FreeSpace, MirrorHalfSpace, SyntheticNonreciprocal, static_limits
from cavity_kernels.hamiltonian import (Constituent, DensityGrid, DipoleSite,
                                        density_interaction_energy,
                                        diamagnetic_renormalization_dipole,
                                        effective_operator_matrix)
from cavity_kernels.mode_sum import lambda_modesum, planar_cavity_modes, planar_closed_form
from cavity_kernels.oracle_exact import OscillatorModel, effective_vs_exact_sweep
from cavity_kernels.spectral import ContourSpec, diamagnetic_ratio, residue_decomposition
from cavity_kernels.tensor_core import two_sided_curl

from conftest import dyadics, rotations, separated_pairs
from oracles import blob_field, gaussian_blob_energy

I3 = np.eye(3)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def random_pairs(n, seed, lo=0.1, hi=10.0):
    rng = np.random.default_rng(seed)
    R = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    r = rng.uniform(-1, 1, (n, 3))
    return r, r + R[:, None] * u


def dipolar(r, rp):
    R = r - rp
    d = np.linalg.norm(R)
    n = R / d
    return (3 * np.outer(n, n) - I3) / (4 * np.pi * d**3)


def max_rel(a, ref):
    return float(np.abs(a - ref).max() / np.abs(ref).max())


def test_criterion_1_free_ee(capsys):
    r, rp = random_pairs(50, 1)
    t = time.perf_counter()
    errs = [max_rel(lambda_kernel(FreeSpace(), "ee", a, b, method="fd").regular,
                    0.5 * dipolar(a, b)) for a, b in zip(r, rp)]
    dt = time.perf_counter() - t
    report(capsys, 1, max(errs) < 1e-7 and dt < 5,
           f"max rel err {max(errs):.2e} (tol 1e-7), {dt:.2f} s (limit 5 s)")


def test_criterion_2_free_mm(capsys):
    r, rp = random_pairs(50, 2)
    t = time.perf_counter()
    errs = [max_rel(lambda_kernel(FreeSpace(), "mm", a, b, method="fd").regular,
                    0.5 * dipolar(a, b)) for a, b in zip(r, rp)]
    dt = time.perf_counter() - t
    report(capsys, 2, max(errs) < 1e-5 and dt < 10,
           f"max rel err {max(errs):.2e} (tol 1e-5), {dt:.2f} s (limit 10 s)")


def test_criterion_3_reciprocity_annihilation(capsys):
    ax = np.linspace(-1.0, 1.0, 5)
    X, Y, Z = np.meshgrid(ax, ax, np.linspace(0.2, 1.8, 5), indexing="ij")
    r = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
    rp = np.broadcast_to([0.13, -0.27, 0.91], r.shape)
    worst = 0.0
    for p in (FreeSpace(), MirrorHalfSpace()):
        for fn in (lambda_em, lambda_me):
            worst = max(worst, float(np.abs(fn(p, r, rp).regular).max()))
    report(capsys, 3, worst < 1e-10, f"max |lambda_em|, |lambda_me| = {worst:.2e} (tol 1e-10)")


def test_criterion_4_contour_identities(capsys):
    p = FreeSpace()
    n = np.array([0.36, 0.48, 0.8])
    t = time.perf_counter()
    errs, closures = [], []
    for R in (0.5, 1.0, 2.0):
        r, rp = np.array([0.1, 0.2, 0.6]), np.array([0.1, 0.2, 0.6]) + R * n
        d = residue_decomposition(p, ContourSpec(1e-4 / R, 50 / R, integrand_kind="wG"), r, rp)
        ref = 1j * np.pi * static_limits(p, r, rp).w2G
        errs.append(max_rel(d["real_axis_limit"], ref))
        closures.append(float(np.abs(d["closure"]).max() / d["scale"]))
        d = residue_decomposition(p, ContourSpec(1e-4 / R, 50 / R, integrand_kind="curlGcurl/w"),
                                  r, rp)
        ref = 0.5j * np.pi * two_sided_curl(p.static_fields()["d2_w2G"], r, rp)
        errs.append(max_rel(d["real_axis_limit"], ref))
        closures.append(float(np.abs(d["closure"]).max() / d["scale"]))
    dt = time.perf_counter() - t
    ok = max(errs) < 1e-5 and max(closures) < 1e-6 and dt < 60
    report(capsys, 4, ok, f"max rel err {max(errs):.2e} (tol 1e-5), closure {max(closures):.2e} "
                          f"(tol 1e-6), {dt:.1f} s (limit 60 s)")


def test_criterion_5_mode_sum(capsys):
    L = 1.0
    rng = np.random.default_rng(5)
    z, zp = rng.uniform(0.05, 0.95, 10), rng.uniform(0.05, 0.95, 10)
    xy = rng.uniform(-0.5, 0.5, (10, 2))
    r = np.column_stack([xy, z])
    rp = np.column_stack([xy, zp])
    t = time.perf_counter()
    out = lambda_modesum(planar_cavity_modes(L), "ee", r, rp, 10_000)
    dt = time.perf_counter() - t
    boxed = np.minimum(z, zp) * (L - np.maximum(z, zp)) / L
    err = float(np.max(np.abs(out.regular[:, 0, 0] - boxed) / boxed))
    assert np.allclose(boxed, planar_closed_form("ee", z, zp, L)[:, 0, 0], rtol=1e-14)
    report(capsys, 5, err < 1e-3 and dt < 30,
           f"max rel err {err:.2e} at N = 1e4 (tol 1e-3), {dt:.2f} s (limit 30 s)")


def test_criterion_6_delta_factors(capsys):
    a, c = 1.0, 0.6
    ref = gaussian_blob_energy(a, c)
    hs = np.array([0.4, 0.3, 0.24, 0.2, 0.16])
    lines, ok = [], True
    for which, label in (("P", "electric 1/3"), ("M", "magnetic 2/3")):
        errs = []
        for h in hs:
            origin, f = blob_field(h, a, c)
            e = density_interaction_energy(DensityGrid.regular(origin, h, **{which: f}),
                                           FreeSpace()).total
            errs.append(abs(e - ref))
        order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        ok &= order >= 1.9
        lines.append(f"{label}: order {order:.3f}, finest rel err {errs[-1] / abs(ref):.1e}")
    report(capsys, 6, ok, "; ".join(lines) + " (order >= 1.9)")


ORACLE_CASES = {
    "1 matter x 1 mode": (OscillatorModel((0.1,), (1.0,), [[0.02]], 20), 4096),
    "1 matter x 2 modes": (OscillatorModel((0.1,), (1.0, 1.4), [[0.02, 0.015]], 20), 8000),
    "2 matter x 1 mode": (OscillatorModel((0.1, 0.13), (1.0,), [[0.02], [0.015]], 20), 8000),
    # n_max 20 would need dimension 1.6e5; n_max 8 agrees with n_max 11 to 1e-3
    "2 matter x 2 modes": (OscillatorModel((0.1, 0.13), (1.0, 1.4),
                                           [[0.02, 0.01], [0.015, 0.02]], 8), 4096),
}


def test_criterion_7_oracle_convergence(capsys):
    t = time.perf_counter()
    ok, parts = True, []
    for name, (m, cap) in ORACLE_CASES.items():
        tab = effective_vs_exact_sweep(m, ratio_list=(0.2, 0.1, 0.05, 0.025), cap=cap)
        factor = tab.deviations[0] / tab.deviations[-1]
        ok &= tab.monotone and factor >= 10
        parts.append(f"{name}: x{factor:.0f}{'' if tab.monotone else ' non-monotone'}")
    dt = time.perf_counter() - t
    ok &= dt < 300
    report(capsys, 7, ok, "; ".join(parts) + f" (factor >= 10), {dt:.1f} s (limit 300 s)")


def test_criterion_8_diamagnetic_magnitude(capsys):
    ratio = diamagnetic_ratio(1e-12, 1e-9)
    # length unit 1 nm, constituent Compton wavelength 1e-12 m
    site = DipoleSite([0, 0, 1.0], constituents=(Constituent(1.0, 2 * np.pi / 1e-3,
                                                             [0.0, 0.0, 0.05]),))
    rep = diamagnetic_renormalization_dipole([site], MirrorHalfSpace())
    ok = ratio == 1e-3 and rep.negligible is True and rep.ratio == pytest.approx(1e-3, rel=1e-12)
    report(capsys, 8, ok, f"ratio {ratio!r}, report ratio {rep.ratio:.6g}, "
                          f"negligible={rep.negligible}")


def test_criterion_9_invariant_suites(capsys):
    counts = {}
    failures = []

    def tally(name):
        counts[name] = counts.get(name, 0) + 1

    providers = [FreeSpace(), MirrorHalfSpace(), SyntheticNonreciprocal((0.03, -0.05, 0.07))]

    def lift(r, rp):
        s = max(0.2 - min(r[2], rp[2]), 0.0)
        return r + [0, 0, s], rp + [0, 0, s]

    @settings(max_examples=300)
    @given(separated_pairs(0.1, 5.0), st.floats(0.05, 5.0), st.integers(0, 2))
    def schwarz(pair, w, k):
        tally("Schwarz reflection")
        r, rp = lift(*pair)
        g = providers[k].G(r, rp, w)
        np.testing.assert_allclose(providers[k].G(r, rp, -w), np.conj(g), rtol=1e-12,
                                   atol=1e-14 * np.abs(g).max())

    @settings(max_examples=300)
    @given(separated_pairs(0.1, 10.0), st.sampled_from(["ee", "mm"]), st.integers(0, 1))
    def symmetry(pair, kind, k):
        tally("exchange symmetry")
        r, rp = lift(*pair)
        a = lambda_kernel(providers[k], kind, r, rp).regular
        b = lambda_kernel(providers[k], kind, rp, r).regular
        np.testing.assert_allclose(a, b.T, rtol=0, atol=1e-12 * np.abs(a).max())

    @settings(max_examples=200)
    @given(separated_pairs(0.1, 10.0), rotations())
    def covariance(pair, rot):
        tally("rotation covariance")
        r, rp = pair
        for kind in ("ee", "mm"):
            a = lambda_kernel(FreeSpace(), kind, r, rp).regular
            b = lambda_kernel(FreeSpace(), kind, rot @ r, rot @ rp).regular
            np.testing.assert_allclose(b, rot @ a @ rot.T, rtol=0, atol=1e-12 * np.abs(a).max())

    ops = np.zeros((3, 2, 2), dtype=complex)
    ops[2] = [[0, 1], [1, 0]]
    sites = [DipoleSite([0, 0, 0.0], d=ops, m=ops), DipoleSite([0, 0, 1.0], d=ops, m=ops)]

    @settings(max_examples=200)
    @given(dyadics(), dyadics())
    def hermiticity(k, kmm):
        tally("Hermiticity")
        K, Km = k.real, kmm.real
        kernels = {(0, 1): {"ee": K, "mm": Km}, (1, 0): {"ee": K.T, "mm": Km.T}}
        H = effective_operator_matrix(sites, None, h_le=0.3, kernels=kernels)
        assert np.abs(H - H.conj().T).max() <= 1e-12 * max(1.0, np.abs(H).max())

    @settings(max_examples=100)
    @given(separated_pairs(0.1, 10.0), st.sampled_from(["ee", "mm", "em", "me"]))
    def determinism(pair, kind):
        tally("determinism")
        r, rp = lift(*pair)
        a = lambda_kernel(MirrorHalfSpace(), kind, r, rp).regular
        b = lambda_kernel(MirrorHalfSpace(), kind, r, rp).regular
        assert a.tobytes() == b.tobytes()

    t = time.perf_counter()
    for suite in (schwarz, symmetry, covariance, hermiticity, determinism):
        try:
            suite()
        except Exception as exc:  # noqa: BLE001 - reported below
            failures.append(f"{suite.__name__}: {type(exc).__name__}")
    dt = time.perf_counter() - t
    total = sum(counts.values())
    detail = ", ".join(f"{k} {v}" for k, v in counts.items())
    report(capsys, 9, not failures and total >= 1000,
           f"{total} cases ({detail}), {len(failures)} failing suites {failures}, {dt:.1f} s")
