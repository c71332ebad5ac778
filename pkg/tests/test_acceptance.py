"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here."""

import time
from importlib import resources

import numpy as np
import pytest
from conftest import LENGTH, STEEL, STRIP, cut, rel

from nlcb import IntegratorConfig, build_rom, classic_cb, clamped_beam, integrate, principal_angles
from nlcb.manifold import compute_manifold, quadratic_rhs
from nlcb.partition import partition_model
from nlcb.rom import reduced_force, reduced_layout, reduced_potential, symmetrize_trailing
from nlcb.scenario import (
    amplitude_at,
    full_modes,
    load_scenario,
    modal_amplitudes,
    rms_rel_err,
    run_variant,
    spectrum,
)
from nlcb.tint import ReducedSystem
from nlcb.verify import global_tensor_oracle, scaling_probe, static_condensation_oracle

REF_FREQS = (269.5, 742.8, 1456.8)
FREQ_TOL = 0.03
FREQ_RUNTIME_S = 5.0
ROM_FREQ_TOL = 0.01
ROM_RUNTIME_S = 30.0
OOP_RMS_TOL = 0.05
IP_RMS_TOL = 0.10
LINEAR_RATIO = 3.0
FORCED_RUNTIME_S = 300.0
HARMONIC_RATIO = 5.0
SPEEDUP = 10.0
BUILD_S = 60.0


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, detail


def scenario(name):
    return load_scenario(resources.files("nlcb") / "scenarios" / f"{name}.toml")


@pytest.fixture(scope="module")
def flat():
    scn = scenario("flat_beam")
    model = scn.model()
    f1 = float(full_modes(model, 1)[0][0])
    part = partition_model(model, scn.interface_nodes(model))
    start = time.perf_counter()
    runs = {v: run_variant(scn, model, v, f1, partition=part) for v in ("full", "linear", "nlcb")}
    for kind in ("quadratic", "quadratic-cross"):
        runs[kind] = run_variant(scn, model, "nlcb", f1, ablation=kind, partition=part)
    elapsed = time.perf_counter() - start
    return scn, model, runs, elapsed


@pytest.fixture(scope="module")
def curved():
    scn = scenario("curved_beam")
    model = scn.model()
    f1 = float(full_modes(model, 1)[0][0])
    part = partition_model(model, scn.interface_nodes(model))
    runs = {v: run_variant(scn, model, v, f1, partition=part) for v in ("full", "linear", "nlcb")}
    return scn, model, f1, runs


def _probe_errors(scn, model, runs, variant, direction):
    ref = runs["full"].displacement
    out = {}
    for label, dof in scn.probes(model).items():
        if label.endswith(f"_{direction}") and np.abs(ref[:, dof]).max() > 1e-9 * np.abs(ref).max():
            out[label] = rms_rel_err(runs[variant].displacement[:, dof], ref[:, dof])
    return out


def _fmt(errs):
    return ", ".join(f"{k}={v:.3f}" for k, v in errs.items())


def test_criterion_1_flat_beam_spectrum(capsys):
    start = time.perf_counter()
    model = clamped_beam(LENGTH, 200, STRIP, STEEL)
    f = full_modes(model, 3)[0]
    elapsed = time.perf_counter() - start
    err = np.abs(f - REF_FREQS) / REF_FREQS
    ok = bool(np.all(err <= FREQ_TOL) and elapsed < FREQ_RUNTIME_S)
    detail = " / ".join(f"{a:.2f} Hz ({100 * e:.2f}%)" for a, e in zip(f, err)) + f"; {elapsed:.2f} s"
    report(capsys, "criterion 1 flat-beam frequencies within 3%", ok, detail)


@pytest.mark.parametrize("name, n_modes, dim", [("flat_beam", 2, 5), ("curved_beam", 4, 11)])
def test_criterion_2_rom_modal_accuracy(capsys, name, n_modes, dim):
    scn = scenario(name)
    model = scn.model()
    start = time.perf_counter()
    rm = build_rom(partition_model(model, scn.interface_nodes(model)), scn.n_phi, scn.interface)[0]
    f_rom = rm.frequencies()[:n_modes]
    elapsed = time.perf_counter() - start
    f_full = full_modes(model, n_modes)[0]
    err = np.abs(f_rom - f_full) / f_full
    ok = bool(rm.m == dim and np.all(err <= ROM_FREQ_TOL) and elapsed < ROM_RUNTIME_S)
    detail = f"m={rm.m}, errors " + " / ".join(f"{100 * e:.3f}%" for e in err) + f"; {elapsed:.2f} s"
    report(capsys, f"criterion 2 {name} ROM frequencies within 1%", ok, detail)


def test_criterion_3a_out_of_plane_rms(capsys, flat):
    scn, model, runs, elapsed = flat
    errs = _probe_errors(scn, model, runs, "nlcb", "z")
    ok = max(errs.values()) <= OOP_RMS_TOL and elapsed < FORCED_RUNTIME_S
    report(capsys, "criterion 3a NL-CB out-of-plane RMS error <= 5%", ok, f"{_fmt(errs)}; {elapsed:.1f} s")


def test_criterion_3b_in_plane_rms(capsys, flat):
    scn, model, runs, _ = flat
    errs = _probe_errors(scn, model, runs, "nlcb", "x")
    ok = max(errs.values()) <= IP_RMS_TOL
    report(capsys, "criterion 3b NL-CB in-plane RMS error <= 10%", ok, _fmt(errs))


def test_criterion_3c_linear_model_much_worse(capsys, flat):
    scn, model, runs, _ = flat
    nl = _probe_errors(scn, model, runs, "nlcb", "z")
    lin = _probe_errors(scn, model, runs, "linear", "z")
    ratios = {k: lin[k] / nl[k] for k in nl}
    ok = min(ratios.values()) >= LINEAR_RATIO
    report(capsys, "criterion 3c linear RMS error >= 3x NL-CB", ok, _fmt(ratios))


def test_criterion_4_ablation_ordering(capsys, flat):
    scn, model, runs, _ = flat
    nl = _probe_errors(scn, model, runs, "nlcb", "z")
    zq = _probe_errors(scn, model, runs, "quadratic", "z")
    zc = _probe_errors(scn, model, runs, "quadratic-cross", "z")
    order = all(nl[k] < zq[k] and nl[k] < zc[k] for k in nl)
    dofs = [d for k, d in scn.probes(model).items() if k.endswith("_z")]
    peak_zero = np.abs(runs["quadratic"].displacement[:, dofs]).max()
    peak_full = np.abs(runs["full"].displacement[:, dofs]).max()
    ok = order and peak_zero < peak_full
    detail = (
        f"nlcb [{_fmt(nl)}] zero-quadratic [{_fmt(zq)}] zero-cross [{_fmt(zc)}]; "
        f"peak zero-quadratic {1e3 * peak_zero:.3f} mm < full {1e3 * peak_full:.3f} mm"
    )
    report(capsys, "criterion 4 ablation ordering and stiff zeroed response", ok, detail)


def test_criterion_5_second_harmonic(capsys, curved):
    scn, model, f1, runs = curved
    _, Phi = full_modes(model, 2)
    dt = scn.integrator(f1).dt
    amps = {}
    for v in ("nlcb", "full", "linear"):
        q2 = modal_amplitudes(model, Phi[:, 1:2], runs[v].displacement)[:, 0]
        freqs, amp = spectrum(q2, dt)
        amps[v] = amplitude_at(freqs, amp, 2 * f1)
    ratios = {v: amps[v] / amps["linear"] for v in ("nlcb", "full")}
    ok = min(ratios.values()) >= HARMONIC_RATIO
    detail = ", ".join(f"{v} {amps[v]:.3e} ({r:.0f}x)" for v, r in ratios.items()) + f", linear {amps['linear']:.3e}"
    report(capsys, "criterion 5 mode-2 peak at 2 f1 >= 5x linear", ok, detail)


@pytest.fixture(scope="module")
def small():
    model = clamped_beam(LENGTH, 16, STRIP, STEEL, rise=5e-3)
    part = cut(model, 0.6)
    rm, mans, _ = build_rom(part, 2)
    return model, part, rm, mans


def five_point(fn, h):
    """Central difference exact for quartic polynomials."""
    return (-fn(2 * h) + 8 * fn(h) - 8 * fn(-h) + fn(-2 * h)) / (12 * h)


def _probe_dir(rm, rng, scale=1e-3):
    xi = rng.standard_normal(rm.m)
    return xi * scale / np.abs(rm.load_map @ xi).max()


def test_criterion_6a_span_equivalence(capsys, small):
    _, part, _, mans = small
    worst = 0.0
    for sub, man in zip(part.substructures, mans):
        B = man.basis
        V = np.zeros_like(man.L_Gamma)
        V[: sub.n_u, : B.n_phi] = B.Phi
        V[: sub.n_u, B.n_phi :] = B.S @ B.Psi
        V[sub.n_u :, B.n_phi :] = B.Psi
        worst = max(worst, principal_angles(man.L_Gamma, V).max())
    report(capsys, "criterion 6a span equivalence, angles < 1e-8 rad", worst < 1e-8, f"max angle {worst:.2e}")


def test_criterion_6b_compatibility(capsys):
    worst = 0.0
    for cuts in ([0.5], [0.2, 0.7], [0.1, 0.4, 0.6, 0.9]):
        model = clamped_beam(LENGTH, 20, STRIP, STEEL, rise=2e-3)
        R = cut(model, *cuts).compatibility_residual()
        worst = max(worst, abs(R).max() if R.nnz else 0.0)
    report(capsys, "criterion 6b sum B L = 0 exactly", worst == 0.0, f"max |sum B L| = {worst}")


def test_criterion_6c_potential_gradient(capsys, small, rng):
    _, _, rm, _ = small
    worst = 0.0
    for _ in range(10):
        xi, v = _probe_dir(rm, rng), _probe_dir(rm, rng)
        fd = five_point(lambda s: reduced_potential(rm, xi + s * v), 1e-2)
        worst = max(worst, abs(fd - reduced_force(rm, xi) @ v) / abs(fd))
    report(capsys, "criterion 6c grad V_r = reduced force to 1e-9", worst < 1e-9, f"max relative mismatch {worst:.2e}")


def test_criterion_6d_truncation_and_orthogonality(capsys, small, rng):
    model, part, rm, mans = small

    def err(xi):
        return rm.load_map.T @ model.kernel.force(rm.reconstruct(xi)) - reduced_force(rm, xi)

    slope = scaling_probe(err, np.array([_probe_dir(rm, rng) for _ in range(3)]), (1e-2, 1.0), n=6)
    cross = 0.0
    for sub, man in zip(part.substructures, mans):
        KQ = sub.operators[1] @ man.Q_Gamma.reshape(sub.n, -1)
        scale = np.abs(man.L_Gamma).sum(axis=0).max() * np.abs(KQ).max()
        cross = max(cross, np.abs(man.L_Gamma.T @ KQ).max() / scale)
    ok = slope >= 3.9 and cross < 1e-10
    report(capsys, "criterion 6d truncation slope >= 3.9, L^T K Q = 0", ok, f"slope {slope:.3f}, |L^T K Q| {cross:.1e}")


def test_criterion_6e_element_level_projection(capsys, small):
    model, _, rm, _ = small
    K2, K3 = global_tensor_oracle(model, max_dofs=50)
    V, Q = rm.load_map, rm.quad_map
    K2_ref = np.einsum("abc,ai,bj,ck->ijk", K2, V, V, V, optimize=True)
    cross = np.einsum("abc,ai,bj,ckl->ijkl", K2, V, V, Q, optimize=True)
    K3_ref = symmetrize_trailing(2 * cross + np.einsum("abcd,ai,bj,ck,dl->ijkl", K3, V, V, V, V, optimize=True))
    e2, e3 = rel(rm.K2_r, K2_ref), rel(rm.K3_r, K3_ref)
    ok = model.n_dofs <= 50 and max(e2, e3) < 1e-10
    report(capsys, "criterion 6e element-level = global projection", ok, f"{model.n_dofs} DoFs, K2 {e2:.1e}, K3 {e3:.1e}")


def test_criterion_6f_manifold_taylor_accuracy(capsys, rng):
    model = clamped_beam(LENGTH, 40, STRIP, STEEL, rise=5e-3)
    part = cut(model, 0.6)
    layout = reduced_layout(part, 2)
    slopes = []
    for sub, Psi in zip(part.substructures, layout.Psi):
        man = compute_manifold(sub, 2, Psi)
        B = man.basis
        for _ in range(2):
            xi = rng.standard_normal(man.m)
            xi *= STRIP.thickness / np.abs(man.L_Gamma @ xi).max()

            def err(x):
                ref = static_condensation_oracle(sub, x[: man.n_phi], x[man.n_phi :], B.Phi, B.Psi)
                return ref - man.displacement(x)

            slopes.append(scaling_probe(err, xi, (1e-3, 1e-1), n=5))
    report(capsys, "criterion 6f manifold Taylor slope >= 2.9", min(slopes) >= 2.9, f"min slope {min(slopes):.3f}")


def test_criterion_6g_exact_vs_fd_rhs(capsys, small):
    _, part, _, mans = small
    worst = 0.0
    for sub, man in zip(part.substructures, mans):
        F_ex, _ = quadratic_rhs(sub, man.L_Gamma, man.n_phi, "exact")
        F_fd, _ = quadratic_rhs(sub, man.L_Gamma, man.n_phi, "fd")
        worst = max(worst, max(rel(F_fd[:, c], F_ex[:, c]) for c in range(F_ex.shape[1])))
    report(capsys, "criterion 6g exact vs FD RHS within 1e-6", worst < 1e-6, f"max relative difference {worst:.1e}")


def test_criterion_6h_energy_drift(capsys, small, rng):
    _, _, rm, _ = small
    rm = type(rm)(**{**vars(rm), "D_r": np.zeros_like(rm.D_r)})
    f = rm.frequencies()
    # 20 steps per period of the fastest reduced mode
    cfg = IntegratorConfig(dt=1 / (20 * f.max()), t_end=10 / f.min(), newton_tol=1e-10)
    h = integrate(ReducedSystem(rm), cfg, x0=_probe_dir(rm, rng, scale=2e-4))
    drift = np.abs(h.energy / h.energy[0] - 1).max()
    report(capsys, "criterion 6h undamped energy drift < 1e-4 over 10 periods", drift < 1e-4, f"drift {drift:.1e}")


def test_criterion_7_performance(capsys, flat):
    _, _, runs, _ = flat
    t_full = runs["full"].integrate_s
    t_rom = runs["nlcb"].integrate_s
    build = runs["nlcb"].build_s
    ok = t_full >= SPEEDUP * t_rom and build < BUILD_S and runs["full"].displacement.shape[1] >= 500
    detail = f"full {t_full:.2f} s, ROM {t_rom:.3f} s ({t_full / t_rom:.1f}x), ROM build {build:.2f} s"
    report(capsys, "criterion 7 ROM integration >= 10x faster, build < 60 s", ok, detail)
