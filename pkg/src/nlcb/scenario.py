"""Declarative scenarios: config parsing, model set-up and variant runs."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla
import tomli

from .fe import AXIAL, ROTATION, TRANSVERSE, Material, Model, Section, assemble_global, clamped_beam
from .partition import partition_model
from .rom import build_rom, classic_cb
from .tint import FullOrderSystem, IntegratorConfig, ReducedSystem, integrate

VARIANTS = ("full", "linear", "nlcb", "cb")
TIME_FUNCTIONS = ("sine", "cosine", "constant", "tabulated")
DIRECTIONS = {"x": AXIAL, "z": TRANSVERSE, "theta": ROTATION}


class ScenarioError(ValueError):
    """Invalid scenario file; the message names the offending field."""


_SCHEMA = {
    "geometry": {"length": float, "width": float, "thickness": float, "n_elements": int, "rise": float},
    "material": {"E": float, "rho": float, "nu": float, "rayleigh": list},
    "partition": {"cuts": list},
    "reduction": {"n_phi": (int, list), "interface": str, "method": str},
    "load": {
        "kind": str,
        "magnitude": float,
        "position": float,
        "direction": str,
        "time": str,
        "frequency": (str, float),
        "table": list,
    },
    "integration": {"dt": float, "cycles": float, "t_end": float, "newton_tol": float, "max_iter": int},
    "outputs": {"probes": list, "directions": list, "variants": list, "report_modes": int, "spectrum_modes": list},
}
_REQUIRED = {
    "geometry": ("length", "width", "thickness", "n_elements"),
    "material": ("E", "rho"),
    "load": ("kind", "magnitude", "time"),
    "integration": ("dt",),
}


def _check_types(raw):
    for section, body in raw.items():
        if section == "name":
            continue
        if section not in _SCHEMA:
            raise ScenarioError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ScenarioError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ScenarioError(f"[{section}].{key}: unknown field")
            want = _SCHEMA[section][key]
            want = want if isinstance(want, tuple) else (want,)
            ok = any(
                isinstance(value, (int, float)) and not isinstance(value, bool) if w is float else isinstance(value, w)
                for w in want
            )
            if not ok:
                names = " or ".join(w.__name__ for w in want)
                raise ScenarioError(f"[{section}].{key}: expected {names}, got {type(value).__name__}")
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in raw.get(section, {}):
                raise ScenarioError(f"[{section}].{key}: required field missing")


@dataclass
class Scenario:
    """Validated scenario; ``raw`` keeps the parsed tables for the manifest."""

    name: str
    raw: dict

    def section(self, name):
        return self.raw.get(name, {})

    @classmethod
    def from_dict(cls, raw, name="scenario"):
        _check_types(raw)
        scn = cls(name=str(raw.get("name", name)), raw=raw)
        scn._validate()
        return scn

    def _validate(self):
        g = self.section("geometry")
        for key in ("length", "width", "thickness"):
            if g[key] <= 0:
                raise ScenarioError(f"[geometry].{key}: must be positive")
        if g["n_elements"] < 2:
            raise ScenarioError("[geometry].n_elements: need at least 2 elements")
        m = self.section("material")
        if m["E"] <= 0 or m["rho"] <= 0:
            raise ScenarioError("[material]: E and rho must be positive")
        if len(m.get("rayleigh", [0.0, 0.0])) != 2:
            raise ScenarioError("[material].rayleigh: expected [alpha, beta]")
        for c in self.section("partition").get("cuts", []):
            if not 0 < c < 1:
                raise ScenarioError(f"[partition].cuts: {c} is not a fraction of the length in (0, 1)")
        r = self.section("reduction")
        if r.get("interface", "virtual_node") not in ("virtual_node", "identity"):
            raise ScenarioError("[reduction].interface: expected 'virtual_node' or 'identity'")
        if r.get("method", "exact") not in ("exact", "fd"):
            raise ScenarioError("[reduction].method: expected 'exact' or 'fd'")
        ld = self.section("load")
        if ld["kind"] not in ("pressure", "nodal"):
            raise ScenarioError("[load].kind: expected 'pressure' or 'nodal'")
        if ld["time"] not in TIME_FUNCTIONS:
            raise ScenarioError(f"[load].time: expected one of {TIME_FUNCTIONS}")
        if ld["kind"] == "nodal" and "position" not in ld:
            raise ScenarioError("[load].position: required for nodal loads")
        if ld.get("direction", "z") not in DIRECTIONS:
            raise ScenarioError(f"[load].direction: expected one of {tuple(DIRECTIONS)}")
        freq = ld.get("frequency", "f1")
        if ld["time"] in ("sine", "cosine"):
            if isinstance(freq, str) and freq != "f1":
                raise ScenarioError("[load].frequency: expected a number in Hz or 'f1'")
        if ld["time"] == "tabulated":
            table = np.asarray(ld.get("table", []), dtype=float)
            if table.ndim != 2 or table.shape[1] != 2 or len(table) < 2 or np.any(np.diff(table[:, 0]) <= 0):
                raise ScenarioError("[load].table: expected increasing [[t, value], ...] rows")
        it = self.section("integration")
        if it["dt"] <= 0:
            raise ScenarioError("[integration].dt: must be positive")
        if ("cycles" in it) == ("t_end" in it):
            raise ScenarioError("[integration]: give exactly one of cycles or t_end")
        out = self.section("outputs")
        for v in out.get("variants", []):
            if v not in VARIANTS:
                raise ScenarioError(f"[outputs].variants: unknown variant {v!r}")
        for d in out.get("directions", []):
            if d not in DIRECTIONS:
                raise ScenarioError(f"[outputs].directions: unknown direction {d!r}")

    # model set-up

    def model(self) -> Model:
        g, m = self.section("geometry"), self.section("material")
        return clamped_beam(
            g["length"],
            g["n_elements"],
            Section(g["width"], g["thickness"]),
            Material(m["E"], m["rho"], m.get("nu", 0.3)),
            rise=g.get("rise", 0.0),
            rayleigh=tuple(m.get("rayleigh", (0.0, 0.0))),
            name=self.name,
        )

    def interface_nodes(self, model):
        length = self.section("geometry")["length"]
        return [model.node_at(c * length) for c in self.section("partition").get("cuts", [])]

    @property
    def n_phi(self):
        return self.section("reduction").get("n_phi", 1)

    @property
    def interface(self):
        return self.section("reduction").get("interface", "virtual_node")

    @property
    def method(self):
        return self.section("reduction").get("method", "exact")

    def spatial_load(self, model):
        ld = self.section("load")
        if ld["kind"] == "pressure":
            return model.pressure_load(ld["magnitude"])
        node = model.node_at(ld["position"] * self.section("geometry")["length"])
        return model.nodal_load(node, DIRECTIONS[ld.get("direction", "z")], ld["magnitude"])

    def forcing_frequency(self, f1):
        freq = self.section("load").get("frequency", "f1")
        return f1 if freq == "f1" else float(freq)

    def time_function(self, f1):
        ld = self.section("load")
        kind = ld["time"]
        if kind == "constant":
            return lambda t: 1.0
        if kind == "tabulated":
            table = np.asarray(ld["table"], dtype=float)
            return lambda t: float(np.interp(t, table[:, 0], table[:, 1]))
        w = 2.0 * np.pi * self.forcing_frequency(f1)
        return (lambda t: np.sin(w * t)) if kind == "sine" else (lambda t: np.cos(w * t))

    def integrator(self, f1):
        it = self.section("integration")
        t_end = it["t_end"] if "t_end" in it else it["cycles"] / self.forcing_frequency(f1)
        return IntegratorConfig(
            dt=it["dt"],
            t_end=t_end,
            newton_tol=it.get("newton_tol", 1e-6),
            max_iter=it.get("max_iter", 20),
        )

    def probes(self, model):
        """``{label: free DoF}`` from the configured abscissae and directions."""
        out = self.section("outputs")
        length = self.section("geometry")["length"]
        probes = {}
        for frac in out.get("probes", [0.25, 0.5, 0.6]):
            node = model.node_at(frac * length)
            for d in out.get("directions", ["z", "x"]):
                dof = model.dof(node, DIRECTIONS[d])
                if dof >= 0:
                    probes[f"x{frac:g}l_{d}"] = dof
        return probes


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    try:
        return Scenario.from_dict(raw, name=path.stem)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def parse_probe(text, model):
    """``node:dof`` with ``dof`` an index or one of ``x``, ``z``, ``theta``."""
    try:
        node_s, dof_s = text.split(":")
        node = int(node_s)
        local = DIRECTIONS[dof_s] if dof_s in DIRECTIONS else int(dof_s)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"probe {text!r}: expected node:dof") from exc
    if not 0 <= node < model.n_nodes or local not in (0, 1, 2):
        raise ScenarioError(f"probe {text!r}: node or DoF out of range")
    dof = model.dof(node, local)
    if dof < 0:
        raise ScenarioError(f"probe {text!r}: DoF is constrained")
    return f"n{node}_{text.split(':')[1]}", dof


# modal tools


def full_modes(model, k):
    """Lowest ``k`` mass-normalized vibration modes ``(freq_hz, Phi)``."""
    M, K, _, _ = assemble_global(model)
    # fixed start vector keeps reruns bit-identical
    v0 = np.ones(K.shape[0])
    lam, Phi = spla.eigsh(K.tocsc(), k=k, M=M.tocsc(), sigma=0.0, v0=v0)
    order = np.argsort(lam)
    lam, Phi = lam[order], Phi[:, order]
    Phi = Phi / np.sqrt(np.einsum("ij,ij->j", Phi, M @ Phi))
    idx = np.argmax(np.abs(Phi), axis=0)
    Phi = Phi * np.sign(Phi[idx, np.arange(k)])
    return np.sqrt(lam) / (2 * np.pi), Phi


def modal_report(model, rom, n_modes):
    """Rows ``(mode, f_full_hz, f_rom_hz, error_pct)``.

    ``rom`` is a reduced model or another ``Model`` evaluated the same way.
    """
    f_full, _ = full_modes(model, n_modes)
    if isinstance(rom, Model):
        f_rom, _ = full_modes(rom, n_modes)
    else:
        f_rom = rom.frequencies()[:n_modes]
        if len(f_rom) < n_modes:
            raise ValueError(f"reduced model has only {len(f_rom)} modes")
    err = 100.0 * np.abs(f_rom - f_full) / f_full
    return [(i + 1, float(a), float(b), float(e)) for i, (a, b, e) in enumerate(zip(f_full, f_rom, err))]


def modal_amplitudes(model, Phi, d):
    """Mass-weighted projection ``Phi^T M d`` of displacement rows ``d``."""
    M = model.kernel.mass()
    return np.asarray(d) @ (M @ Phi)


def spectrum(signal, dt, window=None, taper="hann"):
    """One-sided FFT amplitude of ``signal`` sampled every ``dt``.

    ``window`` is an optional ``(t_start, t_end)`` range; the mean is
    removed and the amplitude is normalized by the taper sum so a unit
    sinusoid on a bin reads close to one.
    """
    y = np.asarray(signal, dtype=float)
    if window is not None:
        t = dt * np.arange(len(y))
        y = y[(t >= window[0]) & (t <= window[1])]
    if len(y) < 2:
        raise ValueError("need at least two samples")
    y = y - y.mean()
    w = np.hanning(len(y)) if taper == "hann" else np.ones(len(y))
    amp = 2.0 * np.abs(np.fft.rfft(y * w)) / w.sum()
    return np.fft.rfftfreq(len(y), dt), amp


def amplitude_at(freqs, amp, f, bins=1):
    """Largest amplitude within ``bins`` bins of ``f``."""
    k = int(np.argmin(np.abs(freqs - f)))
    return float(amp[max(k - bins, 0) : k + bins + 1].max())


# variant runs


@dataclass
class VariantResult:
    name: str
    history: object
    displacement: np.ndarray
    build_s: float
    integrate_s: float


def run_variant(scenario: Scenario, model, variant, f1, ablation="none", partition=None):
    """Integrate one model variant; returns model free-DoF displacements."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    F = scenario.spatial_load(model)
    g = scenario.time_function(f1)
    cfg = scenario.integrator(f1)
    start = time.perf_counter()
    if variant in ("full", "linear"):
        system = FullOrderSystem(model, nonlinear=variant == "full")
        build = time.perf_counter() - start
        start = time.perf_counter()
        hist = integrate(system, cfg, load=lambda t: F * g(t))
        disp = hist.x
    else:
        partition = partition or partition_model(model, scenario.interface_nodes(model))
        if variant == "nlcb":
            rm = build_rom(partition, scenario.n_phi, scenario.interface, method=scenario.method, ablation=ablation)[0]
        else:
            rm = classic_cb(partition, scenario.n_phi, scenario.interface)
        system = ReducedSystem(rm, nonlinear=variant == "nlcb")
        Fr = rm.reduce_load(F)
        build = time.perf_counter() - start
        start = time.perf_counter()
        hist = integrate(system, cfg, load=lambda t: Fr * g(t))
        disp = rm.reconstruct(hist.x)
        hist.meta["rom"] = rm
    return VariantResult(variant, hist, disp, build, time.perf_counter() - start)


def rms_rel_err(y, ref):
    ref = np.asarray(ref)
    return float(np.sqrt(np.mean((np.asarray(y) - ref) ** 2)) / np.sqrt(np.mean(ref**2)))


def peak_rel_err(y, ref):
    peak = np.abs(ref).max()
    return float(abs(np.abs(y).max() - peak) / peak)

