"""Flat ``key = value`` experiment specs with line-level diagnostics.

Syntax: one ``key = value`` per line, ``#`` starts a comment. Lists are
comma separated, ``a:b:s`` is an inclusive range, and ``;`` separates the
members of a list of lists (mode sets). See ``SCHEMA`` for every key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._validation import OamError
from .geometry import ArrayConfig, LinkPose, UccaConfig, main_lobe_check, tilt_angle
from .metrics import OverheadModel

SCENARIOS = ("nmse_snr", "nmse_modes", "nmse_subcarriers", "estimates", "ber", "se_uca",
             "se_ucca", "phase_map")


class SpecError(OamError, ValueError):
    """Parse or validation failure; ``str()`` reads ``path:line: key: message``."""

    def __init__(self, message, key=None, line=None, path=None):
        self.key, self.line, self.path, self.reason = key, line, path, message
        where = ":".join(str(v) for v in (path, line) if v is not None)
        text = f"{key}: {message}" if key else message
        super().__init__(f"{where}: {text}" if where else text)


def parse_list(text, integer=False):
    """``1, 2, 3`` or ``0:30:5`` (inclusive) or a mix of both."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            raise ValueError("empty list item")
        if ":" in part:
            bits = [float(b) for b in part.split(":")]
            if len(bits) not in (2, 3):
                raise ValueError(f"bad range {part!r}")
            lo, hi = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1.0
            if step <= 0:
                raise ValueError(f"range step must be positive in {part!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            vals = [lo + i * step for i in range(max(n, 0))]
        else:
            vals = [float(part)]
        for v in vals:
            if integer:
                if not float(v).is_integer():
                    raise ValueError(f"{v!r} is not an integer")
                out.append(int(v))
            else:
                out.append(int(v) if float(v).is_integer() and "." not in part else v)
    return out


def parse_sets(text, integer=True):
    return [parse_list(chunk, integer) for chunk in text.split(";") if chunk.strip()]


def _str(text):
    return text.strip()


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


# key -> (parser, default, help)
SCHEMA = {
    "scenario": (_str, None, f"one of {', '.join(SCENARIOS)}"),
    "title": (_str, "", "free-text label"),
    "element_count": (_int, 9, "elements per ring N"),
    "radius": (float, None, "ring radius in metres (overrides radius_wavelengths)"),
    "radius_wavelengths": (float, 15.0, "ring radius in units of 2π/k_first"),
    "rings_wavelengths": (parse_list, None, "UCCA ring radii in units of 2π/k_first"),
    "distance": (float, 40.0, "link distance r in metres"),
    "azimuth_deg": (float, 7.0, "azimuth φ in degrees"),
    "elevation_deg": (float, 7.0, "elevation α in degrees"),
    "k_first": (float, 47.0, "first wavenumber in rad/m"),
    "k_spacing": (float, 1.0, "data subcarrier spacing in rad/m"),
    "subcarriers": (_int, 8, "data subcarriers P"),
    "training_k_spacing": (float, None, "training subcarrier spacing (default k_spacing)"),
    "training_subcarriers": (_int, 8, "training subcarriers P̃"),
    "modes": (lambda t: parse_list(t, True), [-2, -1, 0, 1, 2], "data OAM modes"),
    "training_modes": (lambda t: parse_list(t, True), list(range(-4, 4)), "training modes"),
    "data_sets": (parse_sets, None, "data mode sets, ';' separated"),
    "training_sets": (parse_sets, None, "training mode sets, ';' separated"),
    "receivers": (lambda t: [s.strip() for s in t.split(",")], ["aligned", "estimated"],
                  "receiver kinds: aligned, true, estimated, unsteered"),
    "snr_db": (parse_list, [0, 5, 10, 15, 20, 25, 30], "SNR sweep in dB"),
    "snr_fixed_db": (float, 15.0, "SNR for mode / subcarrier count sweeps"),
    "sweep_values": (lambda t: parse_list(t, True), [2, 4, 6, 8], "Ũ or P̃ values to sweep"),
    "trials": (_int, 100, "Monte-Carlo trials per point"),
    "symbols": (_int, 2000, "data symbols per BER trial"),
    "seed": (_int, 0, "master seed"),
    "prior": (parse_list, None, "distance window lo, hi in metres (default r ± 3)"),
    "qam_order": (_int, 16, "QAM order"),
    "coherence": (_int, 256, "coherence length T_c in symbols"),
    "mimo_pilots": (_int, None, "MIMO-OFDM pilots per subcarrier (default rings x N)"),
    "se_cap_db": (float, 30.0, "SINR cap for +inf values"),
    "gain": (_str, None, "closed_form or model (UCCA default model)"),
    "mode_sets": (parse_sets, None, "phase-map mode sets, ';' separated"),
    "wavelength": (float, 1.0, "phase-map wavelength"),
    "plane_distance_wavelengths": (float, 2.0, "phase-map plane height"),
    "extent_wavelengths": (float, 2.0, "phase-map half width"),
    "resolution": (_int, 256, "phase-map pixels per side"),
    "raster_format": (lambda t: [s.strip() for s in t.split(",")], ["pgm", "csv"],
                      "raster outputs: pgm and/or csv"),
    "probe_radii_wavelengths": (parse_list, [0.5, 0.8, 1.1], "circles for winding analysis"),
}


@dataclass
class ExperimentSpec:
    values: dict
    lines: dict = field(default_factory=dict)
    path: str | None = None
    name: str = "experiment"

    def __getattr__(self, key):
        values = self.__dict__.get("values", {})
        if key in values:
            return values[key]
        raise AttributeError(key)

    def error(self, key, message):
        return SpecError(message, key, self.lines.get(key), self.path)

    # derived objects -------------------------------------------------------

    @property
    def wavelength1(self):
        return 2 * math.pi / self.k_first

    @property
    def array_radius(self):
        return self.radius if self.radius is not None else self.radius_wavelengths * self.wavelength1

    def array(self) -> ArrayConfig:
        return ArrayConfig(self.element_count, self.array_radius)

    def ucca(self) -> UccaConfig:
        radii = [v * self.wavelength1 for v in self.rings_wavelengths]
        return UccaConfig.from_radii(self.element_count, radii)

    def pose(self) -> LinkPose:
        return LinkPose.from_degrees(self.distance, self.azimuth_deg, self.elevation_deg)

    def wavenumbers(self, count=None):
        n = self.subcarriers if count is None else count
        return tuple(float(self.k_first + i * self.k_spacing) for i in range(n))

    def training_wavenumbers(self, count=None):
        n = self.training_subcarriers if count is None else count
        dk = self.training_k_spacing or self.k_spacing
        return tuple(float(self.k_first + i * dk) for i in range(n))

    def distance_prior(self):
        if self.prior is not None:
            return tuple(float(v) for v in self.prior)
        return (self.distance - 3.0, self.distance + 3.0)

    def data_mode_sets(self):
        return [tuple(s) for s in (self.data_sets or [self.modes])]

    def training_mode_sets(self):
        return [tuple(s) for s in (self.training_sets or [self.training_modes])]

    def overhead(self, training_modes):
        return OverheadModel(self.coherence, len(training_modes), self.subcarriers,
                             self.training_subcarriers)


def parse_spec(text, path=None, name=None) -> ExperimentSpec:
    values, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"expected 'key = value', got {line!r}", line=no, path=path)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            raise SpecError("unknown key", key, no, path)
        if key in values:
            raise SpecError(f"duplicate key (first set on line {lines[key]})", key, no, path)
        if not val:
            raise SpecError("missing value", key, no, path)
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise SpecError(str(exc), key, no, path) from None
        lines[key] = no
    full = {k: (v[1].copy() if isinstance(v[1], list) else v[1]) for k, v in SCHEMA.items()}
    full.update(values)
    if name is None:
        name = Path(path).stem if path else "experiment"
    spec = ExperimentSpec(full, lines, None if path is None else str(path), name)
    validate_spec(spec)
    return spec


def bundled_specs():
    root = resources.files("oamlink") / "specs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".spec"))


def load_spec(ref) -> ExperimentSpec:
    """Load a spec from a path, or by bundled name (``fig10_nmse``)."""
    p = Path(ref)
    if p.is_file():
        return parse_spec(p.read_text(), str(p), p.stem)
    name = p.name[:-5] if p.name.endswith(".spec") else p.name
    bundled = resources.files("oamlink") / "specs" / f"{name}.spec"
    if not str(ref).endswith(".spec") or not p.exists():
        if bundled.is_file():
            return parse_spec(bundled.read_text(), f"{name}.spec", name)
    raise SpecError(f"no such spec file or bundled spec: {ref}")


def _check_modes(spec, key, modes, n):
    bad = [m for m in modes if 2 * abs(m) >= n]
    if bad:
        raise spec.error(key, f"modes {bad} violate |l| < N/2 for N={n}: "
                              f"an N-element ring resolves at most N OAM modes")
    if len(set(modes)) != len(modes):
        raise spec.error(key, "modes must be distinct")


def _check_uniform(spec, key, modes):
    d = np.diff(sorted(modes))
    if len(modes) < 2 or not np.all(d == d[0]):
        raise spec.error(key, "training modes must be at least two uniformly spaced integers")


def validate_spec(spec: ExperimentSpec):
    """Check every invariant without running anything; raises SpecError."""
    v = spec.values
    if v["scenario"] is None:
        raise SpecError("missing required key", "scenario", None, spec.path)
    if v["scenario"] not in SCENARIOS:
        raise spec.error("scenario", f"unknown scenario {v['scenario']!r}; use one of {SCENARIOS}")
    positive = ["element_count", "distance", "k_first", "k_spacing", "subcarriers",
                "training_subcarriers", "trials", "symbols", "coherence", "radius_wavelengths",
                "wavelength", "plane_distance_wavelengths", "extent_wavelengths", "resolution"]
    for key in positive + ["radius", "training_k_spacing", "mimo_pilots"]:
        val = v[key]
        if val is None and key not in positive:
            continue
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise spec.error(key, f"must be positive, got {val!r}")
    for key in ("azimuth_deg", "elevation_deg"):
        if not abs(v[key]) < 90:
            raise spec.error(key, f"must lie in (-90, 90), got {v[key]!r}")
    if v["seed"] < 0:
        raise spec.error("seed", "must be non-negative")
    n = v["element_count"]
    scen = v["scenario"]
    if scen == "phase_map":
        # link keys are ignored by phase maps, only their own modes matter
        if not v["mode_sets"]:
            raise spec.error("mode_sets", "required for the phase_map scenario")
        for s in v["mode_sets"]:
            _check_modes(spec, "mode_sets", s, n)
        for fmt in v["raster_format"]:
            if fmt not in ("pgm", "csv"):
                raise spec.error("raster_format", f"unknown raster format {fmt!r}")
        return spec
    for key in ("modes", "training_modes"):
        _check_modes(spec, key, v[key], n)
    for key in ("data_sets", "training_sets"):
        for s in v[key] or []:
            _check_modes(spec, key, s, n)
    tsets = spec.training_mode_sets()
    for s in tsets:
        if len(s) > n:
            raise spec.error("training_sets" if v["training_sets"] else "training_modes",
                             f"{len(s)} training modes exceed the N={n} elements")
        _check_uniform(spec, "training_sets" if v["training_sets"] else "training_modes", s)
    if scen in ("nmse_modes", "nmse_subcarriers"):
        for val in v["sweep_values"]:
            if val < 2:
                raise spec.error("sweep_values", "sweep values must be at least 2")
            if scen == "nmse_modes":
                if val > n:
                    raise spec.error("sweep_values", f"Ũ = {val} exceeds N = {n}")
                _check_modes(spec, "sweep_values", _centered_modes(val), n)
    if v["prior"] is not None:
        if len(v["prior"]) != 2 or not v["prior"][0] < v["prior"][1]:
            raise spec.error("prior", "expected 'lo, hi' with lo < hi")
        dk = v["training_k_spacing"] or v["k_spacing"]
        if v["prior"][1] - v["prior"][0] > 2 * math.pi / dk:
            raise spec.error("prior", f"window wider than the ambiguity period 2π/Δk = "
                                      f"{2 * math.pi / dk:.4f} m")
    for r in v["receivers"]:
        if r not in ("aligned", "true", "estimated", "unsteered"):
            raise spec.error("receivers", f"unknown receiver {r!r}")
    if v["qam_order"] not in (4, 16, 64, 256):
        raise spec.error("qam_order", "must be 4, 16, 64 or 256")
    if v["gain"] not in (None, "closed_form", "model"):
        raise spec.error("gain", "must be closed_form or model")
    if scen == "se_ucca":
        rings = v["rings_wavelengths"]
        if not rings:
            raise spec.error("rings_wavelengths", "required for the se_ucca scenario")
        if any(r <= 0 for r in rings) or any(b <= a for a, b in zip(rings, rings[1:])):
            raise spec.error("rings_wavelengths", "ring radii must be positive and increasing")
    if scen in ("se_uca", "se_ucca"):
        for s in tsets:
            try:
                spec.overhead(s)
            except ValueError as exc:
                raise spec.error("coherence", str(exc)) from None
    try:
        if scen == "se_ucca":
            spec.ucca()
        else:
            spec.array()
        spec.pose()
    except ValueError as exc:
        raise spec.error("radius", str(exc)) from None
    return spec


def _centered_modes(count):
    """Ũ contiguous modes around zero: 2 -> {-1, 0}, 4 -> {-2..1}, 8 -> {-4..3}."""
    lo = -(count // 2)
    return tuple(range(lo, lo + count))


def validation_report(spec: ExperimentSpec) -> str:
    """Derived quantities of a valid spec as ``key = value`` lines."""
    if spec.scenario == "phase_map":
        lam = spec.wavelength
        out = [f"spec = {spec.name}", "scenario = phase_map", "status = valid",
               f"radius_m = {spec.radius_wavelengths * lam:.6f}",
               f"plane_distance_m = {spec.plane_distance_wavelengths * lam:.6f}",
               f"pixel_m = {2 * spec.extent_wavelengths * lam / spec.resolution:.6f}"]
        for s in spec.mode_sets:
            out.append(f"rasters[{','.join(map(str, s))}] = {', '.join(spec.raster_format)}")
        return "\n".join(out) + "\n"
    pose = spec.pose()
    out = [f"spec = {spec.name}", f"scenario = {spec.scenario}", "status = valid",
           f"tilt_deg = {math.degrees(tilt_angle(pose)):.6f}",
           f"distance_prior_m = {spec.distance_prior()[0]:g}, {spec.distance_prior()[1]:g}"]
    scen = spec.scenario
    if scen in ("se_uca", "se_ucca"):
        for s in spec.training_mode_sets():
            out.append(f"overhead_factor[U~={len(s)}] = {spec.overhead(s).factor:.6f}")
    if scen == "se_ucca":
        pilots = spec.mimo_pilots or spec.element_count * len(spec.rings_wavelengths)
        out.append(f"mimo_overhead_factor = {1 - pilots / spec.coherence:.6f}")
    tx = spec.ucca().rings[0] if scen == "se_ucca" else spec.array()
    out.append(f"radius_m = {tx.radius:.6f}")
    modes = sorted({m for s in spec.training_mode_sets() for m in s})
    lobe = main_lobe_check(pose, tx, modes, spec.training_wavenumbers())
    # informational: the estimator does not need the main lobe
    for key in sorted(lobe):
        out.append(f"main_lobe[l={key}] = {'inside' if lobe[key] else 'outside'}")
    return "\n".join(out) + "\n"
