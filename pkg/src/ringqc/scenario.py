"""Scenario files and the pipelines they drive.

Scenario files are INI-style. Values carry their unit in the key name
(``_eV``, ``_kHz``, ``_MHz``, ``_um``, ``_ns``, ...); everything is converted
to SI on the way in. Field reference: ``docs/config.md``.
"""
from __future__ import annotations

import configparser
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import budget, crystal, dynamics, gates, tracking
from .physcore import CONST, PALLAS, TWO_PI, IonSpecies, RingConfig, UnknownSpeciesError, beam_velocity, load_species

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Unparseable file or field (exit code 2)."""


class ValidationError(ValueError):
    """Parsed but violates a precondition (exit code 3)."""


# ---------------------------------------------------------------------------
# atomic, byte-stable outputs

def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (frozenset, set)):
        return sorted(_plain(v) for v in obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_json(payload: dict) -> str:
    body = {"schema_version": SCHEMA_VERSION, **_plain(payload)}
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_from_json(payload: dict, title: str) -> str:
    """Human-readable report built only from the JSON payload."""
    lines = [title, "=" * len(title)]

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, list) and obj and all(isinstance(x, (int, float)) for x in obj) and len(obj) <= 16:
            lines.append(f"{prefix}: {', '.join(repr(x) for x in obj)}")
        elif isinstance(obj, list):
            for i, x in enumerate(obj):
                walk(f"{prefix}[{i}]", x)
        else:
            lines.append(f"{prefix}: {obj!r}" if isinstance(obj, float) else f"{prefix}: {obj}")

    walk("", _plain(payload))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scenario model

@dataclass
class CrystalRequest:
    n_ions: int = 8
    axial_freq: float | None = None  # rad/s; species default when None
    transverse_x: float | None = None
    transverse_y: float | None = None
    branch: str = "all"


@dataclass
class DynamicsRequest:
    n_ions: int = 4
    duration: float = 10e-6
    dt: float | None = None
    burn_in: float = 0.0
    sample_every: int = 20
    record_every: int = 200
    noise: bool = True
    rf_drive: bool = False
    coulomb: bool = False
    dispersion: bool = False
    initial_velocity: float | None = None
    convention: str = "paper"


@dataclass
class GateRequest:
    pulse_length: float = 4.6e-9
    rise_fall: float = 2e-9
    eta: float = 0.2
    n_ions: float = 100
    targets: list[int] = field(default_factory=lambda: [0])
    arrival_rate: float | None = None
    target_angle: float = math.pi
    max_angle_per_pass: float = math.pi / 4


@dataclass
class TrackingRequest:
    n_ions: int = 1000
    dark_fraction: float = 0.1
    seeds: list[int] = field(default_factory=lambda: [0])
    n_events: int = 100
    window: int | None = None
    loss_probability: float = 0.5
    max_swap_distance: int = 1


@dataclass
class Scenario:
    name: str
    species: IonSpecies
    ring: RingConfig
    seed: int = 0
    modules: list[str] = field(default_factory=lambda: ["budget"])
    budget_options: dict = field(default_factory=dict)
    beams: list[dynamics.LaserBeam] = field(default_factory=list)
    stray: dynamics.StrayFieldMap | None = None
    crystal: CrystalRequest | None = None
    dynamics: DynamicsRequest | None = None
    gates: GateRequest | None = None
    tracking: TrackingRequest | None = None
    source: str = ""


MODULE_ORDER = ["budget", "crystal", "cool", "gates", "track"]

_RING_FIELDS = {
    "circumference_m": ("circumference", 1.0),
    "kinetic_energy_eV": ("kinetic_energy", CONST.elementary_charge),
    "secular_freq_x_kHz": ("secular_freq_x", TWO_PI * 1e3),
    "secular_freq_y_kHz": ("secular_freq_y", TWO_PI * 1e3),
    "secular_freq_z_kHz": ("secular_freq_z", TWO_PI * 1e3),
    "rf_drive_MHz": ("rf_drive_freq", TWO_PI * 1e6),
    "horizontal_tune": ("horizontal_tune", 1.0),
    "cell_phase_advance_rad": ("cell_phase_advance", 1.0),
}

_BUDGET_FIELDS = {
    "stray_field_V_m": ("stray_field", 1.0),
    "temperature_uK": ("temperature_ld", 1e-6),
    "waist_um": ("waist", 1e-6),
    "pulse_length_ns": ("pulse_length", 1e-9),
    "eta": ("eta", 1.0),
    "band_width_MHz": ("band_width", 1e6),
    "rise_fall_ns": ("rise_fall", 1e-9),
    "velocity_split_MHz": ("velocity_split", TWO_PI * 1e6),
}


class _Reader:
    """Typed access to one section with errors naming the file, section and key."""

    def __init__(self, cp: configparser.ConfigParser, name: str, source: str):
        self.sec = cp[name]
        self.name = name
        self.source = source
        self.used = set()

    def _err(self, key, msg):
        return ConfigError(f"{self.source}: [{self.name}] {key}: {msg}")

    def has(self, key):
        return key in self.sec

    def raw(self, key, default=None):
        self.used.add(key)
        return self.sec.get(key, default)

    def float(self, key, default=None, scale=1.0):
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            return float(raw) * scale
        except ValueError:
            raise self._err(key, f"expected a number, got {raw!r}") from None

    def int(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        except ValueError:
            raise self._err(key, f"expected an integer, got {raw!r}") from None

    def bool(self, key, default=False):
        raw = self.raw(key)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise self._err(key, f"expected a boolean, got {raw!r}")

    def floats(self, key, default=None, scale=1.0):
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            return [float(t) * scale for t in raw.replace(",", " ").split()]
        except ValueError:
            raise self._err(key, f"expected numbers, got {raw!r}") from None

    def ints(self, key, default=None):
        vals = self.floats(key)
        if vals is None:
            return default
        if any(v != int(v) for v in vals):
            raise self._err(key, "expected integers")
        return [int(v) for v in vals]

    def check_unknown(self):
        extra = sorted(set(self.sec) - self.used)
        if extra:
            raise self._err(extra[0], "unknown field")


def _read_with_includes(path: Path, cp: configparser.ConfigParser, seen: set) -> None:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"{path}: include cycle")
    seen.add(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    probe = configparser.ConfigParser(interpolation=None)
    probe.optionxform = str
    try:
        probe.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if probe.has_option("scenario", "include"):
        for inc in probe["scenario"]["include"].split():
            _read_with_includes(path.parent / inc, cp, seen)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, strict=False)
    cp.optionxform = str
    _read_with_includes(path, cp, set())
    src = str(path)
    if not cp.has_section("scenario"):
        raise ConfigError(f"{src}: missing [scenario] section")
    head = _Reader(cp, "scenario", src)
    head.raw("include")
    name = head.raw("name", path.stem)
    try:
        sp = load_species(head.raw("species", "Ca-40"))
    except UnknownSpeciesError as exc:
        raise ValidationError(f"{src}: [scenario] species: {exc.args[0]}") from None
    overrides = {}
    lw = head.float("cooling_linewidth_MHz", scale=TWO_PI * 1e6)
    if lw is not None:
        overrides["cooling_linewidth"] = lw
    if overrides:
        sp = replace(sp, **overrides)
    seed = head.int("seed", 0)
    modules = (head.raw("modules", "budget") or "").replace(",", " ").split()
    bad = [m for m in modules if m not in MODULE_ORDER]
    if bad:
        raise ConfigError(f"{src}: [scenario] modules: unknown module {bad[0]!r}")
    head.check_unknown()

    ring = PALLAS
    if cp.has_section("ring"):
        r = _Reader(cp, "ring", src)
        preset = r.raw("preset", "PALLAS")
        if preset != "PALLAS":
            raise ConfigError(f"{src}: [ring] preset: unknown preset {preset!r}")
        kw = {}
        for key, (attr, scale) in _RING_FIELDS.items():
            val = r.float(key, scale=scale)
            if val is not None:
                kw[attr] = val
        for key in ("n_ions", "periodicity"):
            val = r.int(key)
            if val is not None:
                kw[key] = val
        r.check_unknown()
        if "horizontal_tune" in kw or "periodicity" in kw:
            kw.setdefault("cell_phase_advance", None)
        try:
            ring = replace(PALLAS, **kw)
        except ValueError as exc:
            raise ValidationError(f"{src}: [ring] {exc}") from None

    opts = {}
    if cp.has_section("budget"):
        bsec = _Reader(cp, "budget", src)
        for key, (attr, scale) in _BUDGET_FIELDS.items():
            val = bsec.float(key, scale=scale)
            if val is not None:
                opts[attr] = val
        bsec.check_unknown()

    beams = []
    for secname in cp.sections():
        if secname.startswith("beam:"):
            beams.append(_parse_beam(_Reader(cp, secname, src), sp))
    if cp.has_section("cooling"):
        beams.extend(_parse_cooling(_Reader(cp, "cooling", src), sp))

    stray = _parse_stray(_Reader(cp, "stray", src), ring) if cp.has_section("stray") else None

    sc = Scenario(name=name, species=sp, ring=ring, seed=seed, modules=modules, budget_options=opts,
                  beams=beams, stray=stray, source=src)
    if cp.has_section("crystal"):
        c = _Reader(cp, "crystal", src)
        sc.crystal = CrystalRequest(c.int("n_ions", 8), c.float("axial_kHz", scale=TWO_PI * 1e3),
                                    c.float("transverse_x_kHz", scale=TWO_PI * 1e3),
                                    c.float("transverse_y_kHz", scale=TWO_PI * 1e3), c.raw("branch", "all"))
        c.check_unknown()
    if cp.has_section("dynamics"):
        d = _Reader(cp, "dynamics", src)
        sc.dynamics = DynamicsRequest(
            n_ions=d.int("n_ions", 4), duration=d.float("duration_us", 10.0, 1e-6),
            dt=d.float("dt_ns", scale=1e-9), burn_in=d.float("burn_in_us", 0.0, 1e-6),
            sample_every=d.int("sample_every", 20), record_every=d.int("record_every", 200),
            noise=d.bool("noise", True), rf_drive=d.bool("rf_drive", False),
            coulomb=d.bool("coulomb", False), dispersion=d.bool("dispersion", False),
            initial_velocity=d.float("initial_velocity_m_s"), convention=d.raw("convention", "paper"))
        d.check_unknown()
    if cp.has_section("gates"):
        g = _Reader(cp, "gates", src)
        sc.gates = GateRequest(
            pulse_length=g.float("pulse_length_ns", 4.6, 1e-9), rise_fall=g.float("rise_fall_ns", 2.0, 1e-9),
            eta=g.float("eta", 0.2), n_ions=g.float("n_ions", 100), targets=g.ints("targets", [0]),
            arrival_rate=g.float("arrival_rate_MHz", scale=1e6),
            target_angle=g.float("target_angle_deg", 180.0, math.pi / 180),
            max_angle_per_pass=g.float("max_angle_per_pass_deg", 45.0, math.pi / 180))
        g.check_unknown()
    if cp.has_section("tracking"):
        t = _Reader(cp, "tracking", src)
        sc.tracking = TrackingRequest(
            n_ions=t.int("n_ions", 1000), dark_fraction=t.float("dark_fraction", 0.1),
            seeds=t.ints("seeds", [0]), n_events=t.int("n_events", 100), window=t.int("window"),
            loss_probability=t.float("loss_probability", 0.5), max_swap_distance=t.int("max_swap_distance", 1))
        t.check_unknown()
    validate(sc)
    return sc


def _parse_beam(r: _Reader, sp: IonSpecies) -> dynamics.LaserBeam:
    lam = r.float("wavelength_nm", scale=1e-9) or sp.cooling_wavelength
    if lam is None:
        raise ValidationError(f"{r.source}: [{r.name}] wavelength_nm: species has no cooling wavelength")
    direction = r.floats("direction", [0.0, 0.0, 1.0])
    if len(direction) != 3:
        raise ConfigError(f"{r.source}: [{r.name}] direction: expected three components")
    try:
        beam = dynamics.LaserBeam(
            wavelength=lam, detuning=r.float("detuning_MHz", 0.0, TWO_PI * 1e6),
            saturation=r.float("saturation", 1.0), direction=tuple(direction),
            waist=r.float("waist_um", 10.0, 1e-6), profile=r.raw("profile", "round"),
            aspect=r.float("aspect", 1.0), center=r.float("center_m"))
    except ValueError as exc:
        raise ValidationError(f"{r.source}: [{r.name}] {exc}") from None
    r.check_unknown()
    return beam


def _parse_cooling(r: _Reader, sp: IonSpecies) -> list[dynamics.LaserBeam]:
    """Counter-propagating tangential pair: detuning in linewidths, split in MHz."""
    gamma = sp.require("cooling_linewidth")
    lam = r.float("wavelength_nm", scale=1e-9) or sp.require("cooling_wavelength")
    det = r.float("detuning_linewidths", -0.5) * gamma
    split = r.float("split_MHz", 0.0, TWO_PI * 1e6)
    s0 = r.float("saturation", 0.5)
    r.check_unknown()
    try:
        return dynamics.counter_propagating_pair(lam, det, split, s0)
    except ValueError as exc:
        raise ValidationError(f"{r.source}: [{r.name}] {exc}") from None


def _parse_stray(r: _Reader, ring: RingConfig) -> dynamics.StrayFieldMap:
    uniform = r.floats("uniform_V_m", [0.0, 0.0, 0.0])
    if len(uniform) != 3:
        raise ConfigError(f"{r.source}: [{r.name}] uniform_V_m: expected three components")
    patches, harmonics, comp = [], [], []
    for key in sorted(r.sec):
        if key.startswith("patch"):
            v = r.floats(key)
            if len(v) != 5:
                raise ConfigError(f"{r.source}: [{r.name}] {key}: expected start_m end_m Ex Ey Es")
            patches.append((v[0], v[1], tuple(v[2:])))
        elif key.startswith("harmonic"):
            v = r.floats(key)
            if len(v) != 5 or v[0] != int(v[0]):
                raise ConfigError(f"{r.source}: [{r.name}] {key}: expected n Ax Ay As phase_rad")
            harmonics.append((int(v[0]), tuple(v[1:4]), v[4]))
        elif key.startswith("compensation"):
            v = r.floats(key)
            if len(v) != 4:
                raise ConfigError(f"{r.source}: [{r.name}] {key}: expected s_m Ex Ey Es")
            comp.append((v[0], tuple(v[1:])))
    r.check_unknown()
    return dynamics.StrayFieldMap(ring.circumference, tuple(uniform), patches, harmonics, comp)


def validate(sc: Scenario) -> None:
    """Check every module precondition before anything runs."""
    def fail(msg):
        raise ValidationError(f"{sc.source}: {msg}")

    try:
        sc.ring.validate_for(sc.species)
    except ValueError as exc:
        fail(str(exc))
    if "cool" in sc.modules:
        d = sc.dynamics or DynamicsRequest()
        if sc.species.cooling_linewidth is None:
            fail(f"cool: species {sc.species.name} has no cooling linewidth")
        if not sc.beams:
            fail("cool: no beams configured ([cooling] or [beam:*])")
        limit = dynamics.max_stable_dt(sc.ring, sc.species.cooling_linewidth)
        if d.dt is not None and not 0 < d.dt < limit:
            fail(f"dynamics dt_ns: {d.dt * 1e9:.4g} ns violates dt < {limit * 1e9:.4g} ns")
        if d.n_ions < 1 or d.duration <= 0:
            fail("dynamics: n_ions >= 1 and duration_us > 0 required")
        if d.convention not in ("paper", "equipartition"):
            fail(f"dynamics convention: unknown {d.convention!r}")
    if "crystal" in sc.modules:
        c = sc.crystal or CrystalRequest()
        if not 1 <= c.n_ions <= crystal.DENSE_CAP:
            fail(f"crystal n_ions must be in [1, {crystal.DENSE_CAP}]")
        if c.branch not in ("all", "axial", "transverse", "x", "y"):
            fail(f"crystal branch: unknown {c.branch!r}")
    if "gates" in sc.modules:
        g = sc.gates or GateRequest()
        if sc.species.reference_rabi is None:
            fail(f"gates: species {sc.species.name} has no reference Rabi frequency")
        if min(g.pulse_length, g.eta, g.n_ions, g.max_angle_per_pass) <= 0:
            fail("gates: pulse_length_ns, eta, n_ions and max_angle_per_pass_deg must be positive")
        if g.rise_fall < gates.MIN_RISE_FALL:
            fail(f"gates rise_fall_ns below the {gates.MIN_RISE_FALL * 1e9:g} ns hardware minimum")
    if "track" in sc.modules:
        t = sc.tracking or TrackingRequest()
        if not 0 <= t.dark_fraction < 1:
            fail("tracking dark_fraction must be in [0, 1)")
        if t.n_ions < 2:
            fail("tracking n_ions must be >= 2")


# ---------------------------------------------------------------------------
# pipelines; each returns (json payload, {filename: text})

def run_budget(sc: Scenario) -> tuple[dict, dict]:
    rep = budget.build_report(sc.species, sc.ring, **sc.budget_options)
    return {"species": sc.species.name, "entries": rep.to_dict()}, {}


def run_crystal(sc: Scenario) -> tuple[dict, dict]:
    req = sc.crystal or CrystalRequest()
    sp = sc.species
    wz = req.axial_freq or sp.typical_axial_freq or sc.ring.secular_freq_z
    wt = sp.typical_transverse_freq or 3.0 * wz
    trap = crystal.TrapPotential(req.transverse_x or wt, req.transverse_y or 1.05 * (req.transverse_x or wt),
                                 wz, sp.mass, sp.charge)
    state = crystal.solve_equilibrium(trap, req.n_ions)
    spec = crystal.phonon_modes(state)
    width, mean_sp, min_sp = crystal.band_statistics(spec, req.branch)
    stable, lowest = crystal.zigzag_stability(trap, req.n_ions)
    payload = {
        "n_ions": req.n_ions,
        "trap_rad_s": [trap.omega_x, trap.omega_y, trap.omega_z],
        "potential_energy_J": state.potential_energy,
        "max_residual_gradient_N": float(np.max(state.residual_gradient_norm)),
        "iterations": state.iterations,
        "is_linear": state.is_linear(),
        "linear_chain_stable": stable,
        "lowest_chain_transverse_rad_s": lowest,
        "branch": req.branch,
        "band_width_rad_s": width,
        "mean_mode_spacing_rad_s": mean_sp,
        "min_mode_spacing_rad_s": min_sp,
        "hessian_asymmetry": spec.hessian_asymmetry,
    }
    files = {"crystal_modes.csv": _spectrum_csv(spec), "crystal_positions.csv": _positions_csv(state)}
    return payload, files


def _spectrum_csv(spec) -> str:
    lines = ["mode,frequency_rad_s,axial_weight"]
    lines += [f"{i},{f!r},{w!r}" for i, (f, w) in
              enumerate(zip(spec.frequencies.tolist(), spec.axial_weight.tolist()))]
    return "\n".join(lines) + "\n"


def _positions_csv(state) -> str:
    lines = ["ion,x_m,y_m,z_m"]
    lines += [f"{i},{x!r},{y!r},{z!r}" for i, (x, y, z) in enumerate(state.positions.tolist())]
    return "\n".join(lines) + "\n"


def run_cooling(sc: Scenario) -> tuple[dict, dict]:
    req = sc.dynamics or DynamicsRequest()
    sp = sc.species
    gamma = sp.require("cooling_linewidth")
    dt = req.dt or 0.9 * dynamics.max_stable_dt(sc.ring, gamma)
    v0 = req.initial_velocity
    state = dynamics.initial_state(sc.ring, sp, req.n_ions, seed=sc.seed, velocity=v0)
    opts = dynamics.DynamicsOptions(noise=req.noise, rf_drive=req.rf_drive, coulomb=req.coulomb,
                                    dispersion=req.dispersion)
    n_steps = int(round(req.duration / dt))
    buf = io.StringIO()
    rec = dynamics.TrajectoryRecorder(buf, req.record_every)
    hist = dynamics.run(state, sc.beams, sc.stray, sc.ring, dt, n_steps, opts,
                        sample_every=req.sample_every, recorder=rec)
    summary = {"dt_s": dt, "steps": n_steps}
    try:
        summary.update(dynamics.summarize(state, hist, sc.ring, sp.mass, burn_in=req.burn_in,
                                          convention=req.convention))
    except dynamics.InsufficientHistoryError as exc:
        summary["temperature_estimate"] = f"unavailable: {exc}"
    try:
        split = sc.beams[0].detuning - sc.beams[1].detuning
        summary["velocity_control_target_m_s"] = budget.doppler_control_velocity(split, sc.beams[0].wavelength)
    except (IndexError, ValueError):
        pass
    summary["doppler_limit_K"] = dynamics.doppler_limit(gamma)
    return summary, {"trajectory.csv": buf.getvalue()}


def run_gates(sc: Scenario) -> tuple[dict, dict]:
    req = sc.gates or GateRequest()
    sp = sc.species
    v = beam_velocity(sc.ring, sp)
    spacing = budget.ion_spacing(sp, sc.ring.secular_freq_z)
    sw = gates.switching_budget(sp, req.pulse_length, req.eta, req.n_ions, velocity=v, spacing=spacing)
    rate = req.arrival_rate or sw.modulator_rate
    payload = {
        "single_ion_rabi_rad_s": sw.single_ion_rabi,
        "intensity_W_m2": sw.intensity,
        "n_ion_gate_time_s": sw.n_ion_gate_time,
        "modulator_rate_Hz": sw.modulator_rate,
        "arrival_rate_Hz": rate,
        "max_crosstalk_free_pulse_s": gates.max_pulse_length(rate, req.rise_fall),
    }
    files = {}
    try:
        train = gates.schedule_pulses(rate, req.targets, req.pulse_length, req.rise_fall)
        payload["schedulable"] = True
        payload["n_pulses"] = len(train.pulses)
        buf = io.StringIO()
        train.write_csv(buf)
        files["pulses.csv"] = buf.getvalue()
    except gates.CrosstalkError as exc:
        payload["schedulable"] = False
        payload["crosstalk"] = str(exc)
    plan = gates.plan_piecewise_gate(req.target_angle, req.max_angle_per_pass, sc.ring.circumference / v)
    payload["plan"] = {"passes": plan.passes, "fragment_rad": plan.fragments[0] if plan.fragments else 0.0,
                       "wall_clock_s": plan.wall_clock, "target_rad": plan.target_angle}
    return payload, files


def run_tracking(sc: Scenario) -> tuple[dict, dict]:
    req = sc.tracking or TrackingRequest()
    lengths = []
    injected = detected = 0
    kinds = {"loss": 0, "reorder": 0, "unknown": 0}
    correct = 0
    log_lines = []
    for seed in req.seeds:
        led = tracking.load_pattern(req.n_ions, req.dark_fraction, seed)
        lmin = tracking.min_unique_window(led)
        lengths.append(lmin)
        rng = np.random.default_rng([sc.seed, seed])
        window = req.window or (lmin + 2 if lmin is not None else min(32, req.n_ions - 1))
        for k in range(req.n_events):
            ev = tracking.sample_event(led, rng, loss_probability=req.loss_probability,
                                       max_swap_distance=req.max_swap_distance, time=float(k))
            true = tracking.apply_event(led, ev)
            lo = max(0, min(ev.positions) - window // 2)
            start = min(lo, len(true) - window)
            frame = tracking.observe(true, start, window)
            report = tracking.detect_mismatch(led, frame, max_swap_distance=req.max_swap_distance)
            injected += 1
            log_lines.append(f"seed={seed} {ev.to_line()}")
            if not report.consistent:
                detected += 1
                kinds[report.kind] += 1
                correct += report.kind == ev.kind
    payload = {
        "n_ions": req.n_ions,
        "dark_fraction": req.dark_fraction,
        "seeds": req.seeds,
        "min_unique_window": lengths,
        "entropy_floor": tracking.entropy_floor(req.n_ions, req.dark_fraction),
        "events_injected": injected,
        "mismatches_detected": detected,
        "classified": kinds,
        "classified_correctly": correct,
    }
    return payload, {"events.txt": "\n".join(log_lines) + ("\n" if log_lines else "")}


PIPELINES = {"budget": run_budget, "crystal": run_crystal, "cool": run_cooling,
             "gates": run_gates, "track": run_tracking}


class ModuleRuntimeError(RuntimeError):
    pass


def run_scenario(sc: Scenario, out_dir: str | Path) -> dict:
    """Run the requested modules in dependency order and write all outputs."""
    out = Path(out_dir) / sc.name
    results = {"scenario": sc.name, "species": sc.species.name, "seed": sc.seed}
    files = {}
    for mod in MODULE_ORDER:
        if mod not in sc.modules:
            continue
        try:
            payload, extra = PIPELINES[mod](sc)
        except (ValidationError, ConfigError):
            raise
        except Exception as exc:  # noqa: BLE001
            raise ModuleRuntimeError(f"{mod}: {type(exc).__name__}: {exc}") from exc
        results[mod] = payload
        files.update({f"{mod}_{k}" if not k.startswith(mod) else k: v for k, v in extra.items()})
    body = dumps_json(results)
    atomic_write_text(out / "summary.json", body)
    atomic_write_text(out / "report.txt", report_from_json(json.loads(body), f"scenario {sc.name}"))
    for name, text in sorted(files.items()):
        atomic_write_text(out / name, text)
    return results
