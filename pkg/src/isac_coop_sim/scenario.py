"""Scenario definition, validation, and deterministic random streams.

A scenario is described by a flat structured text document with
``key = value`` entries grouped in sections::

    [numerology]
    carrier_freq_hz = 24.0e9
    subcarrier_spacing_hz = 30000.0
    num_subcarriers = 3104
    num_symbols = 112
    cp_fraction = 0.125            # optional, default 1/8

    [[site]]                       # one table per base station
    id = 0
    position_m = [0.0, 0.0, 0.0]
    array_rows = 32                # optional, default 1
    array_cols = 32                # optional, default 1
    element_spacing_wavelengths = 0.5
    role = "tx_rx"                 # tx_rx | tx_only | rx_only

    [[target]]
    position_m = [500.0, 0.0, 0.0]
    velocity_mps = [27.0, 0.0, 0.0]
    amplitude = [1.0, 0.0]         # complex as [re, im], default 1+0j

    [[link]]
    tx_site = 0
    rx_site = 0
    snr_db = 0.0
    timing_offset_s = 0.0          # must be 0 for monostatic links
    cfo_hz = 0.0

    [experiment]
    kind = "fig7"
    trials = 200
    master_seed = 1
    # further keys are experiment parameters, passed through untouched

Units are SI and carried in the key names. Angles are radians everywhere
inside the package; degrees appear only at the CLI boundary.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

RNG_PURPOSES = ("payload", "noise", "geometry_jitter")

_SITE_ROLES = ("tx_rx", "tx_only", "rx_only")


class ScenarioError(ValueError):
    """Raised for schema or invariant violations in a scenario document."""


@dataclass(frozen=True)
class Numerology:
    """OFDM waveform numerology; derived quantities are never stored."""

    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    num_subcarriers: int
    num_symbols: int
    cp_fraction: float = 0.125

    def __post_init__(self):
        if not self.carrier_freq_hz > 0:
            raise ScenarioError(
                f"numerology.carrier_freq_hz must be > 0, got {self.carrier_freq_hz}")
        if not self.subcarrier_spacing_hz > 0:
            raise ScenarioError(
                "numerology.subcarrier_spacing_hz must be > 0, "
                f"got {self.subcarrier_spacing_hz}")
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 2:
            raise ScenarioError(
                f"numerology.num_subcarriers must be an integer >= 2, got {self.num_subcarriers}")
        if int(self.num_symbols) != self.num_symbols or self.num_symbols < 2:
            raise ScenarioError(
                f"numerology.num_symbols must be an integer >= 2, got {self.num_symbols}")
        if not 0.0 <= self.cp_fraction <= 0.5:
            raise ScenarioError(
                f"numerology.cp_fraction must be in [0, 0.5], got {self.cp_fraction}")

    @property
    def bandwidth_hz(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing_hz

    @property
    def symbol_duration_s(self) -> float:
        """Full OFDM symbol duration including the cyclic prefix."""
        return (1.0 + self.cp_fraction) / self.subcarrier_spacing_hz

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def range_resolution_m(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)

    @property
    def velocity_resolution_mps(self) -> float:
        return self.wavelength_m / (2.0 * self.num_symbols * self.symbol_duration_s)

    @property
    def delay_window_s(self) -> float:
        """Unambiguous delay span of the subcarrier grid."""
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def unambiguous_range_m(self) -> float:
        """Largest monostatic range inside the delay window, c/(2 df)."""
        return SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing_hz)

    @property
    def doppler_window_hz(self) -> float:
        """Unambiguous one-sided Doppler span, 1/(2 T_sym)."""
        return 0.5 / self.symbol_duration_s


@dataclass(frozen=True)
class BsSite:
    """A base-station site with a uniform planar array."""

    id: int
    position_m: tuple[float, float, float]
    array_rows: int = 1
    array_cols: int = 1
    element_spacing_wavelengths: float = 0.5
    role: str = "tx_rx"

    def __post_init__(self):
        if self.array_rows < 1 or self.array_cols < 1:
            raise ScenarioError(
                f"site.array_rows/array_cols must be >= 1 for site {self.id}")
        if self.role not in _SITE_ROLES:
            raise ScenarioError(
                f"site.role must be one of {_SITE_ROLES}, got {self.role!r}")
        if not self.element_spacing_wavelengths > 0:
            raise ScenarioError(
                "site.element_spacing_wavelengths must be > 0, "
                f"got {self.element_spacing_wavelengths}")

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.position_m, dtype=float)

    @property
    def can_tx(self) -> bool:
        return self.role in ("tx_rx", "tx_only")

    @property
    def can_rx(self) -> bool:
        return self.role in ("tx_rx", "rx_only")


@dataclass(frozen=True)
class Target:
    """Point scatterer with constant velocity and complex amplitude."""

    position_m: tuple[float, float, float]
    velocity_mps: tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not abs(self.amplitude) > 0:
            raise ScenarioError("target.amplitude must have |amplitude| > 0")

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.position_m, dtype=float)

    @property
    def velocity(self) -> np.ndarray:
        return np.asarray(self.velocity_mps, dtype=float)


@dataclass(frozen=True)
class SyncError:
    """Timing and carrier frequency offset of an unsynchronized link."""

    timing_offset_s: float = 0.0
    cfo_hz: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.timing_offset_s == 0.0 and self.cfo_hz == 0.0


@dataclass(frozen=True)
class LinkSpec:
    """One sensing link: transmit site, receive site, sync error, SNR."""

    tx_site_id: int
    rx_site_id: int
    snr_db: float = 0.0
    sync_error: SyncError = field(default_factory=SyncError)

    @property
    def is_monostatic(self) -> bool:
        return self.tx_site_id == self.rx_site_id

    @property
    def kind(self) -> str:
        return "monostatic" if self.is_monostatic else "bistatic"

    def __post_init__(self):
        if self.is_monostatic and not self.sync_error.is_zero:
            raise ScenarioError(
                f"link {self.tx_site_id}->{self.rx_site_id}: monostatic links "
                "must have zero timing_offset_s and cfo_hz")


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable, validated description of one simulation scenario."""

    numerology: Numerology
    sites: tuple[BsSite, ...]
    targets: tuple[Target, ...]
    links: tuple[LinkSpec, ...]
    master_seed: int = 0
    trials: int = 1
    experiment: tuple[tuple[str, object], ...] = ()

    def site_by_id(self, site_id: int) -> BsSite:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise ScenarioError(f"link references unknown site id {site_id}")

    @property
    def experiment_params(self) -> dict:
        return dict(self.experiment)

    def validate(self) -> "ScenarioConfig":
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"site.id values must be unique, got {ids}")
        positions = {tuple(s.position_m) for s in self.sites}
        if len(positions) != len(self.sites):
            raise ScenarioError("site.position_m values must be distinct")
        if self.trials < 1:
            raise ScenarioError(f"experiment.trials must be >= 1, got {self.trials}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ScenarioError(
                f"experiment.master_seed must be a u64, got {self.master_seed}")

        for link in self.links:
            tx = self.site_by_id(link.tx_site_id)
            rx = self.site_by_id(link.rx_site_id)
            if not tx.can_tx:
                raise ScenarioError(
                    f"link.tx_site {tx.id} has role {tx.role!r}, cannot transmit")
            if not rx.can_rx:
                raise ScenarioError(
                    f"link.rx_site {rx.id} has role {rx.role!r}, cannot receive")

        num = self.numerology
        for link in self.links:
            tx = self.site_by_id(link.tx_site_id)
            rx = self.site_by_id(link.rx_site_id)
            for k, tgt in enumerate(self.targets):
                d_tx = float(np.linalg.norm(tgt.position - tx.position))
                d_rx = float(np.linalg.norm(tgt.position - rx.position))
                if link.is_monostatic and d_tx >= num.unambiguous_range_m:
                    raise ScenarioError(
                        f"target[{k}] monostatic range {d_tx:.1f} m exceeds the "
                        f"unambiguous window c/(2 df) = {num.unambiguous_range_m:.1f} m "
                        f"on link {link.tx_site_id}->{link.rx_site_id}")
                # Doppler window: projection of velocity on both legs.
                fd = 0.0
                if d_tx > 0 and d_rx > 0:
                    u_tx = (tx.position - tgt.position) / d_tx
                    u_rx = (rx.position - tgt.position) / d_rx
                    fd = (num.carrier_freq_hz / SPEED_OF_LIGHT) * float(
                        tgt.velocity @ u_tx + tgt.velocity @ u_rx)
                if abs(fd) >= num.doppler_window_hz:
                    raise ScenarioError(
                        f"target[{k}] Doppler {fd:.1f} Hz exceeds the unambiguous "
                        f"window 1/(2 T_sym) = {num.doppler_window_hz:.1f} Hz "
                        f"on link {link.tx_site_id}->{link.rx_site_id}")
        return self


def derive_rng_stream(master_seed: int, trial_index: int, purpose_tag: str) -> np.random.Generator:
    """Return an independent, reproducible random stream.

    Streams for distinct (trial_index, purpose_tag) pairs are statistically
    independent; identical inputs produce identical streams on every
    platform (PCG64 seeded through SeedSequence spawn keys).
    """
    if purpose_tag not in RNG_PURPOSES:
        raise ScenarioError(
            f"purpose_tag must be one of {RNG_PURPOSES}, got {purpose_tag!r}")
    code = RNG_PURPOSES.index(purpose_tag)
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index, code))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Document parsing: a small key = value / [section] / [[table]] subset.
# ---------------------------------------------------------------------------

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_scalar(text: str, where: str):
    text = text.strip()
    if not text:
        raise ScenarioError(f"empty value for {where}")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    if _FLOAT_RE.match(text) or text in ("inf", "-inf"):
        return float(text)
    raise ScenarioError(f"cannot parse value {text!r} for {where}")


def _parse_value(text: str, where: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ScenarioError(f"unterminated list for {where}")
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, where) for part in inner.split(",")]
    return _parse_scalar(text, where)


def parse_document(text: str) -> dict:
    """Parse the configuration document into plain dicts and lists."""
    doc: dict = {}
    current: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("[["):
            if not line.endswith("]]"):
                raise ScenarioError(f"line {lineno}: malformed table header {raw!r}")
            name = line[2:-2].strip()
            current = {}
            doc.setdefault(name, [])
            if not isinstance(doc[name], list):
                raise ScenarioError(
                    f"line {lineno}: section [{name}] already used as a single table")
            doc[name].append(current)
        elif line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"line {lineno}: malformed section header {raw!r}")
            name = line[1:-1].strip()
            if name in doc:
                raise ScenarioError(f"line {lineno}: duplicate section [{name}]")
            current = {}
            doc[name] = current
        else:
            if "=" not in line:
                raise ScenarioError(f"line {lineno}: expected key = value, got {raw!r}")
            if current is None:
                raise ScenarioError(f"line {lineno}: key outside of any section")
            key, _, value = line.partition("=")
            key = key.strip()
            current[key] = _parse_value(value, key)
    return doc


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioError(f"missing required key {where}.{key}")
    return table[key]


def _vec3(value, where: str) -> tuple[float, float, float]:
    if not isinstance(value, list) or len(value) != 3:
        raise ScenarioError(f"{where} must be a 3-element list, got {value!r}")
    return (float(value[0]), float(value[1]), float(value[2]))


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document."""
    doc = parse_document(text)

    numt = doc.get("numerology")
    if not isinstance(numt, dict):
        raise ScenarioError("missing [numerology] section")
    numerology = Numerology(
        carrier_freq_hz=float(_require(numt, "carrier_freq_hz", "numerology")),
        subcarrier_spacing_hz=float(_require(numt, "subcarrier_spacing_hz", "numerology")),
        num_subcarriers=int(_require(numt, "num_subcarriers", "numerology")),
        num_symbols=int(_require(numt, "num_symbols", "numerology")),
        cp_fraction=float(numt.get("cp_fraction", 0.125)),
    )

    sites = []
    for i, t in enumerate(doc.get("site", [])):
        sites.append(BsSite(
            id=int(_require(t, "id", f"site[{i}]")),
            position_m=_vec3(_require(t, "position_m", f"site[{i}]"), f"site[{i}].position_m"),
            array_rows=int(t.get("array_rows", 1)),
            array_cols=int(t.get("array_cols", 1)),
            element_spacing_wavelengths=float(t.get("element_spacing_wavelengths", 0.5)),
            role=str(t.get("role", "tx_rx")),
        ))

    targets = []
    for i, t in enumerate(doc.get("target", [])):
        amp = t.get("amplitude", [1.0, 0.0])
        if not isinstance(amp, list) or len(amp) != 2:
            raise ScenarioError(f"target[{i}].amplitude must be [re, im], got {amp!r}")
        targets.append(Target(
            position_m=_vec3(_require(t, "position_m", f"target[{i}]"), f"target[{i}].position_m"),
            velocity_mps=_vec3(t.get("velocity_mps", [0.0, 0.0, 0.0]), f"target[{i}].velocity_mps"),
            amplitude=complex(float(amp[0]), float(amp[1])),
        ))

    links = []
    for i, t in enumerate(doc.get("link", [])):
        links.append(LinkSpec(
            tx_site_id=int(_require(t, "tx_site", f"link[{i}]")),
            rx_site_id=int(_require(t, "rx_site", f"link[{i}]")),
            snr_db=float(t.get("snr_db", 0.0)),
            sync_error=SyncError(
                timing_offset_s=float(t.get("timing_offset_s", 0.0)),
                cfo_hz=float(t.get("cfo_hz", 0.0)),
            ),
        ))

    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ScenarioError("[experiment] must be a single section")
    exp = dict(exp)
    master_seed = int(exp.pop("master_seed", 0))
    trials = int(exp.pop("trials", 1))

    config = ScenarioConfig(
        numerology=numerology,
        sites=tuple(sites),
        targets=tuple(targets),
        links=tuple(links),
        master_seed=master_seed,
        trials=trials,
        experiment=tuple(sorted(exp.items())),
    )
    return config.validate()


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ScenarioError(f"cannot serialize value {value!r}")


def serialize_scenario(config: ScenarioConfig) -> str:
    """Render a config back to document text; round-trips exactly."""
    n = config.numerology
    lines = ["[numerology]"]
    lines.append(f"carrier_freq_hz = {_fmt(float(n.carrier_freq_hz))}")
    lines.append(f"subcarrier_spacing_hz = {_fmt(float(n.subcarrier_spacing_hz))}")
    lines.append(f"num_subcarriers = {int(n.num_subcarriers)}")
    lines.append(f"num_symbols = {int(n.num_symbols)}")
    lines.append(f"cp_fraction = {_fmt(float(n.cp_fraction))}")
    for s in config.sites:
        lines.append("")
        lines.append("[[site]]")
        lines.append(f"id = {s.id}")
        lines.append(f"position_m = {_fmt(list(s.position_m))}")
        lines.append(f"array_rows = {s.array_rows}")
        lines.append(f"array_cols = {s.array_cols}")
        lines.append(f"element_spacing_wavelengths = {_fmt(float(s.element_spacing_wavelengths))}")
        lines.append(f'role = "{s.role}"')
    for t in config.targets:
        lines.append("")
        lines.append("[[target]]")
        lines.append(f"position_m = {_fmt(list(t.position_m))}")
        lines.append(f"velocity_mps = {_fmt(list(t.velocity_mps))}")
        lines.append(f"amplitude = {_fmt([t.amplitude.real, t.amplitude.imag])}")
    for l in config.links:
        lines.append("")
        lines.append("[[link]]")
        lines.append(f"tx_site = {l.tx_site_id}")
        lines.append(f"rx_site = {l.rx_site_id}")
        lines.append(f"snr_db = {_fmt(float(l.snr_db))}")
        lines.append(f"timing_offset_s = {_fmt(float(l.sync_error.timing_offset_s))}")
        lines.append(f"cfo_hz = {_fmt(float(l.sync_error.cfo_hz))}")
    lines.append("")
    lines.append("[experiment]")
    lines.append(f"master_seed = {config.master_seed}")
    lines.append(f"trials = {config.trials}")
    for key, value in config.experiment:
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def config_hash(config: ScenarioConfig) -> str:
    """Short stable hash of the canonical serialized config."""
    return hashlib.sha256(serialize_scenario(config).encode("utf-8")).hexdigest()[:12]
