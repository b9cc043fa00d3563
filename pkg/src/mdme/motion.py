"""Motion trajectory ingestion, augmentation, and synthetic generation.

On-disk format: one '#'-prefixed JSON header line (name, rate, channels
with units/tags, per-axis mirror maps), a CSV column-name row, then the
delimited float rows. Floats are written with repr so save->load is exact.

Channels carry free-form tags; the conventions used by the toolkit are
"linear"/"angular"/"joint" (noise groups), "height" (scaled by
scale_height), and "gravity" (channels form consecutive triples that are
kept unit-norm). Mirror maps name, per reflection axis, the channel pairs
to swap and the channels to negate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError, ParseError
from .rng import Rng

UNITS = ("m", "m/s", "rad", "rad/s", "unitless")
_GRAVITY_NORM_TOL = 1e-3


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class AxisMirror:
    """Lateral-reflection action on channels: swap pairs, then negate."""

    swaps: tuple[tuple[int, int], ...]
    negates: tuple[int, ...]


@dataclass
class MotionSequence:
    name: str
    rate: float
    channels: tuple[Channel, ...]
    data: np.ndarray                      # (T, C)
    mirror: dict[str, AxisMirror] = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.rate <= 0:
            raise ConfigError(f"rate must be positive, got {self.rate}")
        if self.data.ndim != 2 or self.data.shape[1] != len(self.channels):
            raise DimensionError(
                f"data shape {self.data.shape} vs {len(self.channels)} channels"
            )

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def channel_index(self, name: str) -> int:
        for i, ch in enumerate(self.channels):
            if ch.name == name:
                return i
        raise ConfigError(f"no channel named {name!r}")

    def tagged(self, tag: str) -> list[int]:
        return [i for i, ch in enumerate(self.channels) if tag in ch.tags]

    def gravity_groups(self) -> list[tuple[int, int, int]]:
        """Consecutive triples of gravity-tagged channels."""
        idx = self.tagged("gravity")
        if len(idx) % 3 != 0:
            raise ConfigError("gravity channels must form consecutive triples")
        groups = []
        for i in range(0, len(idx), 3):
            a, b, c = idx[i:i + 3]
            if b != a + 1 or c != a + 2:
                raise ConfigError("gravity channels must form consecutive triples")
            groups.append((a, b, c))
        return groups


@dataclass
class GoalWindow:
    """History buffer of consecutive raw goal frames, oldest first."""

    frames: np.ndarray                    # (H, C)
    dt: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise DimensionError(f"window frames shape {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ParseError("window contains non-finite values")


@dataclass
class SupervisedPair:
    """Raw input sequence aligned with its synthesized supervisory target."""

    name: str
    inputs: MotionSequence
    target: np.ndarray                    # (T, D)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.target.shape[0] != self.inputs.frames:
            raise DimensionError(
                f"target frames {self.target.shape[0]} vs input frames {self.inputs.frames}"
            )


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

def _mirror_to_names(seq: MotionSequence) -> dict:
    out = {}
    for axis, m in seq.mirror.items():
        out[axis] = {
            "swap": [[seq.channels[a].name, seq.channels[b].name] for a, b in m.swaps],
            "negate": [seq.channels[i].name for i in m.negates],
        }
    return out


def save_motion(seq: MotionSequence, path) -> None:
    header = {
        "format": "mdme-motion",
        "version": 1,
        "name": seq.name,
        "rate": seq.rate,
        "channels": [
            {"name": c.name, "unit": c.unit, "tags": list(c.tags)} for c in seq.channels
        ],
        "mirror": _mirror_to_names(seq),
    }
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, separators=(",", ":")) + "\n")
        fh.write(",".join(c.name for c in seq.channels) + "\n")
        for row in seq.data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_motion(path) -> MotionSequence:
    """Parse and validate one motion file; errors cite row/column."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError(f"{path}: missing JSON header line")
    try:
        header = json.loads(lines[0][1:])
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: bad JSON header: {e}") from None
    if header.get("format") != "mdme-motion":
        raise ParseError(f"{path}: not an mdme-motion file")
    channels = []
    for entry in header.get("channels", []):
        unit = entry.get("unit", "")
        if unit not in UNITS:
            raise ParseError(f"{path}: channel {entry.get('name')!r} has bad unit {unit!r}")
        channels.append(Channel(entry["name"], unit, tuple(entry.get("tags", ()))))
    if not channels:
        raise ParseError(f"{path}: header declares no channels")
    if len(lines) < 2:
        raise ParseError(f"{path}: missing column row")
    col_names = lines[1].split(",")
    declared = [c.name for c in channels]
    if col_names != declared:
        missing = [n for n in declared if n not in col_names]
        raise ParseError(f"{path}: column row does not match header channels"
                         + (f"; missing {missing}" if missing else ""))
    rows = []
    for r, line in enumerate(lines[2:]):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(channels):
            raise ParseError(f"{path}: row {r} has {len(cells)} cells, expected {len(channels)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(f"{path}: row {r} has a non-numeric cell") from None
        for ci, v in enumerate(vals):
            if not np.isfinite(v):
                raise ParseError(f"{path}: non-finite value at row {r}, column {declared[ci]!r}")
        rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)

    mirror = {}
    name_to_idx = {c.name: i for i, c in enumerate(channels)}
    for axis, m in header.get("mirror", {}).items():
        try:
            swaps = tuple((name_to_idx[a], name_to_idx[b]) for a, b in m.get("swap", []))
            negates = tuple(name_to_idx[n] for n in m.get("negate", []))
        except KeyError as e:
            raise ParseError(f"{path}: mirror map references unknown channel {e}") from None
        touched = [i for pair in swaps for i in pair]
        if len(set(touched)) != len(touched):
            raise ParseError(f"{path}: mirror axis {axis!r} swap pairs are not an involution")
        mirror[axis] = AxisMirror(swaps=swaps, negates=negates)

    seq = MotionSequence(name=header.get("name", "motion"), rate=float(header["rate"]),
                         channels=tuple(channels), data=data, mirror=mirror)
    # Gravity triples must be unit vectors (renormalize small drift, reject worse).
    for grp in seq.gravity_groups():
        norms = np.linalg.norm(seq.data[:, grp], axis=1)
        if np.any(np.abs(norms - 1.0) > _GRAVITY_NORM_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ParseError(f"{path}: gravity columns {grp} not unit-norm at row {bad}")
        seq.data[:, grp] /= _renorm_divisor(norms)[:, None]
    return seq


def _renorm_divisor(norms: np.ndarray) -> np.ndarray:
    """Divisor that leaves already-unit rows bit-identical."""
    return np.where(np.abs(norms - 1.0) > 1e-9, np.maximum(norms, 1e-12), 1.0)


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

def window(seq: MotionSequence, t: int, history: int) -> GoalWindow:
    """Frames t-H+1..t, clamping before the sequence start to frame 0."""
    if t < 0 or t >= seq.frames:
        raise DimensionError(f"frame index {t} outside sequence of {seq.frames} frames")
    idx = np.clip(np.arange(t - history + 1, t + 1), 0, None)
    return GoalWindow(frames=seq.data[idx], dt=1.0 / seq.rate)


def gather_windows(seq: MotionSequence, ts: np.ndarray, history: int) -> np.ndarray:
    """Vectorized window extraction -> (len(ts), history, C)."""
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size and (ts.min() < 0 or ts.max() >= seq.frames):
        raise DimensionError(f"frame indices outside sequence of {seq.frames} frames")
    idx = np.clip(ts[:, None] + np.arange(-history + 1, 1)[None, :], 0, None)
    return seq.data[idx]


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def mirror(seq: MotionSequence, axis: str) -> MotionSequence:
    """Reflect across the named axis: swap paired channels, then flip signs."""
    if axis not in seq.mirror:
        raise ConfigError(f"sequence {seq.name!r} has no mirror map for axis {axis!r}")
    m = seq.mirror[axis]
    perm = np.arange(seq.dim)
    for a, b in m.swaps:
        perm[a], perm[b] = perm[b], perm[a]
    data = seq.data[:, perm].copy()
    if m.negates:
        data[:, list(m.negates)] *= -1.0
    suffix = f"_m{axis}"
    name = seq.name[:-len(suffix)] if seq.name.endswith(suffix) else seq.name + suffix
    return replace(seq, name=name, data=data)


def scale_height(seq: MotionSequence, factor: float) -> MotionSequence:
    """Scale height-tagged channels; angular and unit-norm channels untouched."""
    if factor <= 0:
        raise ConfigError(f"height scale must be positive, got {factor}")
    if factor == 1.0:
        return seq
    data = seq.data.copy()
    idx = seq.tagged("height")
    data[:, idx] *= factor
    return replace(seq, name=f"{seq.name}_s{factor:g}", data=data)


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform noise ranges keyed by channel tag; first matching tag wins."""

    ranges: dict[str, tuple[float, float]]

    def __post_init__(self):
        for tag, (lo, hi) in self.ranges.items():
            if lo > hi:
                raise ConfigError(f"noise range for {tag!r} is inverted: ({lo}, {hi})")

    def range_for(self, channel: Channel) -> tuple[float, float] | None:
        for tag, rng in self.ranges.items():
            if tag in channel.tags:
                return rng
        return None


def perturb(seq: MotionSequence, noise: NoiseSpec, rng: Rng) -> MotionSequence:
    """Add i.i.d. uniform noise per channel tag; gravity renormalized after."""
    data = seq.data.copy()
    for ci, ch in enumerate(seq.channels):
        band = noise.range_for(ch)
        if band is None or band[0] == band[1] == 0.0:
            continue
        data[:, ci] += rng.uniform(band[0], band[1], size=(seq.frames,))
    out = replace(seq, data=data)
    for grp in out.gravity_groups():
        norms = np.linalg.norm(out.data[:, grp], axis=1)
        out.data[:, grp] /= _renorm_divisor(norms)[:, None]
    return out


def perturb_windows(wins: np.ndarray, channels: tuple[Channel, ...],
                    noise: NoiseSpec, rng: Rng) -> np.ndarray:
    """Batched variant of `perturb` over window arrays (..., H, C)."""
    wins = wins.copy()
    for ci, ch in enumerate(channels):
        band = noise.range_for(ch)
        if band is None or band[0] == band[1] == 0.0:
            continue
        wins[..., ci] += rng.uniform(band[0], band[1], size=wins.shape[:-1])
    grav = [i for i, ch in enumerate(channels) if "gravity" in ch.tags]
    for s in range(0, len(grav), 3):
        grp = grav[s:s + 3]
        norms = np.linalg.norm(wins[..., grp], axis=-1)
        wins[..., grp] /= _renorm_divisor(norms)[..., None]
    return wins


def augment_dataset(seqs: list[MotionSequence],
                    reflections: tuple[str, ...] = ("", "x", "y", "xy"),
                    scales: tuple[float, ...] = (0.9, 1.0, 1.1)) -> list[MotionSequence]:
    """Every reflection state crossed with every height scale, originals included."""
    out = []
    for seq in seqs:
        for refl in reflections:
            mirrored = seq
            for axis in refl:
                mirrored = mirror(mirrored, axis)
            for scale in scales:
                variant = scale_height(mirrored, scale)
                name = f"{seq.name}_r{refl or 'o'}_s{scale:g}"
                out.append(replace(variant, name=name))
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

_FEET = ("lf", "rf", "lh", "rh")
_FOOT_OFFSETS = {
    "lf": (0.35, 0.22, 0.05), "rf": (0.35, -0.22, 0.05),
    "lh": (-0.35, 0.22, 0.05), "rh": (-0.35, -0.22, 0.05),
}
_BASE_HEIGHT = 0.55


def quadruped_channels() -> tuple[Channel, ...]:
    chans = []
    for foot in _FEET:
        chans.append(Channel(f"{foot}_x", "m", ("foot", "linear", "x")))
        chans.append(Channel(f"{foot}_y", "m", ("foot", "linear", "y")))
        chans.append(Channel(f"{foot}_z", "m", ("foot", "linear", "height")))
    for ax in ("x", "y", "z"):
        chans.append(Channel(f"grav_{ax}", "unitless", ("gravity", ax)))
    chans.append(Channel("base_z", "m", ("linear", "height")))
    return tuple(chans)


def quadruped_mirror_maps() -> dict[str, AxisMirror]:
    """Reflection across x swaps left/right and flips y; across y swaps front/hind."""
    chans = quadruped_channels()
    idx = {c.name: i for i, c in enumerate(chans)}

    def swaps(pairs):
        return tuple((idx[f"{a}_{ax}"], idx[f"{b}_{ax}"]) for a, b in pairs for ax in "xyz")

    x_mirror = AxisMirror(
        swaps=swaps([("lf", "rf"), ("lh", "rh")]),
        negates=tuple(idx[n] for n in ("lf_y", "rf_y", "lh_y", "rh_y", "grav_y")),
    )
    y_mirror = AxisMirror(
        swaps=swaps([("lf", "lh"), ("rf", "rh")]),
        negates=tuple(idx[n] for n in ("lf_x", "rf_x", "lh_x", "rh_x", "grav_x")),
    )
    return {"x": x_mirror, "y": y_mirror}


QUADRUPED_NOISE = NoiseSpec(ranges={
    "linear": (-0.05, 0.05),
    "angular": (-0.2, 0.2),
    "gravity": (-0.05, 0.05),
})

HUMANOID_NOISE = NoiseSpec(ranges={
    "joint": (-0.05, 0.05),
    "gravity": (-0.05, 0.05),
})


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic motion: sinusoid bank + transient bumps + noise."""

    name: str
    duration: float = 8.0
    rate: float = 50.0
    sine_count: int = 2
    freq_range: tuple[float, float] = (0.5, 4.0)
    sine_amp: float = 0.12
    bump_count: int = 0
    bump_amp: float = 0.25
    bump_width: tuple[float, float] = (0.08, 0.4)
    noise: float = 0.0
    gravity_wobble: float = 0.05
    height_amp: float = 0.04


def synth_motion(spec: SynthSpec, rng: Rng) -> MotionSequence:
    """Deterministic-by-seed multichannel signal on the quadruped template."""
    frames = int(round(spec.duration * spec.rate))
    t = np.arange(frames) / spec.rate
    chans = quadruped_channels()
    data = np.zeros((frames, len(chans)))

    def bank(amp_scale: float = 1.0) -> np.ndarray:
        sig = np.zeros(frames)
        for _ in range(spec.sine_count):
            f = rng.uniform(*spec.freq_range)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            sig += spec.sine_amp * amp_scale * np.sin(2.0 * np.pi * f * t + phase)
        for _ in range(spec.bump_count):
            center = rng.uniform(0.1, 0.9) * spec.duration
            width = rng.uniform(*spec.bump_width)
            amp = spec.bump_amp * amp_scale * (1.0 if rng.uniform() < 0.5 else -1.0)
            sig += amp * np.exp(-0.5 * ((t - center) / width) ** 2)
        if spec.noise > 0.0:
            sig += spec.noise * rng.normal(size=(frames,))
        return sig

    ci = 0
    for foot in _FEET:
        for ax, off in zip("xyz", _FOOT_OFFSETS[foot]):
            data[:, ci] = off + bank(0.4 if ax == "z" else 1.0)
            ci += 1
    grav = np.tile([0.0, 0.0, -1.0], (frames, 1))
    if spec.gravity_wobble > 0.0:
        for a in range(2):
            f = rng.uniform(*spec.freq_range)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            grav[:, a] += spec.gravity_wobble * np.sin(2.0 * np.pi * f * t + phase)
    grav /= np.linalg.norm(grav, axis=1)[:, None]
    data[:, ci:ci + 3] = grav
    ci += 3
    height = _BASE_HEIGHT + (bank(1.0) * spec.height_amp / max(spec.sine_amp, 1e-9)
                             if (spec.sine_count or spec.bump_count or spec.noise) else 0.0)
    data[:, ci] = np.maximum(height, 0.05)

    return MotionSequence(name=spec.name, rate=spec.rate, channels=chans,
                          data=data, mirror=quadruped_mirror_maps())


def corpus_specs() -> list[SynthSpec]:
    """The bundled 10-motion corpus: global-periodic, local, and transient styles."""
    specs = []
    for i in range(4):  # sustained gaits
        specs.append(SynthSpec(name=f"gait{i:02d}", sine_count=2 + i % 2,
                               freq_range=(0.8, 2.5), noise=0.004))
    for i in range(3):  # localized oscillation: gait plus a few wide bumps
        specs.append(SynthSpec(name=f"local{i:02d}", sine_count=2, freq_range=(1.0, 3.0),
                               bump_count=3, bump_width=(0.2, 0.5), noise=0.006))
    for i in range(3):  # transient heavy: sparse tones, many sharp bumps
        specs.append(SynthSpec(name=f"trans{i:02d}", sine_count=1, freq_range=(0.5, 1.5),
                               sine_amp=0.06, bump_count=6, bump_width=(0.06, 0.15),
                               bump_amp=0.3, noise=0.01))
    return specs


def synth_corpus(seed: int = 0) -> list[MotionSequence]:
    rng = Rng(seed)
    return [synth_motion(spec, rng.split(i)) for i, spec in enumerate(corpus_specs())]


# ---------------------------------------------------------------------------
# Supervisory target synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WarpSpec:
    """Fixed nonlinear channel mixing standing in for morphology retargeting.

    identity=True copies the input; otherwise the centered input goes through
    a seeded column-orthonormal mix into target_dim channels and an offset
    tanh warp: tanh(gain * mix + offset). The gain scales only the motion
    swing, so the warp stays off saturation and the targets remain sensitive
    to the inputs. `center` defaults to zeros; dataset builders pass the
    channel template's rest pose so the curvature acts on the actual motion.
    """

    seed: int = 7
    target_dim: int = 12
    gain: float = 6.0
    offset_range: tuple[float, float] = (0.5, 1.2)
    center: tuple[float, ...] | None = None
    identity: bool = False


def quadruped_center() -> tuple[float, ...]:
    """Rest pose of the quadruped template (foot offsets, gravity, height)."""
    vals = []
    for foot in _FEET:
        vals.extend(_FOOT_OFFSETS[foot])
    vals.extend([0.0, 0.0, -1.0, _BASE_HEIGHT])
    return tuple(vals)


def default_warp(**overrides) -> WarpSpec:
    """Corpus warp: quadruped-centered mix into a 12-dim target space."""
    return WarpSpec(center=quadruped_center(), **overrides)


def synth_retarget(seq: MotionSequence, warp: WarpSpec = WarpSpec()) -> SupervisedPair:
    if warp.identity:
        return SupervisedPair(name=seq.name, inputs=seq, target=seq.data.copy())
    rng = Rng(warp.seed)
    a = rng.normal(size=(seq.dim, warp.target_dim))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))[None, :]     # fixed sign convention for determinism
    offs = rng.uniform(*warp.offset_range, size=(warp.target_dim,))
    offs *= np.where(rng.uniform(size=(warp.target_dim,)) < 0.5, -1.0, 1.0)
    centered = seq.data if warp.center is None else seq.data - np.asarray(warp.center)
    target = np.tanh(warp.gain * (centered @ q) + offs)
    return SupervisedPair(name=seq.name, inputs=seq, target=target)
