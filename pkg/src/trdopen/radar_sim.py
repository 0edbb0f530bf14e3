"""Synthetic FMCW recordings of point-scatterer "people".

A scene is a torso scatterer plus a handful of limb scatterers that share its
bulk motion and add a sinusoidal range oscillation (the micro-Doppler source).
Signals are generated directly in dechirped baseband form.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rdp
from .harness.cubefile import write_cube
from .harness.manifest import DatasetManifest, ManifestRecord, write_manifest

SPEED_OF_LIGHT = 299_792_458.0

# Per-antenna gain/phase is a property of the (simulated) hardware, not of a
# recording, so it is drawn from a fixed stream keyed only by antenna id.
_ANTENNA_GAIN_SEED = 0x5EED_A27E


@dataclass(frozen=True)
class RadarParams:
    carrier_hz: float = 77e9
    bandwidth_hz: float = 1e9
    chirp_duration_s: float = 64e-6
    samples_per_chirp: int = 64
    chirps_per_frame: int = 32
    frames: int = 16
    antenna_count: int = 4

    def __post_init__(self):
        for name in ("samples_per_chirp", "chirps_per_frame", "frames"):
            v = getattr(self, name)
            if not rdp.is_power_of_two(v):
                raise ValueError(f"{name} must be a power of two >= 1, got {v}")
        if self.antenna_count < 1:
            raise ValueError("antenna_count must be >= 1")
        if min(self.carrier_hz, self.bandwidth_hz, self.chirp_duration_s) <= 0:
            raise ValueError("carrier, bandwidth and chirp duration must be positive")

    @property
    def sample_rate_hz(self) -> float:
        return self.samples_per_chirp / self.chirp_duration_s

    @property
    def slope_hz_per_s(self) -> float:
        return self.bandwidth_hz / self.chirp_duration_s

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def max_range_m(self) -> float:
        """Unambiguous range of complex sampling: beat frequency below fs."""
        return self.sample_rate_hz * SPEED_OF_LIGHT / (2 * self.slope_hz_per_s)

    @property
    def range_resolution_m(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.bandwidth_hz)

    @property
    def max_velocity_mps(self) -> float:
        return self.wavelength_m / (4 * self.chirp_duration_s)

    @property
    def velocity_resolution_mps(self) -> float:
        return self.wavelength_m / (2 * self.chirps_per_frame * self.chirp_duration_s)

    @property
    def num_samples(self) -> int:
        return self.samples_per_chirp * self.chirps_per_frame * self.frames

    @property
    def duration_s(self) -> float:
        return self.chirps_per_frame * self.frames * self.chirp_duration_s

    def beat_frequency(self, range_m):
        return 2 * self.slope_hz_per_s * np.asarray(range_m) / SPEED_OF_LIGHT

    def doppler_frequency(self, velocity_mps):
        return 2 * self.carrier_hz * np.asarray(velocity_mps) / SPEED_OF_LIGHT

    def range_bin(self, range_m) -> int:
        """Expected range-FFT peak bin for a target at ``range_m``."""
        return int(round(float(self.beat_frequency(range_m)) * self.samples_per_chirp
                         / self.sample_rate_hz))

    def doppler_bin(self, velocity_mps) -> int:
        """Expected Doppler peak bin (zero velocity at ``N // 2``)."""
        offset = float(self.doppler_frequency(velocity_mps)) * self.chirps_per_frame \
            * self.chirp_duration_s
        return self.chirps_per_frame // 2 + int(round(offset))


@dataclass(frozen=True)
class Scatterer:
    amplitude: float
    base_range_m: float
    radial_velocity_mps: float = 0.0
    osc_amplitude_m: float = 0.0
    osc_freq_hz: float = 0.0
    osc_phase_rad: float = 0.0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("scatterer amplitude must be positive")
        if self.base_range_m <= 0:
            raise ValueError("scatterer base range must be positive")

    def range_at(self, t):
        t = np.asarray(t, dtype=np.float64)
        return (self.base_range_m + self.radial_velocity_mps * t
                + self.osc_amplitude_m * np.sin(2 * np.pi * self.osc_freq_hz * t
                                                + self.osc_phase_rad))


@dataclass(frozen=True)
class Scene:
    class_label: int
    scatterers: tuple[Scatterer, ...]
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.scatterers:
            raise ValueError("a scene needs at least one scatterer")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def torso(self) -> Scatterer:
        return self.scatterers[0]


@dataclass
class RawSignal:
    samples: np.ndarray
    params: RadarParams
    antenna_id: int = 0

    def __post_init__(self):
        if self.samples.shape != (self.params.num_samples,):
            raise ValueError(
                f"expected {self.params.num_samples} samples, got shape {self.samples.shape}")
        if not 0 <= self.antenna_id < self.params.antenna_count:
            raise ValueError(f"antenna_id {self.antenna_id} out of range")


Range = tuple[float, float]


@dataclass(frozen=True)
class ClassProfile:
    """Parameter bands one activity class draws its scenes from."""
    name: str
    torso_velocity: Range
    limb_osc_amplitude: Range
    limb_osc_freq: Range
    limb_count: tuple[int, int] = (2, 5)
    base_range: Range = (2.0, 5.0)
    torso_amplitude: Range = (0.8, 1.2)
    torso_osc_amplitude: Range = (0.0, 0.01)
    limb_amplitude: Range = (0.2, 0.5)
    limb_offset: Range = (-0.3, 0.3)
    noise_std: float = 1.0


@dataclass(frozen=True)
class SceneConfig:
    classes: tuple[ClassProfile, ...]

    def __len__(self):
        return len(self.classes)


def _uniform(rng: np.random.Generator, bounds, what: str) -> float:
    lo, hi = bounds
    if hi < lo:
        raise ValueError(f"empty parameter range for {what}: {bounds}")
    return float(rng.uniform(lo, hi))


def build_scene(class_label: int, rng_seed: int, scene_config: SceneConfig) -> Scene:
    """Draw one scene of ``class_label`` from its profile's bands.

    The random stream depends on ``rng_seed`` only, so scenes of different
    classes built from one seed share their underlying variates (bands that
    coincide yield identical parameters).
    """
    if not 0 <= class_label < len(scene_config.classes):
        raise ValueError(f"unknown class id {class_label}")
    prof = scene_config.classes[class_label]
    rng = np.random.default_rng(rng_seed)

    lo, hi = prof.limb_count
    if hi < lo or lo < 0:
        raise ValueError(f"empty parameter range for limb_count: {prof.limb_count}")
    velocity = _uniform(rng, prof.torso_velocity, "torso_velocity")
    base = _uniform(rng, prof.base_range, "base_range")
    torso_osc_freq = _uniform(rng, prof.limb_osc_freq, "limb_osc_freq")
    scatterers = [Scatterer(
        amplitude=_uniform(rng, prof.torso_amplitude, "torso_amplitude"),
        base_range_m=base,
        radial_velocity_mps=velocity,
        osc_amplitude_m=_uniform(rng, prof.torso_osc_amplitude, "torso_osc_amplitude"),
        # torso bobs at twice the stride frequency
        osc_freq_hz=2 * torso_osc_freq,
        osc_phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )]
    for _ in range(int(rng.integers(lo, hi + 1))):
        scatterers.append(Scatterer(
            amplitude=_uniform(rng, prof.limb_amplitude, "limb_amplitude"),
            base_range_m=base + _uniform(rng, prof.limb_offset, "limb_offset"),
            radial_velocity_mps=velocity,
            osc_amplitude_m=_uniform(rng, prof.limb_osc_amplitude, "limb_osc_amplitude"),
            osc_freq_hz=_uniform(rng, prof.limb_osc_freq, "limb_osc_freq"),
            osc_phase_rad=float(rng.uniform(0, 2 * np.pi)),
        ))
    return Scene(class_label, tuple(scatterers), prof.noise_std)


def antenna_gain(antenna_id: int) -> complex:
    """Fixed complex gain of one receive antenna."""
    rng = np.random.default_rng([_ANTENNA_GAIN_SEED, antenna_id])
    mag = rng.uniform(0.8, 1.25)
    phase = rng.uniform(0, 2 * np.pi)
    return complex(mag * np.exp(1j * phase))


def synthesize_beat_signal(scene: Scene, params: RadarParams, antenna_id: int,
                           rng_seed: int) -> RawSignal:
    """Dechirped baseband samples of ``scene`` as seen by one antenna.

    Range is frozen within a chirp (no intra-chirp migration). Noise is
    circular complex Gaussian with total standard deviation ``noise_std``.
    """
    if not 0 <= antenna_id < params.antenna_count:
        raise ValueError(f"antenna_id {antenna_id} out of range [0, {params.antenna_count})")
    n_chirps = params.chirps_per_frame * params.frames
    t_slow = np.arange(n_chirps) * params.chirp_duration_s
    t_fast = np.arange(params.samples_per_chirp) / params.sample_rate_hz

    signal = np.zeros((n_chirps, params.samples_per_chirp), dtype=np.complex128)
    for i, sc in enumerate(scene.scatterers):
        r = sc.range_at(t_slow)
        if r.min() <= 0 or r.max() >= params.max_range_m:
            raise ValueError(
                f"scatterer {i} leaves the unambiguous range (0, {params.max_range_m:.3f}) m")
        fb = params.beat_frequency(r)
        phase = 2 * np.pi * (fb[:, None] * t_fast[None, :]
                             + (2 * params.carrier_hz / SPEED_OF_LIGHT) * r[:, None])
        signal += sc.amplitude * np.exp(1j * phase)

    signal = signal.reshape(-1) * antenna_gain(antenna_id)
    if scene.noise_std > 0:
        rng = np.random.default_rng([rng_seed, antenna_id])
        noise = rng.standard_normal((2, signal.size))
        signal = signal + (scene.noise_std / np.sqrt(2)) * (noise[0] + 1j * noise[1])
    return RawSignal(signal, params, antenna_id)


@dataclass(frozen=True)
class DatasetRecipe:
    scene_config: SceneConfig
    num_tests: int
    params: RadarParams = field(default_factory=lambda: RadarParams(frames=64))
    crop_len: int = 16
    crop_count: int = 6
    seed: int = 0
    rdp_options: rdp.RdpOptions = rdp.RdpOptions()
    write_spectrograms: bool = True

    def __post_init__(self):
        if self.num_tests < 1:
            raise ValueError("num_tests must be >= 1")
        if len(self.scene_config) < 1:
            raise ValueError("recipe needs at least one class")
        rdp.crop_offsets(self.params.frames, self.crop_len, self.crop_count)

    @property
    def num_classes(self) -> int:
        return len(self.scene_config)

    def class_of(self, test_id: int) -> int:
        return test_id % self.num_classes

    def record_id(self, test_id: int, antenna_id: int, crop_index: int) -> str:
        return f"t{test_id:04d}-a{antenna_id}-c{crop_index}"


def plan_records(recipe: DatasetRecipe) -> DatasetManifest:
    """Manifest rows a recipe will produce, without generating anything."""
    rows = []
    for test_id in range(recipe.num_tests):
        for ant in range(recipe.params.antenna_count):
            for crop in range(recipe.crop_count):
                rid = recipe.record_id(test_id, ant, crop)
                rows.append(ManifestRecord(
                    record_id=rid, test_id=test_id, antenna_id=ant,
                    class_label=recipe.class_of(test_id), crop_index=crop,
                    cube_path=f"cubes/{rid}.trdc",
                    spectrogram_path=f"spectrograms/{rid}.trdc" if recipe.write_spectrograms else "",
                ))
    return DatasetManifest(rows)


def scene_seed(recipe: DatasetRecipe, test_id: int) -> int:
    """Scene seed of one test, shared by the tests of one round-robin group.

    Tests ``g*C .. g*C + C-1`` (one per class) draw their scenes from common
    random numbers, so classes differ only where their parameter bands do.
    """
    group = test_id // recipe.num_classes
    return int(np.random.SeedSequence([recipe.seed, group]).generate_state(1)[0])


def noise_seed(recipe: DatasetRecipe, test_id: int) -> int:
    """Receiver-noise seed of one test; unique per test."""
    return int(np.random.SeedSequence([recipe.seed, test_id, 1]).generate_state(1)[0])


def _generate_test(recipe: DatasetRecipe, test_id: int, out_dir: Path):
    scene = build_scene(recipe.class_of(test_id), scene_seed(recipe, test_id), recipe.scene_config)
    p = recipe.params
    offsets = rdp.crop_offsets(p.frames, recipe.crop_len, recipe.crop_count)
    for ant in range(p.antenna_count):
        raw = synthesize_beat_signal(scene, p, ant, noise_seed(recipe, test_id))
        cube = rdp.range_doppler_process(raw, recipe.rdp_options)
        spec = None
        if recipe.write_spectrograms:
            # one column per frame so spectrogram crops line up with cube crops
            spec = rdp.spectrogram(raw, p.chirps_per_frame, p.chirps_per_frame,
                                   window=recipe.rdp_options.window)
        for crop, start in enumerate(offsets):
            rid = recipe.record_id(test_id, ant, crop)
            write_cube(out_dir / "cubes" / f"{rid}.trdc", cube[start:start + recipe.crop_len])
            if spec is not None:
                write_cube(out_dir / "spectrograms" / f"{rid}.trdc",
                           spec[start:start + recipe.crop_len, None, :])


def generate_dataset(recipe: DatasetRecipe, out_dir) -> DatasetManifest:
    """Simulate every (test, antenna, crop) record and write cubes + manifest."""
    out_dir = Path(out_dir)
    try:
        (out_dir / "cubes").mkdir(parents=True, exist_ok=True)
        if recipe.write_spectrograms:
            (out_dir / "spectrograms").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"dataset directory {out_dir} is not writable")
    for test_id in range(recipe.num_tests):
        _generate_test(recipe, test_id, out_dir)
    manifest = plan_records(recipe)
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


# -- presets ---------------------------------------------------------------

SMOKE_CLASSES = (
    ClassProfile("stroll", torso_velocity=(0.4, 0.8), limb_osc_amplitude=(0.02, 0.05),
                 limb_osc_freq=(0.8, 1.2), limb_count=(2, 3)),
    ClassProfile("walk", torso_velocity=(2.0, 2.4), limb_osc_amplitude=(0.05, 0.10),
                 limb_osc_freq=(1.0, 1.5), limb_count=(3, 4)),
    ClassProfile("brisk", torso_velocity=(3.6, 4.0), limb_osc_amplitude=(0.10, 0.15),
                 limb_osc_freq=(1.5, 2.0), limb_count=(3, 5)),
    ClassProfile("run", torso_velocity=(5.2, 5.6), limb_osc_amplitude=(0.15, 0.20),
                 limb_osc_freq=(2.0, 2.5), limb_count=(4, 5)),
)

DEFAULT_CLASSES = SMOKE_CLASSES + (
    ClassProfile("approach", torso_velocity=(-1.6, -1.2), limb_osc_amplitude=(0.05, 0.10),
                 limb_osc_freq=(1.0, 1.5), limb_count=(3, 4), base_range=(3.0, 6.0)),
    ClassProfile("approach-fast", torso_velocity=(-3.2, -2.8),
                 limb_osc_amplitude=(0.10, 0.15), limb_osc_freq=(1.5, 2.0),
                 limb_count=(3, 5), base_range=(3.0, 6.0)),
)

# Identical motion bands; only where in range the person walks differs.
_SHARED_MOTION = dict(torso_velocity=(1.0, 3.0), limb_osc_amplitude=(0.05, 0.15),
                      limb_osc_freq=(1.0, 2.0), limb_count=(3, 4))
RANGE_CLASSES = (
    ClassProfile("near", base_range=(1.5, 3.0), **_SHARED_MOTION),
    ClassProfile("far", base_range=(5.5, 7.0), **_SHARED_MOTION),
)


def preset(name: str, seed: int = 0) -> DatasetRecipe:
    """Named recipes: ``smoke``, ``default``, ``range`` and ``paper`` (counts only)."""
    if name == "smoke":
        return DatasetRecipe(SceneConfig(SMOKE_CLASSES), num_tests=20, seed=seed)
    if name == "default":
        return DatasetRecipe(SceneConfig(DEFAULT_CLASSES), num_tests=60, seed=seed)
    if name == "range":
        return DatasetRecipe(SceneConfig(RANGE_CLASSES), num_tests=12, seed=seed)
    if name == "paper":
        # record arithmetic of the original dataset; far too large to simulate
        return DatasetRecipe(SceneConfig(DEFAULT_CLASSES), num_tests=231,
                             params=RadarParams(samples_per_chirp=512, chirps_per_frame=128,
                                                frames=512, antenna_count=4),
                             crop_len=64, crop_count=6, seed=seed)
    raise ValueError(f"unknown preset {name!r}")


def with_overrides(recipe: DatasetRecipe, **kwargs) -> DatasetRecipe:
    return replace(recipe, **kwargs)
