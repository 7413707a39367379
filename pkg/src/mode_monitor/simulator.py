#! env python3

"""Synthetic bridge: a lumped mass-spring-damper chain under noise and swept-sine forcing,
with stiffness damage ramped in over time, written out as a labeled dataset"""

from __future__ import annotations

import dataclasses
import functools
import logging
import os
import typing

import numpy as np
import scipy.linalg
import scipy.signal

from . import __version__
from . import artifact
from . import configurable
from . import core
from . import errors
from . import formats
from . import structure

log = logging.getLogger(__name__)

# average acceleration: unconditionally stable, no numerical damping
NEWMARK_BETA = 0.25
NEWMARK_GAMMA = 0.5

DAMAGE_KINDS = ('zone', 'bearing')
PRESETS = ('N', 'S1', 'S2', 'S3')
# spring-index zones on the default 8 node chain
ZONES = { 'Z1': (2, 4), 'Z2': (4, 6) }

class ScenarioSpec(artifact.Artifact):
    """One simulated structure with its damage history and excitation.

    Damage entries are dicts `{kind, zone, factor, onset, ramp}`. A `zone` entry scales the
    springs with index in `[zone[0], zone[1])`, where spring s joins node s-1 to node s and
    springs 0 and n are the bearings; a `bearing` entry scales both bearings."""
    nodes: configurable.Var[int]
    mass: configurable.Var[float]
    stiffness: configurable.Var[float]
    damping_ratio: configurable.Var[float]
    damage: configurable.Var[list]
    noise_level: configurable.Var[float]
    sweep: configurable.Var[dict]
    sample_rate: configurable.Var[float]
    duration: configurable.Var[float]
    snr_db: configurable.Var[float]
    seed: configurable.Var[int]
    initial_displacement: configurable.Var[list]
    initial_velocity: configurable.Var[list]
    window_length: configurable.Var[int]
    stride: configurable.Var[int]
    split_ratios: configurable.Var[list]
    format: configurable.Var[str]

    def __init__(self, artifact_path: typing.Union[ None, typing.List[str] ] = None):
        super().__init__(artifact_path)
        self.nodes = configurable.Var(self, 'nodes', 8)
        self.mass = configurable.Var(self, 'mass', 1000.0)
        self.stiffness = configurable.Var(self, 'stiffness', 2.56e7)
        self.damping_ratio = configurable.Var(self, 'damping_ratio', 0.02)
        self.damage = configurable.Var(self, 'damage', [])
        self.noise_level = configurable.Var(self, 'noise_level', 1000.0)
        self.sweep = configurable.Var(self, 'sweep')
        self.sample_rate = configurable.Var(self, 'sample_rate', 256.0)
        self.duration = configurable.Var(self, 'duration', 600.0)
        self.snr_db = configurable.Var(self, 'snr_db', 20.0)
        self.seed = configurable.Var(self, 'seed', 0)
        self.initial_displacement = configurable.Var(self, 'initial_displacement')
        self.initial_velocity = configurable.Var(self, 'initial_velocity')
        self.window_length = configurable.Var(self, 'window_length', 5)
        self.stride = configurable.Var(self, 'stride', 5)
        self.split_ratios = configurable.Var(self, 'split_ratios', [0.8, 0.1, 0.1])
        self.format = configurable.Var(self, 'format', 'binary', 'binary', 'csv')

    @property
    def spring_count(self) -> int:
        return 1 if self.nodes() == 1 else self.nodes() + 1

    def damage_springs(self, entry: typing.Mapping[str, typing.Any]) -> np.ndarray:
        if entry.get('kind', 'zone') == 'bearing':
            return np.array(sorted({ 0, self.spring_count - 1 }))
        start, end = entry['zone']
        return np.arange(int(start), int(end))

    def validate(self) -> ScenarioSpec:
        """Check every field; raises ScenarioError naming it"""
        self.configure()
        def check(field: str, ok: bool, message: str, error: typing.Type[errors.ScenarioError] = errors.ScenarioError):
            if not ok:
                raise error(field, message)
        check(self.nodes.field(), self.nodes() >= 1, f"{self.nodes()!r} must be >= 1")
        check(self.mass.field(), self.mass() > 0, f"{self.mass()!r} must be > 0")
        check(self.stiffness.field(), self.stiffness() > 0, f"{self.stiffness()!r} must be > 0")
        check(self.damping_ratio.field(), 0 <= self.damping_ratio() < 1, f"{self.damping_ratio()!r} must lie in [0, 1)")
        check(self.sample_rate.field(), self.sample_rate() > 0, f"{self.sample_rate()!r} must be > 0")
        check(self.duration.field(), self.duration() > 0, f"{self.duration()!r} must be > 0")
        check(self.noise_level.field(), self.noise_level() >= 0, f"{self.noise_level()!r} must be >= 0")
        check(self.window_length.field(), self.window_length() >= 2, f"{self.window_length()!r} must be >= 2")
        check(self.stride.field(), self.stride() >= 1, f"{self.stride()!r} must be >= 1")
        for var in (self.initial_displacement, self.initial_velocity):
            if var:
                check(var.field(), len(var()) == self.nodes(), f"needs {self.nodes()} entries, got {len(var())}")
        if self.sweep:
            field = self.sweep.field()
            sweep = self.sweep()
            missing = [ key for key in ('f_start', 'f_end', 'rate', 'amplitude') if key not in sweep ]
            check(field, not missing, f"missing {', '.join(missing)}")
            check(f"{field}.f_start", 0 < sweep['f_start'] <= sweep['f_end'], f"need 0 < f_start <= f_end, got {sweep['f_start']} and {sweep['f_end']}")
            check(f"{field}.rate", sweep['rate'] > 0, f"{sweep['rate']!r} must be > 0")
            check(f"{field}.node", 0 <= sweep.get('node', 0) < self.nodes(), f"{sweep.get('node')!r} is not a node")
            check(f"{field}.f_end", self.sample_rate() > 2 * sweep['f_end'],
                f"sample rate {self.sample_rate()} Hz does not exceed twice the sweep end {sweep['f_end']} Hz", errors.AliasingError)
        touched: typing.Dict[int, typing.Tuple[int, typing.Tuple[float, float, float]]] = {}
        for index, entry in enumerate(self.damage()):
            field = f"{self.damage.field()}[{index}]"
            kind = entry.get('kind', 'zone')
            check(f"{field}.kind", kind in DAMAGE_KINDS, f"{kind!r} is not one of {DAMAGE_KINDS}")
            check(f"{field}.factor", 'factor' in entry, "no stiffness factor given")
            factor = float(entry['factor'])
            if kind == 'zone':
                check(f"{field}.factor", 0 < factor <= 1, f"{factor!r} must lie in (0, 1]")
                zone = entry.get('zone')
                check(f"{field}.zone", zone is not None and len(zone) == 2 and 0 <= zone[0] < zone[1] <= self.spring_count,
                    f"{zone!r} must be a spring range [a, b) within 0..{self.spring_count}")
            else:
                check(f"{field}.factor", factor > 0, f"{factor!r} must be > 0")
            onset, ramp = float(entry.get('onset', 0.0)), float(entry.get('ramp', 0.0))
            check(f"{field}.onset", 0 <= onset <= self.duration(), f"{onset!r} must lie within the {self.duration()} s run")
            check(f"{field}.ramp", ramp >= 0, f"{ramp!r} must be >= 0")
            for spring in self.damage_springs(entry):
                if int(spring) in touched and touched[int(spring)][1] != (factor, onset, ramp):
                    raise errors.ScenarioError(field, f"overlaps damage[{touched[int(spring)][0]}] on spring {spring} with a different factor or timing")
                touched[int(spring)] = (index, (factor, onset, ramp))
        return self

    def spec_hash(self) -> str:
        """Changes whenever any field changes"""
        return formats.digest(self.configure().settings())

def preset(name: str, factor: None|float = None, **overrides) -> ScenarioSpec:
    """N: undamaged. S1: gradual 30% stiffness loss in Z1. S2: gradual 50% loss in Z2.
    S3: immediate bearing stiffening, whose factor must be given."""
    if name not in PRESETS:
        raise errors.ScenarioError('preset', f"{name!r} is not one of {PRESETS}")
    spec = ScenarioSpec().alias(**overrides)
    onset = spec.duration() / 2
    if name == 'S1':
        spec.damage.select([ dict(kind='zone', zone=list(ZONES['Z1']), factor=0.7 if factor is None else factor, onset=onset, ramp=onset / 2) ])
    elif name == 'S2':
        spec.damage.select([ dict(kind='zone', zone=list(ZONES['Z2']), factor=0.5 if factor is None else factor, onset=onset, ramp=onset / 2) ])
    elif name == 'S3':
        if factor is None:
            raise errors.ScenarioError('damage[0].factor', "a bearing stiffness increase has no default magnitude, give one")
        spec.damage.select([ dict(kind='bearing', factor=factor, onset=onset, ramp=0.0) ])
    return spec

@dataclasses.dataclass(frozen=True)
class DamageEvent:
    springs: typing.Tuple[int, ...]
    factor: float
    onset: float
    ramp: float

    def progress(self, t: np.ndarray) -> np.ndarray:
        """0 before onset, 1 once the ramp is complete, linear in between"""
        t = np.asarray(t, dtype=np.float64)
        if self.ramp == 0:
            return (t >= self.onset).astype(np.float64)
        return np.clip((t - self.onset) / self.ramp, 0.0, 1.0)

@dataclasses.dataclass(frozen=True, eq=False)
class Regime:
    start: float
    springs: np.ndarray
    model: structure.ModalModel

@dataclasses.dataclass(frozen=True, eq=False)
class StiffnessSchedule:
    """K(t) from the baseline springs and the damage events; M and the damping ratio stay constant"""
    graph: core.SensorGraph
    stiffness: float
    damping_ratio: float
    baseline: np.ndarray
    events: typing.Tuple[DamageEvent, ...]

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def springs_at(self, t: float|np.ndarray) -> np.ndarray:
        """Spring constants at time(s) t: [S] for a scalar, [T x S] for an array"""
        times = np.atleast_1d(np.asarray(t, dtype=np.float64))
        springs = np.tile(self.baseline, (times.shape[0], 1))
        for event in self.events:
            scale = 1.0 + (event.factor - 1.0) * event.progress(times)
            springs[:, list(event.springs)] *= scale[:, None]
        return springs[0] if np.ndim(t) == 0 else springs

    def matrices_for(self, springs: np.ndarray) -> structure.StructuralMatrices:
        return structure.assemble_matrices(self.graph, self.stiffness, self.damping_ratio, springs=springs)

    def matrices_at(self, t: float) -> structure.StructuralMatrices:
        return self.matrices_for(self.springs_at(t))

    def damaged(self, t: float|np.ndarray) -> np.ndarray:
        """Ground truth per time: anomalous from the onset of any event that changes stiffness"""
        times = np.asarray(t, dtype=np.float64)
        flags = np.zeros(times.shape, dtype=bool)
        for event in self.events:
            if event.factor != 1.0:
                flags |= times >= event.onset
        return flags

    def is_constant(self) -> bool:
        return all(event.factor == 1.0 for event in self.events)

    def regimes(self, duration: float) -> typing.List[Regime]:
        """Modal model at the start and after each completed ramp"""
        starts = sorted({ 0.0 } | { event.onset + event.ramp for event in self.events if event.factor != 1.0 and event.onset + event.ramp <= duration })
        return [ Regime(start, self.springs_at(start), structure.modal_model(self.matrices_at(start))) for start in starts ]

def build_scenario(spec: ScenarioSpec) -> StiffnessSchedule:
    spec.validate()
    graph = core.SensorGraph.chain(spec.nodes(), spec.mass())
    events = []
    claimed: typing.Set[int] = set()
    for entry in spec.damage():
        # identical overlapping entries scale a shared spring once
        springs = tuple(int(spring) for spring in spec.damage_springs(entry) if int(spring) not in claimed)
        claimed.update(springs)
        if springs:
            events.append(DamageEvent(springs, float(entry['factor']), float(entry.get('onset', 0.0)), float(entry.get('ramp', 0.0))))
    baseline = structure.chain_springs(spec.nodes(), spec.stiffness())
    return StiffnessSchedule(graph, float(spec.stiffness()), float(spec.damping_ratio()), baseline, tuple(events))

@dataclasses.dataclass(frozen=True)
class SweptSine:
    """Linear sweep from f_start to f_end at `rate` Hz/s, restarting when it reaches f_end"""
    f_start: float
    f_end: float
    rate: float
    amplitude: float
    node: int = 0

    def __call__(self, times: np.ndarray) -> np.ndarray:
        period = (self.f_end - self.f_start) / self.rate
        if period <= 0:
            return self.amplitude * np.sin(2 * np.pi * self.f_start * times)
        local = np.mod(times, period)
        return self.amplitude * scipy.signal.chirp(local, self.f_start, period, self.f_end, method='linear', phi=-90)

@dataclasses.dataclass(frozen=True)
class Excitation:
    noise_level: float = 0.0
    sweep: None|SweptSine = None

    def forces(self, times: np.ndarray, node_count: int, rng: np.random.Generator) -> np.ndarray:
        """[T x n] nodal forces: independent white noise on every node plus the sweep on its node"""
        forces = np.zeros((times.shape[0], node_count))
        if self.noise_level > 0:
            forces += rng.normal(0.0, self.noise_level, forces.shape)
        if self.sweep is not None:
            forces[:, self.sweep.node] += self.sweep(times)
        return forces

def excitation_of(spec: ScenarioSpec) -> Excitation:
    sweep = spec.sweep() if spec.sweep else None
    return Excitation(
        float(spec.noise_level()),
        SweptSine(float(sweep['f_start']), float(sweep['f_end']), float(sweep['rate']), float(sweep['amplitude']), int(sweep.get('node', 0))) if sweep else None)

@dataclasses.dataclass(frozen=True, eq=False)
class SimOutput:
    timestamps: np.ndarray
    sample_rate: float
    acceleration: np.ndarray
    displacement: np.ndarray
    velocity: np.ndarray
    sample_labels: np.ndarray
    regimes: typing.List[Regime]

    @property
    def node_count(self) -> int:
        return int(self.acceleration.shape[0])

    def window_labels(self, l: int, stride: int) -> typing.List[int]:
        return core.window_labels(self.sample_labels, l, stride)

    def series(self) -> typing.List[core.TimeSeries]:
        return [ core.TimeSeries(self.timestamps, self.acceleration[i], str(i), 'acceleration') for i in range(self.node_count) ]

    def frame(self) -> core.SensorFrame:
        return core.SensorFrame(
            self.timestamps, self.sample_rate, self.acceleration[:, None, :],
            tuple(str(i) for i in range(self.node_count)), ('acceleration',))

def integrate(
    schedule: StiffnessSchedule,
    excitation: Excitation,
    fs: float,
    duration: float,
    seed: int = 0,
    initial_displacement: None|typing.Sequence[float] = None,
    initial_velocity: None|typing.Sequence[float] = None,
    snr_db: None|float = None
) -> SimOutput:
    """Newmark-beta (average acceleration) in total form, so K may change from one step to the next.
    Accelerations are recorded at every step; sensor noise at the given SNR is added afterwards."""
    if excitation.sweep is not None and fs <= 2 * excitation.sweep.f_end:
        raise errors.AliasingError('sweep.f_end', f"sample rate {fs} Hz does not exceed twice the sweep end {excitation.sweep.f_end} Hz")
    n = schedule.node_count
    step_count = int(round(duration * fs))
    dt = 1.0 / fs
    times = np.arange(step_count) * dt
    rng = np.random.default_rng(seed)
    forces = excitation.forces(times, n, rng)
    springs = schedule.springs_at(times)

    a0 = 1 / (NEWMARK_BETA * dt ** 2)
    a1 = NEWMARK_GAMMA / (NEWMARK_BETA * dt)
    a2 = 1 / (NEWMARK_BETA * dt)
    a3 = 1 / (2 * NEWMARK_BETA) - 1
    a4 = NEWMARK_GAMMA / NEWMARK_BETA - 1
    a5 = dt / 2 * (NEWMARK_GAMMA / NEWMARK_BETA - 2)
    a6 = dt * (1 - NEWMARK_GAMMA)
    a7 = NEWMARK_GAMMA * dt

    @functools.lru_cache(maxsize=64)
    def system(key: bytes):
        matrices = schedule.matrices_for(np.frombuffer(key, dtype=np.float64))
        return matrices, scipy.linalg.lu_factor(matrices.K + a0 * matrices.M + a1 * matrices.C)

    u = np.zeros((n, step_count))
    v = np.zeros((n, step_count))
    a = np.zeros((n, step_count))
    if step_count == 0:
        return SimOutput(np.zeros(0, dtype=np.int64), float(fs), a, u, v, np.zeros(0, dtype=np.int64), schedule.regimes(duration))
    u[:, 0] = np.zeros(n) if initial_displacement is None else initial_displacement
    v[:, 0] = np.zeros(n) if initial_velocity is None else initial_velocity
    matrices, _ = system(springs[0].tobytes())
    a[:, 0] = (forces[0] - matrices.C @ v[:, 0] - matrices.K @ u[:, 0]) / np.diagonal(matrices.M)

    with artifact.Phase(f"integrate {n} nodes over {step_count} steps at {fs} Hz"):
        for k in range(1, step_count):
            matrices, factor = system(springs[k].tobytes())
            m_part = matrices.M @ (a0 * u[:, k - 1] + a2 * v[:, k - 1] + a3 * a[:, k - 1])
            c_part = matrices.C @ (a1 * u[:, k - 1] + a4 * v[:, k - 1] + a5 * a[:, k - 1])
            u[:, k] = scipy.linalg.lu_solve(factor, forces[k] + m_part + c_part)
            a[:, k] = a0 * (u[:, k] - u[:, k - 1]) - a2 * v[:, k - 1] - a3 * a[:, k - 1]
            v[:, k] = v[:, k - 1] + a6 * a[:, k - 1] + a7 * a[:, k]
        log.debug(f"stiffness systems factored: {system.cache_info()}")

    measured = a
    if snr_db is not None:
        rms = np.sqrt(np.mean(a ** 2, axis=1))
        measured = a + rng.normal(0.0, 1.0, a.shape) * (rms * 10 ** (-snr_db / 20))[:, None]
    return SimOutput(
        np.arange(step_count, dtype=np.int64), float(fs), measured, u, v,
        schedule.damaged(times).astype(np.int64), schedule.regimes(duration))

def simulate(spec: ScenarioSpec) -> SimOutput:
    schedule = build_scenario(spec)
    return integrate(
        schedule, excitation_of(spec), float(spec.sample_rate()), float(spec.duration()), int(spec.seed()),
        spec.initial_displacement() if spec.initial_displacement else None,
        spec.initial_velocity() if spec.initial_velocity else None,
        spec.snr_db() if spec.snr_db else None)

def emit_dataset(output: SimOutput, spec: ScenarioSpec, out_dir: str, format: None|str = None) -> core.Manifest:
    """Channel files in the core formats, `modes.json` with the modal model of every regime, and `manifest.json`"""
    format = format or spec.format()
    if format not in ('binary', 'csv'):
        raise errors.ConfigurationError('format', f"{format!r} is not one of ('binary', 'csv')")
    labels = output.window_labels(spec.window_length(), spec.stride())
    split = core.assign_splits(labels, spec.split_ratios())
    manifest = core.Manifest().alias(
        format=format, sample_rate=output.sample_rate,
        node_masses=[ float(spec.mass()) ] * output.node_count,
        stiffness=float(spec.stiffness()), damping_ratio=float(spec.damping_ratio()),
        edges=[ [ i, j, 1.0 ] for i in range(output.node_count) for j in range(i + 1, output.node_count) ],
        window_length=spec.window_length(), stride=spec.stride(),
        labels=labels, splits=split.assignment(),
        seed=spec.seed(), spec_hash=spec.spec_hash(), code_version=__version__)
    channels = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for item in output.series():
            name = f"sensor_{item.sensor_id}_{item.channel}.{'bin' if format == 'binary' else 'csv'}"
            path = os.path.join(out_dir, name)
            if format == 'binary':
                with open(path, 'wb') as fp:
                    fp.write(core.emit_binary(item))
            else:
                with open(path, 'wt') as fp:
                    fp.write(core.emit_csv([ item ]))
            channels.append(dict(sensor_id=item.sensor_id, channel=item.channel, path=name))
        manifest.channels.select(channels)
        with open(os.path.join(out_dir, 'modes.json'), 'wt') as fp:
            fp.write(formats.dumps([ dict(start=regime.start, springs=regime.springs, **regime.model.report()) for regime in output.regimes ]))
        artifact.PersistInFile(os.path.join(out_dir, 'manifest.json'), manifest).save()
    except OSError as e:
        raise errors.ConfigurationError(e.filename or out_dir, f"cannot write dataset: {e.strerror}")
    log.info(f"wrote {len(channels)} channels, {len(labels)} windows ({sum(labels)} anomalous) to {out_dir}")
    return manifest
