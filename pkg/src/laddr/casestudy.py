"""Synthetic loss-of-flow study: pump ramp, toy plant, dataset splits, weak predictor.

The plant is a lumped heat-balance surrogate, not a thermal-hydraulic code.
Pump P1 ramps down linearly, P2 partially compensates, and the upper-plenum
and fuel-centreline temperatures relax toward flow-dependent steady values
through first-order lags. The constants in :class:`SurrogateParams` are
chosen for qualitative behaviour only (monotone flow loss, temperature rise)
and are not plant data.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import LaddrError, Schema, atomic_write_text, build_knowledge_base

__all__ = [
    "NOMINAL_RAMP_DURATION",
    "D1_END_SPEED_RANGE",
    "D2_END_SPEED_RANGE",
    "TransientProfile",
    "SurrogateParams",
    "PlantState",
    "Transient",
    "EpisodeTable",
    "CaseStudyData",
    "ReferencePredictor",
    "pump_speed",
    "simulate_transient",
    "build_datasets",
    "reference_predictor",
    "STUDY_SCHEMA",
]

NOMINAL_RAMP_DURATION = 467.81
D1_END_SPEED_RANGE = (0.516, 1.0)
D2_END_SPEED_RANGE = (0.0, 0.387)

INPUT_COLUMNS = ("up_temp", "core_flow")
TARGET_COLUMN = "t_fcl"
STUDY_SCHEMA = Schema.from_names(INPUT_COLUMNS, TARGET_COLUMN)
TABLE_COLUMNS = ("episode", "step", "time", "omega_end", "ramp_duration", "pump_speed") + INPUT_COLUMNS + (TARGET_COLUMN,)


@dataclass(frozen=True)
class TransientProfile:
    """Linear ramp-down of pump P1 from ``omega0`` to ``omega0 * omega_end``."""

    omega_end: float
    ramp_duration: float = NOMINAL_RAMP_DURATION
    omega0: float = 1.0
    t0: float = 0.0
    n_steps: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.omega_end <= 1.0:
            raise LaddrError(f"omega_end must lie in [0, 1], got {self.omega_end}")
        if not self.ramp_duration > 0:
            raise LaddrError(f"ramp duration must be positive, got {self.ramp_duration}")
        if self.n_steps < 2:
            raise LaddrError("a transient needs at least 2 samples")
        if self.t0 < 0:
            raise LaddrError("transient start time must be non-negative")

    @property
    def dt(self) -> float:
        return (self.t0 + self.ramp_duration) / (self.n_steps - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


def pump_speed(t, p: TransientProfile):
    """P1 speed: nominal before ``t0``, linear ramp, then held at the end speed."""
    t = np.asarray(t, dtype=np.float64)
    frac = np.clip((t - p.t0) / p.ramp_duration, 0.0, 1.0)
    out = p.omega0 * (1.0 - (1.0 - p.omega_end) * frac)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SurrogateParams:
    inlet_temp: float = 371.0       # degC
    core_rise: float = 100.0        # coolant temperature rise at nominal flow, degC
    fuel_rise: float = 450.0        # fuel-to-coolant rise at nominal flow, degC
    fuel_exponent: float = 3.0      # fuel rise scales as flow ** -fuel_exponent
    tau_plenum: float = 120.0       # s
    tau_fuel: float = 8.0           # s
    weight_p1: float = 0.5
    weight_p2: float = 0.5
    compensation: float = 0.1       # P2 speed-up per unit of lost P1 speed
    flow_floor: float = 0.05
    noise: float = 0.0              # std of additive temperature noise, degC

    def steady(self, flow):
        flow = np.asarray(flow, dtype=np.float64)
        up = self.inlet_temp + self.core_rise / flow
        fcl = self.inlet_temp + 0.5 * self.core_rise / flow + self.fuel_rise * flow ** (-self.fuel_exponent)
        return up, fcl


@dataclass(frozen=True)
class PlantState:
    time: float
    pump_speed: float
    core_flow: float
    up_temp: float
    t_fcl: float


@dataclass(frozen=True)
class Transient:
    """Arrays of one simulated episode; ``states`` yields :class:`PlantState` rows."""

    profile: TransientProfile
    time: np.ndarray
    pump_speed: np.ndarray
    core_flow: np.ndarray
    up_temp: np.ndarray
    t_fcl: np.ndarray
    floor_hit: bool = False

    @property
    def states(self) -> list[PlantState]:
        return [PlantState(*map(float, row)) for row in
                zip(self.time, self.pump_speed, self.core_flow, self.up_temp, self.t_fcl)]


def simulate_transient(p: TransientProfile, params: SurrogateParams = SurrogateParams(),
                       seed: int | Sequence[int] | None = None) -> Transient:
    """Integrate the surrogate over one ramp with explicit Euler steps.

    The plant starts at equilibrium for the initial pump speed. Flow is
    clamped at ``params.flow_floor`` (reported through ``floor_hit``).
    ``seed`` only matters when ``params.noise > 0``.
    """
    dt = p.dt
    if not dt < min(params.tau_plenum, params.tau_fuel) / 2:
        raise LaddrError(f"time step {dt:.4g}s too coarse for lag {min(params.tau_plenum, params.tau_fuel)}s; "
                         "increase n_steps")
    t = p.times
    w1 = pump_speed(t, p)
    w2 = p.omega0 + params.compensation * (p.omega0 - w1)
    raw_flow = (params.weight_p1 * w1 + params.weight_p2 * w2) / p.omega0
    flow = np.maximum(raw_flow, params.flow_floor)
    floor_hit = bool(np.any(raw_flow < params.flow_floor))
    up_ss, fcl_ss = params.steady(flow)

    up = np.empty_like(t)
    fcl = np.empty_like(t)
    up[0], fcl[0] = up_ss[0], fcl_ss[0]
    a_up, a_fcl = dt / params.tau_plenum, dt / params.tau_fuel
    for k in range(1, t.shape[0]):
        up[k] = up[k - 1] + a_up * (up_ss[k - 1] - up[k - 1])
        fcl[k] = fcl[k - 1] + a_fcl * (fcl_ss[k - 1] - fcl[k - 1])
    if params.noise > 0:
        rng = np.random.default_rng(seed)
        up = up + rng.normal(0.0, params.noise, t.shape)
        fcl = fcl + rng.normal(0.0, params.noise, t.shape)
    return Transient(p, t, w1, flow, up, fcl, floor_hit)


@dataclass(frozen=True)
class EpisodeTable:
    """Rows of several transients, columns as in ``TABLE_COLUMNS``."""

    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TABLE_COLUMNS.index(name)]

    @property
    def inputs(self) -> np.ndarray:
        return self.data[:, [TABLE_COLUMNS.index(c) for c in INPUT_COLUMNS]]

    @property
    def target(self) -> np.ndarray:
        return self.column(TARGET_COLUMN)

    @property
    def features(self) -> np.ndarray:
        """Inputs followed by the target, in ``STUDY_SCHEMA`` order."""
        return self.data[:, [TABLE_COLUMNS.index(c) for c in STUDY_SCHEMA.names]]

    @property
    def episodes(self) -> np.ndarray:
        return np.unique(self.column("episode").astype(int))

    def episode(self, ep: int) -> "EpisodeTable":
        return EpisodeTable(self.data[self.column("episode") == ep])

    def subsample(self, every: int) -> "EpisodeTable":
        return EpisodeTable(self.data[self.column("step").astype(int) % every == 0])

    def __len__(self) -> int:
        return self.data.shape[0]

    def to_csv(self, path=None, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in self.data:
            w.writerow([str(int(row[0])), str(int(row[1]))] + [repr(float(v)) for v in row[2:]])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


def _table(transients: list[tuple[int, Transient]]) -> EpisodeTable:
    blocks = []
    for ep, tr in transients:
        n = tr.time.shape[0]
        blocks.append(np.column_stack([
            np.full(n, ep), np.arange(n), tr.time, np.full(n, tr.profile.omega_end),
            np.full(n, tr.profile.ramp_duration), tr.pump_speed, tr.up_temp, tr.core_flow, tr.t_fcl,
        ]))
    if not blocks:
        return EpisodeTable(np.empty((0, len(TABLE_COLUMNS))))
    return EpisodeTable(np.vstack(blocks))


@dataclass(frozen=True)
class CaseStudyData:
    seed: int
    d1_profiles: tuple[TransientProfile, ...]
    d2_profiles: tuple[TransientProfile, ...]
    train_episodes: tuple[int, ...]
    train: EpisodeTable
    d1_test: EpisodeTable
    d2_test: EpisodeTable
    params: SurrogateParams = field(default_factory=SurrogateParams)

    def knowledge_base(self):
        return build_knowledge_base(self.train.features, STUDY_SCHEMA, source=f"synthetic-d1 seed={self.seed}",
                                    created="")

    def settings(self) -> dict:
        return {"seed": self.seed, "d1_episodes": len(self.d1_profiles), "d2_episodes": len(self.d2_profiles),
                "train_episodes": list(self.train_episodes), "surrogate": asdict(self.params)}


def build_datasets(seed: int = 0, d1_episodes: int = 64, d2_episodes: int = 16, n_steps: int = 200,
                   d1_range: tuple[float, float] = D1_END_SPEED_RANGE,
                   d2_range: tuple[float, float] = D2_END_SPEED_RANGE,
                   train_fraction: float = 0.1,
                   ramp_range: tuple[float, float] | None = None,
                   params: SurrogateParams = SurrogateParams()) -> CaseStudyData:
    """Simulate the two transient families and split D1 into train/test episodes.

    End speeds are drawn uniformly from ``d1_range`` and ``d2_range``.
    ``train_fraction`` of the D1 episodes (rounded, at least one) form the
    knowledge base; the remaining D1 episodes and all of D2 are test data.
    Ramp durations stay at the nominal value unless ``ramp_range`` is given.
    Episode ids are 0..d1-1 for D1 and d1..d1+d2-1 for D2.
    """
    if d1_episodes < 2 or d2_episodes < 1 or n_steps < 2:
        raise LaddrError("need at least 2 D1 episodes, 1 D2 episode and 2 steps")
    if not 0.0 < train_fraction < 1.0:
        raise LaddrError("train fraction must lie in (0, 1)")
    if d1_range[0] <= d2_range[1] and d2_range[0] <= d1_range[1]:
        raise LaddrError("D1 and D2 end-speed ranges must be disjoint")
    rng = np.random.default_rng(seed)
    d1_end = rng.uniform(d1_range[0], d1_range[1], d1_episodes)
    d2_end = rng.uniform(d2_range[0], d2_range[1], d2_episodes)
    if ramp_range is not None:
        ramps = rng.uniform(ramp_range[0], ramp_range[1], d1_episodes + d2_episodes)
    else:
        ramps = np.full(d1_episodes + d2_episodes, NOMINAL_RAMP_DURATION)
    n_train = min(d1_episodes - 1, max(1, int(round(train_fraction * d1_episodes))))
    # stratified over end speed so a small training share still spans the D1 range
    order = np.argsort(d1_end, kind="stable")
    offset = rng.uniform(0.0, 1.0)
    picks = np.floor((np.arange(n_train) + offset) * d1_episodes / n_train).astype(int)
    train_ids = tuple(sorted(int(order[i]) for i in picks))

    d1 = tuple(TransientProfile(float(w), float(ramps[i]), n_steps=n_steps) for i, w in enumerate(d1_end))
    d2 = tuple(TransientProfile(float(w), float(ramps[d1_episodes + i]), n_steps=n_steps)
               for i, w in enumerate(d2_end))
    sims = [(i, simulate_transient(p, params, seed=(seed, i))) for i, p in enumerate(d1 + d2)]
    train = _table([s for s in sims if s[0] in train_ids])
    d1_test = _table([s for s in sims[:d1_episodes] if s[0] not in train_ids])
    d2_test = _table(sims[d1_episodes:])
    return CaseStudyData(seed, d1, d2, train_ids, train, d1_test, d2_test, params)


@dataclass(frozen=True)
class ReferencePredictor:
    """Low-order polynomial least-squares model of the target on the inputs.

    Callable on one raw input row (returns a float) or on an (n, 2) array.
    """

    coefficients: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    degree: int = 1
    fallback: bool = False

    def _design(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.center) / self.scale
        return _poly_features(z, self.degree)

    def __call__(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        single = x.ndim == 1
        y = self._design(np.atleast_2d(x)) @ self.coefficients
        return float(y[0]) if single else y


def _poly_features(z: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones(z.shape[0])]
    for d in range(1, degree + 1):
        for i in range(d + 1):
            cols.append(z[:, 0] ** (d - i) * z[:, 1] ** i)
    return np.column_stack(cols)


def reference_predictor(train, degree: int = 1) -> ReferencePredictor:
    """Fit the deliberately weak predictor on a training table.

    ``train`` is an :class:`EpisodeTable` or an ``(inputs, target)`` pair. A
    rank-deficient design falls back to predicting the training mean, with
    ``fallback=True``.
    """
    if isinstance(train, EpisodeTable):
        x, y = train.inputs, train.target
    else:
        x, y = (np.asarray(a, dtype=np.float64) for a in train)
    if x.shape[0] == 0:
        raise LaddrError("cannot fit a predictor on an empty training split")
    center = x.mean(axis=0)
    scale = x.std(axis=0)
    n_terms = _poly_features(np.zeros((1, 2)), degree).shape[1]
    if np.ptp(y) == 0:
        coef = np.zeros(n_terms)
        coef[0] = float(y[0])
        return ReferencePredictor(coef, center, np.where(scale == 0, 1.0, scale), degree)
    if np.any(scale == 0) or x.shape[0] < n_terms:
        coef = np.zeros(n_terms)
        coef[0] = float(y.mean())
        return ReferencePredictor(coef, center, np.where(scale == 0, 1.0, scale), degree, fallback=True)
    A = _poly_features((x - center) / scale, degree)
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < n_terms:
        coef = np.zeros(n_terms)
        coef[0] = float(y.mean())
        return ReferencePredictor(coef, center, scale, degree, fallback=True)
    return ReferencePredictor(coef, center, scale, degree)


@dataclass(frozen=True)
class StudyResult:
    """Everything produced by :func:`run_study`."""

    data: CaseStudyData
    kb: object
    predictor: ReferencePredictor
    criterion: object
    tuning: object
    d1_heldout: object
    d2: object
    optimization: object
    config: object
    d1_episodes_heldout: tuple[int, ...]

    def evaluate(self, eval_set, diameters=None):
        from .optimizer import evaluate_candidate

        d = self.config.diameters if diameters is None else diameters
        return evaluate_candidate(self.kb, d, eval_set, self.config, self.criterion)

    def transient(self, episode: int):
        """Per-step ``(time, truth, prediction, reliability)`` for one test episode."""
        from .index import build_index
        from .optimizer import EvaluationSet, normalized_queries
        from .reliability import reliability_many

        table = self.data.d1_test if episode < len(self.data.d1_profiles) else self.data.d2_test
        tab = table.episode(episode)
        if len(tab) == 0:
            raise LaddrError(f"episode {episode} is not a test episode")
        ev = EvaluationSet(tab.inputs, self.predictor(tab.inputs), tab.target)
        index = build_index(self.kb, self.config.covariance, self.config.mode)
        scores, _, _ = reliability_many(normalized_queries(self.kb, ev, self.config.mode), index)
        return tab.column("time"), ev.truths, ev.predictions, scores


def run_study(seed: int = 0, objective: str = "ineptitude", grid=None, epsilon: float = 10.0,
              accept_threshold: float = 0.5, tuning_stride: int = 5, **dataset_kwargs) -> StudyResult:
    """Simulate, fit the weak predictor, tune diameters, and score both test families.

    D1 test episodes alternate between a tuning group (subsampled every
    ``tuning_stride`` steps) and a held-out group. ``grid`` defaults to five
    log-spaced diameters in [0.01, 1] per query coordinate.
    """
    from .core import DiameterVector, Mode, ReliabilityConfig
    from .metrics import AcceptanceCriterion
    from .optimizer import EvaluationSet, SearchSpec, optimize

    data = build_datasets(seed, **dataset_kwargs)
    kb = data.knowledge_base()
    predictor = reference_predictor(data.train)
    criterion = AcceptanceCriterion(epsilon)

    def eval_set(table):
        return EvaluationSet(table.inputs, predictor(table.inputs), table.target)

    test_eps = data.d1_test.episodes
    tune_eps, held_eps = test_eps[0::2], test_eps[1::2]
    mask = np.isin(data.d1_test.column("episode").astype(int), tune_eps)
    tuning = eval_set(EpisodeTable(data.d1_test.data[mask]).subsample(tuning_stride))
    d1_heldout = eval_set(EpisodeTable(data.d1_test.data[~mask]))
    d2 = eval_set(data.d2_test)

    if grid is None:
        g = np.geomspace(0.01, 1.0, 5)
        grid = (g, g, g)
    base = ReliabilityConfig(DiameterVector(np.ones(len(grid))), accept_threshold=accept_threshold,
                             mode=Mode.INPUT_PLUS_TARGET)
    result = optimize(kb, SearchSpec(tuple(grid), objective), tuning, base, criterion)
    return StudyResult(data, kb, predictor, criterion, tuning, d1_heldout, d2, result,
                       base.with_diameters(result.best.diameters), tuple(int(e) for e in held_eps))
