"""Monte Carlo process variation and margin statistics.

Trial ``i`` draws its parameters from a Philox generator keyed by
``SeedSequence([seed, i])``, so its sample depends on nothing but the seed and
its own index. Trials may run in any order on any number of worker processes;
results are reassembled in trial order before any reduction, which keeps the
summaries bit-identical across worker counts.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aging import AGES, AgingParams, StressProfile, stress_profile
from .cells import ALL_KINDS, FlipFlopKind
from .characterize import (CharacterizationError, CharSettings, DegenerateInstance, QEdge,
                           SlackMode, WriteTester, find_v_write_high, find_v_write_low,
                           instance_circuit, min_setup_time)
from .device import GeometryError, ProcessSample, TechnologyConfig
from .engine import SimulationError
from .presets import cmos16, finfet16

logger = logging.getLogger(__name__)

METRICS = ("v_write_l", "v_write_h")
MAX_CONSECUTIVE_REJECTIONS = 100


class ConfigurationError(ValueError):
    pass


class MonteCarloAborted(CharacterizationError):
    pass


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


def sample_params(tech: TechnologyConfig, rng: np.random.Generator) -> ProcessSample:
    """Draw every varying parameter from ``N(nominal, sigma)``, redrawing values <= 0.

    One draw per parameter is shared by all devices of the cell. Fields are
    drawn in a fixed order so a generator state maps to one sample.
    """
    nominal = tech.nominal
    values = {}
    for name, mu in nominal.varying().items():
        sigma = tech.sigma[name]
        rejected = 0
        while True:
            v = mu + sigma * rng.standard_normal()
            if v > 0:
                break
            rejected += 1
            if rejected > MAX_CONSECUTIVE_REJECTIONS:
                raise ConfigurationError(
                    f"{name}: more than {MAX_CONSECUTIVE_REJECTIONS} consecutive draws <= 0 "
                    f"(mu={mu}, sigma={sigma})")
        if rejected:
            logger.info("%s: rejected %d non-positive draws", name, rejected)
        values[name] = float(v)
    return nominal.replace(**values)


@dataclass(frozen=True)
class StatSummary:
    n: int
    mean: float
    std: float  # unbiased; nan when n < 2
    min: float
    max: float
    degenerate_count: int = 0
    failed_count: int = 0

    def __post_init__(self):
        if self.n >= 1 and not (self.min - 1e-15 <= self.mean <= self.max + 1e-15):
            raise ValueError("summary mean outside [min, max]")


def _welford(samples) -> tuple[int, float, float, float, float]:
    n, mean, m2 = 0, 0.0, 0.0
    lo, hi = math.inf, -math.inf
    for x in samples:
        x = float(x)
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
        lo, hi = min(lo, x), max(hi, x)
    return n, mean, m2, lo, hi


def summarize(samples, degenerate_count: int = 0, failed_count: int = 0) -> StatSummary:
    """Mean and unbiased standard deviation in one numerically stable pass."""
    n, mean, m2, lo, hi = _welford(samples)
    if n < 2:
        raise ValueError("summarize needs at least two samples")
    return StatSummary(n, mean, math.sqrt(m2 / (n - 1)), lo, hi, degenerate_count, failed_count)


def _summary_any(samples, degenerate_count: int, failed_count: int) -> StatSummary:
    if len(samples) >= 2:
        return summarize(samples, degenerate_count, failed_count)
    if len(samples) == 1:
        v = float(samples[0])
        return StatSummary(1, v, math.nan, v, v, degenerate_count, failed_count)
    return StatSummary(0, math.nan, math.nan, math.nan, math.nan, degenerate_count, failed_count)


# Composite normality (mean and variance estimated): modified statistic
# A*^2 = A^2 (1 + 0.75/n + 2.25/n^2) against the upper 1 % point 1.035
# (D'Agostino and Stephens, Goodness-of-Fit Techniques, 1986, table 4.7).
AD_CRITICAL_1PCT = 1.035


@dataclass(frozen=True)
class NormalityResult:
    statistic: float  # A^2
    modified: float  # A*^2
    critical: float
    passed: bool
    zero_variance: bool = False


def anderson_darling(samples) -> float:
    """A^2 of ``samples`` against the normal fitted with the unbiased std."""
    from .failprob import normal_cdf

    x = np.sort(np.asarray(samples, float))
    n = x.size
    mu, sd = x.mean(), x.std(ddof=1)
    z = (x - mu) / sd
    lo = np.array([normal_cdf(v) for v in z])
    hi = np.array([normal_cdf(-v) for v in z[::-1]])  # 1 - F(z_{n+1-i}) without cancellation
    i = np.arange(1, n + 1)
    with np.errstate(divide="ignore"):
        s = np.sum((2 * i - 1) * (np.log(lo) + np.log(hi)))
    return float(-n - s / n)


def normality_check(samples, min_n: int = 100) -> NormalityResult:
    x = np.asarray(samples, float)
    if x.size < min_n:
        raise ValueError(f"normality check needs at least {min_n} samples, got {x.size}")
    if np.ptp(x) == 0.0:
        return NormalityResult(math.inf, math.inf, AD_CRITICAL_1PCT, False, True)
    a2 = anderson_darling(x)
    n = x.size
    mod = a2 * (1 + 0.75 / n + 2.25 / n ** 2)
    return NormalityResult(a2, mod, AD_CRITICAL_1PCT, mod <= AD_CRITICAL_1PCT)


def _tech_of(t) -> TechnologyConfig:
    if isinstance(t, TechnologyConfig):
        return t
    return {"CMOS16": cmos16, "FINFET16": finfet16}[str(t).upper()]()


@dataclass(frozen=True)
class McConfig:
    n_trials: int
    seed: int
    ages: tuple = AGES
    modes: tuple = (SlackMode.LONG, SlackMode.ZERO)
    kinds: tuple = ALL_KINDS
    technologies: tuple = ("CMOS16", "FINFET16")
    metrics: tuple = METRICS
    aging: AgingParams = AgingParams()
    settings: CharSettings = CharSettings()
    max_failed_fraction: float = 0.05

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        bad = [a for a in self.ages if a not in AGES]
        if bad:
            raise ConfigurationError(f"ages {bad} not in {AGES}")
        object.__setattr__(self, "modes", tuple(SlackMode(m) for m in self.modes))
        object.__setattr__(self, "kinds", tuple(
            k if isinstance(k, FlipFlopKind) else FlipFlopKind.parse(k) for k in self.kinds))
        object.__setattr__(self, "technologies", tuple(_tech_of(t) for t in self.technologies))
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigurationError(f"unknown metrics {sorted(bad)}")


@dataclass(frozen=True)
class ZeroSlackReference:
    """Nominal 10-year minimum setup times used as the zero-slack design point."""

    fall: float  # applies to V_writeL (a 0 is written)
    rise: float  # applies to V_writeH

    def for_metric(self, metric: str) -> float:
        return self.fall if metric == "v_write_l" else self.rise


def zero_slack_reference(kind, tech: TechnologyConfig, aging: AgingParams = AgingParams(),
                         settings: CharSettings = CharSettings(), age: float = 10) -> ZeroSlackReference:
    c = instance_circuit(kind, tech)
    st = stress_profile(c, tech).state(aging, age)
    return ZeroSlackReference(
        min_setup_time(c, QEdge.FALL_Q, tech, st, settings=settings),
        min_setup_time(c, QEdge.RISE_Q, tech, st, settings=settings))


@dataclass(frozen=True)
class _Job:
    kind: FlipFlopKind
    tech: TechnologyConfig
    cfg: McConfig
    zero_ref: ZeroSlackReference | None
    stress: StressProfile | None


@dataclass
class TrialOutcome:
    trial: int
    # (age, mode, metric) -> value, or None when the instance is degenerate
    values: dict = field(default_factory=dict)
    error: str | None = None


def characterize_instance(kind, tech: TechnologyConfig, sample: ProcessSample | None,
                          ages, modes, metrics, aging: AgingParams,
                          settings: CharSettings, zero_ref: ZeroSlackReference | None,
                          stress: StressProfile | None = None) -> dict:
    """Write thresholds of one instance for every (age, mode, metric).

    ``stress`` is a nominal pre-stress profile to re-evaluate for ``sample``;
    without it the pre-stress run is simulated on the sample itself.
    """
    c = instance_circuit(kind, tech)
    prof = None
    if any(a > 0 for a in ages):
        prof = (stress.resampled(c, tech, sample) if stress is not None
                else stress_profile(c, tech, sample=sample))
    out = {}
    for age in ages:
        shifts = prof.state(aging, age).delta_vth if prof is not None and age > 0 else None
        tester = WriteTester(c, tech, sample, shifts, settings)
        for mode in modes:
            for metric in metrics:
                zero = zero_ref.for_metric(metric) if zero_ref is not None else None
                find = find_v_write_low if metric == "v_write_l" else find_v_write_high
                try:
                    out[(age, mode, metric)] = find(tester, mode, zero_slack=zero,
                                                    accuracy=settings.accuracy)
                except DegenerateInstance:
                    out[(age, mode, metric)] = None
    return out


def _run_trials(job: _Job, trials) -> list[TrialOutcome]:
    cfg = job.cfg
    outs = []
    for i in trials:
        try:
            sample = sample_params(job.tech, trial_rng(cfg.seed, i))
            vals = characterize_instance(job.kind, job.tech, sample, cfg.ages, cfg.modes,
                                         cfg.metrics, cfg.aging, cfg.settings, job.zero_ref,
                                         job.stress)
            outs.append(TrialOutcome(i, vals))
        except (SimulationError, GeometryError, CharacterizationError) as e:
            outs.append(TrialOutcome(i, {}, f"{type(e).__name__}: {e}"))
    return outs


@dataclass(frozen=True)
class RawRow:
    ff_kind: str
    tech: str
    age_years: float
    slack_mode: str
    trial_id: int
    v_write_l: float
    v_write_h: float
    wnm_l: float
    wnm_h: float


RAW_FIELDS = ("ff_kind", "tech", "age_years", "slack_mode", "trial_id",
              "v_write_l", "v_write_h", "wnm_l", "wnm_h")
SUMMARY_FIELDS = ("ff_kind", "tech", "age", "mode", "metric", "n", "mean", "std", "min",
                  "max", "degenerate_count")


@dataclass
class McResult:
    config: McConfig
    summaries: dict  # (kind, tech, age, mode, metric) -> StatSummary
    raw: list  # RawRow in (tech, kind, trial, age, mode) order
    failures: dict  # (kind, tech) -> list of (trial, message)

    def samples(self, kind, tech, age, mode, metric) -> np.ndarray:
        kind = FlipFlopKind.parse(kind).value if not isinstance(kind, FlipFlopKind) else kind.value
        mode = SlackMode(mode).value
        v = [getattr(r, metric) for r in self.raw
             if (r.ff_kind, r.tech, r.age_years, r.slack_mode) == (kind, tech, age, mode)]
        return np.array([x for x in v if not math.isnan(x)])


def _chunks(n: int, size: int):
    return [range(a, min(n, a + size)) for a in range(0, n, size)]


def run_mc(cfg: McConfig, workers: int = 1, zero_refs: dict | None = None) -> McResult:
    """Characterize ``cfg.n_trials`` sampled instances per (technology, kind).

    ``zero_refs`` may supply precomputed :class:`ZeroSlackReference` objects
    keyed by ``(kind, tech name)``.
    """
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    jobs = []
    for tech in cfg.technologies:
        for kind in cfg.kinds:
            ref = None
            if SlackMode.ZERO in cfg.modes:
                ref = (zero_refs or {}).get((kind, tech.name)) or zero_slack_reference(
                    kind, tech, cfg.aging, cfg.settings)
            stress = None
            if any(a > 0 for a in cfg.ages):
                stress = stress_profile(instance_circuit(kind, tech), tech)
            jobs.append(_Job(kind, tech, cfg, ref, stress))

    size = max(1, math.ceil(cfg.n_trials / (4 * workers)))
    tasks = [(j, ch) for j in jobs for ch in _chunks(cfg.n_trials, size)]
    if workers == 1:
        results = [_run_trials(j, ch) for j, ch in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_trials, j, ch) for j, ch in tasks]
            results = [f.result() for f in futs]

    per_job: dict = {id(j): [] for j in jobs}
    for (j, _), outs in zip(tasks, results):
        per_job[id(j)].extend(outs)

    summaries, raw, failures = {}, [], {}
    for j in jobs:
        outs = sorted(per_job[id(j)], key=lambda o: o.trial)
        failed = [(o.trial, o.error) for o in outs if o.error is not None]
        failures[(j.kind.value, j.tech.name)] = failed
        for t, msg in failed:
            logger.warning("%s/%s trial %d failed: %s", j.tech.name, j.kind.value, t, msg)
        if len(failed) > cfg.max_failed_fraction * cfg.n_trials:
            raise MonteCarloAborted(
                f"{j.tech.name}/{j.kind.value}: {len(failed)} of {cfg.n_trials} trials failed")
        good = [o for o in outs if o.error is None]
        vdd = j.tech.vdd
        for o in good:
            for age in cfg.ages:
                for mode in cfg.modes:
                    vl = o.values.get((age, mode, "v_write_l"))
                    vh = o.values.get((age, mode, "v_write_h"))
                    vl = math.nan if vl is None else vl
                    vh = math.nan if vh is None else vh
                    raw.append(RawRow(j.kind.value, j.tech.name, age, mode.value, o.trial,
                                      vl, vh, vl, vdd - vh))
        for age in cfg.ages:
            for mode in cfg.modes:
                for metric in cfg.metrics:
                    vals = [o.values[(age, mode, metric)] for o in good]
                    ok = [v for v in vals if v is not None]
                    summaries[(j.kind.value, j.tech.name, age, mode.value, metric)] = \
                        _summary_any(ok, len(vals) - len(ok), len(failed))
    return McResult(cfg, summaries, raw, failures)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_raw_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RAW_FIELDS)
        for r in rows:
            w.writerow([r.ff_kind, r.tech, _fmt(r.age_years), r.slack_mode, r.trial_id,
                        _fmt(r.v_write_l), _fmt(r.v_write_h), _fmt(r.wnm_l), _fmt(r.wnm_h)])


def write_summary_csv(path, summaries: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for (kind, tech, age, mode, metric), s in summaries.items():
            w.writerow([kind, tech, _fmt(age), mode, metric, s.n, _fmt(s.mean), _fmt(s.std),
                        _fmt(s.min), _fmt(s.max), s.degenerate_count])


def read_summary_csv(path) -> dict:
    out = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            missing = set(SUMMARY_FIELDS) - set(r)
            if missing:
                raise ValueError(f"{path}: summary CSV lacks columns {sorted(missing)}")
            key = (r["ff_kind"], r["tech"], float(r["age"]), r["mode"], r["metric"])
            out[key] = StatSummary(int(r["n"]), float(r["mean"]), float(r["std"]),
                                   float(r["min"]), float(r["max"]), int(r["degenerate_count"]))
    return out
