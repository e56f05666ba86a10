"""Monte Carlo campaigns: singles, coincidences, threshold sweeps and reports.

Every trial (windowed mode) or replica (renewal mode) ``k`` draws from the
counter-based stream ``stream_base | k`` of the master seed.  Work is split
into fixed blocks that may run on a thread pool; results are reduced in block
order, so the thread count never changes a single bit of the output.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sps

from .detector import ChannelAssignment, DetectorConfig, find_coincidences, run_renewal, run_windowed
from .errors import DegenerateRate, InsufficientClicks, NoClicks, ValidationError
from .linalg import CovarianceOperator, Projector, born_probability, cholesky, density_from_covariance, matrix_from_json
from .rng import RngStream, U64_MAX, stream_offset

Z95 = float(sps.norm.ppf(0.975))
WINDOWED_BLOCK = 2048
MEAN_TAU_RTOL = 0.03
MIN_TAU_CLICKS = 100


def wilson_interval(k, n, z=Z95):
    """Wilson score interval for a binomial proportion k/n."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    B: CovarianceOperator
    detector: DetectorConfig
    dt: float
    T: float
    n_trials: int = 1
    master_seed: int = 0
    measurement_basis: np.ndarray | None = None
    window: float | None = None
    channels: ChannelAssignment | None = None

    def __post_init__(self):
        if not isinstance(self.B, CovarianceOperator):
            object.__setattr__(self, "B", CovarianceOperator(self.B))
        m = self.B.dim
        if not (isinstance(self.dt, (int, float)) and self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be a positive number, got {self.dt!r}", field="dt")
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T >= self.dt):
            raise ValidationError(f"T must be >= dt, got T={self.T!r}, dt={self.dt!r}", field="T")
        if not (isinstance(self.n_trials, (int, np.integer)) and self.n_trials >= 1):
            raise ValidationError(f"n_trials must be an integer >= 1, got {self.n_trials!r}", field="n_trials")
        if self.detector.mode == "renewal" and self.T / self.n_trials < self.dt:
            raise ValidationError("renewal segments T/n_trials must be >= dt", field="n_trials")
        if self.n_trials >= 1 << 32:
            raise ValidationError("n_trials must be below 2**32", field="n_trials")
        if not (isinstance(self.master_seed, (int, np.integer)) and 0 <= self.master_seed <= U64_MAX):
            raise ValidationError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed!r}",
                                  field="master_seed")
        if self.measurement_basis is not None:
            u = matrix_from_json(self.measurement_basis, "measurement_basis")
            if u.shape != (m, m):
                raise ValidationError(f"measurement_basis must be {m}x{m}", field="measurement_basis")
            if np.max(np.abs(u.T @ u - np.eye(m))) > 1e-10:
                raise ValidationError("measurement_basis is not orthonormal", field="measurement_basis")
            u.setflags(write=False)
            object.__setattr__(self, "measurement_basis", u)
        if self.window is not None and not (math.isfinite(self.window) and self.window >= 0):
            raise ValidationError(f"window must be >= 0, got {self.window!r}", field="window")
        if self.channels is None:
            object.__setattr__(self, "channels", ChannelAssignment.singletons(m))
        elif not isinstance(self.channels, ChannelAssignment):
            object.__setattr__(self, "channels", ChannelAssignment(self.channels))
        if self.channels.max_component >= m:
            raise ValidationError(f"channels refer to component {self.channels.max_component} of an "
                                  f"{m}-component field", field="channels")

    @property
    def coincidence_window(self):
        return self.dt if self.window is None else float(self.window)

    @property
    def basis(self):
        return np.eye(self.B.dim) if self.measurement_basis is None else self.measurement_basis

    def factor(self):
        """Increment factor: the Cholesky factor of B, rotated by U^T when a basis is set."""
        a = cholesky(self.B)
        return a if self.measurement_basis is None else self.measurement_basis.T @ a

    def channel_powers(self):
        """Average power of each channel in the measured basis."""
        c = self.basis.T @ self.B.entries @ self.basis
        return np.array([sum(c[i, i] for i in ch) for ch in self.channels.channels])

    def born_reference(self):
        """Tr(rho C_j) with C_j projecting onto the basis vectors of channel j."""
        rho = density_from_covariance(self.B)
        u = self.basis
        return np.array([born_probability(rho, Projector.onto(u[:, list(ch)])) for ch in self.channels.channels])

    def with_threshold(self, threshold):
        return replace(self, detector=self.detector.with_threshold(threshold))

    def to_json(self):
        d = self.detector
        return {
            "B": self.B.to_json(),
            "detector": {"threshold": d.threshold, "dead_time": d.dead_time, "crossing_rule": d.crossing_rule,
                         "mode": d.mode, "reset": d.reset},
            "dt": self.dt,
            "T": self.T,
            "n_trials": int(self.n_trials),
            "master_seed": int(self.master_seed),
            "measurement_basis": None if self.measurement_basis is None else self.measurement_basis.tolist(),
            "window": self.coincidence_window,
            "channels": [list(ch) for ch in self.channels.channels],
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        if not isinstance(obj, dict):
            raise ValidationError("config must be a JSON object", field="config")
        allowed = {"B", "detector", "dt", "T", "n_trials", "master_seed", "measurement_basis", "window",
                   "channels", "thresholds", "coincidence_channels"}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise ValidationError(f"unknown config field {unknown[0]!r}", field=unknown[0])
        for key in ("B", "detector", "dt", "T"):
            if key not in obj:
                raise ValidationError(f"missing required config field {key!r}", field=key)
        det = obj["detector"]
        if not isinstance(det, dict):
            raise ValidationError("detector must be an object", field="detector")
        det_allowed = {"threshold", "dead_time", "crossing_rule", "mode", "reset"}
        bad = sorted(set(det) - det_allowed)
        if bad:
            raise ValidationError(f"unknown detector field {bad[0]!r}", field=f"detector.{bad[0]}")
        if "threshold" not in det:
            raise ValidationError("missing detector.threshold", field="detector.threshold")
        try:
            detector = DetectorConfig(**{k: (float(v) if k in ("threshold", "dead_time") else v)
                                         for k, v in det.items()})
        except (TypeError, ValueError) as exc:
            field_name = getattr(exc, "field", None)
            raise ValidationError(str(exc), field=f"detector.{field_name}" if field_name else "detector") from exc
        B = CovarianceOperator.from_json(obj["B"], name="B")
        kwargs = {}
        for key, conv in (("dt", float), ("T", float), ("window", float)):
            if obj.get(key) is not None:
                try:
                    kwargs[key] = conv(obj[key])
                except (TypeError, ValueError) as exc:
                    raise ValidationError(f"{key} must be a number", field=key) from exc
        for key in ("n_trials", "master_seed"):
            if key in obj:
                v = obj[key]
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ValidationError(f"{key} must be an integer", field=key)
                kwargs[key] = v
        if obj.get("measurement_basis") is not None:
            kwargs["measurement_basis"] = obj["measurement_basis"]
        if obj.get("channels") is not None:
            try:
                kwargs["channels"] = ChannelAssignment(tuple(tuple(c) for c in obj["channels"]))
            except TypeError as exc:
                raise ValidationError("channels must be a list of component lists", field="channels") from exc
        return cls(B=B, detector=detector, **kwargs)


@dataclass(eq=True)
class ExperimentStats:
    kind: str
    mode: str
    counts: list
    total: int
    probabilities: list
    ci_low: list
    ci_high: list
    n_trials: int
    steps: int
    channels: tuple = (0, 1)
    coincidences: int | None = None
    p1: float | None = None
    p2: float | None = None
    p12: float | None = None
    g2: float | None = None
    g2_ci: tuple | None = None
    metadata: dict = field(default_factory=dict)
    wall_seconds: float = field(default=0.0, compare=False)

    def to_json(self):
        d = {k: getattr(self, k) for k in ("kind", "mode", "counts", "total", "probabilities", "ci_low", "ci_high",
                                           "n_trials", "steps", "coincidences", "p1", "p2", "p12", "g2")}
        d["channels"] = list(self.channels)
        d["g2_ci"] = None if self.g2_ci is None else list(self.g2_ci)
        d["metadata"] = dict(self.metadata)
        return d

    def require_g2(self):
        if self.g2 is None:
            raise DegenerateRate("g2 is undefined: a channel never clicked")
        return self.g2


# ------------------------------------------------------------------ engine

def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def simulate_renewal(cfg, threads=1, stream_base=0):
    """Click logs of the renewal run, split into ``cfg.n_trials`` equal segments.

    ``T`` is the total observation time.  Each segment starts from a fresh
    field on its own stream; segments are the unit of parallel work.
    """
    factor = cfg.factor()
    seg = cfg.T / cfg.n_trials

    def one(k):
        return run_renewal(factor, cfg.dt, RngStream(cfg.master_seed, stream_base | k), cfg.channels,
                           cfg.detector, seg)

    return _map(one, list(range(cfg.n_trials)), threads)


def simulate_windowed(cfg, threads=1, stream_base=0):
    """First-hit matrix of ``cfg.n_trials`` windowed trials."""
    factor = cfg.factor()
    blocks = [(a, min(a + WINDOWED_BLOCK, cfg.n_trials)) for a in range(0, cfg.n_trials, WINDOWED_BLOCK)]

    def one(block):
        return run_windowed(factor, cfg.dt, cfg.master_seed, cfg.channels, cfg.detector, cfg.T,
                            block[0], block[1], stream_base=stream_base)

    parts = _map(one, blocks, threads)
    from .detector import WindowedClicks
    return WindowedClicks(np.concatenate([p.hits for p in parts], axis=0), cfg.T, sum(p.steps for p in parts))


def _singles_from_counts(kind, mode, counts, n_trials, steps, metadata):
    counts = [int(c) for c in counts]
    total = int(sum(counts))
    probs = [c / total if total else 0.0 for c in counts]
    cis = [wilson_interval(c, total) for c in counts]
    return ExperimentStats(kind=kind, mode=mode, counts=counts, total=total, probabilities=probs,
                           ci_low=[c[0] for c in cis], ci_high=[c[1] for c in cis], n_trials=n_trials,
                           steps=int(steps), metadata=metadata)


def run_singles(cfg, threads=1, stream_base=0):
    """Click shares N_j / N over all channels."""
    t0 = time.perf_counter()
    meta = {"probability_definition": "count share N_j/N"}
    if cfg.detector.mode == "renewal":
        logs = simulate_renewal(cfg, threads, stream_base)
        counts = np.sum([log.counts() for log in logs], axis=0)
        steps = sum(log.steps for log in logs)
    else:
        w = simulate_windowed(cfg, threads, stream_base)
        counts = w.counts()
        steps = w.steps
    st = _singles_from_counts("singles", cfg.detector.mode, counts, cfg.n_trials, steps, meta)
    st.wall_seconds = time.perf_counter() - t0
    if st.total == 0:
        raise NoClicks(f"no clicks recorded (threshold {cfg.detector.threshold} too high for T={cfg.T})")
    return st


def _g2_interval_windowed(n11, n10, n01, n):
    # Delta method on log g2 with multinomial cell proportions.
    p = np.array([n11, n10, n01, n - n11 - n10 - n01], dtype=float) / n
    p1 = p[0] + p[1]
    p2 = p[0] + p[2]
    if p[0] == 0 or p1 == 0 or p2 == 0:
        return None
    g = np.array([1 / p[0] - 1 / p1 - 1 / p2, -1 / p1, -1 / p2, 0.0])
    var = (np.sum(g * g * p) - np.sum(g * p) ** 2) / n
    g2 = p[0] / (p1 * p2)
    sd = math.sqrt(max(var, 0.0))
    return (float(g2 * math.exp(-Z95 * sd)), float(g2 * math.exp(Z95 * sd)))


def run_coincidence(cfg, channels=(0, 1), threads=1, stream_base=None, strict=False):
    """Singles and coincidence probabilities of two channels and g2 = P12 / (P1 P2).

    g2 is ``None`` when either channel never clicked; ``strict=True`` raises
    :class:`DegenerateRate` instead.  Streams are keyed by the threshold
    unless ``stream_base`` is given, so a sweep row equals the plain run.
    """
    t0 = time.perf_counter()
    if stream_base is None:
        stream_base = stream_offset(cfg.detector.threshold) << 32
    c1, c2 = (int(c) for c in channels)
    n_ch = len(cfg.channels)
    if c1 == c2 or not (0 <= c1 < n_ch and 0 <= c2 < n_ch):
        raise ValidationError(f"coincidence channels must be two distinct channels in 0..{n_ch - 1}",
                              field="coincidence_channels")
    mode = cfg.detector.mode
    if mode == "windowed":
        w = simulate_windowed(cfg, threads, stream_base)
        clicked = w.clicked
        n = cfg.n_trials
        a = clicked[:, c1]
        b = clicked[:, c2]
        n11 = int(np.count_nonzero(a & b))
        n10 = int(np.count_nonzero(a & ~b))
        n01 = int(np.count_nonzero(~a & b))
        coincidences = find_coincidences(np.stack([a, b], axis=1), mode="windowed")
        p1 = (n11 + n10) / n
        p2 = (n11 + n01) / n
        p12 = coincidences / n
        counts = w.counts()
        steps = w.steps
        g2_ci = _g2_interval_windowed(n11, n10, n01, n)
        meta = {"probability_definition": "fraction of trials with a click"}
    else:
        logs = simulate_renewal(cfg, threads, stream_base)
        win = cfg.coincidence_window
        total_time = cfg.T
        coincidences = 0
        for log in logs:
            per = log.per_channel()
            coincidences += find_coincidences((per[c1], per[c2]), win, mode="renewal")
        counts = np.sum([log.counts() for log in logs], axis=0)
        steps = sum(log.steps for log in logs)
        # Per-window probabilities; independent streams give coincidence
        # rate 2 w r1 r2, hence P12 = C w / (2 T) so that g2 = 1 for them.
        p1 = counts[c1] * win / total_time
        p2 = counts[c2] * win / total_time
        p12 = coincidences * win / (2.0 * total_time)
        g2_ci = None
        if coincidences and counts[c1] and counts[c2]:
            sd = math.sqrt(1 / coincidences + 1 / counts[c1] + 1 / counts[c2])
            g2_ci = "log"
        meta = {"probability_definition": "per-window probability N_j w / T; P12 = C w / (2T)",
                "modeling_choice": "renewal-mode per-window normalisation is not fixed by the model"}
    st = _singles_from_counts("coincidence", mode, counts, cfg.n_trials, steps, meta)
    st.channels = (c1, c2)
    st.coincidences = int(coincidences)
    st.p1, st.p2, st.p12 = float(p1), float(p2), float(p12)
    if p1 > 0 and p2 > 0:
        st.g2 = float(p12 / (p1 * p2))
        if g2_ci == "log":
            g2_ci = (st.g2 * math.exp(-Z95 * sd), st.g2 * math.exp(Z95 * sd))
        st.g2_ci = g2_ci
    else:
        st.g2 = None
        st.g2_ci = None
        if strict:
            raise DegenerateRate(f"channel {c1 if p1 == 0 else c2} never clicked; g2 undefined")
    st.wall_seconds = time.perf_counter() - t0
    return st


@dataclass(eq=True)
class SweepTable:
    thresholds: list
    rows: list
    kendall_tau: float | None
    kendall_p: float | None

    def to_json(self):
        return {"thresholds": list(self.thresholds), "rows": [r.to_json() for r in self.rows],
                "kendall_tau": self.kendall_tau, "kendall_p_decreasing": self.kendall_p}


def sweep_threshold(cfg, thresholds, channels=(0, 1), threads=1):
    """One coincidence run per threshold; row streams are keyed by the threshold value.

    ``kendall_p`` is the one-sided p-value for g2 decreasing in E_d.
    """
    ths = [float(x) for x in thresholds]
    if not ths or any(not (x > 0 and math.isfinite(x)) for x in ths):
        raise ValidationError("thresholds must be positive numbers", field="thresholds")
    if any(b < a for a, b in zip(ths, ths[1:])):
        raise ValidationError("thresholds must be ascending", field="thresholds")
    rows = [run_coincidence(cfg.with_threshold(e), channels, threads) for e in ths]
    pts = [(e, r.g2) for e, r in zip(ths, rows) if r.g2 is not None]
    tau = p = None
    if len(pts) >= 2 and len({e for e, _ in pts}) >= 2:
        res = sps.kendalltau([e for e, _ in pts], [g for _, g in pts], alternative="less")
        if not math.isnan(res.statistic):
            tau, p = float(res.statistic), float(res.pvalue)
    return SweepTable(ths, rows, tau, p)


@dataclass(frozen=True)
class BornRow:
    channel: int
    empirical: float
    reference: float
    abs_diff: float
    ci_low: float
    ci_high: float
    passed: bool


def born_report(cfg, reference=None, threads=1, stats=None):
    """Compare click shares with Tr(rho C_j); a row passes when its Wilson interval covers the reference."""
    st = stats if stats is not None else run_singles(cfg, threads)
    ref = cfg.born_reference() if reference is None else np.asarray(reference, dtype=float)
    if ref.shape != (len(st.counts),):
        raise ValidationError(f"reference must have {len(st.counts)} entries", field="reference")
    rows = []
    for j, (p, lo, hi) in enumerate(zip(st.probabilities, st.ci_low, st.ci_high)):
        r = float(ref[j])
        rows.append(BornRow(j, p, r, abs(p - r), lo, hi, lo <= r <= hi))
    return rows, st


@dataclass(frozen=True)
class TauRow:
    channel: int
    clicks: int
    mean_tau: float
    stderr: float
    expected: float
    rel_error: float
    passed: bool


def mean_tau_report(cfg, threads=1):
    """Empirical mean hitting time per channel against E_d / channel power."""
    if cfg.detector.mode != "renewal" or cfg.detector.reset != "channel":
        raise ValidationError("mean_tau_report needs renewal mode with per-channel reset", field="detector.mode")
    logs = simulate_renewal(cfg, threads)
    powers = cfg.channel_powers()
    rows = []
    for j in range(len(cfg.channels)):
        taus = np.concatenate([log.hitting_times(j) for log in logs])
        if taus.size < MIN_TAU_CLICKS:
            raise InsufficientClicks(f"channel {j} has {taus.size} clicks; need at least {MIN_TAU_CLICKS}")
        mean = float(np.mean(taus))
        exp = cfg.detector.threshold / float(powers[j])
        rel = abs(mean - exp) / exp
        rows.append(TauRow(j, int(taus.size), mean, float(np.std(taus, ddof=1) / math.sqrt(taus.size)), exp, rel,
                           rel <= MEAN_TAU_RTOL))
    return rows
