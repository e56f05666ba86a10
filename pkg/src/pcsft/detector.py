"""Threshold detectors as first-hitting-time state machines over channel energy.

A channel owns a disjoint set of field components; its energy is the sum of
their squares.  A detector clicks when that energy first reaches ``E_d``.

``renewal`` mode runs one long stream: after a click the channel's components
restart from zero once ``dead_time`` has elapsed (``reset="global"`` restarts
every channel instead).  ``windowed`` mode runs independent trials of length
``T`` and records at most the first click of each channel per trial.

Hot loops are numba kernels.  The fused kernels draw their own normals from
the counter-based stream, so trial ``k`` is the same path no matter which
worker runs it; the chunk-fed kernels take increments from an explicit
:class:`~pcsft.wiener.FieldTrajectory`.  Both run the same step logic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import BadChannel, ValidationError
from .rng import RngStream, aux_uniform, refill
from .wiener import DEFAULT_CHUNK, FieldTrajectory, n_steps

CROSSING_RULES = ("grid", "interpolated", "bridge")
DETECTION_MODES = ("renewal", "windowed")
RESETS = ("channel", "global")


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float
    dead_time: float = 0.0
    crossing_rule: str = "interpolated"
    mode: str = "renewal"
    reset: str = "channel"

    def __post_init__(self):
        if not (isinstance(self.threshold, (int, float)) and math.isfinite(self.threshold) and self.threshold > 0):
            raise ValidationError(f"threshold must be a positive number, got {self.threshold!r}", field="threshold")
        if not (math.isfinite(self.dead_time) and self.dead_time >= 0):
            raise ValidationError(f"dead_time must be >= 0, got {self.dead_time!r}", field="dead_time")
        if self.crossing_rule not in CROSSING_RULES:
            raise ValidationError(f"crossing_rule must be one of {CROSSING_RULES}", field="crossing_rule")
        if self.mode not in DETECTION_MODES:
            raise ValidationError(f"mode must be one of {DETECTION_MODES}", field="mode")
        if self.reset not in RESETS:
            raise ValidationError(f"reset must be one of {RESETS}", field="reset")

    def with_threshold(self, threshold):
        return DetectorConfig(float(threshold), self.dead_time, self.crossing_rule, self.mode, self.reset)


@dataclass(frozen=True)
class ChannelAssignment:
    """Channel ``j`` -> tuple of component indices (0-based, disjoint)."""

    channels: tuple

    def __post_init__(self):
        chans = tuple(tuple(int(c) for c in ch) for ch in self.channels)
        if not chans or any(len(ch) == 0 for ch in chans):
            raise ValidationError("every channel needs at least one component", field="channels")
        flat = [c for ch in chans for c in ch]
        if len(set(flat)) != len(flat) or min(flat) < 0:
            raise ValidationError("channel component sets must be disjoint and non-negative", field="channels")
        object.__setattr__(self, "channels", chans)

    @classmethod
    def singletons(cls, m):
        return cls(tuple((j,) for j in range(m)))

    @classmethod
    def complex_pairs(cls, m):
        """Channel ``j`` owns components ``(2j, 2j+1)`` of a 2m-real field."""
        return cls(tuple((2 * j, 2 * j + 1) for j in range(m)))

    def __len__(self):
        return len(self.channels)

    @property
    def max_component(self):
        return max(c for ch in self.channels for c in ch)

    def csr(self):
        ptr = np.zeros(len(self.channels) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(ch) for ch in self.channels])
        idx = np.array([c for ch in self.channels for c in ch], dtype=np.int64)
        return ptr, idx


@dataclass(frozen=True)
class ClickRecord:
    channel: int
    time: float


@dataclass(eq=False)
class ClickLog:
    """Clicks of one run as parallel arrays, ordered by detection step.

    ``start`` is when the excursion that produced each click began, so
    ``time - start`` is its hitting time.
    """

    n_channels: int
    duration: float
    channel: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    start: np.ndarray = field(default_factory=lambda: np.zeros(0))
    steps: int = 0

    def __len__(self):
        return int(self.channel.size)

    def counts(self):
        return np.bincount(self.channel, minlength=self.n_channels)

    def per_channel(self):
        """Sorted click times of each channel."""
        return [np.sort(self.time[self.channel == j]) for j in range(self.n_channels)]

    def hitting_times(self, j=None):
        d = self.time - self.start
        return d if j is None else d[self.channel == j]

    def records(self):
        return [ClickRecord(int(c), float(t)) for c, t in zip(self.channel, self.time)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "time"])
            for c, t in zip(self.channel, self.time):
                w.writerow([int(c), repr(float(t))])


@dataclass(eq=False)
class WindowedClicks:
    """First-hit times of independent trials, shape ``(n_trials, n_channels)``; NaN = no click."""

    hits: np.ndarray
    duration: float
    steps: int = 0

    @property
    def n_trials(self):
        return self.hits.shape[0]

    @property
    def clicked(self):
        return ~np.isnan(self.hits)

    def counts(self):
        return self.clicked.sum(axis=0)

    def records(self):
        """One list of ClickRecord per trial."""
        out = []
        for row in self.hits:
            out.append([ClickRecord(j, float(t)) for j, t in enumerate(row) if not np.isnan(t)])
        return out


def channel_energy(phi, assignment, j):
    """Sum of squares of channel ``j``'s components."""
    phi = np.asarray(phi, dtype=np.float64)
    if not 0 <= j < len(assignment):
        raise BadChannel(f"channel {j} out of range 0..{len(assignment) - 1}", field="channel")
    comps = assignment.channels[j]
    if max(comps) >= phi.size:
        raise BadChannel(f"channel {j} refers to component {max(comps)} of a {phi.size}-component field")
    sub = phi[list(comps)]
    return float(sub @ sub)


def first_hit(times, energies, threshold, crossing_rule="interpolated"):
    """First time the sampled energy reaches ``threshold``, or None."""
    s = np.asarray(times, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    above = np.flatnonzero(e >= threshold)
    if above.size == 0:
        return None
    i = int(above[0])
    if i == 0 or crossing_rule == "grid":
        return float(s[i])
    return float(s[i - 1] + (s[i] - s[i - 1]) * (threshold - e[i - 1]) / (e[i] - e[i - 1]))


# ---------------------------------------------------------------- kernels

GRID, INTERPOLATED, BRIDGE = 0, 1, 2
STEP_BLOCK = 128  # steps whose increments are drawn together; keeps normal indices even
_MAX_EXPONENT = 60.0


@nb.njit(inline="always", cache=True)
def _bridge_probability(cov, phi, ptr, idx, j, x0, e_prev, e, threshold, dt):
    """Chance that the path crossed the threshold inside a step whose ends are below it.

    Scalar channels use the two-sided Brownian-bridge formula on the signed
    component (``x0`` is its value at the start of the step).  Larger
    channels use a flat barrier along the radial direction of the end point.
    """
    a = math.sqrt(threshold)
    if ptr[j + 1] - ptr[j] == 1:
        c = idx[ptr[j]]
        x1 = phi[c]
        v = cov[c, c] * dt
        if v <= 0.0:
            return 0.0
        p = 0.0
        up = 2.0 * (a - x0) * (a - x1) / v
        down = 2.0 * (a + x0) * (a + x1) / v
        if up < _MAX_EXPONENT:
            p += math.exp(-up)
        if down < _MAX_EXPONENT:
            p += math.exp(-down)
        return p
    if e <= 0.0:
        return 0.0
    v = 0.0
    for p1 in range(ptr[j], ptr[j + 1]):
        c1 = idx[p1]
        for p2 in range(ptr[j], ptr[j + 1]):
            c2 = idx[p2]
            v += phi[c1] * cov[c1, c2] * phi[c2]
    v = v / e * dt
    if v <= 0.0:
        return 0.0
    expo = 2.0 * (a - math.sqrt(e_prev)) * (a - math.sqrt(e)) / v
    return math.exp(-expo) if expo < _MAX_EXPONENT else 0.0


@nb.njit(cache=True, nogil=True)
def _increment_block(factor, sqdt, key, stream, blk, words, zbuf, incbuf):
    """Increments of steps ``blk*STEP_BLOCK + 1 ..`` (step ``i`` uses normals ``(i-1)m .. im-1``)."""
    m = factor.shape[0]
    refill(key, stream, blk * STEP_BLOCK * m, words, zbuf)
    for i in range(STEP_BLOCK):
        for r in range(m):
            acc = 0.0
            for c in range(m):
                acc += factor[r, c] * zbuf[i * m + c]
            incbuf[i, r] = sqdt * acc


@nb.njit(inline="always", cache=True)
def _crossing_time(s, dt, e_prev, e, threshold, rule):
    if rule == GRID:
        return s
    return s - dt + dt * (threshold - e_prev) / (e - e_prev)


@nb.njit(cache=True, nogil=True)
def _renewal_kernel(factor, cov, dt, step0, n, key, stream, incs, ptr, idx, threshold, rule,
                    dead_steps, global_reset, phi, e_prev, restart, start):
    """Advance a renewal run over steps ``step0+1 .. step0+n``.

    ``phi``, ``e_prev`` (per channel), ``restart`` (last dead step per
    channel) and ``start`` (excursion start time) carry state across calls.
    Uses ``incs`` when it has rows, otherwise draws from ``(key, stream)``.
    """
    m = factor.shape[0]
    n_ch = ptr.size - 1
    cap = 1024
    out_ch = np.empty(cap, dtype=np.int64)
    out_t = np.empty(cap)
    out_s = np.empty(cap)
    count = 0
    inc = np.empty(m)
    fused = incs.shape[0] == 0
    sqdt = math.sqrt(dt)
    words = np.empty(STEP_BLOCK * m, dtype=np.uint64)
    zbuf = np.empty(STEP_BLOCK * m)
    incbuf = np.empty((STEP_BLOCK, m))
    cur = -1
    for step in range(step0 + 1, step0 + n + 1):
        s = step * dt
        if fused:
            blk = (step - 1) // STEP_BLOCK
            if blk != cur:
                _increment_block(factor, sqdt, key, stream, blk, words, zbuf, incbuf)
                cur = blk
            row = step - 1 - blk * STEP_BLOCK
            for r in range(m):
                inc[r] = incbuf[row, r]
        else:
            for r in range(m):
                inc[r] = incs[step - step0 - 1, r]
        fired = False
        for j in range(n_ch):
            if step <= restart[j]:
                continue
            e = 0.0
            x0 = 0.0
            for p in range(ptr[j], ptr[j + 1]):
                c = idx[p]
                x0 = phi[c]
                phi[c] += inc[c]
                e += phi[c] * phi[c]
            hit = e >= threshold
            if hit:
                t = _crossing_time(s, dt, e_prev[j], e, threshold, rule)
            elif rule == BRIDGE:
                pb = _bridge_probability(cov, phi, ptr, idx, j, x0, e_prev[j], e, threshold, dt)
                if pb > 0.0 and aux_uniform(key, stream, step * n_ch + j) < pb:
                    hit = True
                    t = s - 0.5 * dt
            if hit:
                if count == cap:
                    cap *= 2
                    g_ch = np.empty(cap, dtype=np.int64)
                    g_t = np.empty(cap)
                    g_s = np.empty(cap)
                    g_ch[:count] = out_ch[:count]
                    g_t[:count] = out_t[:count]
                    g_s[:count] = out_s[:count]
                    out_ch, out_t, out_s = g_ch, g_t, g_s
                out_ch[count] = j
                out_t[count] = t
                out_s[count] = start[j]
                count += 1
                fired = True
                for p in range(ptr[j], ptr[j + 1]):
                    phi[idx[p]] = 0.0
                e_prev[j] = 0.0
                restart[j] = step + dead_steps
                start[j] = restart[j] * dt
            else:
                e_prev[j] = e
        if fired and global_reset:
            for j in range(n_ch):
                for p in range(ptr[j], ptr[j + 1]):
                    phi[idx[p]] = 0.0
                e_prev[j] = 0.0
                restart[j] = step + dead_steps
                start[j] = restart[j] * dt
    return out_ch[:count], out_t[:count], out_s[:count]


@nb.njit(cache=True, nogil=True)
def _windowed_segment(factor, cov, dt, step0, n, key, stream, incs, ptr, idx, threshold, rule,
                      phi, e_prev, hits):
    """Advance one windowed trial; returns the number of channels still silent."""
    m = factor.shape[0]
    n_ch = ptr.size - 1
    inc = np.empty(m)
    fused = incs.shape[0] == 0
    sqdt = math.sqrt(dt)
    words = np.empty(STEP_BLOCK * m, dtype=np.uint64)
    zbuf = np.empty(STEP_BLOCK * m)
    incbuf = np.empty((STEP_BLOCK, m))
    cur = -1
    live = np.empty(n_ch, dtype=np.bool_)
    silent = 0
    for j in range(n_ch):
        live[j] = math.isnan(hits[j])
        if live[j]:
            silent += 1
    for step in range(step0 + 1, step0 + n + 1):
        if silent == 0:
            break
        s = step * dt
        if fused:
            blk = (step - 1) // STEP_BLOCK
            if blk != cur:
                _increment_block(factor, sqdt, key, stream, blk, words, zbuf, incbuf)
                cur = blk
            row = step - 1 - blk * STEP_BLOCK
            for r in range(m):
                inc[r] = incbuf[row, r]
        else:
            for r in range(m):
                inc[r] = incs[step - step0 - 1, r]
        for j in range(n_ch):
            if not live[j]:
                continue
            e = 0.0
            x0 = 0.0
            for p in range(ptr[j], ptr[j + 1]):
                c = idx[p]
                x0 = phi[c]
                phi[c] += inc[c]
                e += phi[c] * phi[c]
            if e >= threshold:
                hits[j] = _crossing_time(s, dt, e_prev[j], e, threshold, rule)
                live[j] = False
                silent -= 1
                continue
            if rule == BRIDGE:
                pb = _bridge_probability(cov, phi, ptr, idx, j, x0, e_prev[j], e, threshold, dt)
                if pb > 0.0 and aux_uniform(key, stream, step * n_ch + j) < pb:
                    hits[j] = s - 0.5 * dt
                    live[j] = False
                    silent -= 1
                    continue
            e_prev[j] = e
    return silent


@nb.njit(cache=True, nogil=True)
def _windowed_batch(factor, cov, dt, n, key, stream_base, first, last, ptr, idx, threshold, rule, hits):
    """Trials ``first .. last-1``; trial ``k`` uses stream ``stream_base | k``."""
    m = factor.shape[0]
    n_ch = ptr.size - 1
    empty = np.empty((0, m))
    phi = np.empty(m)
    e_prev = np.empty(n_ch)
    row = np.empty(n_ch)
    steps = 0
    for k in range(first, last):
        phi[:] = 0.0
        e_prev[:] = 0.0
        row[:] = np.nan
        _windowed_segment(factor, cov, dt, 0, n, key, stream_base | np.uint64(k), empty, ptr, idx,
                          threshold, rule, phi, e_prev, row)
        last_hit = 0.0
        done = True
        for j in range(n_ch):
            hits[k - first, j] = row[j]
            if math.isnan(row[j]):
                done = False
            elif row[j] > last_hit:
                last_hit = row[j]
        steps += n if not done else min(n, int(math.ceil(last_hit / dt)))
    return steps


# ------------------------------------------------------------- front end

_RULE_CODES = {"grid": GRID, "interpolated": INTERPOLATED, "bridge": BRIDGE}


def _prepare(factor, assignment):
    factor = np.ascontiguousarray(factor, dtype=np.float64)
    if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
        raise ValidationError(f"expected a square factor, got shape {factor.shape}", field="B")
    if assignment.max_component >= factor.shape[0]:
        raise BadChannel(f"assignment uses component {assignment.max_component} "
                         f"but the field has {factor.shape[0]} components")
    ptr, idx = assignment.csr()
    return factor, np.ascontiguousarray(factor @ factor.T), ptr, idx


@dataclass(frozen=True)
class StreamSource:
    """Trajectories drawn on the fly: increments ``sqrt(dt) factor z``."""

    factor: np.ndarray
    dt: float
    rng: RngStream


def run_renewal(factor, dt, rng, assignment, cfg, duration, chunk=1 << 22):
    """Renewal-mode clicks on the stream ``rng`` over ``[0, duration]``."""
    factor, cov, ptr, idx = _prepare(factor, assignment)
    return _renewal_loop(factor, cov, dt, n_steps(duration, dt), rng, None, ptr, idx, assignment, cfg,
                         duration, chunk)


def _renewal_loop(factor, cov, dt, steps, rng, trajectory, ptr, idx, assignment, cfg, duration, chunk):
    m = factor.shape[0]
    n_ch = len(assignment)
    phi = np.zeros(m)
    e_prev = np.zeros(n_ch)
    restart = np.zeros(n_ch, dtype=np.int64)
    start = np.zeros(n_ch)
    dead_steps = int(math.ceil(cfg.dead_time / dt - 1e-9)) if cfg.dead_time > 0 else 0
    args = (float(cfg.threshold), _RULE_CODES[cfg.crossing_rule], dead_steps, cfg.reset == "global",
            phi, e_prev, restart, start)
    parts = []
    if trajectory is None:
        empty = np.empty((0, m))
        done = 0
        while done < steps:
            n = min(chunk, steps - done)
            parts.append(_renewal_kernel(factor, cov, dt, done, n, rng.key, rng.stream, empty, ptr, idx, *args))
            done += n
    else:
        r = trajectory.rng
        for first, inc in trajectory.increment_chunks(min(chunk, DEFAULT_CHUNK)):
            parts.append(_renewal_kernel(factor, cov, dt, first - 1, len(inc), r.key, r.stream,
                                         np.ascontiguousarray(inc), ptr, idx, *args))
    if parts:
        ch = np.concatenate([p[0] for p in parts])
        t = np.concatenate([p[1] for p in parts])
        st = np.concatenate([p[2] for p in parts])
    else:
        ch, t, st = np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
    return ClickLog(n_ch, float(duration), ch, t, st, steps)


def run_windowed(factor, dt, master_seed, assignment, cfg, duration, first, last, stream_base=0):
    """First-hit times for trials ``first .. last-1`` (trial ``k`` = stream ``stream_base | k``)."""
    factor, cov, ptr, idx = _prepare(factor, assignment)
    hits = np.empty((last - first, len(assignment)))
    steps = _windowed_batch(factor, cov, dt, n_steps(duration, dt), np.uint64(master_seed),
                            np.uint64(stream_base), first, last, ptr, idx, float(cfg.threshold),
                            _RULE_CODES[cfg.crossing_rule], hits)
    return WindowedClicks(hits, float(duration), int(steps))


def run_detector(source, assignment, cfg, duration=None):
    """Run detectors over a trajectory source.

    ``source`` is a :class:`~pcsft.wiener.FieldTrajectory` (its own length
    bounds the run) or a :class:`StreamSource`.  Renewal mode returns a
    :class:`ClickLog`; windowed mode treats the source as a single trial and
    returns a :class:`WindowedClicks` with one row.
    """
    if isinstance(source, FieldTrajectory):
        factor, cov, ptr, idx = _prepare(source.factor, assignment)
        steps = source.steps if duration is None else min(source.steps, n_steps(duration, source.dt))
        traj = FieldTrajectory(source.factor, source.dt, steps, source.rng)
        duration = steps * source.dt if duration is None else float(duration)
        if cfg.mode == "renewal":
            return _renewal_loop(factor, cov, source.dt, steps, None, traj, ptr, idx, assignment, cfg,
                                 duration, DEFAULT_CHUNK)
        phi = np.zeros(factor.shape[0])
        e_prev = np.zeros(len(assignment))
        row = np.full(len(assignment), np.nan)
        used = 0
        for first, inc in traj.increment_chunks():
            silent = _windowed_segment(factor, cov, source.dt, first - 1, len(inc), source.rng.key,
                                       source.rng.stream, np.ascontiguousarray(inc), ptr, idx,
                                       float(cfg.threshold), _RULE_CODES[cfg.crossing_rule], phi, e_prev, row)
            used = first - 1 + len(inc)
            if silent == 0:
                break
        return WindowedClicks(row[None, :], duration, used)
    if not isinstance(source, StreamSource):
        raise TypeError(f"unsupported trajectory source {type(source).__name__}")
    if duration is None or not duration > 0:
        raise ValidationError("duration must be positive", field="T")
    if cfg.mode == "renewal":
        return run_renewal(source.factor, source.dt, source.rng, assignment, cfg, duration)
    return run_windowed(source.factor, source.dt, source.rng.master_seed, assignment, cfg, duration,
                        0, 1, stream_base=source.rng.stream_id)


def find_coincidences(clicks, window=0.0, mode="renewal"):
    """Count coincidence events between two channels.

    Renewal mode: ``clicks`` is a pair of time sequences; pairs within
    ``window`` are matched greedily earliest-first, each click used once.
    Windowed mode: ``clicks`` is a :class:`WindowedClicks` (or a boolean
    ``(n_trials, 2)`` array); counts trials where both channels clicked.
    """
    if mode == "windowed":
        c = clicks.clicked if isinstance(clicks, WindowedClicks) else np.asarray(clicks, dtype=bool)
        return int(np.count_nonzero(c[:, 0] & c[:, 1]))
    if window < 0:
        raise ValidationError("coincidence window must be >= 0", field="window")
    a = np.sort(np.asarray(clicks[0], dtype=np.float64))
    b = np.sort(np.asarray(clicks[1], dtype=np.float64))
    return int(_greedy_match(a, b, float(window)))


@nb.njit(cache=True)
def _greedy_match(a, b, w):
    i = 0
    j = 0
    n = 0
    while i < a.size and j < b.size:
        d = a[i] - b[j]
        if abs(d) <= w:
            n += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return n
