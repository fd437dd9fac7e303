"""Discrete-event simulation of a two-state source feeding a single FCFS server.

The source starts in state 1 and flips state at every generation; each flip
emits a packet carrying the new state. A decision is made when a packet
completes service, and it is correct when the source has not changed state
since the packet was generated. Packets that find the system full are
dropped and charged when the packet in service at their drop instant is
delivered.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from scipy import stats

from pudqueue.analytic_mg1 import STABILITY_MARGIN
from pudqueue.analytic_mg11 import MissEventClass, classify_miss
from pudqueue.errors import ArgumentError, ConfigError, InstabilityError
from pudqueue.penalty import MISMATCH, PenaltyPolicy
from pudqueue.reports import round_sig
from pudqueue.service_distributions import Exponential, ServiceDistribution

INITIAL_STATE = 1

CHUNK_SIZE = 65536

MIN_BATCHES = 10

SCRIPT_COLUMNS = ("generation_time", "service_duration")


@dataclass(frozen=True)
class SystemConfig:
    """Arrival rate, service law and waiting room.

    ``buffers`` is the number of waiting slots: None for an infinite buffer,
    0 for the bufferless M/GI/1/1 system and K-1 for M/M/1/K.
    """

    lam: float
    service: ServiceDistribution
    buffers: int | None = None
    decision_wait: float = 0.0

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"Arrival rate must be positive, got {self.lam}")
        if self.buffers is not None and (
            int(self.buffers) != self.buffers or self.buffers < 0
        ):
            raise ConfigError(f"Buffers must be a nonnegative integer: {self.buffers}")
        if self.decision_wait != 0:
            raise ConfigError("Only a zero decision waiting time is supported")
        if self.buffers is None and self.rho > 1 - STABILITY_MARGIN:
            raise InstabilityError(
                f"Unstable infinite-buffer queue: rho = {self.rho:.6g} >= 1"
            )

    @classmethod
    def mg1(cls, lam: float, service: ServiceDistribution) -> SystemConfig:
        return cls(lam, service, None)

    @classmethod
    def mg11(cls, lam: float, service: ServiceDistribution) -> SystemConfig:
        return cls(lam, service, 0)

    @classmethod
    def mm1k(cls, lam: float, mu: float, k: int) -> SystemConfig:
        if int(k) != k or k < 1:
            raise ConfigError(f"Capacity K must be an integer >= 1, got {k}")
        return cls(lam, Exponential(mu), int(k) - 1)

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    @property
    def model(self) -> str:
        if self.buffers is None:
            return "mg1"
        if self.buffers == 0:
            return "mg11"
        return "mm1k"


class DecisionKind(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    MISSED = "missed"


@dataclass(frozen=True)
class DecisionRecord:
    """Outcome of one packet.

    Served packets carry ``delay``; missed packets carry ``n``, ``r`` and
    ``m``, the number of drops charged to the same delivered packet.
    ``service_time`` is the service duration of the delivered packet.
    """

    packet_id: int
    kind: DecisionKind
    penalty: float
    decision_time: float
    generation_time: float
    packet_state: int
    source_state: int
    service_time: float
    delay: float | None = None
    n: int | None = None
    r: float | None = None
    m: int | None = None

    @property
    def delta_s(self) -> int:
        return self.source_state - self.packet_state


def penalty_for(record: DecisionRecord, policy: PenaltyPolicy) -> float:
    """Apply ``policy`` to the fields of ``record``."""
    if record.kind is DecisionKind.CORRECT:
        return policy.correct(record.delay)
    if record.kind is DecisionKind.INCORRECT:
        return policy.incorrect(record.delay, record.delta_s)
    return policy.missed(record.r, record.delta_s, record.n)


@dataclass
class _Packet:
    packet_id: int
    generation_time: float
    state: int
    service_time: float
    drops: list[tuple[_Packet, int]] = field(default_factory=list)


class _Engine:
    """Event state of one run. Arrivals are fed in by the caller."""

    def __init__(
        self,
        buffers: int | None,
        policy: PenaltyPolicy,
        emit: Callable[[DecisionRecord], None],
        counted: int,
    ) -> None:
        self.buffers = buffers
        self.policy = policy
        self.emit = emit
        self.counted = counted
        self.state = INITIAL_STATE
        self.queue: deque[_Packet] = deque()
        self.serving: _Packet | None = None
        self.completion = math.inf
        self.busy_drops = 0
        self.unresolved = 0

    def arrive(self, packet_id: int, t: float, service_time: float) -> None:
        self.state = 3 - self.state
        packet = _Packet(packet_id, t, self.state, service_time)
        if packet_id < self.counted:
            self.unresolved += 1
        if self.serving is None:
            #  New busy period.
            self.busy_drops = 0
            self._start(packet, t)
        elif self.buffers is None or len(self.queue) < self.buffers:
            self.queue.append(packet)
        else:
            self.busy_drops += 1
            self.serving.drops.append((packet, self.busy_drops))

    def _start(self, packet: _Packet, t: float) -> None:
        self.serving = packet
        self.completion = t + packet.service_time

    def complete(self) -> None:
        now = self.completion
        done = self.serving
        delta = self.state - done.state
        delay = now - done.generation_time
        if delta == 0:
            kind, penalty = DecisionKind.CORRECT, self.policy.correct(delay)
        else:
            kind, penalty = DecisionKind.INCORRECT, self.policy.incorrect(delay, delta)
        self._resolve(
            DecisionRecord(
                packet_id=done.packet_id,
                kind=kind,
                penalty=penalty,
                decision_time=now,
                generation_time=done.generation_time,
                packet_state=done.state,
                source_state=self.state,
                service_time=done.service_time,
                delay=delay,
            )
        )
        m = len(done.drops)
        for dropped, n in done.drops:
            r = now - dropped.generation_time
            self._resolve(
                DecisionRecord(
                    packet_id=dropped.packet_id,
                    kind=DecisionKind.MISSED,
                    penalty=self.policy.missed(r, self.state - dropped.state, n),
                    decision_time=now,
                    generation_time=dropped.generation_time,
                    packet_state=dropped.state,
                    source_state=self.state,
                    service_time=done.service_time,
                    n=n,
                    r=r,
                    m=m,
                )
            )
        if self.queue:
            self._start(self.queue.popleft(), now)
        else:
            self.serving = None
            self.completion = math.inf

    def _resolve(self, record: DecisionRecord) -> None:
        if record.packet_id < self.counted:
            self.unresolved -= 1
        self.emit(record)


def _drive(
    engine: _Engine,
    arrivals: Iterator[tuple[float, float]],
    drain: bool,
) -> None:
    """Process events in time order; completions win ties with arrivals."""
    packet_id = 0
    upcoming = next(arrivals, None)
    while True:
        next_t = math.inf if upcoming is None else upcoming[0]
        if engine.completion <= next_t and engine.completion < math.inf:
            engine.complete()
            continue
        if upcoming is None:
            return
        if packet_id >= engine.counted and (not drain or engine.unresolved == 0):
            return
        engine.arrive(packet_id, *upcoming)
        packet_id += 1
        upcoming = next(arrivals, None)


def _random_arrivals(
    cfg: SystemConfig, seed: int, stream: int
) -> Iterator[tuple[float, float]]:
    rng = np.random.default_rng([seed, stream])
    offset = 0.0
    while True:
        times = offset + np.cumsum(rng.exponential(1.0 / cfg.lam, CHUNK_SIZE))
        services = np.asarray(cfg.service.sample(rng, CHUNK_SIZE), dtype=float)
        offset = float(times[-1])
        yield from zip(times.tolist(), services.tolist())


def batch_standard_error(values: Iterable[float]) -> float | None:
    """Batch-means standard error; None when fewer than MIN_BATCHES are finite."""
    arr = np.asarray(list(values), dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size < MIN_BATCHES:
        return None
    return float(arr.std(ddof=1) / math.sqrt(arr.size))


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class MetricsSummary:
    model: str
    policy: str
    seed: int
    n_packets: int
    batches: int
    generated: int
    correct: int
    incorrect: int
    missed: int
    residual: int
    p_correct: float | None
    p_incorrect: float | None
    p_missed: float | None
    p_correct_given_decision: float | None
    p_incorrect_given_decision: float | None
    mean_pucd: float | None
    mean_puid: float | None
    mean_pumd: float | None
    mean_total: float | None
    missed_by_class: dict[str, float | None] | None
    stderr: dict[str, float | None]

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, float):
                data[key] = round_sig(value)
        for key in ("missed_by_class", "stderr"):
            if data[key] is not None:
                data[key] = {k: round_sig(v) for k, v in data[key].items()}
        return data


class _Accumulator:
    """Per-batch sums of counted records."""

    def __init__(self, n_packets: int, batches: int, by_class: bool) -> None:
        self.n_packets = n_packets
        self.batches = batches
        self.counts = {kind: np.zeros(batches) for kind in DecisionKind}
        self.sums = {kind: np.zeros(batches) for kind in DecisionKind}
        self.class_sums = (
            {event: np.zeros(batches) for event in MissEventClass} if by_class else None
        )

    def add(self, record: DecisionRecord) -> None:
        if record.packet_id >= self.n_packets:
            return
        b = record.packet_id * self.batches // self.n_packets
        self.counts[record.kind][b] += 1
        self.sums[record.kind][b] += record.penalty
        if self.class_sums is not None and record.kind is DecisionKind.MISSED:
            self.class_sums[classify_miss(record.m, record.n)][b] += record.penalty

    def _per_batch(self) -> dict[str, np.ndarray]:
        c, i, m = (self.counts[k] for k in DecisionKind)
        sc, si, sm = (self.sums[k] for k in DecisionKind)
        resolved, served = c + i + m, c + i
        est = {
            "p_correct": c / resolved,
            "p_incorrect": i / resolved,
            "p_missed": m / resolved,
            "p_correct_given_decision": c / served,
            "p_incorrect_given_decision": i / served,
            "mean_pucd": sc / c,
            "mean_puid": si / i,
            "mean_pumd": sm / m,
            "mean_total": (sc + si + sm) / resolved,
        }
        if self.class_sums is not None:
            for event, sums in self.class_sums.items():
                est[f"missed_{event.value}"] = sums / served
        return est

    def summarize(self, **header) -> MetricsSummary:
        with np.errstate(divide="ignore", invalid="ignore"):
            per_batch = self._per_batch()
        stderr = {key: batch_standard_error(v) for key, v in per_batch.items()}
        c, i, m = (int(self.counts[k].sum()) for k in DecisionKind)
        sc, si, sm = (float(self.sums[k].sum()) for k in DecisionKind)
        resolved, served = c + i + m, c + i
        by_class = None
        if self.class_sums is not None:
            by_class = {
                event.value: _ratio(float(sums.sum()), served)
                for event, sums in self.class_sums.items()
            }
        return MetricsSummary(
            **header,
            correct=c,
            incorrect=i,
            missed=m,
            p_correct=_ratio(c, resolved),
            p_incorrect=_ratio(i, resolved),
            p_missed=_ratio(m, resolved),
            p_correct_given_decision=_ratio(c, served),
            p_incorrect_given_decision=_ratio(i, served),
            mean_pucd=_ratio(sc, c),
            mean_puid=_ratio(si, i),
            mean_pumd=_ratio(sm, m),
            mean_total=_ratio(sc + si + sm, resolved),
            missed_by_class=by_class,
            stderr=stderr,
        )


def run(
    cfg: SystemConfig,
    policy: PenaltyPolicy = MISMATCH,
    n_packets: int = 1_000_000,
    seed: int = 1,
    batches: int = 100,
    *,
    stream: int = 0,
    drain: bool = True,
    on_record: Callable[[DecisionRecord], None] | None = None,
) -> MetricsSummary:
    """Simulate ``n_packets`` generations and summarize their decisions.

    Args:
        cfg (SystemConfig): The queue to simulate.
        policy (PenaltyPolicy): Penalty functions applied at each decision.
        n_packets (int): Number of counted packets.
        seed (int): Seed of the random stream.
        batches (int): Number of batches for batch-means standard errors.
        stream (int): Sub-stream index, so that sweep points draw
            independent streams from one seed.
        drain (bool): Keep the source running past the budget until every
            counted packet is resolved. Otherwise unresolved packets are
            reported as residual.
        on_record (Callable | None): Called with every counted record.

    Returns:
        MetricsSummary: Estimates with batch-means standard errors.
    """
    if int(n_packets) != n_packets or n_packets < 1:
        raise ArgumentError(f"Packet budget must be a positive integer: {n_packets}")
    if int(batches) != batches or not 1 <= batches <= n_packets:
        raise ArgumentError(f"Batches must be between 1 and {n_packets}: {batches}")
    if int(seed) != seed or seed < 0:
        raise ArgumentError(f"Seed must be a nonnegative integer: {seed}")

    acc = _Accumulator(n_packets, batches, by_class=cfg.buffers == 0)

    def emit(record: DecisionRecord) -> None:
        acc.add(record)
        if on_record is not None and record.packet_id < n_packets:
            on_record(record)

    logging.info(
        "Simulate %s lambda=%g service=%s buffers=%s packets=%d seed=%d stream=%d",
        cfg.model,
        cfg.lam,
        cfg.service.spec(),
        cfg.buffers,
        n_packets,
        seed,
        stream,
    )
    engine = _Engine(cfg.buffers, policy, emit, n_packets)
    _drive(engine, _random_arrivals(cfg, seed, stream), drain)
    summary = acc.summarize(
        model=cfg.model,
        policy=policy.name,
        seed=seed,
        n_packets=n_packets,
        batches=batches,
        generated=n_packets,
        residual=engine.unresolved,
    )
    logging.info(
        "Done %s: correct=%d incorrect=%d missed=%d residual=%d",
        cfg.model,
        summary.correct,
        summary.incorrect,
        summary.missed,
        summary.residual,
    )
    return summary


def run_scripted(
    trace: Iterable[tuple[float, float]],
    policy: PenaltyPolicy = MISMATCH,
    buffers: int | None = 0,
) -> list[DecisionRecord]:
    """Replay an explicit (generation_time, service_duration) trace.

    Returns every decision in the order it is made.
    """
    trace = [(float(t), float(s)) for t, s in trace]
    prev = -math.inf
    for t, s in trace:
        if not (math.isfinite(t) and t >= 0 and t > prev):
            raise ArgumentError(
                f"Generation times must be nonnegative and increasing: {t}"
            )
        if not (math.isfinite(s) and s >= 0):
            raise ArgumentError(f"Service durations must be nonnegative: {s}")
        prev = t
    if buffers is not None and (int(buffers) != buffers or buffers < 0):
        raise ArgumentError(f"Buffers must be a nonnegative integer: {buffers}")
    records: list[DecisionRecord] = []
    engine = _Engine(buffers, policy, records.append, len(trace))
    _drive(engine, iter(trace), drain=True)
    return records


def load_script(path: Path) -> list[tuple[float, float]]:
    """Read a trace script: CSV with a generation_time,service_duration header.

    Blank lines and lines starting with '#' are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArgumentError(f"Cannot read trace script '{path}': {e}") from None
    lines = [
        ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")
    ]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not set(SCRIPT_COLUMNS) <= {
        name.strip() for name in reader.fieldnames
    }:
        raise ArgumentError(
            f"Trace script '{path}' needs columns: {', '.join(SCRIPT_COLUMNS)}"
        )
    trace = []
    for row in reader:
        row = {k.strip(): v for k, v in row.items() if k is not None}
        try:
            trace.append(tuple(float(row[col]) for col in SCRIPT_COLUMNS))
        except (TypeError, ValueError):
            raise ArgumentError(f"Bad row in trace script '{path}': {row}") from None
    return trace


def normalized_drop_offsets(
    records: Iterable[DecisionRecord],
) -> dict[tuple[int, int], list[float]]:
    """Map (m, n) to the offsets X_n / t of the n-th of m drops in a service."""
    offsets: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        if rec.kind is DecisionKind.MISSED and rec.service_time > 0:
            offsets.setdefault((rec.m, rec.n), []).append(1 - rec.r / rec.service_time)
    return offsets


def drop_offset_ks_test(samples: Iterable[float], m: int, n: int):
    """Kolmogorov-Smirnov test of offsets against Beta(n, m - n + 1)."""
    if not 1 <= n <= m:
        raise ArgumentError(f"Drop index must satisfy 1 <= n <= m, got n={n}, m={m}")
    return stats.kstest(np.asarray(list(samples)), stats.beta(n, m - n + 1).cdf)
