# Event-driven packet simulator: Poisson arrivals, exponential packet sizes,
# link rates that follow the set of currently busy APs on each segment

from __future__ import annotations
from collections import deque
from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse

from src.ranopt.channel import LinkGains, Neighborhoods
from src.ranopt.rates import AllocationPlan
from src.ranopt.scenario import NetworkScenario

logger = logging.getLogger(__name__)

DEFAULT_WARMUP = 0.1
ARRIVAL_BATCH = 4096
REFRESH_EVERY = 2000  # toggles between full interference recomputations
# A device is flagged unstable when this much of its traffic is still queued
BACKLOG_FRACTION = 0.05
MIN_BACKLOG = 50


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One simulation run. Exactly one of horizon_s (seconds) or
    max_packets (arrivals) bounds the run; warmup is the discarded fraction.
    A packet-bounded run admits max_packets arrivals, then drains the queues."""

    plan: AllocationPlan
    scenario: NetworkScenario
    nb: Neighborhoods
    gains: LinkGains
    horizon_s: float | None = None
    max_packets: int | None = None
    warmup: float = DEFAULT_WARMUP
    seed: int = 0
    arrival_rates: np.ndarray | None = None  # packets/s, defaults to the scenario's

    def __post_init__(self) -> None:
        if (self.horizon_s is None) == (self.max_packets is None):
            raise ValueError("Give exactly one of horizon_s and max_packets.")
        if (self.horizon_s is not None and self.horizon_s <= 0) or (
            self.max_packets is not None and self.max_packets <= 0
        ):
            raise ValueError("The horizon must be positive.")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup must be in [0, 1)")
        shapes = {
            (self.plan.n_aps, self.plan.n_devices),
            (self.scenario.n_aps, self.scenario.n_devices),
            (self.nb.n_aps, self.nb.n_devices),
            self.gains.g.shape,
        }
        if len(shapes) != 1:
            raise ValueError("Plan, scenario and channel describe different networks.")
        rates = self.loads
        if rates.shape != (self.scenario.n_devices,) or np.any(rates < 0):
            raise ValueError("Need one non-negative arrival rate per device.")

    @property
    def loads(self) -> np.ndarray:
        if self.arrival_rates is None:
            return self.scenario.arrival_rates
        return np.asarray(self.arrival_rates, dtype=float)


@dataclass(frozen=True, eq=False)
class SimOutcome:
    mean_delay: np.ndarray
    p50: np.ndarray
    p95: np.ndarray
    p99: np.ndarray
    packets: np.ndarray  # measured (post-warmup) departures
    unstable: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    in_system: np.ndarray
    network_mean_delay: float
    sim_time: float

    @property
    def n_devices(self) -> int:
        return len(self.mean_delay)

    def to_frame(self) -> pd.DataFrame:
        """One row per device plus a 'network' aggregate row."""
        frame = pd.DataFrame(
            {
                "device": [str(j) for j in range(self.n_devices)],
                "mean_delay": self.mean_delay,
                "p50": self.p50,
                "p95": self.p95,
                "p99": self.p99,
                "packets": self.packets,
                "unstable": self.unstable,
            }
        )
        network = {
            "device": "network",
            "mean_delay": self.network_mean_delay,
            "p50": np.nan,
            "p95": np.nan,
            "p99": np.nan,
            "packets": int(self.packets.sum()),
            "unstable": bool(self.unstable.any()),
        }
        return pd.concat([frame, pd.DataFrame([network])], ignore_index=True)

    def to_csv(self, csv_path: Path) -> None:
        self.to_frame().to_csv(csv_path, index=False, float_format="%.9e")
        logger.info("Wrote simulation outcome to %s", csv_path)


def analytic_delays(
    plan: AllocationPlan, arrival_rates: np.ndarray, mean_packet_bits: float
) -> np.ndarray:
    """M/M/1 delay 1/(μ_j - a_j) per device, inf where μ_j <= a_j."""
    margin = plan.rates / mean_packet_bits - np.asarray(arrival_rates, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(margin > 0, 1.0 / np.maximum(margin, 1e-300), np.inf)


class _LinkRates:
    """Instantaneous device rates for a plan as queues fill and empty."""

    def __init__(self, plan: AllocationPlan, nb: Neighborhoods, gains: LinkGains) -> None:
        masked = nb.masked(gains)
        seg, ap, dev, psd = [], [], [], []
        for m, profile in enumerate(plan.profiles):
            if not plan.active_mask[m]:
                continue
            for i, j, p in profile.links():
                seg.append(m)
                ap.append(i)
                dev.append(j)
                psd.append(p)
        self.seg = np.array(seg, dtype=int)
        self.dev = np.array(dev, dtype=int)
        ap = np.array(ap, dtype=int)
        psd = np.array(psd, dtype=float)
        self.beta = plan.beta[self.seg]
        self.signal = psd * masked[ap, self.dev]
        self.noise = nb.residual_noise[self.dev]
        k = plan.n_devices

        # cross[l, l'] = PSD that link l' puts on the device of link l (same segment)
        blocks = []
        for m in np.unique(self.seg):
            group = np.flatnonzero(self.seg == m)
            block = (masked[np.ix_(ap[group], self.dev[group])] * psd[group, None]).T
            np.fill_diagonal(block, 0.0)
            blocks.append(sparse.csr_matrix(block))
        n_links = len(self.dev)
        if blocks:
            self.cross = sparse.block_diag(blocks, format="csr")
        else:
            self.cross = sparse.csr_matrix((0, 0))
        owner = sparse.csr_matrix(
            (np.ones(n_links), (np.arange(n_links), self.dev)), shape=(n_links, k)
        )
        self.by_device = (self.cross @ owner).tocsc()
        self.n_devices = k
        self.busy = np.zeros(k, dtype=bool)
        self.toggles = 0
        self.refresh()

    def refresh(self) -> None:
        self.interference = (
            self.cross @ self.busy[self.dev].astype(float) if len(self.dev) else np.zeros(0)
        )
        self.efficiency = self._efficiency(np.arange(len(self.dev)))
        self.rates = np.bincount(self.dev, weights=self.efficiency, minlength=self.n_devices)

    def _efficiency(self, links: np.ndarray) -> np.ndarray:
        sinr = self.signal[links] / (self.noise[links] + self.interference[links])
        return self.beta[links] * np.log2(1.0 + sinr)

    def set_busy(self, device: int, busy: bool) -> None:
        """Device queue became (non)empty: its serving APs start or stop interfering."""
        self.busy[device] = busy
        self.toggles += 1
        if self.toggles % REFRESH_EVERY == 0:
            self.refresh()
            return
        lo, hi = self.by_device.indptr[device], self.by_device.indptr[device + 1]
        links = self.by_device.indices[lo:hi]
        if len(links) == 0:
            return
        delta = self.by_device.data[lo:hi]
        self.interference[links] += delta if busy else -delta
        np.maximum(self.interference, 0.0, out=self.interference)
        updated = self._efficiency(links)
        np.add.at(self.rates, self.dev[links], updated - self.efficiency[links])
        self.efficiency[links] = updated


def _arrival_batches(rng: np.random.Generator, loads: np.ndarray, mean_bits: float):
    """Merged Poisson stream: (time, device, bits) in batches."""
    total = float(loads.sum())
    share = loads / total
    now = 0.0
    while True:
        gaps = rng.exponential(1.0 / total, ARRIVAL_BATCH)
        times = now + np.cumsum(gaps)
        devices = rng.choice(len(loads), size=ARRIVAL_BATCH, p=share)
        bits = rng.exponential(mean_bits, ARRIVAL_BATCH)
        now = float(times[-1])
        yield from zip(times.tolist(), devices.tolist(), bits.tolist())


def _percentile(samples: list[float], q: float) -> float:
    return float(np.percentile(samples, q)) if samples else math.nan


def simulate(cfg: SimConfig) -> SimOutcome:
    """Fluid simulation of one FIFO queue per device, served at the sum of
    β^m log2(1 + SINR) over its links, interference only from busy APs.
    A packet's delay is departure minus arrival; warmup packets are dropped."""
    loads = cfg.loads
    k = cfg.scenario.n_devices
    mean_bits = cfg.scenario.mean_packet_bits
    rng = np.random.default_rng(cfg.seed)
    links = _LinkRates(cfg.plan, cfg.nb, cfg.gains)

    queues: list[deque] = [deque() for _ in range(k)]
    head_left = np.zeros(k)
    arrivals = np.zeros(k, dtype=int)
    departures = np.zeros(k, dtype=int)
    delays: list[list[float]] = [[] for _ in range(k)]
    if cfg.horizon_s is not None:
        warmup_time, warmup_count = cfg.warmup * cfg.horizon_s, 0
    else:
        warmup_time, warmup_count = 0.0, int(cfg.warmup * cfg.max_packets)

    stream = _arrival_batches(rng, loads, mean_bits) if loads.sum() > 0 else iter(())
    pending = next(stream, None)
    n_arrived = 0
    backlog_at_close: np.ndarray | None = None
    now = 0.0
    while True:
        backlog = links.busy & (links.rates > 0)
        with np.errstate(divide="ignore"):
            finish = np.where(backlog, head_left / np.where(backlog, links.rates, 1.0), np.inf)
        j_dep = int(np.argmin(finish))
        t_dep = now + max(float(finish[j_dep]), 0.0)
        arrivals_open = pending is not None and (
            cfg.max_packets is None or n_arrived < cfg.max_packets
        )
        t_arr = pending[0] if arrivals_open else math.inf
        t_next = min(t_dep, t_arr)
        if cfg.horizon_s is not None and t_next > cfg.horizon_s:
            now = cfg.horizon_s
            break
        if math.isinf(t_next):
            break
        dt = t_next - now
        head_left[backlog] = np.maximum(head_left[backlog] - links.rates[backlog] * dt, 0.0)
        now = t_next
        if t_dep <= t_arr:
            arrived, measured = queues[j_dep].popleft()
            departures[j_dep] += 1
            if measured:
                delays[j_dep].append(now - arrived)
            if queues[j_dep]:
                head_left[j_dep] = queues[j_dep][0][2]
                queues[j_dep][0] = queues[j_dep][0][:2]
            else:
                head_left[j_dep] = 0.0
                links.set_busy(j_dep, False)
        else:
            _, j, bits = pending
            measured = now >= warmup_time and n_arrived >= warmup_count
            n_arrived += 1
            arrivals[j] += 1
            if queues[j]:
                queues[j].append((now, measured, bits))
            else:
                queues[j].append((now, measured))
                head_left[j] = bits
                links.set_busy(j, True)
            pending = next(stream, None)
            if cfg.max_packets is not None and n_arrived == cfg.max_packets:
                backlog_at_close = np.array([len(q) for q in queues], dtype=int)

    in_system = np.array([len(q) for q in queues], dtype=int)
    backlog = in_system if backlog_at_close is None else backlog_at_close
    unstable = backlog >= np.maximum(MIN_BACKLOG, BACKLOG_FRACTION * arrivals)
    stuck = links.busy & (links.rates <= 0)
    unstable |= stuck
    if unstable.any():
        logger.warning("Queues of devices %s keep growing", np.flatnonzero(unstable).tolist())
    all_delays = [d for per_device in delays for d in per_device]
    return SimOutcome(
        mean_delay=np.array([np.mean(d) if d else math.nan for d in delays]),
        p50=np.array([_percentile(d, 50) for d in delays]),
        p95=np.array([_percentile(d, 95) for d in delays]),
        p99=np.array([_percentile(d, 99) for d in delays]),
        packets=np.array([len(d) for d in delays], dtype=int),
        unstable=unstable,
        arrivals=arrivals,
        departures=departures,
        in_system=in_system,
        network_mean_delay=float(np.mean(all_delays)) if all_delays else math.nan,
        sim_time=now,
    )
