# Network utilities over the rate vector: M/M/1 delay, weighted sum rate,
# and the energy cost reported next to every plan

from __future__ import annotations
from dataclasses import dataclass
import math
from typing import Literal

import numpy as np

UtilityKind = Literal["delay", "weighted_sum_rate"]

# Gradient pole clamp, relative to each device's arrival rate
DELAY_FLOOR_FACTOR = 1e-3


def service_rates(rates_bps: np.ndarray, mean_packet_bits: float) -> np.ndarray:
    """Packet service rates μ_j = r_j / L in packets/s."""
    return np.asarray(rates_bps, dtype=float) / mean_packet_bits


def delay_utility(
    rates_bps: np.ndarray, arrival_rates: np.ndarray, mean_packet_bits: float
) -> float:
    """Minus the traffic-weighted M/M/1 delay sum, -sum_j a_j / (μ_j - a_j)^+.
    Returns -inf as soon as one device is at or beyond its load."""
    margin = service_rates(rates_bps, mean_packet_bits) - arrival_rates
    if np.any(margin <= 0):
        return -math.inf
    return -float(np.sum(arrival_rates / margin))


def delay_gradient(
    rates_bps: np.ndarray,
    arrival_rates: np.ndarray,
    mean_packet_bits: float,
    floor: np.ndarray | float | None = None,
) -> np.ndarray:
    """Gradient of delay_utility per bit/s, with the pole clamped at the
    service-rate margin `floor` (default 1e-3 * a_j) so starved devices get
    large but finite weights."""
    arrival_rates = np.asarray(arrival_rates, dtype=float)
    if floor is None:
        floor = DELAY_FLOOR_FACTOR * arrival_rates
    if np.any(np.asarray(floor) <= 0):
        raise ValueError("The gradient floor must be positive.")
    margin = service_rates(rates_bps, mean_packet_bits) - arrival_rates
    return arrival_rates / np.maximum(margin, floor) ** 2 / mean_packet_bits


def weighted_sum_rate(rates_bps: np.ndarray, weights: np.ndarray, offset: float = 0.0) -> float:
    """Affine utility d + sum_j c_j r_j."""
    return offset + float(np.dot(weights, rates_bps))


def energy_cost(
    powers_w: np.ndarray, price: float, maintenance: np.ndarray | float
) -> float:
    """Minus the energy bill p * sum_i (P_i + 1{P_i > 0} C_i).
    A switched-off AP pays no maintenance."""
    powers_w = np.asarray(powers_w, dtype=float)
    if np.any(powers_w < 0):
        raise ValueError("Transmit powers must be non-negative.")
    maintenance = np.broadcast_to(np.asarray(maintenance, dtype=float), powers_w.shape)
    on = powers_w > 0
    return -price * float(np.sum(powers_w) + np.sum(maintenance[on]))


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """A utility over the per-device rate vector (bits/s), exposing value()
    and gradient() so the pursuit loop does not depend on its kind.
    power_price and maintenance_cost only feed the energy report."""

    kind: UtilityKind
    weights: np.ndarray | None = None
    arrival_rates: np.ndarray | None = None
    mean_packet_bits: float = 1.0
    offset: float = 0.0
    power_price: float = 0.0
    maintenance_cost: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "delay":
            if self.arrival_rates is None:
                raise ValueError("The delay utility needs per-device arrival rates.")
            rates = np.array(self.arrival_rates, dtype=float)
            if np.any(rates <= 0) or self.mean_packet_bits <= 0:
                raise ValueError("The delay utility needs positive traffic loads.")
            object.__setattr__(self, "arrival_rates", rates)
        elif self.kind == "weighted_sum_rate":
            if self.weights is None:
                raise ValueError("The weighted sum rate needs weights.")
            weights = np.array(self.weights, dtype=float)
            if not np.all(np.isfinite(weights)):
                raise ValueError("Weights must be finite.")
            object.__setattr__(self, "weights", weights)
        else:
            raise ValueError(f"Unknown utility kind {self.kind!r}")

    @classmethod
    def delay(
        cls, arrival_rates: np.ndarray, mean_packet_bits: float, **energy: float
    ) -> UtilitySpec:
        return cls(
            "delay", arrival_rates=arrival_rates, mean_packet_bits=mean_packet_bits, **energy
        )

    @classmethod
    def weighted(cls, weights: np.ndarray, offset: float = 0.0) -> UtilitySpec:
        return cls("weighted_sum_rate", weights=weights, offset=offset)

    @property
    def loads_bits(self) -> np.ndarray:
        """λ_j·L in bits/s (delay kind only)."""
        return self.arrival_rates * self.mean_packet_bits

    @property
    def is_delay(self) -> bool:
        return self.kind == "delay"

    def value(self, rates_bps: np.ndarray) -> float:
        if self.is_delay:
            return delay_utility(rates_bps, self.arrival_rates, self.mean_packet_bits)
        return weighted_sum_rate(rates_bps, self.weights, self.offset)

    def gradient(self, rates_bps: np.ndarray) -> np.ndarray:
        if self.is_delay:
            return delay_gradient(rates_bps, self.arrival_rates, self.mean_packet_bits)
        return np.array(self.weights, dtype=float)

    def shortfall(self, rates_bps: np.ndarray) -> float:
        """Total unmet load sum_j (λ_j L - r_j)^+ in bits/s; 0 for rate utilities."""
        if not self.is_delay:
            return 0.0
        return float(np.sum(np.maximum(self.loads_bits - rates_bps, 0.0)))

    def energy(self, powers_w: np.ndarray) -> float:
        """Energy utility of per-AP powers for this utility's price and costs."""
        return energy_cost(powers_w, self.power_price, self.maintenance_cost)
