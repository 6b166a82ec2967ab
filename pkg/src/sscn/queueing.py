"""Interpretation-queue delay at the receiving user of a D2D link.

Packets of matched knowledge bases arrive at the receiver as a Poisson
stream and wait in a single FIFO queue while earlier packets are
semantically interpreted.  A packet's interpretation time is modeled as the
preference-weighted combination ``sum_k eps_k * I_k`` of fresh exponential
per-KB interpretation draws ``I_k`` (mean ``1/mu_k``), where ``eps_k`` is KB
k's share of the matched traffic.  The mean queueing delay then follows the
Pollaczek-Khinchine formula from the first two moments of that distribution.

``simulate_mg1`` is an independent discrete-event check of ``pk_delay``: it
draws the same arrival and service processes and measures waits directly via
the Lindley recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import CacheVector

# Utilizations this close to 1 are treated as unstable to keep the closed
# form away from its singularity.
STABILITY_GUARD = 1.0e-9


class UnstableQueueError(RuntimeError):
    """Raised when a delay is requested for a queue with utilization >= 1."""


@dataclass(frozen=True)
class QueueStats:
    """First two interpretation-time moments plus the effective arrival rate.

    ``mean_interp_s`` and ``var_interp`` are E and Var of a packet's
    interpretation time; ``lambda_eff`` counts only packets whose KB is
    cached at both endpoints (others never enter the queue).
    """

    lambda_eff: float
    mean_interp_s: float
    var_interp: float

    @property
    def utilization(self) -> float:
        return self.lambda_eff * self.mean_interp_s

    @property
    def stable(self) -> bool:
        return self.utilization < 1.0 - STABILITY_GUARD


def queue_stats(
    cache_i: CacheVector,
    cache_j: CacheVector,
    probs_i: np.ndarray,
    interp_rates_j: np.ndarray,
    r_d: float,
    packet_bits: float,
) -> QueueStats:
    """Queue statistics of direction i -> j.

    The sender i pushes ``r_d / packet_bits`` packets/second, distributed
    over KBs by its own request probabilities; receiver j interprets KB k at
    rate ``interp_rates_j[k]``.  Only KBs cached on both sides count.
    """
    if r_d < 0.0:
        raise ValueError("rate must be nonnegative")
    probs_i = np.asarray(probs_i, dtype=float)
    interp_rates_j = np.asarray(interp_rates_j, dtype=float)
    matched = (cache_i.bits * cache_j.bits).astype(float)
    share = float(matched @ probs_i)
    lambda_eff = r_d / packet_bits * share
    if share <= 0.0:
        return QueueStats(lambda_eff=0.0, mean_interp_s=0.0, var_interp=0.0)
    eps = matched * probs_i / share
    per_kb_mean = eps / interp_rates_j
    return QueueStats(
        lambda_eff=lambda_eff,
        mean_interp_s=float(np.sum(per_kb_mean)),
        var_interp=float(np.sum(per_kb_mean**2)),
    )


def pk_delay(stats: QueueStats) -> float:
    """Mean queueing delay (seconds, excluding interpretation itself).

    Zero matched traffic yields zero delay; utilizations at or above one
    raise UnstableQueueError.
    """
    if stats.lambda_eff <= 0.0 or stats.mean_interp_s <= 0.0:
        return 0.0
    if not stats.stable:
        raise UnstableQueueError(
            f"utilization {stats.utilization:.6f} leaves no stationary delay")
    second_moment = stats.mean_interp_s**2 + stats.var_interp
    return stats.lambda_eff * second_moment / (2.0 * (1.0 - stats.utilization))


def simulate_mg1(
    arrival_rates,
    service_means,
    horizon: int,
    seed: int,
    warmup_frac: float = 0.1,
) -> float:
    """Empirical mean queueing wait of the FIFO interpretation queue.

    ``arrival_rates[k]`` is the Poisson rate of matched KB-k packets and
    ``service_means[k]`` the mean of the exponential interpretation draw for
    KB k.  Every packet's service time combines all classes weighted by
    their traffic shares, matching the moments used by ``pk_delay``.  Waits
    are measured by the Lindley recursion; the first ``warmup_frac`` of
    packets is discarded.
    """
    rates = np.asarray(arrival_rates, dtype=float)
    means = np.asarray(service_means, dtype=float)
    if rates.shape != means.shape or rates.ndim != 1:
        raise ValueError("need one arrival rate and one service mean per KB class")
    if np.any(rates < 0.0) or rates.sum() <= 0.0 or np.any(means <= 0.0):
        raise ValueError("rates must be nonnegative with positive sum; means positive")
    if horizon < 2:
        raise ValueError("horizon must cover at least two packets")
    lam = float(rates.sum())
    eps = rates / lam
    rng = np.random.default_rng(seed)
    interarrivals = rng.exponential(1.0 / lam, size=horizon)
    service = np.zeros(horizon)
    for k in range(len(means)):
        if eps[k] > 0.0:
            service += rng.exponential(eps[k] * means[k], size=horizon)
    # Lindley: W_0 = 0, W_n = max(0, W_{n-1} + S_{n-1} - A_n), solved in
    # closed form as the running-minimum gap of the random-walk prefix sums.
    steps = service[:-1] - interarrivals[1:]
    prefix = np.concatenate(([0.0], np.cumsum(steps)))
    waits = prefix - np.minimum.accumulate(prefix)
    start = int(len(waits) * warmup_frac)
    return float(np.mean(waits[start:]))
