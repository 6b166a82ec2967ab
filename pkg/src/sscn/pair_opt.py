"""Per-pair joint caching and power optimization.

For one eligible pair (i, j) and fixed dual prices, the pair's contribution
to the relaxed network objective is

    score = (1 + rho_i) * v_s(i->j) - tau_i * delay(i->j)
          + (1 + rho_j) * v_s(j->i) - tau_j * delay(j->i)

where each direction's secrecy value and queueing delay depend on the joint
cache selection and on the sender's transmit power only.  With caches fixed
the score is separable in the two powers, so each direction is maximized by
a dense grid search over [0, p_max] plus golden-section refinement, with the
queue-unstable power region excluded.  The cache selection itself is handled
by a tabu search over joint cache vectors seeded from a greedy
satisfaction-first construction; an exhaustive enumerator over all joint
caches doubles as the small-instance oracle.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .metrics import ETA_SLACK, CacheVector, pair_value_rates
from .queueing import STABILITY_GUARD, pk_delay, queue_stats
from .scenario import Scenario

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


class InfeasiblePairError(RuntimeError):
    """Raised when no joint cache satisfies capacity and eta_min for a pair."""


@dataclass(frozen=True)
class PairOptParams:
    """Knobs of the per-pair search.

    ``sigma`` is the Hamming radius of the tabu neighborhood, ``max_iters``
    the tabu iteration budget; the search also stops when the incumbent
    improves by less than ``growth_eps`` (relative) over ``growth_window``
    iterations.  Powers are searched on ``power_grid_points`` levels and,
    when ``power_refine`` is set, golden-section refined to
    ``power_tol_frac * p_max``.  ``exhaustive`` replaces the tabu search with
    full joint-cache enumeration (small catalogs only).
    """

    sigma: int = 2
    max_iters: int = 40
    tabu_len: int = 64
    growth_eps: float = 1.0e-4
    growth_window: int = 10
    power_grid_points: int = 256
    power_refine: bool = True
    power_tol_frac: float = 1.0e-6
    exhaustive: bool = False

    def __post_init__(self) -> None:
        if self.sigma < 1 or self.max_iters < 0 or self.tabu_len < 1:
            raise ValueError("sigma, max_iters, tabu_len must be positive (max_iters >= 0)")
        if self.growth_eps < 0.0 or self.growth_window < 1:
            raise ValueError("growth_eps must be >= 0 and growth_window >= 1")
        if self.power_grid_points < 2 or self.power_tol_frac <= 0.0:
            raise ValueError("need at least two power levels and a positive tolerance")


@dataclass(frozen=True)
class PairSolution:
    """Best joint cache/power assignment found for one unordered pair i < j."""

    i: int
    j: int
    cache_i: CacheVector
    cache_j: CacheVector
    power_i: float
    power_j: float
    score: float
    secrecy_ij: float
    secrecy_ji: float
    delay_ij: float
    delay_ji: float
    feasible: bool = True

    @classmethod
    def infeasible_pair(cls, i: int, j: int, num_kbs: int) -> "PairSolution":
        empty = np.zeros(num_kbs, dtype=np.uint8)
        return cls(i, j, CacheVector(i, empty), CacheVector(j, empty.copy()),
                   0.0, 0.0, -math.inf, 0.0, 0.0, 0.0, 0.0, feasible=False)


class TabuState:
    """Bounded FIFO memory of visited joint caches plus search bookkeeping."""

    def __init__(self, maxlen: int) -> None:
        self.maxlen = maxlen
        self._order: deque[bytes] = deque()
        self._members: set[bytes] = set()
        self.best_joint: np.ndarray | None = None
        self.best_score: float = -math.inf
        self.current: np.ndarray | None = None
        self.iteration: int = 0
        self.best_history: list[float] = []

    def add(self, joint: np.ndarray) -> None:
        key = np.asarray(joint, dtype=np.uint8).tobytes()
        if key in self._members:
            return
        if len(self._order) == self.maxlen:
            self._members.discard(self._order.popleft())
        self._order.append(key)
        self._members.add(key)

    def __contains__(self, joint: np.ndarray) -> bool:
        return np.asarray(joint, dtype=np.uint8).tobytes() in self._members

    def __len__(self) -> int:
        return len(self._order)


# --------------------------------------------------------------------------
# score evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Direction:
    """Per-KB coefficient vectors of one link direction (sender -> receiver)."""

    legit: np.ndarray     # probs_s * weights_s, matched KBs only contribute
    leak: np.ndarray      # probs_s * eaves_probs * weights_s, sender cache only
    share: np.ndarray     # probs_s, matched traffic share
    interp: np.ndarray    # probs_s / interp_rates_r, mean interpretation
    interp_sq: np.ndarray
    gain_d: float
    gain_e: float
    tau_s: float
    rho_s: float


class _PairContext:
    """Precomputed constants for vectorized candidate evaluation of one pair."""

    def __init__(self, scn: Scenario, i: int, j: int,
                 tau: np.ndarray, rho: np.ndarray, params: PairOptParams) -> None:
        cfg = scn.config
        cat = scn.catalog
        self.scn = scn
        self.i, self.j = i, j
        self.params = params
        self.k = cfg.num_kbs
        self.bandwidth = cfg.bandwidth_hz
        self.noise = cfg.noise_w
        self.bits_per_packet = cfg.packet_bits
        self.p_max = cfg.p_max_w
        self.sizes = cat.sizes.astype(float)
        self.capacity = float(cfg.capacity)
        self.eta_min = cfg.eta_min
        self.probs_i = cat.user_probs[i]
        self.probs_j = cat.user_probs[j]
        self.unit_grid = np.linspace(0.0, 1.0, params.power_grid_points)
        self.dirs = (
            self._make_direction(i, j, tau, rho),
            self._make_direction(j, i, tau, rho),
        )

    def _make_direction(self, s: int, r: int, tau: np.ndarray, rho: np.ndarray) -> _Direction:
        cat = self.scn.catalog
        probs_s = cat.user_probs[s]
        interp = probs_s / cat.interp_rates[r]
        return _Direction(
            legit=probs_s * cat.user_weights[s],
            leak=probs_s * cat.eaves_probs * cat.user_weights[s],
            share=probs_s,
            interp=interp,
            interp_sq=interp**2,
            gain_d=float(self.scn.gain_d[s, r]),
            gain_e=float(self.scn.gain_e[s]),
            tau_s=float(tau[s]),
            rho_s=float(rho[s]),
        )

    def _compose(self, d: _Direction, legit, leak, share, interp, interp_sq, rd, re):
        """Directed score, secrecy value and delay (broadcasting helper)."""
        v_s = np.maximum((rd * legit - re * leak) / self.bits_per_packet, 0.0)
        util = rd * interp / self.bits_per_packet
        stable = util < 1.0 - STABILITY_GUARD
        safe_share = np.where(share > 0.0, share, 1.0)
        safe_gap = np.maximum(1.0 - util, STABILITY_GUARD)
        delay = np.where(
            share > 0.0,
            rd * (interp**2 + interp_sq) / (self.bits_per_packet * safe_share * 2.0 * safe_gap),
            0.0,
        )
        score = np.where(stable, (1.0 + d.rho_s) * v_s - d.tau_s * delay, -np.inf)
        return score, v_s, np.where(stable, delay, np.inf), stable

    def _rates_at(self, d: _Direction, power):
        rd = self.bandwidth * np.log2(1.0 + power * d.gain_d / self.noise)
        re = self.bandwidth * np.log2(1.0 + power * d.gain_e / self.noise)
        return rd, re

    def _coeffs(self, sender_bits: np.ndarray, matched: np.ndarray, d: _Direction):
        return (matched @ d.legit, sender_bits @ d.leak, matched @ d.share,
                matched @ d.interp, matched @ d.interp_sq)

    def _power_bound(self, d: _Direction, interp):
        """Per-candidate top of the stable power interval, capped at p_max.

        Utilization is rate * (mean interpretation load) / packet bits, so the
        queue is stable up to the power where the rate hits
        packet_bits / load; beyond it the score is -inf anyway.  Searching
        [0, bound] instead of [0, p_max] keeps the grid resolution of the
        stable interval independent of the power budget.
        """
        interp = np.asarray(interp, dtype=float)
        with np.errstate(over="ignore"):
            exponent = np.where(interp > 0.0,
                                self.bits_per_packet / (np.maximum(interp, 1e-300)
                                                        * self.bandwidth),
                                np.inf)
            boundary = (np.exp2(np.minimum(exponent, 2000.0)) - 1.0) * self.noise / d.gain_d
        return np.minimum(self.p_max, boundary)

    def _best_power(self, d: _Direction, legit, leak, share, interp, interp_sq):
        """Grid + golden-section maximization of one direction, vectorized
        over candidates.  Returns (best score, best power) arrays."""
        upper = self._power_bound(d, interp)
        grid = upper[:, None] * self.unit_grid[None, :]
        rd, re = self._rates_at(d, grid)
        scores, _, _, _ = self._compose(
            d, legit[:, None], leak[:, None], share[:, None],
            interp[:, None], interp_sq[:, None], rd, re)
        idx = np.argmax(scores, axis=1)
        rows = np.arange(scores.shape[0])
        best = scores[rows, idx]
        best_p = grid[rows, idx]
        if not self.params.power_refine:
            return best, best_p

        def f(p):
            rd1, re1 = self._rates_at(d, p)
            s, _, _, _ = self._compose(d, legit, leak, share, interp, interp_sq, rd1, re1)
            return s

        last = len(self.unit_grid) - 1
        lo = grid[rows, np.maximum(idx - 1, 0)]
        hi = grid[rows, np.minimum(idx + 1, last)]
        tol = self.params.power_tol_frac * self.p_max
        width = float(np.max(hi - lo))
        if width <= tol:
            return best, best_p
        iters = min(100, int(math.ceil(math.log(tol / width) / math.log(_INVPHI))))
        a, b = lo, hi
        x1 = a + _INVPHI2 * (b - a)
        x2 = a + _INVPHI * (b - a)
        f1, f2 = f(x1), f(x2)
        for x, fx in ((x1, f1), (x2, f2)):
            better = fx > best
            best = np.where(better, fx, best)
            best_p = np.where(better, x, best_p)
        for _ in range(iters):
            left = f1 >= f2
            x1o, x2o, f1o, f2o = x1, x2, f1, f2
            b = np.where(left, x2o, b)
            a = np.where(left, a, x1o)
            x1 = np.where(left, a + _INVPHI2 * (b - a), x2o)
            x2 = np.where(left, x1o, a + _INVPHI * (b - a))
            fresh = np.where(left, x1, x2)
            ff = f(fresh)
            f1 = np.where(left, ff, f2o)
            f2 = np.where(left, f1o, ff)
            better = ff > best
            best = np.where(better, ff, best)
            best_p = np.where(better, fresh, best_p)
        return best, best_p

    def evaluate(self, cands: np.ndarray):
        """Scores and per-direction optimized powers for (n, 2K) candidates."""
        cands = np.asarray(cands, dtype=float)
        ci, cj = cands[:, :self.k], cands[:, self.k:]
        matched = ci * cj
        s1, p1 = self._best_power(self.dirs[0], *self._coeffs(ci, matched, self.dirs[0]))
        s2, p2 = self._best_power(self.dirs[1], *self._coeffs(cj, matched, self.dirs[1]))
        return s1 + s2, p1, p2

    def feasible_mask(self, cands: np.ndarray) -> np.ndarray:
        cands = np.asarray(cands, dtype=float)
        ci, cj = cands[:, :self.k], cands[:, self.k:]
        return ((ci @ self.sizes <= self.capacity)
                & (cj @ self.sizes <= self.capacity)
                & (ci @ self.probs_i >= self.eta_min - ETA_SLACK)
                & (cj @ self.probs_j >= self.eta_min - ETA_SLACK))

    def direction_detail(self, cands_row: np.ndarray, which: int, power: float):
        """Scalar (v_s, delay, stable) of one direction at a given power."""
        ci, cj = cands_row[:self.k].astype(float), cands_row[self.k:].astype(float)
        matched = ci * cj
        d = self.dirs[which]
        sender = ci if which == 0 else cj
        legit, leak, share, interp, interp_sq = self._coeffs(sender, matched, d)
        rd, re = self._rates_at(d, np.asarray([power]))
        _, v_s, delay, stable = self._compose(
            d, legit, leak, share, interp, interp_sq, rd, re)
        return float(v_s[0]), float(delay[0]), bool(stable[0])

    def finalize(self, joint: np.ndarray, power_i: float, power_j: float) -> PairSolution:
        vs_ij, delay_ij, ok_ij = self.direction_detail(joint, 0, power_i)
        vs_ji, delay_ji, ok_ji = self.direction_detail(joint, 1, power_j)
        if not (ok_ij and ok_ji):
            raise RuntimeError("optimized powers landed in the unstable region")
        d0, d1 = self.dirs
        score = ((1.0 + d0.rho_s) * vs_ij - d0.tau_s * delay_ij
                 + (1.0 + d1.rho_s) * vs_ji - d1.tau_s * delay_ji)
        return PairSolution(
            i=self.i, j=self.j,
            cache_i=CacheVector(self.i, joint[:self.k]),
            cache_j=CacheVector(self.j, joint[self.k:]),
            power_i=float(power_i), power_j=float(power_j),
            score=float(score),
            secrecy_ij=vs_ij, secrecy_ji=vs_ji,
            delay_ij=delay_ij, delay_ji=delay_ji,
        )


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def pair_score(
    scn: Scenario, i: int, j: int,
    cache_i: CacheVector, cache_j: CacheVector,
    power_i: float, power_j: float,
    tau_i: float, tau_j: float, rho_i: float, rho_j: float,
) -> float:
    """Reference (scalar) pair score; -inf when either direction's queue is
    unstable at the given powers."""
    total = 0.0
    for s, r, c_s, c_r, p, t, rh in (
        (i, j, cache_i, cache_j, power_i, tau_i, rho_i),
        (j, i, cache_j, cache_i, power_j, tau_j, rho_j),
    ):
        rates = pair_value_rates(scn, s, r, c_s, c_r, p)
        stats = queue_stats(c_s, c_r, scn.catalog.user_probs[s],
                            scn.catalog.interp_rates[r], rates.r_d, scn.config.packet_bits)
        if not stats.stable:
            return -math.inf
        total += (1.0 + rh) * rates.v_s - t * pk_delay(stats)
    return total


def optimize_powers(
    scn: Scenario, i: int, j: int,
    cache_i: CacheVector, cache_j: CacheVector,
    tau: np.ndarray, rho: np.ndarray,
    params: PairOptParams | None = None,
) -> tuple[float, float, float]:
    """Best (power_i, power_j, score) for fixed caches.

    The score is separable, so each power is maximized independently on its
    stable sub-interval of [0, p_max].
    """
    params = params or PairOptParams()
    ctx = _PairContext(scn, i, j, tau, rho, params)
    joint = np.concatenate((cache_i.bits, cache_j.bits)).astype(float)
    score, p_i, p_j = ctx.evaluate(joint[None, :])
    return float(p_i[0]), float(p_j[0]), float(score[0])


def stable_power_upper_bound(
    scn: Scenario, s: int, r: int, cache_s: CacheVector, cache_r: CacheVector
) -> float:
    """Top of direction s -> r's stable power interval, capped at p_max.

    This is the domain the power search runs on: beyond it the receiver's
    interpretation queue is overloaded and the pair score is -inf.  No
    matched traffic means no queue, so the bound is just p_max.
    """
    cfg = scn.config
    matched = cache_s.bits.astype(float) * cache_r.bits.astype(float)
    load = float(matched @ (scn.catalog.user_probs[s] / scn.catalog.interp_rates[r]))
    if load <= 0.0:
        return cfg.p_max_w
    with np.errstate(over="ignore"):
        exponent = cfg.packet_bits / (load * cfg.bandwidth_hz)
        boundary = float((np.exp2(min(exponent, 2000.0)) - 1.0) * cfg.noise_w
                         / scn.gain_d[s, r])
    return min(cfg.p_max_w, boundary)


def greedy_single_cache(
    probs: np.ndarray, sizes: np.ndarray, capacity: int, eta_min: float
) -> tuple[np.ndarray, bool]:
    """Single-user preference-first cache: walk KBs by descending request
    probability, skip entries that would overflow capacity, stop once
    eta_min is met.  Returns (bits, reached_eta)."""
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(-probs, kind="stable")
    bits = np.zeros(len(probs), dtype=np.uint8)
    used = 0
    eta = 0.0
    for k in order:
        if eta >= eta_min - ETA_SLACK:
            break
        if used + sizes[k] <= capacity:
            bits[k] = 1
            used += int(sizes[k])
            eta += probs[k]
    return bits, eta >= eta_min - ETA_SLACK


def initial_kbc(scn: Scenario, i: int, j: int) -> tuple[CacheVector, CacheVector]:
    """Greedy joint cache construction for a pair.

    Repeatedly caches (at both users) the KB with the highest combined
    request probability until both satisfactions reach eta_min, evicting the
    largest cached KB whenever capacity is exceeded.  Evicted KBs do not
    return to the candidate set, which guarantees termination; exhausting
    the candidates first raises InfeasiblePairError.
    """
    cfg = scn.config
    sizes = scn.catalog.sizes
    probs_i = scn.catalog.user_probs[i]
    probs_j = scn.catalog.user_probs[j]
    available = list(range(cfg.num_kbs))
    cached: list[int] = []
    bits = np.zeros(cfg.num_kbs, dtype=np.uint8)

    def eta(probs: np.ndarray) -> float:
        return float(bits @ probs)

    while (eta(probs_i) < cfg.eta_min - ETA_SLACK
           or eta(probs_j) < cfg.eta_min - ETA_SLACK):
        if not available:
            raise InfeasiblePairError(
                f"pair ({i}, {j}) cannot reach eta_min={cfg.eta_min} within capacity")
        best_k, best_v = available[0], -1.0
        for k in available:  # ascending index, strict > keeps the lowest on ties
            v = probs_i[k] + probs_j[k]
            if v > best_v:
                best_k, best_v = k, v
        available.remove(best_k)
        cached.append(best_k)
        bits[best_k] = 1
        while int(bits @ sizes) > cfg.capacity:
            evict, evict_size = cached[0], -1
            for k in cached:
                if sizes[k] > evict_size:
                    evict, evict_size = k, int(sizes[k])
            cached.remove(evict)
            bits[evict] = 0
    return CacheVector(i, bits.copy()), CacheVector(j, bits.copy())


def neighborhood(
    current: np.ndarray, sigma: int, tabu: TabuState, scn: Scenario, i: int, j: int
) -> np.ndarray:
    """Feasible, non-tabu joint caches within Hamming distance 1..sigma of
    ``current``, in deterministic flip order.  May be empty."""
    current = np.asarray(current, dtype=np.uint8)
    rows = []
    for dist in range(1, sigma + 1):
        for flips in itertools.combinations(range(len(current)), dist):
            cand = current.copy()
            cand[list(flips)] ^= 1
            if cand not in tabu:
                rows.append(cand)
    if not rows:
        return np.zeros((0, len(current)), dtype=np.uint8)
    cands = np.vstack(rows)
    k = scn.config.num_kbs
    sizes = scn.catalog.sizes.astype(float)
    keep = ((cands[:, :k].astype(float) @ sizes <= scn.config.capacity)
            & (cands[:, k:].astype(float) @ sizes <= scn.config.capacity)
            & (cands[:, :k] @ scn.catalog.user_probs[i] >= scn.config.eta_min - ETA_SLACK)
            & (cands[:, k:] @ scn.catalog.user_probs[j] >= scn.config.eta_min - ETA_SLACK))
    return cands[keep]


def enumerate_pair_optimum(
    scn: Scenario, i: int, j: int,
    tau: np.ndarray, rho: np.ndarray,
    params: PairOptParams | None = None,
) -> PairSolution:
    """Exhaustive joint-cache search (oracle; catalogs of up to 8 KBs)."""
    params = params or PairOptParams()
    k = scn.config.num_kbs
    if 2 * k > 16:
        raise ValueError("exhaustive search is limited to num_kbs <= 8")
    ctx = _PairContext(scn, i, j, tau, rho, params)
    cands = np.array(list(itertools.product((0, 1), repeat=2 * k)), dtype=np.uint8)
    cands = cands[ctx.feasible_mask(cands)]
    if cands.shape[0] == 0:
        raise InfeasiblePairError(
            f"pair ({i}, {j}) has no feasible joint cache for eta_min={scn.config.eta_min}")
    scores, p_i, p_j = ctx.evaluate(cands)
    idx = int(np.argmax(scores))
    return ctx.finalize(cands[idx], float(p_i[idx]), float(p_j[idx]))


def solve_pair_subproblem(
    scn: Scenario, i: int, j: int,
    tau: np.ndarray, rho: np.ndarray,
    params: PairOptParams | None = None,
    return_state: bool = False,
    initial: np.ndarray | None = None,
):
    """Tabu search over joint caches with per-candidate optimized powers.

    Starts from the greedy joint construction (or ``initial``, a warm-start
    joint cache of length 2 * num_kbs), moves to the best feasible non-tabu
    neighbor each iteration (accepting downhill moves), records non-improving
    visits in the tabu memory, and stops on the iteration budget, an empty
    neighborhood, or stagnation of the incumbent.  With ``params.exhaustive``
    the tabu search is replaced by full enumeration.
    """
    params = params or PairOptParams()
    if params.exhaustive:
        sol = enumerate_pair_optimum(scn, i, j, tau, rho, params)
        return (sol, TabuState(params.tabu_len)) if return_state else sol
    if initial is None:
        cache_i, cache_j = initial_kbc(scn, i, j)  # may raise InfeasiblePairError
        joint = np.concatenate((cache_i.bits, cache_j.bits))
    else:
        joint = np.asarray(initial, dtype=np.uint8).copy()
        if joint.shape != (2 * scn.config.num_kbs,):
            raise ValueError("warm-start joint cache has the wrong length")
    ctx = _PairContext(scn, i, j, tau, rho, params)
    state = TabuState(params.tabu_len)
    scores, p_i, p_j = ctx.evaluate(joint[None, :])
    best = (joint.copy(), float(p_i[0]), float(p_j[0]))
    state.best_joint = best[0]
    state.best_score = float(scores[0])
    state.current = joint.copy()
    state.best_history.append(state.best_score)

    for it in range(params.max_iters):
        state.iteration = it + 1
        cands = neighborhood(state.current, params.sigma, state, scn, i, j)
        if cands.shape[0] == 0:
            break
        scores, cand_pi, cand_pj = ctx.evaluate(cands)
        pick = int(np.argmax(scores))  # first max wins: deterministic
        state.current = cands[pick].copy()
        if scores[pick] > state.best_score:
            state.best_score = float(scores[pick])
            state.best_joint = state.current.copy()
            best = (state.current.copy(), float(cand_pi[pick]), float(cand_pj[pick]))
        else:
            state.add(state.current)
        state.best_history.append(state.best_score)
        if len(state.best_history) > params.growth_window:
            ref = state.best_history[-1 - params.growth_window]
            if state.best_score - ref <= params.growth_eps * max(abs(ref), 1e-12):
                break

    sol = ctx.finalize(best[0], best[1], best[2])
    return (sol, state) if return_state else sol
