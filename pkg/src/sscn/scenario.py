"""Scenario model for secure D2D semantic communication networks.

A scenario places ``num_users`` users plus one eavesdropping receiver
uniformly at random in a disk-shaped cell, draws a catalog of ``num_kbs``
knowledge bases (KBs) with integer storage sizes, and assigns every KB an
exponential interpretation rate at each receiver.  Request popularity follows
a per-user Zipf law over a private preference ranking of the catalog; the
eavesdropper ranks the catalog independently.  Channel gains follow the
log-distance path-loss law ``34 + 40 log10(d)`` dB and two users are mutually
eligible for D2D communication when the SNR at full transmit power clears a
configurable threshold.

All internal math is in SI units (watts, hertz, seconds, bits); dBm config
inputs are converted exactly once, at config construction.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

# Attempts to draw a topology where every user has at least one eligible
# neighbor before generation gives up.
MAX_TOPOLOGY_DRAWS = 100


class ScenarioGenerationError(RuntimeError):
    """Raised when no valid topology exists for a config (over-sparse cell)."""


class ScenarioFormatError(ValueError):
    """Raised when a scenario or config file cannot be parsed."""


def dbm_to_watts(value_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def channel_gain_from_distance(distance_m: float) -> float:
    """Linear power gain of the 34 + 40*log10(d [m]) dB path-loss law."""
    if distance_m <= 0.0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    path_loss_db = 34.0 + 40.0 * math.log10(distance_m)
    return 10.0 ** (-path_loss_db / 10.0)


def zipf_probabilities(ranks: np.ndarray, skew: float) -> np.ndarray:
    """Zipf request probabilities for a full preference ranking.

    ``ranks`` must be a permutation of 1..K; the entry holding rank ``r``
    gets probability ``r**-skew / sum_{e=1..K} e**-skew``, so the rank-1
    entry is the most popular and ``skew`` controls how steeply popularity
    decays.  ``skew = 0`` yields the uniform distribution.
    """
    ranks = np.asarray(ranks)
    if skew < 0.0:
        raise ValueError(f"skew must be nonnegative, got {skew}")
    if ranks.ndim != 1:
        raise ValueError("ranks must be one-dimensional")
    k = ranks.shape[0]
    if sorted(ranks.tolist()) != list(range(1, k + 1)):
        raise ValueError("ranks must be a permutation of 1..K")
    weights = ranks.astype(float) ** -skew
    norm = np.sum(np.arange(1, k + 1, dtype=float) ** -skew)
    return weights / norm


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable scenario parameters.

    Power levels are supplied in dBm and exposed in watts via the derived
    ``noise_w`` / ``p_max_w`` fields.  ``kb_size_range`` and
    ``interp_time_range`` are inclusive (min, max) draws; interpretation
    times are seconds per packet, storage sizes and ``capacity`` share one
    abstract storage unit.
    """

    num_users: int = 100
    num_kbs: int = 12
    cell_radius_m: float = 300.0
    bandwidth_hz: float = 1.0e5
    packet_bits: float = 800.0
    noise_dbm: float = -111.45
    p_max_dbm: float = 21.0
    snr_threshold: float = 1.0
    eta_min: float = 0.5
    delay_max_s: float = 5.0e-3
    sst_min: float = 50.0
    user_skew: float = 1.2
    eaves_skew: float = 1.2
    kb_size_range: tuple[int, int] = (1, 5)
    capacity: int = 24
    interp_time_range: tuple[float, float] = (5.0e-3, 1.0e-2)
    per_user_interp: bool = False
    rng_seed: int = 0
    noise_w: float = field(init=False, repr=False)
    p_max_w: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.num_users < 2:
            raise ValueError("need at least two users")
        if self.num_kbs < 1:
            raise ValueError("need at least one knowledge base")
        for name in ("cell_radius_m", "bandwidth_hz", "packet_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.snr_threshold < 0 or self.user_skew < 0 or self.eaves_skew < 0:
            raise ValueError("snr_threshold and skews must be nonnegative")
        if not 0.0 <= self.eta_min <= 1.0:
            raise ValueError("eta_min must lie in [0, 1]")
        if self.delay_max_s <= 0 or self.sst_min < 0:
            raise ValueError("delay_max_s must be positive and sst_min nonnegative")
        lo, hi = self.kb_size_range
        if not (0 < lo <= hi):
            raise ValueError("kb_size_range must satisfy 0 < min <= max")
        if self.capacity < 1:
            raise ValueError("capacity must be at least one storage unit")
        tlo, thi = self.interp_time_range
        if not (0.0 < tlo <= thi):
            raise ValueError("interp_time_range must satisfy 0 < min <= max")
        # dBm -> watts happens here, exactly once; everything downstream is SI.
        object.__setattr__(self, "noise_w", dbm_to_watts(self.noise_dbm))
        object.__setattr__(self, "p_max_w", dbm_to_watts(self.p_max_dbm))


@dataclass(frozen=True)
class KbCatalog:
    """Knowledge-base catalog: sizes, rankings, popularity, interpretation.

    ``user_ranks[i, k]`` is user i's preference rank of KB k (1 = favorite),
    ``user_probs`` the matching Zipf probabilities and ``user_weights`` the
    un-normalized Zipf weights ``rank**-skew`` (the per-KB semantic value
    weight).  ``interp_rates[j, k]`` is receiver j's interpretation rate for
    KB-k packets in packets/second.
    """

    sizes: np.ndarray
    user_ranks: np.ndarray
    eaves_ranks: np.ndarray
    interp_rates: np.ndarray
    user_probs: np.ndarray
    eaves_probs: np.ndarray
    user_weights: np.ndarray

    @classmethod
    def build(
        cls,
        sizes: np.ndarray,
        user_ranks: np.ndarray,
        eaves_ranks: np.ndarray,
        interp_rates: np.ndarray,
        user_skew: float,
        eaves_skew: float,
    ) -> "KbCatalog":
        """Derive probabilities and weights from rankings and skews."""
        sizes = np.asarray(sizes, dtype=int)
        user_ranks = np.asarray(user_ranks, dtype=int)
        eaves_ranks = np.asarray(eaves_ranks, dtype=int)
        interp_rates = np.asarray(interp_rates, dtype=float)
        user_probs = np.vstack([zipf_probabilities(row, user_skew) for row in user_ranks])
        eaves_probs = zipf_probabilities(eaves_ranks, eaves_skew)
        user_weights = user_ranks.astype(float) ** -user_skew
        return cls(sizes, user_ranks, eaves_ranks, interp_rates,
                   user_probs, eaves_probs, user_weights)

    def __post_init__(self) -> None:
        k = self.sizes.shape[0]
        if np.any(self.sizes < 1):
            raise ValueError("KB sizes must be positive integers")
        for row in self.user_ranks:
            if sorted(row.tolist()) != list(range(1, k + 1)):
                raise ValueError("each user ranking must be a permutation of 1..K")
        if sorted(self.eaves_ranks.tolist()) != list(range(1, k + 1)):
            raise ValueError("eavesdropper ranking must be a permutation of 1..K")
        if self.interp_rates.shape != self.user_ranks.shape:
            raise ValueError("interp_rates must be per user per KB")
        if np.any(self.interp_rates <= 0.0):
            raise ValueError("interpretation rates must be positive")


@dataclass(frozen=True)
class Scenario:
    """A fully realized network instance.

    ``positions`` holds user coordinates in rows 0..M-1 and the eavesdropping
    receiver in the final row.  ``gain_d[i, j]`` is the symmetric user-to-user
    channel gain (zero on the diagonal), ``gain_e[i]`` the gain from user i to
    the eavesdropper.  ``neighbors[i]`` lists the users whose SNR from user i
    at full power clears ``snr_threshold``; the relation is symmetric.
    """

    config: ScenarioConfig
    positions: np.ndarray
    gain_d: np.ndarray
    gain_e: np.ndarray
    catalog: KbCatalog
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        m = self.config.num_users
        if self.positions.shape != (m + 1, 2):
            raise ValueError("positions must be (num_users + 1, 2)")
        if self.gain_d.shape != (m, m) or not np.allclose(self.gain_d, self.gain_d.T):
            raise ValueError("gain_d must be a symmetric (M, M) matrix")
        if np.any(np.diag(self.gain_d) != 0.0):
            raise ValueError("gain_d diagonal must be zero")
        if np.any(self.gain_e <= 0.0):
            raise ValueError("eavesdropper gains must be positive")

    @property
    def num_users(self) -> int:
        return self.config.num_users

    @property
    def num_kbs(self) -> int:
        return self.config.num_kbs

    def distance(self, i: int, j: int) -> float:
        return float(np.hypot(*(self.positions[i] - self.positions[j])))

    def eligible_pairs(self) -> list[tuple[int, int]]:
        """All unordered eligible pairs (i, j) with i < j."""
        return [(i, j) for i in range(self.num_users)
                for j in self.neighbors[i] if j > i]


def _draw_disk_points(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    # sqrt(u) makes the density uniform over the disk area
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * math.pi * rng.random(count)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _gains_and_neighbors(
    config: ScenarioConfig, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray, tuple[tuple[int, ...], ...]]:
    m = config.num_users
    users = positions[:m]
    deltas = users[:, None, :] - users[None, :, :]
    dist = np.hypot(deltas[..., 0], deltas[..., 1])
    gain_d = np.zeros((m, m))
    off = ~np.eye(m, dtype=bool)
    gain_d[off] = 10.0 ** (-(34.0 + 40.0 * np.log10(dist[off])) / 10.0)
    dist_e = np.hypot(*(users - positions[m]).T)
    gain_e = 10.0 ** (-(34.0 + 40.0 * np.log10(dist_e)) / 10.0)
    snr_full = config.p_max_w * gain_d / config.noise_w
    eligible = (snr_full >= config.snr_threshold) & off
    neighbors = tuple(tuple(np.flatnonzero(eligible[i]).tolist()) for i in range(m))
    return gain_d, gain_e, neighbors


def _build_scenario(
    config: ScenarioConfig,
    positions: np.ndarray,
    sizes: np.ndarray,
    user_ranks: np.ndarray,
    eaves_ranks: np.ndarray,
    interp_rates: np.ndarray,
) -> Scenario:
    gain_d, gain_e, neighbors = _gains_and_neighbors(config, positions)
    catalog = KbCatalog.build(sizes, user_ranks, eaves_ranks, interp_rates,
                              config.user_skew, config.eaves_skew)
    return Scenario(config, positions, gain_d, gain_e, catalog, neighbors)


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Draw a random scenario from ``config`` (deterministic in rng_seed).

    Topologies that leave any user without an eligible neighbor are redrawn,
    up to MAX_TOPOLOGY_DRAWS attempts; each attempt consumes a fresh slice of
    the seeded RNG stream so identical (config, seed) always yield identical
    scenarios.
    """
    rng = np.random.default_rng(config.rng_seed)
    m, k = config.num_users, config.num_kbs
    for _ in range(MAX_TOPOLOGY_DRAWS):
        positions = _draw_disk_points(rng, m + 1, config.cell_radius_m)
        sizes = rng.integers(config.kb_size_range[0], config.kb_size_range[1] + 1, size=k)
        user_ranks = np.vstack([rng.permutation(k) + 1 for _ in range(m)])
        eaves_ranks = rng.permutation(k) + 1
        tlo, thi = config.interp_time_range
        if config.per_user_interp:
            times = rng.uniform(tlo, thi, size=(m, k))
        else:
            times = np.tile(rng.uniform(tlo, thi, size=k), (m, 1))
        scn = _build_scenario(config, positions, sizes, user_ranks, eaves_ranks, 1.0 / times)
        if all(len(n) > 0 for n in scn.neighbors):
            return scn
    raise ScenarioGenerationError(
        f"no topology with fully connected users after {MAX_TOPOLOGY_DRAWS} draws; "
        "the cell is too sparse for the SNR threshold")


def with_p_max(scn: Scenario, p_max_dbm: float) -> Scenario:
    """The same realized network under a different power budget.

    Positions, channel gains and the KB catalog are kept; only the power cap
    and the eligibility relation (which depends on full-power SNR) are
    re-derived.  This pins the random environment when sweeping the power
    budget, so paired comparisons across budgets see identical topologies.
    Raising the budget can only widen eligibility; lowering it may leave
    users without neighbors, which is allowed here (unlike in generation).
    """
    config = replace(scn.config, p_max_dbm=p_max_dbm)
    return _build_scenario(config, scn.positions, scn.catalog.sizes,
                           scn.catalog.user_ranks, scn.catalog.eaves_ranks,
                           scn.catalog.interp_rates)


# --------------------------------------------------------------------------
# text serialization
#
# Sectioned key = value format; floats are written with repr() so round trips
# are bit exact.  Gains, probabilities and neighbor sets are derived data and
# are recomputed on load.
# --------------------------------------------------------------------------

_CONFIG_INT_KEYS = {"num_users", "num_kbs", "capacity", "rng_seed"}
_CONFIG_BOOL_KEYS = {"per_user_interp"}


def _config_items(config: ScenarioConfig) -> list[tuple[str, str]]:
    items: list[tuple[str, str]] = []
    for f in fields(config):
        if not f.init:
            continue
        value = getattr(config, f.name)
        if f.name == "kb_size_range":
            items.append(("kb_size_min", repr(value[0])))
            items.append(("kb_size_max", repr(value[1])))
        elif f.name == "interp_time_range":
            items.append(("interp_time_min", repr(value[0])))
            items.append(("interp_time_max", repr(value[1])))
        elif f.name in _CONFIG_BOOL_KEYS:
            items.append((f.name, "true" if value else "false"))
        else:
            items.append((f.name, repr(value)))
    return items


def config_from_mapping(mapping: dict[str, str]) -> ScenarioConfig:
    """Build a ScenarioConfig from string key/value pairs (file contents)."""
    kwargs: dict[str, object] = {}
    pending = dict(mapping)
    try:
        if "kb_size_min" in pending or "kb_size_max" in pending:
            kwargs["kb_size_range"] = (int(pending.pop("kb_size_min")),
                                       int(pending.pop("kb_size_max")))
        if "interp_time_min" in pending or "interp_time_max" in pending:
            kwargs["interp_time_range"] = (float(pending.pop("interp_time_min")),
                                           float(pending.pop("interp_time_max")))
        valid = {f.name for f in fields(ScenarioConfig) if f.init}
        for key, raw in pending.items():
            if key not in valid:
                raise ScenarioFormatError(f"unknown config key {key!r}")
            if key in _CONFIG_INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _CONFIG_BOOL_KEYS:
                if raw.lower() not in ("true", "false"):
                    raise ScenarioFormatError(f"{key} must be true or false, got {raw!r}")
                kwargs[key] = raw.lower() == "true"
            else:
                kwargs[key] = float(raw)
        return ScenarioConfig(**kwargs)  # type: ignore[arg-type]
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(f"bad scenario config: {exc}") from exc


def scenario_to_text(scn: Scenario) -> str:
    out = io.StringIO()
    out.write("# sscn scenario v1\n[config]\n")
    for key, value in _config_items(scn.config):
        out.write(f"{key} = {value}\n")
    out.write("\n[positions]\n")
    for i in range(scn.num_users):
        x, y = scn.positions[i]
        out.write(f"user_{i} = {float(x)!r} {float(y)!r}\n")
    ex, ey = scn.positions[scn.num_users]
    out.write(f"eaves = {float(ex)!r} {float(ey)!r}\n")
    out.write("\n[kb_sizes]\nsizes = ")
    out.write(" ".join(str(int(s)) for s in scn.catalog.sizes))
    out.write("\n\n[user_ranks]\n")
    for i in range(scn.num_users):
        out.write(f"user_{i} = " + " ".join(str(int(r)) for r in scn.catalog.user_ranks[i]) + "\n")
    out.write("\n[eaves_ranks]\nranks = ")
    out.write(" ".join(str(int(r)) for r in scn.catalog.eaves_ranks))
    out.write("\n\n[interp_rates]\n")
    for i in range(scn.num_users):
        row = " ".join(repr(float(v)) for v in scn.catalog.interp_rates[i])
        out.write(f"user_{i} = {row}\n")
    return out.getvalue()


def scenario_from_text(text: str) -> Scenario:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # type: ignore[method-assign]
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioFormatError(f"unparseable scenario file: {exc}") from exc
    required = ["config", "positions", "kb_sizes", "user_ranks", "eaves_ranks", "interp_rates"]
    for section in required:
        if not parser.has_section(section):
            raise ScenarioFormatError(f"missing [{section}] section")
    config = config_from_mapping(dict(parser.items("config")))
    m, k = config.num_users, config.num_kbs
    try:
        positions = np.zeros((m + 1, 2))
        for i in range(m):
            positions[i] = [float(v) for v in parser.get("positions", f"user_{i}").split()]
        positions[m] = [float(v) for v in parser.get("positions", "eaves").split()]
        sizes = np.array([int(v) for v in parser.get("kb_sizes", "sizes").split()])
        user_ranks = np.vstack(
            [[int(v) for v in parser.get("user_ranks", f"user_{i}").split()] for i in range(m)])
        eaves_ranks = np.array([int(v) for v in parser.get("eaves_ranks", "ranks").split()])
        rates = np.vstack(
            [[float(v) for v in parser.get("interp_rates", f"user_{i}").split()]
             for i in range(m)])
    except (configparser.Error, ValueError) as exc:
        raise ScenarioFormatError(f"bad scenario data: {exc}") from exc
    if sizes.shape != (k,) or user_ranks.shape != (m, k) or rates.shape != (m, k):
        raise ScenarioFormatError("scenario arrays disagree with config dimensions")
    try:
        return _build_scenario(config, positions, sizes, user_ranks, eaves_ranks, rates)
    except ValueError as exc:
        raise ScenarioFormatError(f"inconsistent scenario: {exc}") from exc


def save_scenario(scn: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario_to_text(scn))


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_text(fh.read())
