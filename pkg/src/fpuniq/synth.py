"""Seeded synthetic populations of extension/login detections.

Randomness comes from SplitMix64 (Steele, Lea & Flood 2014). User ``i``
gets its own stream whose state starts at the ``i``-th output of the
stream seeded by ``seed``; draw ``k`` of a user is the ``k``-th output of its
stream. Any user can therefore be generated independently of the others and
the result is the same on every platform.

Per-user draw positions: ``[0, n_ext)`` extensions, ``[n_ext, n_ext+n_log)``
logins, then JS-disabled flag, cookies-blocked flag, user-agent choice, then
one draw per entry of ``correlated_pairs``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import AttributeCatalog, AttributeDescriptor, Detection, Kind
from .dataset import BinaryDataset, pack_rows
from .records import BrowserFamily, RawRecord

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

USER_AGENTS = (
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Chrome/60.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Chrome/59.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_12_5) Chrome/60.0",
    "Mozilla/5.0 (X11; Linux x86_64) Chrome/60.0",
    "Mozilla/5.0 (Windows NT 6.1; Win64; x64) Chrome/58.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_11_6) Chrome/59.0",
)


class PopulationError(ValueError):
    pass


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(state: int | np.ndarray, k: int | np.ndarray) -> np.ndarray:
    """``k``-th output (0-based) of SplitMix64 started at ``state``."""
    with np.errstate(over="ignore"):
        s = np.asarray(state, dtype=np.uint64) + (np.asarray(k, dtype=np.uint64) + np.uint64(1)) * _GAMMA
        return _mix(s)


def uniforms(seed: int, users: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draws, shape ``(len(users), len(positions))``."""
    user_state = splitmix64(np.uint64(seed % 2**64), np.asarray(users, dtype=np.uint64))
    z = splitmix64(user_state[:, None], np.asarray(positions, dtype=np.uint64)[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


@dataclass(frozen=True)
class Popularity:
    """Per-attribute detection probabilities before calibration.

    ``kind="zipf"`` gives weights ``rank ** -s``; ``kind="empirical"`` uses
    ``probabilities`` directly.
    """

    kind: str = "zipf"
    s: float = 1.0
    probabilities: tuple[float, ...] = ()

    def weights(self, m: int) -> np.ndarray:
        if self.kind == "zipf":
            return np.arange(1, m + 1, dtype=np.float64) ** -self.s
        if self.kind == "empirical":
            p = np.asarray(self.probabilities, dtype=np.float64)
            if len(p) != m:
                raise PopulationError(f"empirical popularity has {len(p)} entries, expected {m}")
            if (p < 0).any() or (p > 1).any():
                raise PopulationError("probabilities must lie in [0, 1]")
            return p
        raise PopulationError(f"unknown popularity kind {self.kind!r}")

    @classmethod
    def from_json(cls, obj) -> "Popularity":
        if isinstance(obj, dict):
            if "zipf" in obj:
                return cls("zipf", float(obj["zipf"]))
            if "empirical" in obj:
                return cls("empirical", probabilities=tuple(float(x) for x in obj["empirical"]))
        raise PopulationError(f"bad popularity spec {obj!r}")

    def to_json(self):
        return {"zipf": self.s} if self.kind == "zipf" else {"empirical": list(self.probabilities)}


def calibrate_popularity(target_mean: float | None, base: Sequence[float]) -> np.ndarray:
    """Scale ``base`` so the probabilities sum to ``target_mean``.

    ``None`` keeps ``base`` as is. Raises if any probability would exceed 1.
    """
    base = np.asarray(base, dtype=np.float64)
    if target_mean is None:
        p = base.copy()
    else:
        total = base.sum()
        if target_mean < 0:
            raise PopulationError("target mean must be >= 0")
        if total == 0:
            if target_mean > 0:
                raise PopulationError("cannot scale an all-zero base distribution")
            return base.copy()
        p = base * (target_mean / total)
    if (p > 1 + 1e-12).any():
        scale = 1.0 / base.max() if base.max() > 0 else float("inf")
        raise PopulationError(
            f"infeasible target mean {target_mean}: needs p > 1 (max feasible scale {scale:.4g})"
        )
    return np.minimum(p, 1.0)


@dataclass(frozen=True)
class PopulationSpec:
    n_users: int
    n_extensions: int
    n_logins: int = 0
    extension_popularity: Popularity = field(default_factory=Popularity)
    login_popularity: Popularity = field(default_factory=Popularity)
    mean_extensions_per_user: float | None = None
    mean_logins_per_user: float | None = None
    fraction_js_disabled: float = 0.0
    fraction_cookies_blocked: float = 0.0
    n_csp_logins: int = 0
    # (leader, follower, q): a user detected with ``leader`` also gets
    # ``follower`` with probability q, on top of its own draw
    correlated_pairs: tuple[tuple[str, str, float], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1:
            raise PopulationError("n_users must be >= 1")
        if self.n_extensions < 0 or self.n_logins < 0:
            raise PopulationError("attribute counts must be >= 0")
        if self.n_extensions + self.n_logins < 1:
            raise PopulationError("population needs at least one attribute")
        if not 0 <= self.n_csp_logins <= self.n_logins:
            raise PopulationError("n_csp_logins must be in [0, n_logins]")
        for name in ("fraction_js_disabled", "fraction_cookies_blocked"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise PopulationError(f"{name} must be in [0, 1]")
        pairs = tuple((str(a), str(b), float(q)) for a, b, q in self.correlated_pairs)
        object.__setattr__(self, "correlated_pairs", pairs)
        ids = set(self.extension_ids) | set(self.login_ids)
        for a, b, q in pairs:
            if a not in ids or b not in ids or a == b:
                raise PopulationError(f"bad correlated pair ({a!r}, {b!r})")
            if not 0.0 <= q <= 1.0:
                raise PopulationError("pair probability must be in [0, 1]")

    @property
    def extension_ids(self) -> list[str]:
        width = len(str(max(self.n_extensions - 1, 0)))
        return [f"ext{j:0{width}d}" for j in range(self.n_extensions)]

    @property
    def login_ids(self) -> list[str]:
        width = len(str(max(self.n_logins - 1, 0)))
        return [f"login{j:0{width}d}" for j in range(self.n_logins)]

    def catalog(self) -> AttributeCatalog:
        attrs = [AttributeDescriptor(i, Kind.EXTENSION, Detection.WAR) for i in self.extension_ids]
        csp_from = self.n_logins - self.n_csp_logins
        for j, i in enumerate(self.login_ids):
            det = Detection.CSP_REPORT if j >= csp_from else Detection.REDIRECT_IMAGE
            attrs.append(AttributeDescriptor(i, Kind.LOGIN, det))
        return AttributeCatalog(tuple(attrs))

    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        pe = calibrate_popularity(self.mean_extensions_per_user, self.extension_popularity.weights(self.n_extensions))
        pl = calibrate_popularity(self.mean_logins_per_user, self.login_popularity.weights(self.n_logins))
        return pe, pl

    @classmethod
    def from_json(cls, obj: dict) -> "PopulationSpec":
        obj = dict(obj)
        if "seed" not in obj:
            raise PopulationError("population spec: 'seed' is mandatory")
        for key in ("extension_popularity", "login_popularity"):
            if key in obj:
                obj[key] = Popularity.from_json(obj[key])
        if "correlated_pairs" in obj:
            obj["correlated_pairs"] = tuple(tuple(p) for p in obj["correlated_pairs"])
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise PopulationError(f"population spec: unknown fields {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["extension_popularity"] = self.extension_popularity.to_json()
        out["login_popularity"] = self.login_popularity.to_json()
        out["correlated_pairs"] = [list(p) for p in self.correlated_pairs]
        return out


@dataclass
class Population:
    """Generated detections as matrices plus per-user flags."""

    spec: PopulationSpec
    extensions: np.ndarray  # (n, n_extensions) bool
    logins: np.ndarray  # (n, n_logins) bool
    js_enabled: np.ndarray
    cookies_blocked: np.ndarray
    user_agents: list[str]

    @property
    def user_ids(self) -> list[str]:
        width = len(str(self.spec.n_users - 1))
        return [f"u{i:0{width}d}" for i in range(self.spec.n_users)]


def generate_population(spec: PopulationSpec, chunk: int | None = None) -> Population:
    n, me, ml = spec.n_users, spec.n_extensions, spec.n_logins
    if chunk is None:
        chunk = max(1, (1 << 22) // (me + ml))  # ~32 MB of draws per chunk
    pe, pl = spec.probabilities()
    csp_mask = np.zeros(ml, dtype=bool)
    csp_mask[ml - spec.n_csp_logins :] = True
    ext = np.zeros((n, me), dtype=bool)
    log = np.zeros((n, ml), dtype=bool)
    flags = np.zeros((n, 3))
    flag_pos = np.arange(me + ml, me + ml + 3)
    pairs = spec.correlated_pairs
    col = {a: j for j, a in enumerate(spec.extension_ids + spec.login_ids)}
    for u0 in range(0, n, chunk):
        users = np.arange(u0, min(n, u0 + chunk))
        bits = np.zeros((len(users), me + ml), dtype=bool)
        if me:
            bits[:, :me] = uniforms(spec.seed, users, np.arange(me)) < pe
        if ml:
            bits[:, me:] = uniforms(spec.seed, users, np.arange(me, me + ml)) < pl
        flags[users] = uniforms(spec.seed, users, flag_pos)
        if pairs:
            extra = uniforms(spec.seed, users, np.arange(me + ml + 3, me + ml + 3 + len(pairs)))
            for k, (a, b, q) in enumerate(pairs):  # sequential, so chains propagate
                bits[:, col[b]] |= bits[:, col[a]] & (extra[:, k] < q)
        ext[users], log[users] = bits[:, :me], bits[:, me:]
    js_enabled = flags[:, 0] >= spec.fraction_js_disabled
    cookies_blocked = flags[:, 1] < spec.fraction_cookies_blocked
    # what the probes can observe
    ext &= js_enabled[:, None]
    log &= ~cookies_blocked[:, None]
    log &= js_enabled[:, None] | csp_mask[None, :]
    ua_idx = np.minimum((flags[:, 2] * len(USER_AGENTS)).astype(int), len(USER_AGENTS) - 1)
    return Population(spec, ext, log, js_enabled, cookies_blocked, [USER_AGENTS[k] for k in ua_idx])


def generate(spec: PopulationSpec) -> list[RawRecord]:
    """One Chrome desktop record per synthetic user."""
    pop = generate_population(spec)
    ext_ids, log_ids = np.array(spec.extension_ids, dtype=object), np.array(spec.login_ids, dtype=object)
    out = []
    for i, uid in enumerate(pop.user_ids):
        out.append(
            RawRecord(
                user_id=uid,
                experiment_seq=1,
                browser_family=BrowserFamily.CHROME,
                user_agent=pop.user_agents[i],
                screen_resolution="1920x1080",
                fonts="Arial,Helvetica",
                canvas_hash=f"canvas{i % 97}",
                js_enabled=bool(pop.js_enabled[i]),
                detected_extensions=frozenset(ext_ids[pop.extensions[i]]) if len(ext_ids) else frozenset(),
                detected_logins=frozenset(log_ids[pop.logins[i]]) if len(log_ids) else frozenset(),
            )
        )
    return out


def generate_dataset(spec: PopulationSpec) -> BinaryDataset:
    """Same bits as ``build_dataset(generate(spec), spec.catalog())`` without the records."""
    pop = generate_population(spec)
    bits = np.concatenate([pop.extensions, pop.logins], axis=1)
    return BinaryDataset(
        pop.user_ids,
        pack_rows(bits),
        spec.catalog(),
        browser_families=[BrowserFamily.CHROME] * spec.n_users,
        js_enabled=pop.js_enabled,
        user_agents=pop.user_agents,
        extension_counts=pop.extensions.sum(axis=1),
        login_counts=pop.logins.sum(axis=1),
    )


def load_spec(path: str | Path) -> PopulationSpec:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PopulationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return PopulationSpec.from_json(obj)
