"""User-level cleaning rules applied before building a dataset.

Rules run in a fixed order; a user removed by an earlier rule is not counted
again by a later one, so the per-rule counts add up to ``initial - final``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .records import BrowserFamily, RawRecord

RULES = (
    "drop_mobile",
    "drop_chrome_ext_error",
    "drop_nonchrome_with_extensions",
    "drop_brave",
    "drop_empty_fields",
    "max_experiments",
)

RULE_LABELS = {
    "drop_mobile": "mobile browser",
    "drop_chrome_ext_error": "Chrome, extension probe failed",
    "drop_nonchrome_with_extensions": "non-Chrome browser reporting extensions",
    "drop_brave": "Brave browser",
    "drop_empty_fields": "empty user agent, resolution, fonts or canvas hash",
    "max_experiments": "more than {max_experiments} experiments",
}


@dataclass(frozen=True)
class CleaningConfig:
    drop_mobile: bool = True
    drop_chrome_ext_error: bool = True
    drop_nonchrome_with_extensions: bool = True
    drop_brave: bool = True
    drop_empty_fields: bool = True
    max_experiments: int | None = 4
    keep_best_experiment: bool = True

    def __post_init__(self):
        if self.max_experiments is not None and self.max_experiments < 1:
            raise ValueError("max_experiments must be >= 1")


@dataclass
class CleaningReport:
    initial_users: int
    final_users: int
    removed: dict[str, int] = field(default_factory=dict)
    max_experiments: int | None = 4

    def rows(self) -> list[tuple[str, int]]:
        out = [("initial users", self.initial_users)]
        for rule in RULES:
            label = RULE_LABELS[rule].format(max_experiments=self.max_experiments)
            out.append((label, self.removed.get(rule, 0)))
        out.append(("final users", self.final_users))
        return out

    def to_json(self) -> dict:
        return {
            "initial_users": self.initial_users,
            "final_users": self.final_users,
            "removed": dict(self.removed),
            "max_experiments": self.max_experiments,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CleaningReport":
        return cls(obj["initial_users"], obj["final_users"], dict(obj["removed"]), obj["max_experiments"])


def _is_empty(value: str) -> bool:
    return not value.strip()


def _violates(rule: str, r: RawRecord) -> bool:
    if rule == "drop_mobile":
        return r.is_mobile
    if rule == "drop_chrome_ext_error":
        return r.browser_family is BrowserFamily.CHROME and r.extension_detection_error
    if rule == "drop_nonchrome_with_extensions":
        # Brave ships with WAR-detectable default extensions; it has its own rule below.
        return (
            r.browser_family not in (BrowserFamily.CHROME, BrowserFamily.BRAVE)
            and len(r.detected_extensions) > 0
        )
    if rule == "drop_brave":
        return r.browser_family is BrowserFamily.BRAVE
    if rule == "drop_empty_fields":
        return any(_is_empty(v) for v in (r.user_agent, r.screen_resolution, r.fonts, r.canvas_hash))
    raise KeyError(rule)


def clean(records: list[RawRecord], config: CleaningConfig = CleaningConfig()):
    """Filter users and keep one experiment per surviving user.

    Returns ``(kept_records, report)``. Kept records are ordered by the first
    appearance of their user in ``records``.
    """
    by_user: dict[str, list[RawRecord]] = {}
    for r in records:
        by_user.setdefault(r.user_id, []).append(r)

    removed = {rule: 0 for rule in RULES}
    survivors: list[str] = []
    for user, exps in by_user.items():
        dropped = False
        for rule in RULES[:-1]:
            if getattr(config, rule) and any(_violates(rule, r) for r in exps):
                removed[rule] += 1
                dropped = True
                break
        if dropped:
            continue
        if config.max_experiments is not None and len(exps) > config.max_experiments:
            removed["max_experiments"] += 1
            continue
        survivors.append(user)

    kept: list[RawRecord] = []
    for user in survivors:
        exps = by_user[user]
        if config.keep_best_experiment:
            # most detections wins; ties go to the earliest experiment
            kept.append(min(exps, key=lambda r: (-r.detected_count, r.experiment_seq)))
        else:
            kept.extend(exps)

    report = CleaningReport(
        initial_users=len(by_user),
        final_users=len(survivors),
        removed=removed,
        max_experiments=config.max_experiments,
    )
    assert report.initial_users - sum(removed.values()) == report.final_users
    return kept, report
