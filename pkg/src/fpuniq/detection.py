"""Logical simulation of extension and login detection probes.

Three probes are modeled, with no network or timing:

* WAR probe: a page loads one web-accessible resource of an extension; the
  load succeeds iff the extension is installed (Chromium engines, JS on).
* Redirect-image probe: an image behind a site's login redirect loads iff the
  user is logged in (needs JS and third-party cookies).
* CSP-report probe: a cross-domain redirect for logged-in users violates the
  attacker's CSP and triggers a report (needs third-party cookies, works with
  JS disabled).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .catalog import AttributeCatalog, AttributeDescriptor, Detection, Kind
from .records import BrowserFamily, RawRecord


class ScenarioError(ValueError):
    pass


class Engine(str, enum.Enum):
    CHROMIUM = "Chromium"
    GECKO = "Gecko"
    OTHER = "Other"


class LoginRedirect(str, enum.Enum):
    NONE = "None"
    SAME_DOMAIN_IMAGE = "SameDomainImage"
    CROSS_DOMAIN_REDIRECT = "CrossDomainRedirect"


class Channel(str, enum.Enum):
    WAR = "WAR"
    REDIRECT_IMAGE = "RedirectImage"
    CSP_REPORT = "CSPReport"
    UNDETECTABLE = "Undetectable"


# Brave ships default extensions that are visible to WAR probes.
BRAVE_DEFAULT_EXTENSIONS = (
    ("brave-default-shields", ("img/shields.png",)),
    ("brave-default-wallet", ("images/wallet.svg",)),
)


@dataclass(frozen=True)
class SimExtension:
    id: str
    wars: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "wars", tuple(self.wars))

    @property
    def war_detectable(self) -> bool:
        return bool(self.wars)


@dataclass(frozen=True)
class SimSite:
    id: str
    login_redirect: LoginRedirect = LoginRedirect.SAME_DOMAIN_IMAGE

    def __post_init__(self):
        object.__setattr__(self, "login_redirect", LoginRedirect(self.login_redirect))


_DEFAULT_FAMILY = {Engine.CHROMIUM: BrowserFamily.CHROME, Engine.GECKO: BrowserFamily.FIREFOX, Engine.OTHER: BrowserFamily.OTHER}


@dataclass(frozen=True)
class SimProfile:
    user_id: str
    engine: Engine = Engine.CHROMIUM
    js_enabled: bool = True
    third_party_cookies: bool = True
    installed: frozenset[str] = field(default_factory=frozenset)
    logged_in: frozenset[str] = field(default_factory=frozenset)
    user_agent: str = "Mozilla/5.0"
    browser_family: BrowserFamily | None = None
    is_mobile: bool = False
    screen_resolution: str = "1920x1080"
    fonts: str = "Arial,Helvetica"
    canvas_hash: str = "sim"

    def __post_init__(self):
        object.__setattr__(self, "engine", Engine(self.engine))
        object.__setattr__(self, "installed", frozenset(self.installed))
        object.__setattr__(self, "logged_in", frozenset(self.logged_in))
        family = self.browser_family if self.browser_family is not None else _DEFAULT_FAMILY[self.engine]
        object.__setattr__(self, "browser_family", BrowserFamily(family))
        if self.browser_family is BrowserFamily.BRAVE:
            object.__setattr__(
                self, "installed", self.installed | {ext for ext, _ in BRAVE_DEFAULT_EXTENSIONS}
            )


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    channel: Channel

    def __post_init__(self):
        if self.detected and self.channel is Channel.UNDETECTABLE:
            raise ValueError("a detected outcome needs a channel")


UNDETECTABLE = DetectionOutcome(False, Channel.UNDETECTABLE)


class Scenario:
    """Registered extensions and sites plus the profiles to probe."""

    def __init__(
        self,
        extensions: Iterable[SimExtension],
        sites: Iterable[SimSite],
        profiles: Iterable[SimProfile] = (),
        drop_probability: float = 0.0,
        seed: int = 0,
    ):
        self.profiles = list(profiles)
        exts = list(extensions)
        if any(p.browser_family is BrowserFamily.BRAVE for p in self.profiles):
            known = {e.id for e in exts}
            exts += [SimExtension(i, w) for i, w in BRAVE_DEFAULT_EXTENSIONS if i not in known]
        self.extensions = {}
        for e in exts:
            if e.id in self.extensions:
                raise ScenarioError(f"duplicate extension {e.id!r}")
            self.extensions[e.id] = e
        self.sites = {}
        for s in sites:
            if s.id in self.sites:
                raise ScenarioError(f"duplicate site {s.id!r}")
            self.sites[s.id] = s
        if not 0.0 <= drop_probability <= 1.0:
            raise ScenarioError("drop_probability must be in [0, 1]")
        self.drop_probability = drop_probability
        self.seed = seed
        for p in self.profiles:
            for e in p.installed:
                if e not in self.extensions:
                    raise ScenarioError(f"profile {p.user_id!r}: unknown extension {e!r}")
            for s in p.logged_in:
                if s not in self.sites:
                    raise ScenarioError(f"profile {p.user_id!r}: unknown site {s!r}")

    def _ext(self, ext_id):
        try:
            return self.extensions[ext_id]
        except KeyError:
            raise ScenarioError(f"unknown extension {ext_id!r}") from None

    def _site(self, site_id):
        try:
            return self.sites[site_id]
        except KeyError:
            raise ScenarioError(f"unknown site {site_id!r}") from None

    def detect_extension(self, profile: SimProfile, ext_id: str) -> DetectionOutcome:
        ext = self._ext(ext_id)
        if not ext.war_detectable or profile.engine is not Engine.CHROMIUM or not profile.js_enabled:
            return UNDETECTABLE
        # one WAR per extension is enough: the load succeeds iff installed
        return DetectionOutcome(ext_id in profile.installed, Channel.WAR)

    def detect_login_redirect(self, profile: SimProfile, site_id: str) -> DetectionOutcome:
        site = self._site(site_id)
        if site.login_redirect is LoginRedirect.NONE:
            raise ScenarioError(f"site {site_id!r} has no login redirect to probe")
        if not profile.js_enabled or not profile.third_party_cookies:
            return UNDETECTABLE
        return DetectionOutcome(site_id in profile.logged_in, Channel.REDIRECT_IMAGE)

    def detect_login_csp(self, profile: SimProfile, site_id: str) -> DetectionOutcome:
        site = self._site(site_id)
        if site.login_redirect is not LoginRedirect.CROSS_DOMAIN_REDIRECT or not profile.third_party_cookies:
            return UNDETECTABLE
        return DetectionOutcome(site_id in profile.logged_in, Channel.CSP_REPORT)

    def _record(self, index: int, profile: SimProfile) -> RawRecord:
        rng = np.random.Generator(np.random.PCG64([self.seed, index])) if self.drop_probability > 0 else None

        def positive(outcome: DetectionOutcome) -> bool:
            if not outcome.detected:
                return False
            return rng is None or rng.random() >= self.drop_probability

        exts = {e for e in self.extensions if positive(self.detect_extension(profile, e))}
        logins = set()
        for s, site in self.sites.items():
            if site.login_redirect is LoginRedirect.NONE:
                continue
            hit = positive(self.detect_login_redirect(profile, s))
            hit = positive(self.detect_login_csp(profile, s)) or hit
            if hit:
                logins.add(s)
        return RawRecord(
            user_id=profile.user_id,
            experiment_seq=1,
            browser_family=profile.browser_family,
            is_mobile=profile.is_mobile,
            user_agent=profile.user_agent,
            screen_resolution=profile.screen_resolution,
            fonts=profile.fonts,
            canvas_hash=profile.canvas_hash,
            extension_detection_error=False,
            js_enabled=profile.js_enabled,
            detected_extensions=frozenset(exts),
            detected_logins=frozenset(logins),
        )

    def run(self) -> list[RawRecord]:
        return [self._record(i, p) for i, p in enumerate(self.profiles)]

    def catalog(self) -> AttributeCatalog:
        """Catalog of everything a probe can ever see: WAR extensions and login sites."""
        attrs = [AttributeDescriptor(e.id, Kind.EXTENSION, Detection.WAR) for e in self.extensions.values() if e.war_detectable]
        for s in self.sites.values():
            if s.login_redirect is LoginRedirect.SAME_DOMAIN_IMAGE:
                attrs.append(AttributeDescriptor(s.id, Kind.LOGIN, Detection.REDIRECT_IMAGE))
            elif s.login_redirect is LoginRedirect.CROSS_DOMAIN_REDIRECT:
                attrs.append(AttributeDescriptor(s.id, Kind.LOGIN, Detection.CSP_REPORT))
        return AttributeCatalog(tuple(attrs))


def detect_extension(scenario: Scenario, profile: SimProfile, ext_id: str) -> DetectionOutcome:
    return scenario.detect_extension(profile, ext_id)


def detect_login_redirect(scenario: Scenario, profile: SimProfile, site_id: str) -> DetectionOutcome:
    return scenario.detect_login_redirect(profile, site_id)


def detect_login_csp(scenario: Scenario, profile: SimProfile, site_id: str) -> DetectionOutcome:
    return scenario.detect_login_csp(profile, site_id)


def run_scenario(profiles, extensions, sites, drop_probability: float = 0.0, seed: int = 0) -> list[RawRecord]:
    return Scenario(extensions, sites, profiles, drop_probability, seed).run()


# scenario files


def _require(obj, key, where):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise ScenarioError(f"{where}: missing field {key!r}") from None


def scenario_from_json(obj: dict) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("scenario: top level must be an object")
    try:
        exts = [
            SimExtension(str(_require(e, "id", f"extensions[{i}]")), tuple(e.get("wars", [])))
            for i, e in enumerate(obj.get("extensions", []))
        ]
        sites = [
            SimSite(str(_require(s, "id", f"sites[{i}]")), s.get("login_redirect", "SameDomainImage"))
            for i, s in enumerate(obj.get("sites", []))
        ]
        profiles = []
        for i, p in enumerate(obj.get("profiles", [])):
            where = f"profiles[{i}]"
            kwargs = {k: p[k] for k in SimProfile.__dataclass_fields__ if k in p}
            kwargs["user_id"] = str(_require(p, "user_id", where))
            try:
                profiles.append(SimProfile(**kwargs))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{where}: {exc}") from None
    except ScenarioError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ScenarioError(f"scenario: {exc}") from None
    return Scenario(exts, sites, profiles, float(obj.get("drop_probability", 0.0)), int(obj.get("seed", 0)))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    try:
        return scenario_from_json(obj)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
