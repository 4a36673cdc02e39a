"""Command-line front end: ingest, analyze, attack, tradeoff, simulate, synth.

Data goes to ``--out`` (or stdout); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import detection, synth
from .catalog import CatalogError, Kind, load_catalog, save_catalog
from .cleaning import RULES, CleaningConfig, clean
from .dataset import SELECTIONS, BinaryDataset, DatasetError, build_dataset, select
from .fingerprint import StopCriteria, general_template, targeted_pattern
from .metrics import (
    DEFAULT_BINS,
    AnonymityHistogram,
    anonymity_histogram,
    combination_uniqueness,
    partition,
    shannon_entropy,
    uniqueness_by_min_detected,
)
from .records import RecordParseError, dumps_records, read_records
from .snapshot import SnapshotError, load_snapshot, save_snapshot

log = logging.getLogger("fpuniq")

MAX_PRIVACY_ATTRS = 5


class CliError(Exception):
    pass


def pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def _emit(args, payload, rows=None):
    """Write JSON (default) or CSV ``rows`` to ``--out`` / stdout."""
    if args.format == "csv":
        if rows is None:
            raise CliError("this command has no CSV form")
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2) + "\n"
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args) -> BinaryDataset:
    catalog = load_catalog(args.catalog)
    ds = load_snapshot(args.snapshot, catalog)
    selected = select(ds, args.selector)
    if selected.n == 0:
        raise CliError(f"selection {args.selector!r} contains no users")
    return selected


# subcommands


def cmd_ingest(args) -> int:
    catalog = load_catalog(args.catalog)
    records = read_records(args.records)
    config = CleaningConfig(
        **{rule: rule not in args.skip for rule in RULES[:-1]},
        max_experiments=None if "max_experiments" in args.skip else args.max_experiments,
        keep_best_experiment=not args.keep_all_experiments,
    )
    kept, report = clean(records, config)
    ds = build_dataset(kept, catalog, allow_empty=args.allow_empty)
    save_snapshot(ds, args.snapshot_out)
    log.info("wrote snapshot %s: %d users x %d attributes", args.snapshot_out, ds.n, ds.m)
    rows = [("rule", "users")] + report.rows()
    _emit(args, report.to_json() | {"rows": report.rows()}, rows)
    return 0


def _group_entropies(ds: BinaryDataset) -> dict:
    out = {"all": shannon_entropy(ds).to_json()}
    for kind, name in ((Kind.EXTENSION, "extensions"), (Kind.LOGIN, "logins")):
        cols = ds.columns_of_kind(kind)
        if cols:
            out[name] = shannon_entropy(ds, [ds.catalog.attributes[j].id for j in cols]).to_json()
    return out


def cmd_analyze(args) -> int:
    ds = _load(args)
    thresholds = [int(t) for t in args.thresholds.split(",")] if args.thresholds else [1, 2, 3, 4]
    extra = None
    report = {"selector": args.selector, "n": ds.n, "m": ds.m}
    if args.selector == "csp-only":
        # JavaScript off: only CSP-detectable logins plus the user agent are visible
        extra = list(ds.user_agents)
        report["csp_logins_only"] = anonymity_histogram(ds).to_json()
        report["user_agent_only"] = _ua_only(ds)
    hist = anonymity_histogram(ds, extra_keys=extra)
    bins = hist.binned(DEFAULT_BINS) if args.bins == "paper-bins" else sorted((str(k), v) for k, v in hist.sizes.items())
    report.update(
        histogram=hist.to_json(),
        bins=[[label, count] for label, count in bins],
        uniqueness=hist.uniqueness,
        entropy=_group_entropies(ds) if extra is None else {"all": shannon_entropy(ds, extra_keys=extra).to_json()},
        thresholds={
            name: {str(t): u for t, u in uniqueness_by_min_detected(ds, kind, thresholds).items()}
            for kind, name in ((Kind.EXTENSION, "extensions"), (Kind.LOGIN, "logins"))
            if ds.columns_of_kind(kind)
        },
    )
    log.info("%s: %d users, %s unique", args.selector, ds.n, pct(hist.uniqueness))
    _emit(args, report, [("bin", "count")] + bins)
    return 0


def _ua_only(ds: BinaryDataset) -> dict:
    _, counts = np.unique(np.asarray(ds.user_agents, dtype=str), return_counts=True)
    return AnonymityHistogram.from_group_counts(counts).to_json()


def _length_summary(ds, patterns, full_unique):
    detected = ds.row_counts
    out = {}
    for name, flag in (("unique", True), ("non_unique", False)):
        sel = [(len(p), int(detected[ds.user_index(p.owner)])) for p in patterns if full_unique[p.owner] == flag]
        lengths = [a for a, _ in sel]
        out[name] = {
            "users": len(sel),
            "mean_pattern_length": float(np.mean(lengths)) if sel else None,
            "mean_detected": float(np.mean([b for _, b in sel])) if sel else None,
            "pattern_length_distribution": {str(k): lengths.count(k) for k in sorted(set(lengths))},
        }
    return out


def cmd_attack(args) -> int:
    ds = _load(args)
    if args.mode == "targeted":
        users = [args.user] if args.user else list(ds.user_ids)
        for u in users:
            ds.user_index(u)
        labels, counts = partition(ds)
        full_unique = {u: bool(counts[labels[i]] == 1) for i, u in enumerate(ds.user_ids)}
        patterns = [targeted_pattern(ds, u) for u in users]
        summary = _length_summary(ds, patterns, full_unique)
        payload = {"mode": "targeted", "patterns": [p.to_json() for p in patterns], "summary": summary}
        rows = [("owner", "pattern_length", "achieved_unique")] + [(p.owner, len(p), p.achieved_unique) for p in patterns]
        log.info("%d patterns; mean length unique=%s non-unique=%s", len(patterns),
                 summary["unique"]["mean_pattern_length"], summary["non_unique"]["mean_pattern_length"])
    else:
        allowed = None
        if args.stable_only:
            allowed = [a.id for a in ds.catalog if ds.catalog.is_stable(a.id)]
            if not allowed:
                raise CliError("no stable attributes in selection")
        stop = StopCriteria(
            target_uniqueness=args.target,
            tolerance=args.tolerance,
            max_attributes=args.max_attributes,
            relative=not args.absolute,
        )
        target = args.target if args.target is not None else anonymity_histogram(ds, allowed).uniqueness
        template = general_template(ds, stop, allowed=allowed, objective=args.objective, workers=args.workers)
        payload = {
            "mode": "general",
            "template": template.to_json(),
            "target_uniqueness": target,
            "final_uniqueness": template.uniqueness,
            "length": len(template),
        }
        rows = [("step", "attribute", "uniqueness")] + [
            (k + 1, a, u) for k, (a, u) in enumerate(zip(template.attributes, template.trace))
        ]
        log.info("template of %d attributes: %s unique (level A %s)", len(template), pct(template.uniqueness), pct(target))
    _emit(args, payload, rows)
    return 0


def _combo_key(combo) -> str:
    return "+".join(combo) if combo else "none"


def cmd_tradeoff(args) -> int:
    ds = _load(args)
    privacy = [a for a in args.privacy.split(",") if a]
    if len(privacy) > MAX_PRIVACY_ATTRS:
        raise CliError(f"at most {MAX_PRIVACY_ATTRS} privacy attributes ({2 ** MAX_PRIVACY_ATTRS} combinations)")
    ds.catalog.indices(privacy)
    metrics = json.loads(Path(args.metrics).read_text()) if args.metrics else {}
    out = []
    for r in range(len(privacy) + 1):
        for combo in itertools.combinations(privacy, r):
            u, hist = combination_uniqueness(ds, privacy, combo)
            key = _combo_key(combo)
            row = {"combination": list(combo), "key": key, "uniqueness": u, "n": hist.n}
            if key in metrics:
                row["metrics"] = metrics[key]
            out.append(row)
    metric_names = sorted({k for row in out if isinstance(row.get("metrics"), dict) for k in row["metrics"]})
    rows = [("combination", "uniqueness", *metric_names)] + [
        (row["key"], row["uniqueness"], *[row.get("metrics", {}).get(k, "") for k in metric_names]) for row in out
    ]
    _emit(args, {"privacy_attributes": privacy, "rows": out}, rows)
    return 0


def _write_records(args, records, catalog):
    text = dumps_records(records)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.catalog_out:
        save_catalog(catalog, args.catalog_out)


def cmd_simulate(args) -> int:
    scenario = detection.load_scenario(args.scenario)
    records = scenario.run()
    _write_records(args, records, scenario.catalog())
    log.info("simulated %d profiles", len(records))
    return 0


def cmd_synth(args) -> int:
    spec = synth.load_spec(args.spec)
    if args.seed is not None:
        spec = synth.PopulationSpec(**{**spec.__dict__, "seed": args.seed})
    records = synth.generate(spec)
    _write_records(args, records, spec.catalog())
    log.info("generated %d synthetic users", len(records))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (where applicable)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress the summary on stderr")

    snap = argparse.ArgumentParser(add_help=False)
    snap.add_argument("snapshot")
    snap.add_argument("--catalog", required=True)
    snap.add_argument("--selector", choices=sorted(SELECTIONS), default="all")

    p = argparse.ArgumentParser(prog="fpuniq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="clean raw records and write a dataset snapshot")
    s.add_argument("--records", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--snapshot-out", required=True)
    s.add_argument("--max-experiments", type=int, default=4)
    s.add_argument("--skip", action="append", default=[], choices=RULES, help="disable a cleaning rule")
    s.add_argument("--keep-all-experiments", action="store_true")
    s.add_argument("--allow-empty", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("analyze", parents=[common, snap], help="anonymity sets, entropy, threshold curves")
    s.add_argument("--bins", choices=("paper-bins", "raw"), default="paper-bins")
    s.add_argument("--thresholds", help="comma-separated minimum detected counts (default 1,2,3,4)")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("attack", parents=[common, snap], help="targeted patterns or a general template")
    s.add_argument("--mode", choices=("targeted", "general"), required=True)
    s.add_argument("--user", help="target user (targeted mode; default: every user)")
    s.add_argument("--tolerance", type=float, default=0.01)
    s.add_argument("--absolute", action="store_true", help="compare A - B to the tolerance itself")
    s.add_argument("--target", type=float, default=None, help="level A (default: all-attribute uniqueness)")
    s.add_argument("--max-attributes", type=int, default=None)
    s.add_argument("--stable-only", action="store_true")
    s.add_argument("--objective", choices=("entropy", "singletons"), default="entropy")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("tradeoff", parents=[common, snap], help="uniqueness per privacy-attribute combination")
    s.add_argument("--privacy", required=True, help="comma-separated attribute ids (at most 5)")
    s.add_argument("--metrics", help="JSON object keyed by combination ('A+B', 'none') passed through verbatim")
    s.set_defaults(func=cmd_tradeoff, selector="ext")

    s = sub.add_parser("simulate", parents=[common], help="run a detection scenario, emit JSON Lines records")
    s.add_argument("scenario")
    s.add_argument("--catalog-out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic population as JSON Lines records")
    s.add_argument("spec")
    s.add_argument("--catalog-out")
    s.set_defaults(func=cmd_synth)
    return p


def _configure_logging(quiet: bool) -> None:
    # own handler bound to the current stderr, so repeated main() calls behave
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    try:
        return args.func(args)
    except (CliError, CatalogError, DatasetError, SnapshotError, RecordParseError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
