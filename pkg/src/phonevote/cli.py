"""``simulate`` command line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import ConfigError, ParameterError
from .harness import AXES, load_config, run_replications, sweep, sweep_to_csv
from .stoptime import DOMAIN_TAGS, commit, verify_commitment


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    config = load_config(args.config)
    results = run_replications(config)
    _write(args.out, "".join(r.to_json() + "\n" for r in results))
    print(f"wrote {len(results)} replications to {args.out}")
    return 0


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"--values: {exc}") from exc


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    rows = sweep(config, args.axis, _parse_values(args.values), replications=args.replications)
    out = Path(args.out)
    if out.suffix == ".csv":
        _write(str(out), sweep_to_csv(rows))
    else:
        _write(str(out), "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in rows))
        _write(args.csv or str(out.with_suffix(".csv")), sweep_to_csv(rows))
    for r in rows:
        print(f"{r.axis}={r.axis_value:g}: flip {r.flip_prob:.3f} +- {r.flip_se:.3f}, "
              f"cost {r.mean_cost:.2f}, detect {r.detect_prob:.3f}")
    return 0


def cmd_commit(args) -> int:
    rec = commit(args.payload.encode("utf-8"), tag=DOMAIN_TAGS[args.domain])
    print(json.dumps({"digest": rec.digest_hex, "nonce": rec.nonce_hex, "domain": args.domain}))
    return 0


def cmd_verify_commit(args) -> int:
    try:
        digest = bytes.fromhex(args.digest)
        nonce = bytes.fromhex(args.nonce)
    except ValueError:
        print("error: digest and nonce must be hex", file=sys.stderr)
        return 2
    ok = verify_commitment(digest, args.payload.encode("utf-8"), nonce, tag=DOMAIN_TAGS[args.domain])
    print("valid" if ok else "invalid")
    return 0 if ok else 1


def _quantiles(xs: Sequence[float]) -> str:
    q = np.quantile(np.asarray(xs, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return "min {:.2f} / q25 {:.2f} / median {:.2f} / q75 {:.2f} / max {:.2f}".format(*q)


def render_report(results: Sequence[dict]) -> str:
    lines = [f"replications: {len(results)}"]
    if not results:
        lines.append("flips: 0")
        return "\n".join(lines) + "\n"
    tallies = np.asarray([r["official_tally"] for r in results], dtype=float)
    true = np.asarray([r["true_preference_tally"] for r in results], dtype=float)
    lines.append("mean official tally: " + ", ".join(f"c{i}={v:.1f}" for i, v in enumerate(tallies.mean(0))))
    lines.append("mean true tally:     " + ", ".join(f"c{i}={v:.1f}" for i, v in enumerate(true.mean(0))))
    flips = sum(1 for r in results if r.get("flipped"))
    lines.append(f"flips: {flips}")
    lines.append(f"flip rate: {flips / len(results):.4f}")
    lines.append("adversary cost: " + _quantiles([r["adversary_cost"] for r in results]))
    lines.append(f"receipts sent (mean): {np.mean([r['receipts_sent'] for r in results]):.1f}")
    detected = sum(1 for r in results if r.get("detected"))
    lines.append(f"replications with detections: {detected}")
    # flag identity -> (replications, min count, max count, threshold text)
    seen: dict[str, list] = {}

    def note(key: str, count: float, threshold: str, rep: int) -> None:
        entry = seen.setdefault(key, [set(), count, count, threshold])
        entry[0].add(rep)
        entry[1], entry[2] = min(entry[1], count), max(entry[2], count)

    for i, r in enumerate(results):
        det = r.get("detections", {})
        for f in det.get("flagged_devices", []):
            note(f"device {f['device']} (region {f['region']}) [{f['basis']}]", f["count"],
                 f"threshold {f['threshold']}", i)
        for f in det.get("flagged_signatures", []):
            note(f"signature {f['signature_tag']}", f["count"], f"threshold {f['threshold']}", i)
        for f in det.get("silent_regions", []):
            note(f"silent region {f['region']} ({f['population']} voters)", 0,
                 f"min_expected {f['min_expected']}", i)
        for f in r.get("false_counter_flags", []):
            note(f"false counter authority {f['authority']}", round(f["z"], 1), f"z_crit {f['z_crit']}", i)
    for key in sorted(seen):
        reps, lo, hi, threshold = seen[key]
        span = f"{lo:g}" if lo == hi else f"{lo:g}-{hi:g}"
        lines.append(f"  flag {key}: count/z {span}, {threshold}, in {len(reps)} replications")
    bad = [r["replication"] for r in results
           if not r["commitments"]["stop_time"] or not all(r["commitments"]["counts"])]
    lines.append("commitments: all verified" if not bad else f"commitments: FAILED in replications {bad}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.exists():
        print(f"error: results file {path} not found", file=sys.stderr)
        return 2
    results = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            row["official_tally"], row["true_preference_tally"], row["commitments"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            print(f"error: {path}:{n}: not an election result ({exc})", file=sys.stderr)
            return 2
        results.append(row)
    sys.stdout.write(render_report(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Phone-voting protocol simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run replicated elections")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="CSV path (default: --out with .csv suffix)")
    s.add_argument("--replications", type=int)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("commit", help="commit to a payload")
    c.add_argument("--payload", required=True)
    c.add_argument("--domain", choices=sorted(DOMAIN_TAGS), default="stop-time")
    c.set_defaults(func=cmd_commit)

    v = sub.add_parser("verify-commit", help="check a revealed commitment")
    v.add_argument("--digest", required=True)
    v.add_argument("--payload", required=True)
    v.add_argument("--nonce", required=True)
    v.add_argument("--domain", choices=sorted(DOMAIN_TAGS), default="stop-time")
    v.set_defaults(func=cmd_verify_commit)

    rep = sub.add_parser("report", help="summarise a results file")
    rep.add_argument("--in", dest="input", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
