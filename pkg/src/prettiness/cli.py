"""Command-line front end.

    prettiness run --scenario s.json --seed 7 [--out DIR]
    prettiness diff --random 1000 --seed 7
    prettiness leakcheck [--row AMS+RP]
    prettiness bench --N 100 --n 10 --m 1000000 --seed 0 [--format csv]
    prettiness logs --scenario s.json --seed 7 [--user alice]
    prettiness demo

Exit codes: 0 success, 1 a check failed, 2 usage or scenario error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import jsonschema

from . import bench
from . import harness as hz
from . import parties as P
from .crypto_suite import FULL, TEST, Rng
from .wire import _jsonable

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def data_file(name: str) -> str:
    return resources.files("prettiness").joinpath("data", name).read_text()


def load_scenario(path: str) -> list[dict]:
    try:
        script = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read scenario {path}: {e}") from e
    try:
        jsonschema.validate(script, json.loads(data_file("scenario.schema.json")))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path)
        raise UsageError(f"scenario {path} invalid at {where or 'top level'}: {e.message}") from e
    return script


def make_config(args) -> P.Config:
    suite = FULL if args.suite == "full" else TEST
    return P.Config(suite=suite, L=args.L, T0=args.T0, delta=args.delta)


def out_dir(args) -> Path | None:
    if not args.out:
        return None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- commands ----------------------------------------------------------------------


def cmd_run(args) -> int:
    script = load_scenario(args.scenario)
    result = hz.run_scenario(script, args.seed, make_config(args))
    mism = result.mismatches()
    print(f"{len(script)} events, {len(result.transcript.messages)} messages, "
          f"{result.transcript.total()} bytes, {len(mism)} output differences")
    for i, err in sorted(result.errors.items()):
        print(f"  event {i} ({script[i]['op']}): {err}")
    d = out_dir(args)
    if d:
        hz.export_jsonl(result, d / "transcript.jsonl")
        (d / "outputs.json").write_text(json.dumps(
            {"real": hz.outputs_jsonable(result.real), "ideal": hz.outputs_jsonable(result.ideal)}, indent=1))
        with open(d / "leak_log.jsonl", "w") as f:
            for rec in result.leak_log:
                f.write(json.dumps({k: _jsonable(v) for k, v in rec.items()}, sort_keys=True) + "\n")
        print(f"wrote {d}")
    return EXIT_OK


def cmd_diff(args) -> int:
    config = make_config(args)
    t0 = time.perf_counter()
    failures = []
    if args.scenario:
        script = load_scenario(args.scenario)
        result = hz.run_scenario(script, args.seed, config)
        failures += [(0, f"{r} != {i}") for r, i in result.mismatches()]
        runs = 1
    else:
        root = Rng(args.seed)
        runs = args.random
        for k in range(runs):
            script = hz.random_honest_script(root.fork(f"script/{k}"))
            result = hz.run_scenario(script, args.seed * 1_000_003 + k, config)
            failures += [(k, p) for p in hz.audit_honest(script, result)]
    dt = time.perf_counter() - t0
    for k, p in failures[:20]:
        print(f"script {k}: {p}")
    print(f"{runs} scripts, {len(failures)} problems, {dt:.1f} s")
    d = out_dir(args)
    if d:
        (d / "diff_report.json").write_text(json.dumps(
            {"scripts": runs, "seconds": dt, "problems": [[k, p] for k, p in failures]}, indent=1))
    return EXIT_FAIL if failures else EXIT_OK


def cmd_leakcheck(args) -> int:
    rows = [args.row] if args.row else list(hz.ROWS)
    bad = 0
    for row in rows:
        if row not in hz.ROWS:
            raise UsageError(f"unknown row {row!r}; choose from {', '.join(hz.ROWS)}")
        try:
            got = hz.assert_leakage(row, args.seed, make_config(args))
            print(f"ok   {row:14} issue={got['issue']} revoke={got['revoke']} present={got['present']}")
        except hz.LeakViolation as e:
            bad += 1
            print(f"FAIL {e}")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_bench(args) -> int:
    params = bench.Params(N=args.N, n=args.n, m=args.m)
    suite = FULL if args.suite == "full" else TEST
    report = bench.measure_all(params, args.seed, suite)
    text = bench.emit_tables(report, args.format)
    print(text, end="")
    bad = [r for r in bench.ROUTINES if report.rows[r].bytes != report.predicted(r)]
    for r in bad:
        print(f"accounting mismatch in {r}: measured {report.rows[r].bytes}, predicted {report.predicted(r)}",
              file=sys.stderr)
    d = out_dir(args)
    if d:
        (d / f"bench.{args.format}").write_text(text)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_logs(args) -> int:
    script = load_scenario(args.scenario)
    result = hz.run_scenario(script, args.seed, make_config(args))
    dep = result.world.dep
    users = [args.user] if args.user else sorted(dep.users)
    for uid in users:
        if uid not in dep.users:
            raise UsageError(f"no user {uid!r} in scenario")
        print(f"AMS log for {uid}:")
        for rec in dep.ams.log:
            if rec.uid == uid:
                print(f"  t={rec.time} tag={int(rec.tag)} status={rec.status} fields={sorted(rec.fields)}")
        print(f"decrypted by {uid}:")
        for entry in P.read_log(dep, uid):
            details = " ".join(f"{k}={','.join(v) if isinstance(v, tuple) else v}"
                               for k, v in entry.details.items())
            print(f"  t={entry.time} {entry.routine} {details}")
    return EXIT_OK


STEPS = {
    "open": "channel set-up (not metered)",
    "tsign": "split signature, one leg",
    "tsign-fail": "signing refused",
    "request": "signed request checked by the server",
    "issuer-auth": "server names the issuer it forwards to",
    "forward": "request forwarded to the issuer",
    "rev-issue": "registry issues a revocation token",
    "rev_U": "user hands its token to the issuer",
    "cred": "encrypted credential with issuer signature",
    "tdec": "blind decryption, one leg",
    "accept": "user accepts, server keeps the backup",
    "notify": "revocation list download",
    "challenge": "relying party's fresh challenge",
    "bundle": "presentation with openings and signature",
    "rev-verify": "token freshness against the verifier's snapshot",
    "rev-revoke": "registry revocation and receipt",
    "local": "party-local bookkeeping (not sent)",
}


def cmd_demo(args) -> int:
    script = json.loads(data_file("demo.json"))
    result = hz.run_scenario(script, args.seed, make_config(args))
    by_sid: dict[int, list] = {}
    for m in result.transcript.messages:
        by_sid.setdefault(m.sid, []).append(m)
    verdicts = []
    outs = {}
    for i, party, kind, v in result.real:
        outs.setdefault(i, v)
    for i, ev in enumerate(script):
        desc = " ".join(f"{k}={v}" for k, v in ev.items() if k != "op")
        print(f"\n[{i}] {ev['op']} {desc}")
        for m in by_sid.get(i + 1, []):
            size = f"{m.nbytes:>7,} B" if m.metered else "        -"
            print(f"    {m.routine:9} {m.sender:>9} -> {m.receiver:<9} {m.label:<11} {size}  {STEPS.get(m.label, '')}")
        if ev["op"] == "verify":
            v = outs.get(i)
            verdicts.append(None if v is None else v[1])
            print(f"    verdict: {verdicts[-1]}")
        elif i in result.errors:
            print(f"    failed: {result.errors[i]}")
    print(f"\nverdicts {verdicts}: the second verify still passes on the shop's old snapshot; "
          "after the shop refreshes it the revoked credential is rejected.")
    return EXIT_OK if verdicts == [1, 1, 0] else EXIT_FAIL


# -- parsing -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prettiness", description=__doc__.split("\n\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--suite", choices=("test", "full"), default="test", help="key sizes (default: test)")
    common.add_argument("--L", type=int, default=10_000, help="PIN space size")
    common.add_argument("--T0", type=int, default=3, help="wrong PINs before lockout")
    common.add_argument("--delta", type=int, default=10**6, help="expiry age for backups and revocations")
    common.add_argument("--out", help="directory for reports")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("diff", parents=[common], help="compare real and ideal outputs")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario")
    g.add_argument("--random", type=int, metavar="K", help="K random honest scripts")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("leakcheck", parents=[common], help="check what each coalition learns")
    p.add_argument("--row", help="one coalition, e.g. AMS+RP")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_leakcheck)

    p = sub.add_parser("bench", parents=[common], help="byte and time tables")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=10**6)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--format", choices=("txt", "csv"), default="txt")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("logs", parents=[common], help="dump and decrypt AMS logs after a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--user")
    p.set_defaults(fn=cmd_logs)

    p = sub.add_parser("demo", parents=[common], help="narrated issue, present, verify and revoke")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            if args.suite == "test":
                warnings.simplefilter("ignore", UserWarning)
            return args.fn(args)
    except (UsageError, hz.ScriptError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
