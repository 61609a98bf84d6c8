#!/usr/bin/env python3
"""Run the six-task citation transfer protocol and print micro/macro-F1 tables.

Expects one directory per domain under --data-root:

    <root>/acmv9/      graph.edges graph.attr graph.labels [graph.names]
    <root>/citationv1/ ...
    <root>/dblpv7/     ...

Every ordered pair of domains becomes a task (A=>C, A=>D, C=>A, C=>D, D=>A,
D=>C). Each task is trained with `sgda train --seeds N --label-rate R`, and
the per-seed final metrics are summarized as mean +- sample standard
deviation in percent. Nothing is asserted about the values.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import statistics
import subprocess
import sys
from pathlib import Path

DOMAINS = {"A": "acmv9", "C": "citationv1", "D": "dblpv7"}
TASKS = [("A", "C"), ("A", "D"), ("C", "A"), ("C", "D"), ("D", "A"), ("D", "C")]
VARIANT_FLAGS = {
    "sgda": [],
    "source-only": ["--source-only"],
    "wo-neg": ["--wo-neg"],
    "wo-shift": ["--wo-shift"],
    "wo-at": ["--wo-at"],
    "wo-pl": ["--wo-pl"],
}
FILES = ("edges", "attr", "labels", "names")


def default_binary() -> str:
    here = Path(__file__).resolve().parent.parent
    for candidate in (os.environ.get("SGDA_BIN"), here / "build" / "tools" / "sgda", shutil.which("sgda")):
        if candidate and Path(candidate).exists():
            return str(candidate)
    return "sgda"


def parse_args(argv: list[str]) -> tuple[argparse.Namespace, list[str]]:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="working directory for task inputs and runs")
    p.add_argument("--sgda", default=default_binary(), help="path to the sgda executable")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--label-rate", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--variants", default="sgda", help="comma list of " + ",".join(VARIANT_FLAGS))
    p.add_argument("--domain", action="append", default=[], metavar="KEY=DIR",
                   help="override a domain directory name, e.g. A=acm")
    args, extra = p.parse_known_args(argv)
    if extra and extra[0] == "--":
        extra = extra[1:]
    return args, extra


def stage_task(root: Path, domains: dict[str, str], src: str, tgt: str, dest: Path) -> Path:
    dest.mkdir(parents=True, exist_ok=True)
    for role, key in (("source", src), ("target", tgt)):
        base = root / domains[key]
        for ext in FILES:
            f = base / f"graph.{ext}"
            link = dest / f"{role}.{ext}"
            if link.is_symlink() or link.exists():
                link.unlink()
            if f.exists():
                link.symlink_to(f.resolve())
            elif ext != "names":
                raise SystemExit(f"missing {f}")
    return dest


def summarize(summary: dict) -> dict:
    micro = [100 * r["micro_f1"] for r in summary["runs"]]
    macro = [100 * r["macro_f1"] for r in summary["runs"]]
    sd = (lambda v: statistics.stdev(v) if len(v) > 1 else 0.0)
    return {"micro": (statistics.mean(micro), sd(micro)), "macro": (statistics.mean(macro), sd(macro)),
            "runs": summary["runs"]}


def run_variant(args, extra, domains, variant: str) -> dict:
    results = {}
    for src, tgt in TASKS:
        name = f"{src}_{tgt}"
        data = stage_task(args.data_root, domains, src, tgt, args.out / "tasks" / name)
        out = args.out / "runs" / variant / name
        cmd = [args.sgda, "train", "--data", str(data), "--out", str(out), "--seeds", str(args.seeds),
               "--seed", str(args.seed), "--label-rate", str(args.label_rate), "--jobs", str(args.jobs),
               *VARIANT_FLAGS[variant], *extra]
        print(f"[{variant}] {src}=>{tgt}", file=sys.stderr, flush=True)
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise SystemExit(f"{' '.join(cmd)}\nexit {proc.returncode}: {proc.stderr}")
        summary = json.loads((out / "summary.json").read_text())
        if "runs" not in summary:
            # --seeds 1 writes a single-run summary.
            summary = {"runs": [{"seed": args.seed, **{k: summary["final"][k] for k in ("micro_f1", "macro_f1")}}]}
        results[f"{src}=>{tgt}"] = summarize(summary)
    return results


def table(all_results: dict[str, dict]) -> str:
    tasks = [f"{s}=>{t}" for s, t in TASKS]
    head = "| Method | " + " | ".join(f"{t} Micro | {t} Macro" for t in tasks) + " |"
    rule = "|---" * (1 + 2 * len(tasks)) + "|"
    lines = [head, rule]
    for variant, res in all_results.items():
        cells = []
        for t in tasks:
            for metric in ("micro", "macro"):
                m, s = res[t][metric]
                cells.append(f"{m:.1f} ± {s:.2f}")
        lines.append(f"| {variant} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def main(argv: list[str]) -> int:
    args, extra = parse_args(argv)
    domains = dict(DOMAINS)
    for item in args.domain:
        key, _, value = item.partition("=")
        if key not in domains or not value:
            raise SystemExit(f"bad --domain {item!r}")
        domains[key] = value
    variants = [v for v in args.variants.split(",") if v]
    for v in variants:
        if v not in VARIANT_FLAGS:
            raise SystemExit(f"unknown variant {v!r}")
    args.out.mkdir(parents=True, exist_ok=True)
    all_results = {v: run_variant(args, extra, domains, v) for v in variants}
    text = table(all_results)
    (args.out / "results.md").write_text(text)
    (args.out / "results.json").write_text(json.dumps(all_results, indent=2) + "\n")
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
