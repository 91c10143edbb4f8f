#!/usr/bin/env python3
"""Regenerate fixtures/param_goldens.json from the engine CLI.

Consumes the engine only through its external pool-file interface: each
golden entry is an architecture payload plus the engine's parameter and
FLOP totals.  Collects 20 distinct architectures from the small golden
space plus the fixed reference baseline stack.
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


def pool_records(space: str, n: int, seed: int) -> list[dict]:
    with tempfile.NamedTemporaryFile(suffix=".jsonl", delete=False) as fh:
        out = fh.name
    subprocess.run(["nars", "pool", space, "-n", str(n), "--seed", str(seed), "--out", out],
                   check=True, capture_output=True)
    lines = Path(out).read_text().splitlines()
    return [json.loads(line) for line in lines[1:]]


def main() -> None:
    goldens = []
    seen = set()
    for rec in pool_records(str(FIXTURES / "golden_space.yaml"), 120, 1):
        arch_key = json.dumps(rec["candidate"]["arch"], sort_keys=True)
        if arch_key in seen:
            continue
        seen.add(arch_key)
        goldens.append({"arch": rec["candidate"]["arch"],
                        "params": rec["params"], "flops": rec["flops"]})
        if len(goldens) == 20:
            break
    if len(goldens) < 20:
        sys.exit(f"only {len(goldens)} distinct architectures found")

    baseline = pool_records("fbnetv2_l3", 1, 0)[0]
    goldens.append({"arch": baseline["candidate"]["arch"],
                    "params": baseline["params"], "flops": baseline["flops"]})

    out = FIXTURES / "param_goldens.json"
    out.write_text(json.dumps(goldens, indent=1) + "\n")
    print(f"wrote {len(goldens)} goldens to {out}")


if __name__ == "__main__":
    main()
