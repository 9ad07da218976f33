#!/usr/bin/env python3
"""Regenerates the replay-trace fixtures in this directory.

x60_sqlite.jsonl   sampled sqlite3 run on an X60-class core: the three hottest
                   leaf functions carry fixed instruction and cycle totals, the
                   rest of the run is spread over other functions.
stat_x60.jsonl     short trace whose whole-run totals are a fixed
                   instruction/cycle pair.

Output is deterministic for a given seed.
"""
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
SEED = 20240617

# leaf -> (caller chain root-first, instructions, cycles)
HOT = {
    "sqlite3VdbeExec": (["main", "sqlite3_step"], 3_634_478_335, 4_226_137_599),
    "patternCompare": (["main", "sqlite3_step", "sqlite3VdbeExec", "likeFunc"], 2_298_438_217, 2_672_602_578),
    "sqlite3BtreeParseCellPtr": (
        ["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3BtreeMovetoUnpacked"],
        1_905_893_304,
        2_324_260_127,
    ),
}
# sqlite3VdbeExec holds 18.44% of all cycles.
TOTAL_CYCLES = round(4_226_137_599 / 0.1844)
# (caller chain root-first plus leaf, relative share of the remaining cycles, IPC)
# Every cold function stays below the third hottest.
COLD = [
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3VdbeRecordCompare"], 0.14, 0.92),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3VdbeMemRelease"], 0.09, 0.71),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "memcpy"], 0.12, 1.10),
    (["main", "sqlite3_prepare_v2", "sqlite3RunParser"], 0.08, 0.95),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3BtreeNext"], 0.10, 0.80),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3VdbeMemSetStr"], 0.09, 0.77),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3GetVarint"], 0.11, 1.21),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "sqlite3_value_text"], 0.07, 0.88),
    (["main", "sqlite3_step", "sqlite3VdbeExec", "likeFunc", "sqlite3Utf8Read"], 0.10, 1.02),
    (["main", "sqlite3_exec", "malloc"], 0.10, 0.65),
]
N_SAMPLES = 2000
TIDS = [4242, 4243]
PERIOD_NS = 1_003_009


def split(total, parts, rng):
    """`parts` positive integers summing to `total`."""
    cuts = sorted(rng.sample(range(1, total), parts - 1))
    return [b - a for a, b in zip([0] + cuts, cuts + [total])]


def addresses():
    names = sorted({n for chain, *_ in list(HOT.values()) + COLD for n in chain} | set(HOT))
    return {name: 0x10000 + 0x1000 * i for i, name in enumerate(names)}


def build_sqlite(rng):
    cold_cycles = TOTAL_CYCLES - sum(c for _, _, c in HOT.values())
    funcs = []
    for leaf, (chain, instr, cycles) in HOT.items():
        funcs.append((chain + [leaf], instr, cycles))
    shares = [s for _, s, _ in COLD]
    cold_split = [round(cold_cycles * s / sum(shares)) for s in shares]
    cold_split[-1] = cold_cycles - sum(cold_split[:-1])
    for (chain, _, ipc), cycles in zip(COLD, cold_split):
        funcs.append((chain, round(cycles * ipc), cycles))

    events = []
    for stack, instr, cycles in funcs:
        n = max(2, round(N_SAMPLES * cycles / TOTAL_CYCLES))
        for c, i in zip(split(cycles, n, rng), split(instr, n, rng)):
            events.append((stack, i, c, rng.choice(TIDS)))
    rng.shuffle(events)

    addr = addresses()
    cumulative = {t: {"u_mode_cycle": 0, "cycles": 0, "instructions": 0} for t in TIDS}
    lines = []
    for k, (stack, instr, cycles, tid) in enumerate(events):
        acc = cumulative[tid]
        acc["cycles"] += cycles
        acc["u_mode_cycle"] += cycles
        acc["instructions"] += instr
        # return addresses sit inside the caller, the leaf pc at a fixed offset
        chain = [addr[f] + (0x40 if j == 0 else 0x80) for j, f in enumerate(reversed(stack))]
        rec = {
            "ts": 1_000_000_000 + k * PERIOD_NS,
            "pid": TIDS[0],
            "tid": tid,
            "pc": chain[0],
            "stack": chain,
            "counters": dict(acc),
        }
        if k == 0:
            rec["syms"] = {
                f"0x{addr[f] + off:x}": f for f in sorted(addr) for off in (0x40, 0x80)
            }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return lines


def build_stat(rng):
    instr, cycles = 3_634_478_335, 4_226_137_599
    n = 16
    ci, cc = 0, 0
    lines = []
    for k, (i, c) in enumerate(zip(split(instr, n, rng), split(cycles, n, rng))):
        ci += i
        cc += c
        lines.append(json.dumps({
            "ts": 5_000_000 + k * PERIOD_NS,
            "pid": 7,
            "tid": 7,
            "pc": 0x10040,
            "stack": [0x10040, 0x20080],
            "counters": {"u_mode_cycle": cc, "cycles": cc, "instructions": ci},
        }, separators=(",", ":")))
    return lines


def main():
    rng = random.Random(SEED)
    (HERE / "x60_sqlite.jsonl").write_text("\n".join(build_sqlite(rng)) + "\n")
    (HERE / "stat_x60.jsonl").write_text("\n".join(build_stat(rng)) + "\n")
    addr = addresses()
    with open(HERE / "x60_sqlite.syms", "w") as f:
        f.write("# start end name\n")
        for name in sorted(addr, key=addr.get):
            f.write(f"{addr[name]:x} {addr[name] + 0x1000:x} {name}\n")


if __name__ == "__main__":
    main()
