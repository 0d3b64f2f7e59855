"""Scratch: screen bundled-workload candidates for criterion-7 dynamics."""
import dataclasses
import json
import os
import sys
import tempfile
import time

import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
results = []
for gen_seed in range(1, 13):
    for min_rel in (4, 5):
        tmp = tempfile.mkdtemp()
        cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed, min_relations=min_rel)
        wg.write_files(tmp, cat, train, test)
        cfgdoc = {
            "catalog": "catalog.json",
            "train_workload": "train.json",
            "test_workload": "test.json",
            "iterations": 150,
            "eval_interval": 5,
            "base_seed": 1,
            "repetitions": 3,
            "transfer": {"enabled": False},
        }
        cfgpath = os.path.join(tmp, "cfg.json")
        with open(cfgpath, "w") as fh:
            json.dump(cfgdoc, fh)
        base = t.load_run_config(cfgpath)
        noret = dataclasses.replace(
            base, retention=dataclasses.replace(base.retention, enabled=False)
        )
        row = {"gen_seed": gen_seed, "min_rel": min_rel}
        for name, cfg in (("hyb", base), ("nor", noret)):
            counts = []
            fails = []
            for r in range(3):
                res = t.run_training(cfg, base_seed=cfg.base_seed + r)
                counts.append(res.regression_count("train") + res.regression_count("test"))
                bad = [
                    q
                    for split in ("train", "test")
                    for q, v in res.verdicts(split).items()
                    if v.value != "superior"
                ]
                fails.append(sorted(bad))
            row[name] = counts
            row[name + "_fails"] = fails
        row["gap"] = sum(row["nor"]) - sum(row["hyb"])
        print(json.dumps(row), flush=True)
        results.append(row)
print("# took %.0fs" % (time.perf_counter() - start), file=sys.stderr)
