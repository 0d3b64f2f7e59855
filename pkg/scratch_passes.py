import dataclasses, json, os, tempfile, time
import numpy as np
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in (1, 2, 3):
    for passes in (4, 8):
        tmp = tempfile.mkdtemp()
        cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed)
        wg.write_files(tmp, cat, train, test)
        cfgdoc = {
            "catalog": "catalog.json", "train_workload": "train.json", "test_workload": "test.json",
            "iterations": 200, "eval_interval": 5, "base_seed": 1, "repetitions": 6,
            "transfer": {"enabled": False},
            "model": {"train_passes": passes},
        }
        cfgpath = os.path.join(tmp, "cfg.json")
        with open(cfgpath, "w") as fh: json.dump(cfgdoc, fh)
        base = t.load_run_config(cfgpath)
        noret = dataclasses.replace(base, retention=dataclasses.replace(base.retention, enabled=False))
        out = {}
        for name, cfg in (("hyb", base), ("nor", noret)):
            both, test_only = [], []
            for r in range(6):
                res = t.run_training(cfg, base_seed=cfg.base_seed + r)
                both.append(res.regression_count("train") + res.regression_count("test"))
                test_only.append(res.regression_count("test"))
            out[name] = (both, test_only)
        hb, nb = out["hyb"][0], out["nor"][0]
        wins = sum(1 for h, n in zip(hb, nb) if h < n)
        losses = sum(1 for h, n in zip(hb, nb) if h > n)
        print(f"gen {gen_seed} passes {passes} hyb={hb} nor={nb} strict_wins={wins} losses={losses} "
              f"({time.perf_counter()-start:.0f}s)", flush=True)
