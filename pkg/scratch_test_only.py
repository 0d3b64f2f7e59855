import dataclasses, json, os, tempfile, time
import numpy as np
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in (1, 2, 3, 4, 5, 6):
    tmp = tempfile.mkdtemp()
    cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed)
    wg.write_files(tmp, cat, train, test)
    cfgdoc = {
        "catalog": "catalog.json", "train_workload": "train.json", "test_workload": "test.json",
        "iterations": 200, "eval_interval": 5, "base_seed": 1, "repetitions": 6,
        "transfer": {"enabled": False},
    }
    cfgpath = os.path.join(tmp, "cfg.json")
    with open(cfgpath, "w") as fh: json.dump(cfgdoc, fh)
    base = t.load_run_config(cfgpath)
    noret = dataclasses.replace(base, retention=dataclasses.replace(base.retention, enabled=False))
    out = {}
    for name, cfg in (("hyb", base), ("nor", noret)):
        test_counts, both_counts, flux = [], [], []
        for r in range(6):
            res = t.run_training(cfg, base_seed=cfg.base_seed + r)
            test_counts.append(res.regression_count("test"))
            both_counts.append(res.regression_count("test") + res.regression_count("train"))
            tail = [rec.wrl_test for rec in res.records[-10:]]
            flux.append(round(float(np.std(tail)), 4))
        out[name] = (test_counts, both_counts, flux)
    print("gen", gen_seed, flush=True)
    for name, (tc, bc, fx) in out.items():
        print("  ", name, "test:", tc, "both:", bc, "tail_wrl_std:", fx, flush=True)
print("# %.0fs" % (time.perf_counter() - start), flush=True)
