import dataclasses, json, os, tempfile, time
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in (1, 2, 5):
    for decay in (0.99, 0.995):
        tmp = tempfile.mkdtemp()
        cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed, min_relations=4)
        wg.write_files(tmp, cat, train, test)
        cfgdoc = {
            "catalog": "catalog.json", "train_workload": "train.json", "test_workload": "test.json",
            "iterations": 200, "eval_interval": 5, "base_seed": 1, "repetitions": 3,
            "transfer": {"enabled": False},
            "search": {"epsilon": 0.5, "epsilon_decay": decay},
        }
        cfgpath = os.path.join(tmp, "cfg.json")
        with open(cfgpath, "w") as fh: json.dump(cfgdoc, fh)
        base = t.load_run_config(cfgpath)
        noret = dataclasses.replace(base, retention=dataclasses.replace(base.retention, enabled=False))
        out = {}
        for name, cfg in (("hyb", base), ("nor", noret)):
            counts = []
            for r in range(3):
                res = t.run_training(cfg, base_seed=cfg.base_seed + r)
                counts.append(res.regression_count("train") + res.regression_count("test"))
            out[name] = counts
        print("gen", gen_seed, "decay", decay, out, "%.0fs" % (time.perf_counter() - start), flush=True)
