import dataclasses, json, os, tempfile, time
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in (3, 4, 5, 6, 7, 8, 9, 10):
    tmp = tempfile.mkdtemp()
    cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed)
    wg.write_files(tmp, cat, train, test)
    cfgdoc = {
        "catalog": "catalog.json", "train_workload": "train.json", "test_workload": "test.json",
        "iterations": 0, "eval_interval": 5, "base_seed": 1, "repetitions": 1,
        "model": {"train_passes": 8},
    }
    cfgpath = os.path.join(tmp, "cfg.json")
    with open(cfgpath, "w") as fh: json.dump(cfgdoc, fh)
    cfg = t.load_run_config(cfgpath)
    cfg_r = dataclasses.replace(cfg, transfer=dataclasses.replace(cfg.transfer, enabled=False))
    meta0, rand0, thresholds = [], [], []
    for r in range(6):
        rm = t.run_training(cfg, base_seed=1 + r)
        rr = t.run_training(cfg_r, base_seed=1 + r)
        meta0.append(round(rm.records[0].wrl_test, 2))
        rand0.append(round(rr.records[0].wrl_test, 2))
        tot_mean = sum(rm.baselines[q].mean_latency_ms for q in rm.test_ids)
        tot_tol = sum(rm.baselines[q].tolerance_ms for q in rm.test_ids)
        thresholds.append(round(1.0 + tot_tol / tot_mean, 3))
    print(f"gen {gen_seed} meta0={meta0} rand0={rand0} conv_threshold~{thresholds[0]} ({time.perf_counter()-start:.0f}s)", flush=True)
