import dataclasses, json, os, statistics, tempfile, time
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in range(11, 41):
    tmp = tempfile.mkdtemp()
    try:
        cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed)
    except Exception as e:
        print(f"gen {gen_seed}: generate failed {e}", flush=True)
        continue
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
    meta_under, rand_over = 0, 0
    for r in range(4):
        rm = t.run_training(cfg, base_seed=1 + r)
        rr = t.run_training(cfg_r, base_seed=1 + r)
        tot_mean = sum(rm.baselines[q].mean_latency_ms for q in rm.test_ids)
        tot_tol = sum(rm.baselines[q].tolerance_ms for q in rm.test_ids)
        thr = 1.0 + tot_tol / tot_mean
        if rm.records[0].wrl_test <= thr:
            meta_under += 1
        if rr.records[0].wrl_test > thr:
            rand_over += 1
    verdict = "CAND" if meta_under >= 3 and rand_over >= 2 else "skip"
    print(f"gen {gen_seed}: meta_under_band={meta_under}/4 rand_over_band={rand_over}/4 {verdict} "
          f"({time.perf_counter()-start:.0f}s)", flush=True)
