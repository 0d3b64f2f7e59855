import dataclasses, json, math, os, statistics, tempfile, time
import joinopt.trainer as t
import joinopt.workload_gen as wg

start = time.perf_counter()
for gen_seed in (17, 21, 16, 31):
    tmp = tempfile.mkdtemp()
    cat, train, test = wg.generate(6, "star", 10, 3, seed=gen_seed)
    wg.write_files(tmp, cat, train, test)
    cfgdoc = {
        "catalog": "catalog.json", "train_workload": "train.json", "test_workload": "test.json",
        "iterations": 200, "eval_interval": 5, "base_seed": 1, "repetitions": 6,
        "model": {"train_passes": 8},
    }
    cfgpath = os.path.join(tmp, "cfg.json")
    with open(cfgpath, "w") as fh: json.dump(cfgdoc, fh)
    cfg = t.load_run_config(cfgpath)
    no_transfer = dataclasses.replace(cfg, transfer=dataclasses.replace(cfg.transfer, enabled=False))
    no_both = dataclasses.replace(no_transfer, retention=dataclasses.replace(no_transfer.retention, enabled=False))
    arms = {}
    for name, arm in (("hyb", no_transfer), ("nor", no_both), ("maml", cfg)):
        arms[name] = [t.run_training(arm, base_seed=arm.base_seed + r) for r in range(6)]
    hyb = [r.regression_count("train") + r.regression_count("test") for r in arms["hyb"]]
    nor = [r.regression_count("train") + r.regression_count("test") for r in arms["nor"]]
    wins = sum(1 for h, n in zip(hyb, nor) if h < n)
    conv_m = [r.convergence() for r in arms["maml"]]
    conv_r = [r.convergence() for r in arms["hyb"]]
    med = lambda vs: statistics.median([math.inf if v is None else v for v in vs])
    nc = lambda vs: sum(1 for v in vs if v is None)
    c7 = statistics.median(hyb) <= statistics.median(nor) and wins >= 4
    c8 = med(conv_m) <= med(conv_r) and nc(conv_m) <= nc(conv_r)
    print(f"gen {gen_seed}: c7={'PASS' if c7 else 'FAIL'} hyb={hyb} nor={nor} wins={wins}", flush=True)
    print(f"         c8={'PASS' if c8 else 'FAIL'} maml_conv={conv_m} rand_conv={conv_r} ({time.perf_counter()-start:.0f}s)", flush=True)
