import dataclasses, statistics, time
import joinopt.trainer as t

start = time.perf_counter()
cfg = t.load_run_config("data/star6/experiment.json")
no_transfer = dataclasses.replace(cfg, transfer=dataclasses.replace(cfg.transfer, enabled=False))
for name, arm in (("maml", cfg), ("random", no_transfer)):
    convs, final_wrl = [], []
    for r in range(6):
        res = t.run_training(arm, base_seed=arm.base_seed + r)
        convs.append(res.convergence())
        final_wrl.append(round(res.final_wrl("test"), 3))
    print(name, "conv:", convs, "final test WRL:", final_wrl,
          "(%.0fs)" % (time.perf_counter() - start), flush=True)
