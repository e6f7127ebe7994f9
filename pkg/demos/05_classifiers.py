"""
Five detectors on the desk-scale dataset
========================================

Flat models see each window as one row-major vector; the LSTM reads it
packet by packet.  The split is 80/20 and stratified.
"""

from coaplab import pipeline, traffic, windows

cfg = pipeline.RunConfig()
packets, _ = traffic.run_scenario(cfg.scenario)
labeled = windows.label_dataset(packets, cfg.scenario.malicious_ips)
data = pipeline.prepare_dataset(labeled, seed=pipeline.stage_seed(cfg.seed, "split"))
print(f"train {len(data.train)} windows ({data.train.y.sum()} malicious), "
      f"test {len(data.test)} ({data.test.y.sum()} malicious)")

for name in pipeline.MODEL_NAMES:
    seed = pipeline.stage_seed(cfg.seed, name)
    model = pipeline.fit_model(name, data.train, seed, cfg.hyper)
    entry = pipeline.evaluate_model(name, model, data.test, seed)
    cm = entry["confusion_matrix"]
    print(f"{name:7s} {entry['accuracy']:6.2f}%  tp={cm['tp']} fp={cm['fp']} fn={cm['fn']} tn={cm['tn']}")
