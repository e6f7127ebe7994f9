"""
Ten-second windows and the 350-packet rule
==========================================

A window is malicious when more than 350 of its packets come from the two
attacker addresses.  The attack log gives an independent cross-check.
"""

from coaplab import traffic, windows

cfg = traffic.desk_scale_config()
packets, events = traffic.run_scenario(cfg)

labeled = windows.label_dataset(packets, cfg.malicious_ips)
print(windows.summarize(labeled))

for lw in labeled:
    if lw.label is windows.Label.MALICIOUS:
        n = windows.malicious_count(lw.window, cfg.malicious_ips)
        print(f"window {lw.index:4d} starts {lw.window.start / 1e6:7.1f}s  attacker packets {n}")

# each burst is 300 PUTs per attacker, so the count is 600 > 350
print("disagreements with the attack log:", windows.crosscheck_labels(labeled, events))

# raising the threshold above 600 hides every burst
strict = windows.label_dataset(packets, cfg.malicious_ips, threshold=600)
print("threshold 600:", windows.summarize(strict))
