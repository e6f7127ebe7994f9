"""
Regenerating the four-host CoAP lab
===================================

One server, one benign client and two attackers exchange CoAP over UDP on a
virtual clock.  The attackers fire 300 oversized PUTs every ten minutes.
"""

import numpy as np

from coaplab import capture, traffic
from coaplab.coap import decode_message

# the default config is the one-hour desk-scale run
cfg = traffic.desk_scale_config()
for ep in cfg.endpoints:
    print(f"{ep.role.value:9s} {ep.ip}:{ep.port}  {ep.mac}")

packets, events = traffic.run_scenario(cfg)
print(f"\n{len(packets)} packets, {len(events)} logged bursts")

# a peek at the first benign exchange
first = next(p for p in packets if p.src_ip == "192.168.1.2")
msg = decode_message(first.payload)
print(f"benign {msg.code.name} mid={msg.message_id} payload={len(msg.payload)}B ip_len={first.ip_len}")

# and at one attack datagram: 20 + 8 + 4 header + 2 token + 5 option + 1 marker + 9203
attack = next(p for p in packets if p.src_ip in cfg.malicious_ips)
print(f"attack PUT ip_len={attack.ip_len}, checksums ok: {capture.verify_checksums(attack)}")

stats = capture.dataset_stats(packets, cfg.malicious_ips)
print(f"attacker packets: {stats.attack_requests} ({stats.attack_percent:.2f}%)")

# the same arithmetic at the scale of the original 16-hour capture
big = capture.stats_from_counts({"192.168.1.12": 138_011, "192.168.1.5": 123_012},
                                cfg.malicious_ips, total=661_304)
print(f"published scale: {big.attack_requests}/{big.total} = {big.attack_percent:.2f}%")

gaps = np.diff([p.ts for p in packets if p.src_ip == "192.168.1.2"]) / 1e6
print(f"benign request gaps: {gaps.min():.2f}s .. {gaps.max():.2f}s")

capture.write_pcap(packets, "demo_capture.pcap")
capture.write_attack_log(events, "demo_attacks.json")
print("wrote demo_capture.pcap and demo_attacks.json")
