"""Headline acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured value and
runtime so the suite output doubles as an acceptance report.
"""

import itertools
import time

import numpy as np
import pytest

from coaplab import capture, ga, pipeline, traffic, windows
from coaplab.classifiers.bayes import nb_fit
from coaplab.classifiers.lstm import init_lstm
from coaplab.classifiers.tree import best_split
from coaplab.features import (Kind, NormalizationError, TokenVocabulary, detokenize, frobenius_norm,
                              frobenius_normalize, pad_windows, tokenize)
from oracles import brute_force_nb, exhaustive_root_split, finite_difference_check


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail, elapsed, budget):
        within = elapsed <= budget
        line = f"{'PASS' if ok and within else 'FAIL'} {name}: {detail} ({elapsed:.2f}s, budget {budget:g}s)"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
        assert within, line
    return emit


def test_attack_fraction_arithmetic(report):
    t0 = time.perf_counter()
    counts = {"192.168.1.12": 138_011, "192.168.1.5": 123_012}
    stats = capture.stats_from_counts(counts, counts.keys(), total=661_304)
    ok = stats.attack_requests == 261_023 and abs(stats.attack_percent - 39.47) <= 0.01
    report("attack fraction", ok, f"{stats.attack_requests}/{stats.total} = {stats.attack_percent:.4f}%",
           time.perf_counter() - t0, 1)


def test_desk_scale_regeneration(report):
    t0 = time.perf_counter()
    cfg = traffic.desk_scale_config()
    packets, events = traffic.run_scenario(cfg)
    again, events2 = traffic.run_scenario(cfg)
    elapsed = (time.perf_counter() - t0) / 2
    attack = sum(p.src_ip in cfg.malicious_ips for p in packets)
    ok = attack == 4200 and len(events) == 14 and packets == again and events == events2
    report("desk-scale regeneration", ok, f"{attack} attack requests, {len(events)} attack events, deterministic rerun",
           elapsed, 10)


def test_labeling_matches_attack_log(report, desk_run):
    cfg, packets, events = desk_run
    t0 = time.perf_counter()
    labeled = windows.label_dataset(packets, cfg.malicious_ips, windows.WINDOW_US, 350)
    malicious = {lw.index for lw in labeled if lw.label is windows.Label.MALICIOUS}
    overlapping = windows.windows_overlapping([lw.window for lw in labeled], events)
    disagreements = windows.crosscheck_labels(labeled, events)
    elapsed = time.perf_counter() - t0
    ok = malicious == overlapping and not disagreements and len(malicious) == 7
    report("labeling", ok, f"{len(malicious)} malicious windows, {len(overlapping)} overlapping bursts, "
           f"{len(disagreements)} disagreements", elapsed, 5)


def test_all_classifiers_reach_99_percent(report):
    t0 = time.perf_counter()
    cfg = pipeline.RunConfig()
    packets, _ = traffic.run_scenario(cfg.scenario)
    labeled = windows.label_dataset(packets, cfg.scenario.malicious_ips)
    data = pipeline.prepare_dataset(labeled, test_fraction=0.2, seed=pipeline.stage_seed(cfg.seed, "split"))
    accs = {}
    for name in pipeline.MODEL_NAMES:
        seed = pipeline.stage_seed(cfg.seed, name)
        model = pipeline.fit_model(name, data.train, seed, cfg.hyper)
        accs[name] = pipeline.evaluate_model(name, model, data.test, seed)["accuracy"]
    elapsed = time.perf_counter() - t0
    ok = all(a >= 99.0 for a in accs.values())
    detail = ", ".join(f"{k} {v:.2f}%" for k, v in accs.items())
    report("classifiers >= 99%", ok, f"{detail} on {len(data.test)} test windows", elapsed, 300)


def test_frobenius_normalization(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst, equivariant = 0.0, True
    for _ in range(1000):
        shape = tuple(rng.integers(1, 40, size=2))
        a = rng.normal(size=shape) * 10.0 ** rng.uniform(-6, 6)
        u = frobenius_normalize(a)
        worst = max(worst, abs(frobenius_norm(u) - 1.0))
        c = 10.0 ** rng.uniform(-3, 3)
        equivariant &= np.allclose(frobenius_normalize(c * a), u, rtol=1e-9, atol=1e-15)
    try:
        frobenius_normalize(np.zeros((3, 4)))
        zero_raises = False
    except NormalizationError:
        zero_raises = True
    ok = worst <= 1e-9 and equivariant and zero_raises
    report("unit-norm normalization", ok, f"max |norm-1| = {worst:.2e}, scale equivariant={equivariant}, "
           f"zero raises={zero_raises}", time.perf_counter() - t0, 5)


def test_padding(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(300):
        d = int(rng.integers(1, 17))
        ws = [rng.normal(size=(int(rng.integers(1, 30)), d)) for _ in range(int(rng.integers(1, 12)))]
        pad_row = rng.normal(size=d)
        t = pad_windows(ws, pad_row)
        n = max(len(w) for w in ws)
        ok &= t.shape == (len(ws), n, d)
        for j, w in enumerate(ws):
            ok &= np.array_equal(t[j, :len(w)], w)
            ok &= bool(np.all(t[j, len(w):] == pad_row))
    report("padding", ok, "300 ragged tensors: uniform length, prefixes kept, pad rows exact",
           time.perf_counter() - t0, 5)


def test_tokenization(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    ok = True
    for _ in range(200):
        width = int(rng.integers(1, 6))
        alphabet = [f"v{i}" for i in range(int(rng.integers(1, 12)))]
        rows = [[None if rng.random() < 0.1 else str(rng.choice(alphabet)) for _ in range(width)]
                for _ in range(int(rng.integers(1, 60)))]
        vocab = TokenVocabulary([Kind.CATEGORICAL] * width)
        m = tokenize(rows, vocab)
        ok &= detokenize(m, vocab) == rows
        for c in range(width):
            observed = {r[c] for r in rows if r[c] is not None}
            ok &= sorted({int(t) for t in m[:, c] if t}) == list(range(1, len(observed) + 1))
            token_of = {}
            for r, t in zip(rows, m[:, c]):
                if r[c] is not None:
                    ok &= token_of.setdefault(r[c], t) == t
    report("tokenization", ok, "200 random tables: round trip, contiguous 1..|B|, stable tokens",
           time.perf_counter() - t0, 5)


def test_ga_recovers_planted_features(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    X = rng.integers(0, 2, size=(240, 42)).astype(float)
    planted = [5, 17, 30]
    y = (X[:, planted].sum(axis=1) >= 2).astype(int)
    ev = ga.FitnessEvaluator(X, y, folds=3, max_depth=3, seed=0)
    best_score, best = -1.0, None
    n_masks = 0
    for comb in itertools.combinations(range(42), 3):
        mask = np.zeros(42, bool)
        mask[list(comb)] = True
        score = ev.score(mask)
        n_masks += 1
        if score > best_score:
            best_score, best = score, list(comb)
    result = ga.run_ga(X, y, ga.GaConfig(k=3, fitness_max_depth=3), ev)
    found = np.flatnonzero(result.best_mask).tolist()
    monotone = all(b >= a for a, b in zip(result.history, result.history[1:]))
    wide = ga.run_ga(X, y, ga.GaConfig(k=16, generations=3, population_size=10, fitness_max_depth=3))
    ok = (n_masks == 11_480 and found == best == planted and result.best_fitness == best_score
          and monotone and int(wide.best_mask.sum()) == 16)
    report("GA recovery", ok, f"exhaustive optimum {best} ({best_score:.3f}) over {n_masks} masks, GA found {found}, "
           f"history monotone={monotone}, k=16 popcount={int(wide.best_mask.sum())}", time.perf_counter() - t0, 120)


def test_classifier_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    nb_ok = True
    for _ in range(10):
        X = rng.normal(size=(20, 3)) + np.repeat([[0.0], [1.5]], 10, axis=0)
        y = np.repeat([0, 1], 10)
        model = nb_fit(X, y)
        probe = rng.normal(size=(20, 3)) * 2
        nb_ok &= all(model.predict([x])[0] == brute_force_nb(X.tolist(), y.tolist(), x.tolist())[0] for x in probe)
    tree_ok = True
    for _ in range(60):
        m = int(rng.integers(4, 33))
        X = rng.integers(0, 5, size=(m, 4)).astype(float)
        y = rng.integers(0, 2, size=m)
        oracle = exhaustive_root_split(X, y)
        found = best_split(X, y, np.arange(4))
        tree_ok &= (found is None) if oracle is None else found == (oracle[1], oracle[2])
    model = init_lstm(5, 3, seed=1)
    model.b += rng.normal(0, 0.5, size=12)
    rel = max(finite_difference_check(model, rng.normal(size=(1, 4, 5)), np.array([lab])) for lab in (0, 1))
    ok = nb_ok and tree_ok and rel < 1e-4
    report("classifier oracles", ok, f"NB brute force={nb_ok}, tree root splits={tree_ok}, "
           f"LSTM gradient max rel err={rel:.2e}", time.perf_counter() - t0, 60)


def test_pcap_round_trip(report, desk_run, tmp_path):
    _, packets, _ = desk_run
    t0 = time.perf_counter()
    capture.write_pcap(packets, tmp_path / "a.pcap")
    back = capture.read_pcap(tmp_path / "a.pcap")
    capture.write_pcap(back, tmp_path / "b.pcap")
    identical = (tmp_path / "a.pcap").read_bytes() == (tmp_path / "b.pcap").read_bytes()
    valid = all(capture.verify_checksums(p) for p in back)
    rng = np.random.default_rng(4)
    caught = total = 0
    # every byte of a benign request, a server response and a full attack PUT
    samples = [next(p for p in back if p.src_ip == "192.168.1.2"),
               next(p for p in back if p.src_ip == "192.168.1.9"),
               max(back, key=lambda p: len(p.payload))]
    for p in samples:
        for i in range(len(p.payload)):
            bad = bytearray(p.payload)
            bad[i] ^= int(rng.integers(1, 256))
            total += 1
            caught += not capture.udp_checksum_ok(capture.PacketRecord(**{**p.__dict__, "payload": bytes(bad)}))
    ok = identical and valid and caught == total
    report("pcap round trip", ok, f"{len(back)} packets, byte-identical={identical}, checksums valid={valid}, "
           f"{caught}/{total} single-byte mutations detected", time.perf_counter() - t0, 5)
