"""Acceptance gate: criteria 1-12, one PASS/FAIL line each in the terminal
summary. Training criteria share one checkpoint cache, so the slow part is
paid once per (scheme, B, SNR, seed)."""

import math
import os
import time

import numpy as np
import pytest

from edgeret import arith_coder as ac
from edgeret import channel as ch
from edgeret import digital as dg
from edgeret import entropy_model as em
from edgeret import harness

from test_arith_coder import MIX, _table_samples, ideal_bits
from test_entropy_model import gmm_gradient_errors
from test_nn_core import layer_gradient_errors

SEEDS = (0, 1, 2)
CURVE = tuple(float(s) for s in range(-12, 13, 3))


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    """Runners over the default synthetic benchmark with a shared cache."""
    out = str(tmp_path_factory.mktemp("acceptance"))
    dataset = harness.load_data(harness.ExperimentConfig())
    runners = {}

    def runner(scheme="jscc_ae", **overrides):
        key = (scheme, tuple(sorted(overrides.items())))
        if key not in runners:
            cfg = harness.ExperimentConfig(scheme=scheme, seeds=SEEDS, out=out)
            if "strategy" in overrides:
                cfg.plan_overrides["strategy"] = overrides["strategy"]
            runners[key] = harness.Runner(cfg, dataset)
        return runners[key]

    return runner


def _mean_top1(runner, bandwidth, snr_train, snr_test):
    return float(np.mean([runner.evaluate_point(bandwidth, snr_train, snr_test, s)["top1"] for s in SEEDS]))


def test_c01_channel_statistics(verdict):
    t0 = time.perf_counter()
    cfg = ch.ChannelConfig(snr_db=0.0)
    rng = np.random.default_rng(2024)
    x = np.zeros((10**6, 2))
    y, _ = ch.transmit_rows(x, cfg, rng)
    noise_var = float(np.mean(np.abs(ch.pack_complex(y)) ** 2))
    gain2 = float(np.mean(np.abs(ch.draw_gain(rng, 1.0, 10**6)) ** 2))
    elapsed = time.perf_counter() - t0
    ok = abs(noise_var - 1) < 0.02 and abs(gain2 - 1) < 0.02 and elapsed < 5
    verdict(1, ok, f"noise var {noise_var:.4f}, E|h|^2 {gain2:.4f}, {elapsed:.2f}s")


def test_c02_gradient_suite(verdict):
    t0 = time.perf_counter()
    layers = layer_gradient_errors(100, seed=11)
    wp, wq = gmm_gradient_errors(100, seed=11)
    elapsed = time.perf_counter() - t0
    worst = max(max(layers.values()), wp, wq)
    ok = worst < 1e-4 and elapsed < 30
    verdict(2, ok, f"worst rel error {worst:.2e} over {len(layers) + 2} kinds x 100 configs, {elapsed:.1f}s")


def test_c03_entropy_model(verdict):
    rng = np.random.default_rng(3)
    worst_sum = 0.0
    for _ in range(200):
        K = int(rng.integers(1, 10))
        p = em.GmmParams.from_natural(rng.dirichlet(np.ones(K)), rng.uniform(-50, 50, K), rng.uniform(0.05, 100, K))
        half = int(np.max(np.abs(p.means)) + 40 * np.max(p.scales)) + 1
        worst_sum = max(worst_sum, abs(em.gmm_pmf(np.arange(-half, half + 1), p).sum() - 1))
    init = em.init_params(9)
    init_ok = (np.allclose(init.weights, 1 / 9) and np.all(init.means == 0)
               and np.allclose(init.scales, np.arange(1, 10) ** 2))
    true = em.GmmParams.from_natural([0.35, 0.65], [-6.0, 3.0], [2.0, 1.2])
    support = np.arange(-60, 61)
    pmf = em.gmm_pmf(support, true)
    samples = np.random.default_rng(0).choice(support, size=20000, p=pmf / pmf.sum())
    kl = em.kl_bits(pmf, em.gmm_pmf(support, em.fit_gmm(samples, K=9)))
    ok = worst_sum < 1e-6 and init_ok and kl < 0.05
    verdict(3, ok, f"max |sum pmf - 1| {worst_sum:.1e}, init exact {init_ok}, fit KL {kl:.4f} bits")


def test_c04_arithmetic_coder(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    table = ac.build_table(MIX)
    failures = 0
    for _ in range(10**4):
        n = int(rng.integers(0, 64))
        q = np.where(rng.random(n) < 0.02, rng.integers(-32768, 32768, n), np.rint(rng.normal(0, 5, n)))
        q = q.astype(np.int64)
        failures += not np.array_equal(ac.decode(ac.encode(q, table), n, table).symbols, q)
    n = 10**5
    q, slots = _table_samples(table, n, rng)
    bits = ac.encode(q, table).bit_count
    ideal = ideal_bits(table, slots)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and bits <= ideal + 0.05 * n + 32 and elapsed < 20
    verdict(4, ok, f"{failures} roundtrip failures; {bits / n:.4f} vs ideal {ideal / n:.4f} bits/symbol; "
                   f"{elapsed:.1f}s")


def test_c05_capacity_math(verdict):
    exact = dg.capacity_bits(0.0, 64) == 64.0
    worst = 0.0
    for B in (1, 8, 16, 64, 256):
        for bits in np.logspace(-3, 4, 200):
            worst = max(worst, abs(dg.capacity_bits(dg.min_snr_for_bits(bits, B), B) - bits) / max(bits, 1.0))
    verdict(5, exact and worst < 1e-9, f"capacity(0 dB, 64) == 64: {exact}; worst roundtrip error {worst:.1e}")


@pytest.mark.slow
def test_c06_rate_accuracy_tradeoff(bench, verdict):
    t0 = time.perf_counter()
    runner = bench("digital")
    evals = [runner.digital_evals(16, s) for s in SEEDS]
    lams = [e.lam for e in evals[0]]
    bits = np.mean([[e.point.mean_bits for e in fam] for fam in evals], axis=0)
    top1 = np.mean([[e.point.top1 for e in fam] for fam in evals], axis=0)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(np.diff(bits) < 0)) and elapsed < 900
    curve = ", ".join(f"{l:g}:{b:.1f}b/{a:.2f}" for l, b, a in zip(lams, bits, top1))
    verdict(6, ok, f"lambda:bits/top1 {curve}; {elapsed:.0f}s")


@pytest.mark.slow
def test_c07_strategy_ordering(bench, verdict):
    acc = {s: _mean_top1(bench(strategy=s), 16, 0.0, 0.0) for s in ("T123", "T13", "T3")}
    d1, d2 = acc["T123"] - acc["T13"], acc["T13"] - acc["T3"]
    ties = [name for name, d in (("T123/T13", d1), ("T13/T3", d2)) if abs(d) < 0.01]
    ok = d1 > -0.01 and d2 > -0.01
    tie_note = f" tie flagged: {', '.join(ties)}" if ties else ""
    verdict(7, ok, f"B=16, 0 dB: T123 {acc['T123']:.3f}, T13 {acc['T13']:.3f}, T3 {acc['T3']:.3f}{tie_note}")


@pytest.mark.slow
def test_c08_jscc_beats_digital(bench, verdict):
    jscc_runner, dig = bench(), bench("digital")
    lines, wins = [], []
    for snr in CURVE:
        a = _mean_top1(jscc_runner, 16, snr, snr)
        d = float(np.mean([dig.evaluate_point(16, None, snr, s)["top1"] for s in SEEDS]))
        lines.append(f"{snr:g}:{a:.2f}/{d:.2f}")
        if snr in (-6.0, 0.0) and a > d:
            wins.append(snr)
    verdict(8, bool(wins), f"wins at {wins}; snr:jscc/digital {' '.join(lines)}")


@pytest.mark.slow
def test_c09_graceful_vs_cliff(bench, verdict):
    runner = bench()
    curve = np.array([_mean_top1(runner, 16, 0.0, snr) for snr in CURVE])
    span = curve.max() - curve.min()
    worst_drop = float(np.max(curve[1:] - curve[:-1]))  # loss when stepping 3 dB down
    graceful = worst_drop <= 0.5 * span and span > 0

    ds = runner.dataset
    worst_success = 0.0
    for seed in SEEDS:
        for comp, ev in zip(bench("digital").model(16, None, seed), bench("digital").digital_evals(16, seed)):
            matched = dg.min_snr_for_bits(ev.point.mean_bits, 16)
            r = dg.eval_fading_outage(comp, ds, matched - 6.0, 10**4, seed, B=16)
            worst_success = max(worst_success, r.success_fraction)
    ok = graceful and worst_success < 0.10
    verdict(9, ok, f"jscc curve {' '.join(f'{a:.2f}' for a in curve)}, worst 3 dB drop {worst_drop:.3f} "
                   f"of range {span:.3f}; digital max success 6 dB under matched SNR {worst_success:.3f}")


def test_c10_outage_analytics(verdict):
    worst = 0.0
    for bits, snr, B in ((16.0, 0.0, 16), (40.0, 5.0, 16), (100.0, 10.0, 32), (8.0, -3.0, 8), (64.0, 20.0, 8)):
        ev = dg.DigitalEval(0.1, np.full(50, bits), np.ones(50, bool), dg.RatePoint(0.1, bits, 1.0))
        emp = dg.fading_outage(ev, snr, B, 10**4, 10).success_fraction
        thr = math.expm1(bits / B * math.log(2)) / 10 ** (snr / 10)
        worst = max(worst, abs((1 - emp) - (1 - math.exp(-thr))))
    verdict(10, worst < 0.02, f"max |empirical - closed form| outage {100 * worst:.2f} pp at 10^4 trials")


@pytest.mark.slow
def test_c11_bandwidth_scaling(bench, verdict):
    runner = bench()
    acc = [_mean_top1(runner, B, 0.0, 0.0) for B in (8, 16, 32)]
    ok = acc[1] >= acc[0] - 0.02 and acc[2] >= acc[1] - 0.02
    verdict(11, ok, f"0 dB top-1 B=8 {acc[0]:.3f}, B=16 {acc[1]:.3f}, B=32 {acc[2]:.3f}")


SWEEP = """
seeds = 0, 1
channel.snr_train = 0
channel.snr_test = -6, 0, 6
channel.bandwidth = 8
"""


@pytest.mark.slow
def test_c12_end_to_end_determinism(tmp_path, verdict):
    outputs = {}
    for scheme, extra in (("jscc_ae", ""), ("digital", "digital.lambdas = 0.05, 0.2\n")):
        for run in ("a", "b"):
            cfg = harness.parse_config(f"scheme = {scheme}\n" + SWEEP + extra)
            cfg.out = str(tmp_path / f"{scheme}_{run}")
            harness.run_experiment(cfg)
            with open(os.path.join(cfg.out, "results.csv"), "rb") as f:
                outputs[scheme, run] = f.read()
    same = all(outputs[s, "a"] == outputs[s, "b"] for s in ("jscc_ae", "digital"))
    verdict(12, same, "two fresh sweeps per scheme (jscc_ae, digital) give byte-identical results.csv: "
                      f"{same}")


@pytest.mark.slow
def test_matched_training_curve_rises_with_snr(bench):
    curve = [_mean_top1(bench(), 16, snr, snr) for snr in CURVE]
    assert all(b >= a - 0.02 for a, b in zip(curve, curve[1:])), curve
