"""Release gate: one test per numbered behavior band.

Each test reproduces a headline simulation result at desk scale (50x50
lattices) or runs the fast property battery. The conftest hook prints a
one-line PASS/FAIL verdict per criterion after the run. Expensive
trajectories shared between criteria run once via module-scoped fixtures.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from pggsim import seeds
from pggsim.baselines import FermiConfig, fermi_adopt_prob, fermi_epoch
from pggsim.config import config_from_dict
from pggsim.grpo import (
    GrpoHyper,
    PolicyTriplet,
    _epoch_setup,
    epoch_loss_and_grads,
    normalize_advantages,
    run_training,
)
from pggsim.lattice import (
    GlobalSignal,
    counterfactual_payoffs,
    gcc_adjust,
    gcc_factor,
    init_lattice,
    InitMode,
    largest_cluster_size,
    payoff_field,
)
from pggsim.metrics import MetricsRow, format_row, write_snapshot, write_timeseries_csv
from pggsim.policy import (
    STATE_VECTORS,
    MlpParams,
    backward_batch,
    clamp_prob,
    forward,
    forward_batch,
    kl_two_point,
)
from pggsim.runner import run_baseline, run_replicates

DATA = Path(__file__).parent / "data"
SEEDS = (1, 2, 3)


def _config(**over):
    base = {"L": 50, "epochs": 500, "snapshot_epochs": []}
    base.update(over)
    return config_from_dict(base)


def _final(series):
    return series.rows[-1].coop_fraction


@pytest.fixture(scope="module")
def gcc_r40_series():
    """Constrained runs at r=4.0, shared by the rescue and onset criteria."""
    return [run_training(_config(algorithm="grpo_gcc", r=4.0, seed=s)) for s in SEEDS]


def test_criterion_1():
    # without the constraint the lattice collapses at r=3.0 and saturates at
    # r=6.0, for every seed, well inside the ten minute budget
    start = time.perf_counter()
    for r, check in ((3.0, lambda f: f <= 0.02), (6.0, lambda f: f >= 0.98)):
        for seed in SEEDS:
            final = _final(run_training(_config(algorithm="grpo", r=r, seed=seed)))
            assert check(final), f"r={r} seed={seed}: final coop {final:.4f} out of band"
    assert time.perf_counter() - start < 600.0


def test_criterion_2(gcc_r40_series):
    # the constraint sustains cooperation at r=4.0 and r=4.6 where the
    # unconstrained rule collapses
    gcc_40 = np.mean([_final(s) for s in gcc_r40_series])
    assert gcc_40 >= 0.70, f"constrained mean at r=4.0 is {gcc_40:.4f}, need >= 0.70"

    gcc_46 = np.mean([_final(run_training(_config(algorithm="grpo_gcc", r=4.6, seed=s))) for s in SEEDS])
    assert gcc_46 >= 0.85, f"constrained mean at r=4.6 is {gcc_46:.4f}, need >= 0.85"

    plain_40 = np.mean([_final(run_training(_config(algorithm="grpo", r=4.0, seed=s))) for s in SEEDS])
    assert plain_40 <= 0.05, f"unconstrained mean at r=4.0 is {plain_40:.4f}, need <= 0.05"


def test_criterion_3(gcc_r40_series):
    # cooperation reaches 0.80 within 150 epochs in at least 2 of 3 seeds
    fast = sum(
        1
        for series in gcc_r40_series
        if max(row.coop_fraction for row in series.rows if row.epoch <= 150) >= 0.80
    )
    assert fast >= 2, f"fast onset in only {fast} of 3 seeds"


def test_criterion_4():
    # per-agent Q-learning settles into partial cooperation at r=4.0
    cfg = _config(algorithm="qlearning", r=4.0, epochs=5000, seed=1)
    final = _final(run_baseline(cfg))
    assert 0.25 <= final <= 0.55, f"q-learning final coop {final:.4f} outside [0.25, 0.55]"


def test_criterion_5():
    # Fermi imitation: partial cooperation with macroscopic same-strategy
    # clusters at r=4.0, near-full cooperation at r=6.0
    series = run_baseline(_config(algorithm="fermi", r=4.0, epochs=5000, seed=1))
    final = _final(series)
    assert final < 0.70, f"fermi final coop at r=4.0 is {final:.4f}, need < 0.70"
    cluster = max(largest_cluster_size(series.final_grid, 1), largest_cluster_size(series.final_grid, 0))
    assert cluster >= 25, f"largest same-strategy cluster is {cluster}, need >= 25"

    final_high = _final(run_baseline(_config(algorithm="fermi", r=6.0, epochs=5000, seed=1)))
    assert final_high >= 0.95, f"fermi final coop at r=6.0 is {final_high:.4f}, need >= 0.95"


def test_criterion_6(tmp_path):
    # with paired replicate seeds, the constrained rule strictly beats the
    # unconstrained one on mean final cooperation at every enhancement level
    for r in (4.0, 4.2, 4.4, 4.6):
        means = {}
        for algo in ("grpo_gcc", "grpo"):
            cfg = _config(algorithm=algo, r=r, seed=42)
            stats, _ = run_replicates(cfg, 5, output_root=tmp_path)
            means[algo] = stats.mean
        assert means["grpo_gcc"] > means["grpo"], (
            f"r={r}: constrained mean {means['grpo_gcc']:.4f} does not exceed "
            f"unconstrained {means['grpo']:.4f}"
        )


def test_criterion_7(tmp_path):
    # fast property battery: invariants, gradients, determinism, file bytes
    start = time.perf_counter()
    rng = np.random.default_rng(2024)

    # payoff conservation on random lattices: the field sums to
    # 5*(r-1)*(cooperator count)
    for _ in range(200):
        L = int(rng.integers(3, 13))
        grid = (rng.random((L, L)) < rng.random()).astype(np.uint8)
        r = float(rng.uniform(1.0, 8.0))
        total = float(payoff_field(grid, r).values.sum())
        expect = 5.0 * (r - 1.0) * float(grid.sum())
        assert abs(total - expect) <= 1e-9 * max(1.0, abs(expect))

    # counterfactual neutrality at r=5 in a cooperator sea: switching sides
    # changes nothing
    sea = np.ones((8, 8), dtype=np.uint8)
    pay_d, pay_c = counterfactual_payoffs(sea, 5.0)
    assert np.all(pay_d - pay_c == 0.0)

    # advantage normalization: zero mean, unit (or zero) std, magnitudes
    # bounded by sqrt(G-1)
    for _ in range(50):
        rewards = rng.normal(size=8) * rng.uniform(0.0, 3.0)
        adv = normalize_advantages(rewards, 1e-8)
        assert np.all(np.abs(adv) <= np.sqrt(7.0) + 1e-9)
        assert abs(adv.mean()) <= 1e-9
        sd = adv.std()
        assert abs(sd - 1.0) < 1e-9 or sd == 0.0
    assert np.all(normalize_advantages(np.full(8, 2.5), 1e-8) == 0.0)

    # KL non-negativity with equality exactly on equal inputs
    ps = rng.uniform(0.01, 0.99, size=100)
    qs = rng.uniform(0.01, 0.99, size=100)
    kl = kl_two_point(ps, qs)
    assert np.all(kl >= 0.0)
    assert np.all(kl_two_point(ps, ps) == 0.0)
    assert np.all(kl[np.abs(ps - qs) > 1e-3] > 0.0)

    # policy-network gradients vs central differences, 100 random triples
    def policy_loss(params, x, upstream):
        cache = forward(params, x)
        probs = cache.probs[0]
        loss = float(probs @ upstream)
        dlogits = probs * (upstream - probs @ upstream)
        return loss, backward_batch(params, cache, dlogits[None, :])

    # biases are randomized: the zero-bias init parks fully-inactive layers
    # exactly on the next layer's ReLU kink, where central differences
    # disagree with the (one-sided) derivative by construction
    for trial in range(100):
        prng = np.random.default_rng(3000 + trial)
        params = MlpParams.init((4, 4, 4), prng)
        for b in params.biases:
            b[:] = prng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=5)
        upstream = rng.normal(size=2)
        _, grads = policy_loss(params, x, upstream)
        for arr, g in zip(params.arrays(), grads):
            flat, gflat = arr.ravel(), g.ravel()
            for k in range(flat.size):
                h = 1e-6 * max(1.0, abs(flat[k]))
                orig = flat[k]
                flat[k] = orig + h
                up, _ = policy_loss(params, x, upstream)
                flat[k] = orig - h
                down, _ = policy_loss(params, x, upstream)
                flat[k] = orig
                numeric = (up - down) / (2.0 * h)
                assert abs(gflat[k] - numeric) <= 1e-4 * max(1.0, abs(gflat[k]), abs(numeric))

    # full epoch loss gradient on a 4x4 lattice (biases nudged off the ReLU
    # kinks that the zero-bias init parks the all-zero state on)
    grid = (np.random.default_rng(35).random((4, 4)) < 0.5).astype(np.uint8)
    grng = np.random.default_rng(36)
    theta = MlpParams.init((4, 4, 4), grng)
    for b in theta.biases:
        b[:] = grng.normal(scale=0.1, size=b.shape)
    policies = PolicyTriplet.fresh(theta)
    hyper = GrpoHyper()
    data = _epoch_setup(policies, grid, hyper, 4.1, np.random.default_rng(37))
    q1_ref = clamp_prob(forward_batch(policies.ref, STATE_VECTORS).probs[:, 1])
    _, grads, _ = epoch_loss_and_grads(theta, data, q1_ref, hyper)
    for arr, g in zip(theta.arrays(), grads):
        flat, gflat = arr.ravel(), g.ravel()
        for k in range(flat.size):
            h = 1e-6 * max(1.0, abs(flat[k]))
            orig = flat[k]
            flat[k] = orig + h
            up, _, _ = epoch_loss_and_grads(theta, data, q1_ref, hyper)
            flat[k] = orig - h
            down, _, _ = epoch_loss_and_grads(theta, data, q1_ref, hyper)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            assert abs(gflat[k] - numeric) <= 1e-3 * max(1.0, abs(gflat[k]), abs(numeric))

    # constraint identities: no-op at rho=0, at uniform lattices, and for
    # defectors
    for g in rng.uniform(0.0, 1.0, size=20):
        assert gcc_factor(GlobalSignal(float(g), 0.0)) == 1.0
    for rho in (0.5, 1.0, 3.0):
        assert gcc_factor(GlobalSignal(0.0, rho)) == 1.0
        assert gcc_factor(GlobalSignal(1.0, rho)) == 1.0
        assert gcc_adjust(7.5, 0, GlobalSignal(0.5, rho)) == 7.5

    # Fermi adoption probabilities are complementary
    for _ in range(100):
        a, b = rng.normal(scale=10.0, size=2)
        k = float(rng.uniform(0.05, 5.0))
        assert abs(fermi_adopt_prob(a, b, k) + fermi_adopt_prob(b, a, k) - 1.0) <= 1e-12

    # uniform lattices absorb the imitation dynamic
    for value in (0, 1):
        uniform = np.full((6, 6), value, dtype=np.uint8)
        for seed in range(3):
            assert np.array_equal(fermi_epoch(uniform, 4.0, FermiConfig(), np.random.default_rng(seed)), uniform)

    # a 50-epoch constrained run is bitwise identical across 1, 2 and 8
    # worker threads: rows, final lattice and final network
    reference = None
    for workers in (1, 2, 8):
        cfg = _config(algorithm="grpo_gcc", r=4.0, epochs=50, seed=7, workers=workers)
        series = run_training(cfg)
        bundle = (
            [format_row(row) for row in series.rows],
            series.final_grid,
            [a.copy() for a in series.params.arrays()],
        )
        if reference is None:
            reference = bundle
        else:
            assert bundle[0] == reference[0]
            assert np.array_equal(bundle[1], reference[1])
            for a, b in zip(bundle[2], reference[2]):
                assert np.array_equal(a, b)

    # CSV and PGM bytes match the checked-in golden files
    rows = [
        MetricsRow(0, 0.5, 0.5, 7.5, 0.5),
        MetricsRow(1, 1.0 / 3.0, 2.0 / 3.0, -0.1234567, 1.0 / 3.0),
        MetricsRow(2, 1.0, 0.0, 15.0, 1.0),
    ]
    write_timeseries_csv(rows, tmp_path / "ts.csv")
    assert (tmp_path / "ts.csv").read_bytes() == (DATA / "golden_timeseries.csv").read_bytes()
    halfhalf = init_lattice(4, InitMode("half_half"), np.random.default_rng(0))
    write_snapshot(halfhalf, tmp_path / "snap.pgm")
    assert (tmp_path / "snap.pgm").read_bytes() == (DATA / "golden_halfhalf.pgm").read_bytes()

    assert time.perf_counter() - start < 60.0
