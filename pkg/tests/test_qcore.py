import math

import numpy as np
import pytest

from fockqkd.components import BsParams, PhaseModulator, apply_device
from fockqkd.errors import DegenerateStateError, InvalidArgumentError
from fockqkd.fock import H, V, Photon, PhotonPool, PhotonState, total_norm
from fockqkd.qcore import (
    NumberDistribution,
    collapse,
    joint_number_distribution,
    merge_pools,
    route_number_distribution,
    sample_count,
)

from conftest import random_pool

BS = BsParams(name="bs", inputs=(("a", "in_a"), ("b", "in_b")), outputs=(("c", "out_c"), ("d", "out_d")))


def hom_pool(pol_b=H, delay_b=0.0):
    p = PhotonPool((Photon((PhotonState("in_a"),)),))
    q = PhotonPool((Photon((PhotonState("in_b", polarization=pol_b, delay=delay_b),)),))
    return apply_device(merge_pools(p, q), BS)


def test_hom_bunching_distribution():
    dist = route_number_distribution(hom_pool(), "out_c")
    assert dist.probabilities == pytest.approx((0.5, 0.0, 0.5), abs=1e-12)


def test_distinguishable_photons_split_independently():
    dist = route_number_distribution(hom_pool(V), "out_c")
    assert dist.probabilities == pytest.approx((0.25, 0.5, 0.25), abs=1e-12)


def test_joint_distribution_hom():
    joint = joint_number_distribution(hom_pool(), ["out_c", "out_d"])
    assert joint[1, 1] == pytest.approx(0.0, abs=1e-12)
    assert joint[2, 0] == pytest.approx(0.5) and joint[0, 2] == pytest.approx(0.5)
    joint = joint_number_distribution(hom_pool(V), ["out_c", "out_d"])
    assert joint[1, 1] == pytest.approx(0.5)


def test_joint_marginal_matches_route_distribution(rng):
    for _ in range(20):
        pool = random_pool(rng, ["x", "y", "z"], max_photons=3)
        joint = joint_number_distribution(pool, ["x", "y"])
        marg = joint.sum(axis=1)
        dist = route_number_distribution(pool, "x")
        assert marg[: len(dist.probabilities)] == pytest.approx(dist.probabilities, abs=1e-9)


def test_distribution_validation():
    with pytest.raises(ArithmeticError):
        NumberDistribution("r", (0.5, 0.6))
    d = NumberDistribution("r", (0.25, 0.75))
    assert d[1] == 0.75 and d[5] == 0.0
    assert d.mean() == pytest.approx(0.75)


def test_sample_count_frequencies():
    rng = np.random.default_rng(3)
    d = NumberDistribution("r", (0.2, 0.5, 0.3))
    counts = np.bincount([sample_count(d, rng) for _ in range(20000)], minlength=3) / 20000
    assert counts == pytest.approx([0.2, 0.5, 0.3], abs=0.015)


def test_collapse_hom_removes_both_photons():
    rng = np.random.default_rng(1)
    out = collapse(hom_pool(), "out_c", 2, rng)
    assert out.detected_count == 2 and len(out.surviving_pool.photons) == 0


def test_collapse_impossible_outcome_is_degenerate():
    pool = PhotonPool((Photon((PhotonState("x"),)),))
    with pytest.raises(DegenerateStateError):
        collapse(pool, "x", 0, np.random.default_rng(0))


def test_collapse_survivor_lands_on_other_port():
    rng = np.random.default_rng(2)
    out = collapse(hom_pool(V), "out_c", 1, rng)
    rest = out.surviving_pool
    assert len(rest.photons) == 1
    assert total_norm(rest) == pytest.approx(1.0)
    assert route_number_distribution(rest, "out_d").probabilities == pytest.approx((0.0, 1.0))


def test_collapse_bad_count():
    with pytest.raises(InvalidArgumentError):
        collapse(hom_pool(), "out_c", 3, np.random.default_rng(0))


def test_sequential_measurement_matches_joint():
    rng = np.random.default_rng(11)
    pool = hom_pool(H, delay_b=2e-12)
    joint = joint_number_distribution(pool, ["out_c", "out_d"])
    n = 20000
    freq = np.zeros((3, 3))
    for _ in range(n):
        kc = sample_count(route_number_distribution(pool, "out_c"), rng)
        rest = collapse(pool, "out_c", kc, rng).surviving_pool
        kd = sample_count(route_number_distribution(rest, "out_d"), rng) if rest.photons else 0
        freq[kc, kd] += 1
    freq /= n
    se = np.sqrt(joint * (1 - joint) / n)
    assert np.all(np.abs(freq - joint) < 5 * se + 1e-3)


def test_no_signaling_phase_on_disjoint_route():
    # MZI pool before recombination: a phase on the lower arm cannot move the upper-arm statistics
    src = PhotonPool((Photon((PhotonState("in_b"),)),))
    split = apply_device(src, BS)
    base = route_number_distribution(split, "out_c").probabilities
    for phi in np.linspace(0, 2 * math.pi, 7):
        pm = PhaseModulator(name="pm", inputs=(("in", "out_d"),), outputs=(("out", "lower"),), phase=phi)
        shifted = apply_device(split, pm)
        assert route_number_distribution(shifted, "out_c").probabilities == pytest.approx(base, abs=1e-9)


def test_merge_pools():
    a = PhotonPool((Photon((PhotonState("x"),)),))
    b = PhotonPool((Photon((PhotonState("y"),)),))
    m = merge_pools(a, b)
    assert len(m.photons) == 2 and m.pool_id not in (a.pool_id, b.pool_id)
    assert merge_pools(a, PhotonPool(())) is a
    with pytest.raises(InvalidArgumentError):
        merge_pools(a, a)
