import cmath
import math

import numpy as np
import pytest

from fockqkd.components import (
    Attenuator,
    BandpassFilter,
    BsParams,
    Circulator,
    FaradayMirror,
    Fiber,
    Isolator,
    OpticalSwitch,
    PbsParams,
    PhaseModulator,
    PolarizationModulator,
    Waveplate,
    apply_device,
    faraday_matrix,
    stokes,
    waveplate_jones,
    waveplate_mueller,
)
from fockqkd.errors import InvalidArgumentError, TopologyError
from fockqkd.fock import H, V, JonesPolarization, Photon, PhotonPool, PhotonState, polarization_overlap, pool_norm
from fockqkd.qcore import route_number_distribution

from conftest import random_polarization, random_pool

TWO = dict(inputs=(("in", "x"),), outputs=(("out", "y"),))
BS_WIRING = dict(inputs=(("a", "x"), ("b", "x2")), outputs=(("c", "y"), ("d", "y2")))


def lossless_devices():
    return [
        BsParams(name="bs", **BS_WIRING),
        BsParams(name="bs73", splitting_ratio_t=0.7, splitting_ratio_r=0.3, **BS_WIRING),
        PbsParams(name="pbs", **BS_WIRING),
        PbsParams(name="pbs_leaky", extinction_ratio=30.0, **BS_WIRING),
        Attenuator(name="att", **TWO),
        BandpassFilter(name="flt", out_band_loss_db=0.0, **TWO),
        Circulator(name="circ", inputs=(("1", "x"), ("2", "x2")), outputs=(("2", "y"), ("3", "y2"))),
        Isolator(name="iso", isolation_db=0.0, **TWO),
        OpticalSwitch(name="sw", isolation_db=20.0, inputs=(("in", "x"),), outputs=(("out1", "y"), ("out2", "y2"))),
        Waveplate(name="hwp", offset_angle=0.3, **TWO),
        Waveplate(name="qwp", relative_phase=math.pi / 2, offset_angle=1.1, **TWO),
        FaradayMirror(name="fm", inputs=(("in", "x"),), outputs=(("out", "y"),)),
        Fiber(name="fib", alpha_db_per_km=0.0, length_km=3.0, disturbance=(("phase", 0.0, 0.4),), **TWO),
    ]


def single(route="x", pol=H, **kw):
    return PhotonPool((Photon((PhotonState(route, polarization=pol, **kw),)),))


def prob(pool, route):
    return route_number_distribution(pool, route)[1]


@pytest.mark.parametrize("device", lossless_devices(), ids=lambda d: d.name)
def test_lossless_device_preserves_pool_norm(device, rng):
    for _ in range(60):
        pool = random_pool(rng, ["x", "x2", "z"], max_photons=3)
        out = apply_device(pool, device, rng)
        assert pool_norm(out) == pytest.approx(pool_norm(pool), rel=1e-9, abs=1e-12)


def test_overwriting_modulators_preserve_norm_on_shared_settings(rng):
    pm = PhaseModulator(name="pm", phase=2.1, **TWO)
    polm = PolarizationModulator(name="polm", alpha=0.6, beta=0.8, delta_phase=0.5, **TWO)
    for _ in range(60):
        pool = random_pool(rng, ["x", "z"], phase=0.3)
        assert pool_norm(apply_device(pool, pm)) == pytest.approx(pool_norm(pool), rel=1e-9, abs=1e-12)
        pol = random_polarization(rng)
        pool = random_pool(rng, ["x", "z"], polarization=pol)
        assert pool_norm(apply_device(pool, polm)) == pytest.approx(pool_norm(pool), rel=1e-9, abs=1e-12)


LOSSY = [
    (lambda l: BsParams(name="bs", loss_db=l, **BS_WIRING), ("x",), ("y", "y2")),
    (lambda l: PbsParams(name="pbs", loss_h_db=l, loss_v_db=l, extinction_ratio=50.0, **BS_WIRING), ("x",), ("y", "y2")),
    (lambda l: Attenuator(name="att", loss_db=l, **TWO), ("x",), ("y",)),
    (lambda l: BandpassFilter(name="flt", in_band_loss_db=l, **TWO), ("x",), ("y",)),
    (lambda l: Circulator(name="c", loss_db=l, inputs=(("1", "x"),), outputs=(("2", "y"),)), ("x",), ("y",)),
    (lambda l: PolarizationModulator(name="pol", loss_db=l, alpha=0.0, beta=1.0, **TWO), ("x",), ("y",)),
    (lambda l: PhaseModulator(name="pm", loss_db=l, phase=1.0, **TWO), ("x",), ("y",)),
    (lambda l: Isolator(name="iso", loss_db=l, **TWO), ("x",), ("y",)),
    (lambda l: OpticalSwitch(name="sw", loss_db=l, inputs=(("in", "x"),), outputs=(("out1", "y"), ("out2", "y2"))),
     ("x",), ("y", "y2")),
    (lambda l: Waveplate(name="wp", loss_db=l, offset_angle=0.2, **TWO), ("x",), ("y",)),
    (lambda l: FaradayMirror(name="fm", loss_db=l, inputs=(("in", "x"),), outputs=(("out", "y"),)), ("x",), ("y",)),
    (lambda l: Fiber(name="f", alpha_db_per_km=0.25, length_km=l / 0.25, **TWO), ("x",), ("y",)),
]


@pytest.mark.parametrize("make,ins,outs", LOSSY)
def test_loss_scales_detection_probability(make, ins, outs, rng):
    for loss in (0.0, 0.5, 3.0103, 10.0, 27.3):
        device = make(loss)
        pol = random_polarization(rng)
        out = apply_device(single(ins[0], pol), device, rng)
        total = sum(prob(out, r) for r in outs)
        assert total == pytest.approx(10 ** (-loss / 10), abs=1e-9)


def test_bs_splits_evenly():
    out = apply_device(single("x"), BsParams(name="bs", **BS_WIRING))
    assert prob(out, "y") == pytest.approx(0.5) and prob(out, "y2") == pytest.approx(0.5)


def test_bs_ratio_validation():
    with pytest.raises(InvalidArgumentError):
        BsParams(name="bs", splitting_ratio_t=0.6, splitting_ratio_r=0.6)
    with pytest.raises(TopologyError):
        BsParams(name="bs", inputs=(("q", "x"),))


def test_pbs_ideal_routes_h_and_v():
    pbs = PbsParams(name="pbs", **BS_WIRING)
    assert prob(apply_device(single("x", H), pbs), "y") == pytest.approx(1.0)
    assert prob(apply_device(single("x", V), pbs), "y2") == pytest.approx(1.0)
    diag = JonesPolarization.linear(math.pi / 4)
    out = apply_device(single("x", diag), pbs)
    assert prob(out, "y") == pytest.approx(0.5) and prob(out, "y2") == pytest.approx(0.5)


def test_pbs_extinction_leakage():
    pbs = PbsParams(name="pbs", extinction_ratio=1000.0, **BS_WIRING)
    out = apply_device(single("x", H), pbs)
    assert prob(out, "y2") == pytest.approx(1 / 1001, abs=1e-12)


def test_pbs_completeness_with_loss(rng):
    pbs = PbsParams(name="pbs", loss_h_db=1.5, loss_v_db=1.5, extinction_ratio=200.0, **BS_WIRING)
    for _ in range(20):
        out = apply_device(single("x2", random_polarization(rng)), pbs)
        assert prob(out, "y") + prob(out, "y2") == pytest.approx(10 ** (-0.15), abs=1e-12)


def test_attenuator_3db_halves_probability():
    out = apply_device(single("x"), Attenuator(name="a", loss_db=3.0103, **TWO))
    assert prob(out, "y") == pytest.approx(0.5, abs=1e-5)


def test_filter_out_of_band():
    flt = BandpassFilter(name="f", band_low=1.0e15, band_high=1.1e15, out_band_loss_db=20.0, **TWO)
    # default spectrum sits near 1.215e15 rad/s, outside the band
    assert prob(apply_device(single("x"), flt), "y") == pytest.approx(0.01)


def test_isolator_reverse_suppression():
    iso = Isolator(name="iso", loss_db=0.7, isolation_db=60.0, inputs=(("in", "x"), ("out", "r")),
                   outputs=(("out", "y"), ("in", "back")))
    forward = prob(apply_device(single("x"), iso), "y")
    reverse = prob(apply_device(single("r"), iso), "back")
    assert reverse / forward == pytest.approx(1e-6, rel=1e-9)


def test_switch_crosstalk():
    sw = OpticalSwitch(name="sw", isolation_db=30.0, selected="out2",
                       inputs=(("in", "x"),), outputs=(("out1", "y"), ("out2", "y2")))
    out = apply_device(single("x"), sw)
    assert prob(out, "y") == pytest.approx(1e-3)
    assert prob(out, "y2") == pytest.approx(1 - 1e-3)


def _pol_out(pool, route):
    (state,) = [s for s in pool.photons[0].states if s.route == route]
    return state


def test_waveplate_examples():
    hwp0 = Waveplate(name="w", relative_phase=math.pi, offset_angle=0.0, **TWO)
    assert abs(polarization_overlap(_pol_out(apply_device(single("x"), hwp0), "y").polarization, H)) == pytest.approx(1.0)
    hwp45 = Waveplate(name="w", relative_phase=math.pi, offset_angle=math.pi / 4, **TWO)
    assert abs(polarization_overlap(_pol_out(apply_device(single("x"), hwp45), "y").polarization, V)) == pytest.approx(1.0)
    qwp = Waveplate(name="w", relative_phase=math.pi / 2, offset_angle=math.pi / 4, **TWO)
    pol = _pol_out(apply_device(single("x"), qwp), "y").polarization
    assert pol.alpha == pytest.approx(1 / math.sqrt(2)) and pol.beta == pytest.approx(1 / math.sqrt(2))
    assert abs(pol.delta_phase) == pytest.approx(math.pi / 2)


def test_waveplate_keeps_pure_states_pure(rng):
    for _ in range(200):
        wp = Waveplate(name="w", relative_phase=rng.uniform(0, 2 * math.pi), offset_angle=rng.uniform(-3, 3), **TWO)
        pol = _pol_out(apply_device(single("x", random_polarization(rng)), wp), "y").polarization
        s = stokes(pol)
        assert s[1] ** 2 + s[2] ** 2 + s[3] ** 2 == pytest.approx(1.0, abs=1e-9)


def test_waveplate_jones_and_mueller_agree(rng):
    for _ in range(200):
        theta, delta = rng.uniform(-3, 3), rng.uniform(0, 2 * math.pi)
        pol = random_polarization(rng)
        h, v = waveplate_jones(theta, delta) @ pol.vector()
        via_jones, _ = JonesPolarization.from_vector(complex(h), complex(v))
        via_mueller = stokes(pol) @ waveplate_mueller(theta, delta)
        assert np.allclose(stokes(via_jones), via_mueller, atol=1e-9)


def test_waveplate_output_amplitude_matches_jones(rng):
    for _ in range(100):
        theta, delta = rng.uniform(-3, 3), rng.uniform(0, 2 * math.pi)
        pol = random_polarization(rng)
        state = _pol_out(apply_device(single("x", pol), Waveplate(name="w", relative_phase=delta, offset_angle=theta, **TWO)), "y")
        got = state.coefficient * cmath.exp(1j * state.phase) * state.polarization.vector()
        assert np.allclose(got, waveplate_jones(theta, delta) @ pol.vector(), atol=1e-9)


def test_faraday_mirror():
    assert np.allclose(faraday_matrix(math.pi / 4), [[0, -1], [-1, 0]], atol=1e-15)
    fm = FaradayMirror(name="fm", inputs=(("in", "x"),), outputs=(("out", "y"),))
    assert abs(polarization_overlap(_pol_out(apply_device(single("x"), fm), "y").polarization, V)) == pytest.approx(1.0)
    plain = FaradayMirror(name="fm", theta=0.0, inputs=(("in", "x"),), outputs=(("out", "y"),))
    assert abs(polarization_overlap(_pol_out(apply_device(single("x"), plain), "y").polarization, H)) == pytest.approx(1.0)


def test_faraday_mirror_twice_restores_polarization(rng):
    fm1 = FaradayMirror(name="fm", inputs=(("in", "x"),), outputs=(("out", "y"),))
    fm2 = FaradayMirror(name="fm2", inputs=(("in", "y"),), outputs=(("out", "z"),))
    for _ in range(50):
        pol = random_polarization(rng)
        out = apply_device(apply_device(single("x", pol), fm1), fm2)
        assert abs(polarization_overlap(_pol_out(out, "z").polarization, pol)) == pytest.approx(1.0, abs=1e-12)


def test_round_trip_cancels_birefringence(rng):
    base = Fiber(name="f", alpha_db_per_km=0.0, length_km=1.0, disturbance=(("delta_phase", 0.0, 1.0),),
                 inputs=(("in", "x"), ("out", "back")), outputs=(("out", "to_fm"), ("in", "ret")))
    fm = FaradayMirror(name="fm", inputs=(("in", "to_fm"),), outputs=(("out", "back"),))
    pol = random_polarization(rng)
    results = []
    for _ in range(20):
        fiber = base.realize(rng)
        pool = apply_device(apply_device(apply_device(single("x", pol), fiber), fm), fiber)
        results.append(_pol_out(pool, "ret").polarization)
    for p in results[1:]:
        assert abs(polarization_overlap(p, results[0])) == pytest.approx(1.0, abs=1e-12)


def test_fiber_zero_length_is_identity():
    pool = single("x", JonesPolarization.linear(0.3), phase=0.4)
    out = apply_device(pool, Fiber(name="f", length_km=0.0, **TWO))
    s_in, s_out = pool.photons[0].states[0], _pol_out(out, "y")
    assert (s_out.coefficient, s_out.phase, s_out.delay, s_out.polarization) == (
        s_in.coefficient, s_in.phase, s_in.delay, s_in.polarization)


def test_fiber_50km_is_10db():
    out = apply_device(single("x"), Fiber(name="f", alpha_db_per_km=0.2, length_km=50.0, **TWO))
    assert prob(out, "y") == pytest.approx(0.1, abs=1e-12)
    assert _pol_out(out, "y").delay == pytest.approx(50 * 4.9e-6)


def test_fiber_disturbance_validation():
    with pytest.raises(InvalidArgumentError):
        Fiber(name="f", disturbance=(("phase", 0.0, -0.1),), **TWO)
    with pytest.raises(InvalidArgumentError):
        Fiber(name="f", disturbance=(("colour", 0.0, 0.1),), **TWO)


def test_fiber_phase_noise_reduces_visibility():
    sigma, n = 0.1, 10000
    rng = np.random.default_rng(2024)
    bs1 = BsParams(name="bs1", inputs=(("b", "src"),), outputs=(("c", "up"), ("d", "low")))
    fiber = Fiber(name="f", alpha_db_per_km=0.0, length_km=0.0, disturbance=(("phase", 0.0, sigma),),
                  inputs=(("in", "low"),), outputs=(("out", "low2"),))
    bs2 = BsParams(name="bs2", inputs=(("a", "up"), ("b", "low2")), outputs=(("c", "d1"), ("d", "d2")))
    split = apply_device(single("src"), bs1)
    p = np.array([prob(apply_device(apply_device(split, fiber, rng), bs2), "d1") for _ in range(n)])
    # p_D1 = (1 + cos X) / 2 with X ~ N(0, sigma^2), so E[2p - 1] = exp(-sigma^2 / 2)
    vis = 2 * p - 1
    assert vis.mean() == pytest.approx(math.exp(-sigma**2 / 2), abs=4 * vis.std() / math.sqrt(n) + 1e-12)


def test_phase_modulator_swaps_mzi_outputs():
    bs1 = BsParams(name="bs1", inputs=(("b", "src"),), outputs=(("c", "up"), ("d", "low")))
    bs2 = BsParams(name="bs2", inputs=(("a", "up"), ("b", "low2")), outputs=(("c", "d1"), ("d", "d2")))
    res = {}
    for phi in (0.0, math.pi):
        pm = PhaseModulator(name="pm", phase=phi, inputs=(("in", "low"),), outputs=(("out", "low2"),))
        out = apply_device(apply_device(apply_device(single("src"), bs1), pm), bs2)
        res[phi] = (prob(out, "d1"), prob(out, "d2"))
    assert res[0.0] == pytest.approx((1.0, 0.0), abs=1e-12)
    assert res[math.pi] == pytest.approx((0.0, 1.0), abs=1e-12)


def test_stochastic_device_needs_rng():
    fiber = Fiber(name="f", disturbance=(("phase", 0.0, 0.1),), **TWO)
    with pytest.raises(InvalidArgumentError):
        apply_device(single("x"), fiber)
