import numpy as np
import pytest

from eodf.channel import (
    CQI_EFFICIENCY,
    ChannelModel,
    Decision,
    LinkConfig,
    decide,
    sample_trace,
    spectral_efficiency,
    splitmix64,
    throughput,
    trace_frequencies,
)
from eodf.latency import LatencyParams, frame_latency


class TestSplitmix:
    def test_known_vectors(self):
        # First three outputs of the classic splitmix64 stream from seed 0.
        assert splitmix64(0, 0) == 0xE220A8397B1DCDAF
        assert splitmix64(0, 1) == 0x6E789E6AA1B965F4
        assert splitmix64(0, 2) == 0x06C45D188009454F

    def test_wraps_modulo_2_64(self):
        assert 0 <= splitmix64(2**64 - 1, 2**63) < 2**64

    def test_distinct_across_indices(self):
        values = {splitmix64(42, i) for i in range(1000)}
        assert len(values) == 1000


class TestEfficiencyTable:
    def test_fifteen_entries_monotone(self):
        assert len(CQI_EFFICIENCY) == 15
        assert all(a < b for a, b in zip(CQI_EFFICIENCY, CQI_EFFICIENCY[1:]))

    def test_boundary_values(self):
        assert spectral_efficiency(1) == 0.1523
        assert spectral_efficiency(15) == 5.5547

    def test_out_of_range(self):
        for cqi in (0, 16, -3):
            with pytest.raises(ValueError):
                spectral_efficiency(cqi)


class TestThroughput:
    def test_frozen_endpoints(self):
        link = LinkConfig()
        assert throughput(15, link) == pytest.approx(764326720.0, rel=1e-12)
        assert throughput(1, link) == pytest.approx(20956480.0, rel=1e-12)

    def test_monotone_over_all_cqi(self):
        link = LinkConfig()
        rates = [throughput(q, link) for q in range(1, 16)]
        assert all(a < b for a, b in zip(rates, rates[1:]))

    def test_scales_with_bandwidth(self):
        narrow = throughput(7, LinkConfig(bandwidth_hz=10e6))
        wide = throughput(7, LinkConfig(bandwidth_hz=20e6))
        assert wide == pytest.approx(2 * narrow, rel=1e-12)

    def test_overhead_reduces_rate(self):
        vanilla = throughput(7, LinkConfig(overhead=0.0))
        taxed = throughput(7, LinkConfig(overhead=0.14))
        assert taxed == pytest.approx(vanilla * 0.86, rel=1e-12)


class TestIidTrace:
    def test_order_independent_per_frame_values(self):
        model = ChannelModel(kind="iid-uniform", cqi_min=8, cqi_max=13, seed=99)
        full = sample_trace(model, 500)
        # Each frame's value is a pure function of (seed, index): a longer
        # or shorter trace agrees on the shared prefix.
        assert np.array_equal(sample_trace(model, 100), full[:100])
        span = 13 - 8 + 1
        expected = 8 + splitmix64(99, 250) % span
        assert full[250] == expected

    def test_range_and_frequencies(self):
        model = ChannelModel(kind="iid-uniform", cqi_min=8, cqi_max=13, seed=5)
        trace = sample_trace(model, 150_000)
        assert trace.min() >= 8 and trace.max() <= 13
        freq = trace_frequencies(trace)
        for level in range(8, 14):
            assert abs(freq[level] - 1 / 6) < 0.005

    def test_deterministic(self):
        model = ChannelModel(seed=1234)
        assert np.array_equal(sample_trace(model, 1000), sample_trace(model, 1000))

    def test_single_level_range(self):
        model = ChannelModel(cqi_min=9, cqi_max=9, seed=3)
        assert np.all(sample_trace(model, 100) == 9)


class TestMarkovTrace:
    def test_stay_probability_one_is_constant(self):
        model = ChannelModel(kind="markov", stay_probability=1.0, seed=7)
        trace = sample_trace(model, 200)
        assert np.all(trace == trace[0])

    def test_steps_are_unit_or_clamped(self):
        model = ChannelModel(kind="markov", cqi_min=3, cqi_max=12,
                             stay_probability=0.0, seed=11)
        trace = sample_trace(model, 5000)
        assert trace.min() >= 3 and trace.max() <= 12
        deltas = np.abs(np.diff(trace))
        assert deltas.max() <= 1
        # With stay probability 0, staying put happens only at the walls.
        stay_positions = np.flatnonzero(deltas == 0)
        assert np.all(np.isin(trace[stay_positions], [3, 12]))

    def test_observed_stay_rate(self):
        model = ChannelModel(kind="markov", stay_probability=0.8, seed=13)
        trace = sample_trace(model, 50_000)
        stays = float(np.mean(np.diff(trace) == 0))
        # Clamping at the range walls adds a little on top of 0.8.
        assert 0.78 <= stays <= 0.85

    def test_deterministic(self):
        model = ChannelModel(kind="markov", seed=21)
        assert np.array_equal(sample_trace(model, 500), sample_trace(model, 500))


class TestDecide:
    def test_cqi_threshold_inclusive_boundary(self):
        link = LinkConfig(cqi_threshold=7)
        lat = LatencyParams()
        assert decide("cqi-threshold", 7, 10**6, link, lat, 30.0) is Decision.SEND_ORIGINAL
        assert decide("cqi-threshold", 6, 10**6, link, lat, 30.0) is Decision.COMPRESS
        assert decide("cqi-threshold", 15, 10**6, link, lat, 30.0) is Decision.SEND_ORIGINAL

    def test_deadline_estimate_agrees_with_latency_model(self):
        rng = np.random.default_rng(31)
        link = LinkConfig()
        for _ in range(200):
            lat = LatencyParams(
                detection_fps=float(rng.choice([59.0, 91.0, 125.0, 200.0])),
                result_bytes=int(rng.integers(0, 4096)),
            )
            cqi = int(rng.integers(1, 16))
            frame_bytes = int(rng.integers(1, 2_000_000))
            fps = float(rng.choice([15.0, 30.0, 60.0]))
            choice = decide("deadline-estimate", cqi, frame_bytes, link, lat, fps)
            outcome = frame_latency(Decision.SEND_ORIGINAL, frame_bytes, cqi, link, lat, fps)
            assert (choice is Decision.SEND_ORIGINAL) == (not outcome.outage)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            decide("coin-flip", 7, 1, LinkConfig(), LatencyParams(), 30.0)

    def test_cqi_validated(self):
        with pytest.raises(ValueError):
            decide("cqi-threshold", 0, 1, LinkConfig(), LatencyParams(), 30.0)


class TestValidation:
    def test_channel_model_ranges(self):
        with pytest.raises(ValueError):
            ChannelModel(cqi_min=0)
        with pytest.raises(ValueError):
            ChannelModel(cqi_min=9, cqi_max=8)
        with pytest.raises(ValueError):
            ChannelModel(kind="rayleigh")
        with pytest.raises(ValueError):
            ChannelModel(stay_probability=1.2)

    def test_link_config_ranges(self):
        with pytest.raises(ValueError):
            LinkConfig(bandwidth_hz=0)
        with pytest.raises(ValueError):
            LinkConfig(overhead=1.0)
        with pytest.raises(ValueError):
            LinkConfig(cqi_threshold=16)

    def test_trace_frequencies_sum_to_one(self):
        freq = trace_frequencies([8, 8, 9, 10])
        assert freq == {8: 0.5, 9: 0.25, 10: 0.25}
