import socket
import threading

import pytest

from eodf.channel import ChannelModel, LinkConfig
from eodf.cli import main
from eodf.config import (
    Config,
    ConfigError,
    build_oracle_params,
    build_sim_config,
    dump_config,
    parse_config,
)
from eodf.detector import OracleParams
from eodf.imageio import read_image
from eodf.latency import LatencyParams
from eodf.sim import SimConfig


class TestParsing:
    def test_empty_text_resolves_to_full_defaults(self):
        config = parse_config("")
        assert config.get("link.bandwidth_hz") == 20e6
        assert config.get("link.cqi_threshold") == 7
        assert config.get("sim.policy") == "cqi-threshold"
        assert build_sim_config(config) == SimConfig()

    def test_later_line_overrides_earlier(self):
        config = parse_config("sim.frames = 5\nsim.frames = 9\n")
        assert config.get("sim.frames") == 9
        assert config.lines["sim.frames"] == 2

    def test_comments_and_blank_lines(self):
        config = parse_config(
            "# leading comment\n"
            "\n"
            "sim.frames = 7  # trailing comment\n"
            "   \n"
        )
        assert config.get("sim.frames") == 7

    def test_unknown_key_suggests_nearest(self):
        with pytest.raises(ConfigError) as err:
            parse_config("link.cqi_treshold = 9\n")
        message = str(err.value)
        assert "line 1" in message
        assert "unknown key" in message
        assert "link.cqi_threshold" in message

    def test_bad_value_carries_line_number(self):
        with pytest.raises(ConfigError) as err:
            parse_config("channel.kind = iid-uniform\nsim.frames = ten\n")
        assert "line 2" in str(err.value)
        assert "sim.frames" in str(err.value)

    def test_bad_choice_lists_options(self):
        with pytest.raises(ConfigError) as err:
            parse_config("sim.framework = RFB\n")
        assert "EODF" in str(err.value) and "CONV" in str(err.value)

    def test_line_without_equals_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("sim.frames\n")
        assert "line 1" in str(err.value)

    def test_empty_value_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("sim.frames =\n")
        assert "empty value" in str(err.value)

    def test_set_checks_keys(self):
        config = Config()
        config.set("sim.master_seed", "4")
        assert config.get("sim.master_seed") == 4
        with pytest.raises(ConfigError):
            config.set("sim.mister_seed", "4")


class TestDump:
    def test_dump_is_complete_and_round_trips(self):
        config = parse_config("sim.frames = 123\nlink.overhead = 0.2\n")
        text = dump_config(config)
        lines = text.strip().splitlines()
        assert len(lines) == 29
        assert lines == sorted(lines)
        assert "link.bandwidth_hz = 20e6" in lines
        assert "sim.frames = 123" in lines
        again = parse_config(text)
        assert build_sim_config(again) == build_sim_config(config)


FULL_OVERRIDE = """
sim.frames = 77
sim.fps = 25
sim.framework = CONV
sim.policy = deadline-estimate
sim.compression_ratio = 0.25
sim.frame_width = 100
sim.frame_height = 80
sim.frame_channels = 1
sim.mask_layout = alternating
sim.master_seed = 99
sim.workers = 3
channel.kind = markov
channel.cqi_min = 3
channel.cqi_max = 9
channel.stay_probability = 0.5
channel.seed = 8
link.bandwidth_hz = 10e6
link.carriers = 1
link.layers = 2
link.scaling = 0.75
link.overhead = 0.2
link.cqi_threshold = 9
latency.compression_fps = 100
latency.detection_fps = 50
latency.result_bytes = 64
"""


class TestBuilders:
    def test_every_simulation_key_is_wired_through(self):
        cfg = build_sim_config(parse_config(FULL_OVERRIDE))
        assert cfg == SimConfig(
            frames=77, fps=25.0, framework="CONV", policy="deadline-estimate",
            compression_ratio=0.25, frame_width=100, frame_height=80,
            frame_channels=1, mask_layout="alternating", master_seed=99, workers=3,
            channel=ChannelModel(kind="markov", cqi_min=3, cqi_max=9,
                                 stay_probability=0.5, seed=8),
            link=LinkConfig(bandwidth_hz=10e6, num_carriers=1, mimo_layers=2,
                            scaling_factor=0.75, overhead=0.2, cqi_threshold=9),
            latency=LatencyParams(compression_fps=100.0, detection_fps=50.0,
                                  result_bytes=64),
        )

    def test_oracle_params(self):
        config = parse_config(
            "oracle.visibility_threshold = 0.7\noracle.confidence_model = constant\n"
        )
        assert build_oracle_params(config) == OracleParams(0.7, "constant")

    def test_out_of_range_value_rejected_at_build(self):
        config = parse_config("channel.cqi_min = 9\nchannel.cqi_max = 4\n")
        with pytest.raises(ValueError):
            build_sim_config(config)


@pytest.fixture()
def sample_image(small_corpus_dir):
    return sorted(small_corpus_dir.glob("*.ppm"))[0]


class TestCliExitCodes:
    def test_missing_subcommand_is_usage_error(self):
        assert main([]) == 1

    def test_missing_required_option_is_usage_error(self):
        assert main(["sweep"]) == 1

    def test_malformed_ratio_list_is_usage_error(self):
        assert main(["sweep", "--ratios", "abc"]) == 1
        assert main(["sweep", "--ratios", "1.5"]) == 1

    def test_unsorted_ratios_are_a_data_error(self, tmp_path):
        assert main(["sweep", "--ratios", "0.4,0.1",
                     "--out", str(tmp_path / "s.csv")]) == 2

    def test_missing_image_is_a_data_error(self, tmp_path):
        out = tmp_path / "map.pgm"
        assert main(["saliency", str(tmp_path / "nope.pgm"), "--out", str(out)]) == 2

    def test_bad_config_file_is_a_data_error(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("link.cqi_treshold = 9\n")
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_unreachable_server_is_a_network_error(self, sample_image):
        code = main(["offload", str(sample_image),
                     "--port", "1", "--timeout", "0.5"])
        assert code == 3

    def test_occupied_port_fails_serve(self, tmp_path):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            code = main(["serve", "--labels", str(tmp_path),
                         "--port", str(port)])
            assert code == 3
        finally:
            blocker.close()


class TestCliOutputs:
    def test_saliency_writes_a_pgm_map(self, sample_image, tmp_path):
        out = tmp_path / "map.pgm"
        assert main(["saliency", str(sample_image), "--out", str(out),
                     "--analysis-size", "32"]) == 0
        image = read_image(out)
        assert (image.width, image.height, image.channels) == (32, 32, 1)

    def test_compress_reports_mask_and_hits_the_target(self, sample_image, tmp_path):
        out = tmp_path / "c.ppm"
        mask_out = tmp_path / "m.pgm"
        assert main(["compress", str(sample_image), "--ratio", "0.3",
                     "--out", str(out), "--mask-out", str(mask_out)]) == 0
        original = read_image(sample_image)
        compressed = read_image(out)
        assert (compressed.width, compressed.height) == (original.width, original.height)
        mask = read_image(mask_out)
        retained = (mask.pixels > 0).mean()
        assert abs((1.0 - retained) - 0.3) <= 0.02

    def test_simulate_streams_csv_to_stdout(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("sim.frames = 50\n")
        assert main(["simulate", "--config", str(cfg)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("frame_id,decision,cqi,")
        assert len(lines) == 51

    def test_seed_override_changes_the_trace(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("sim.frames = 50\n")
        outputs = []
        for seed in ("1", "2", "1"):
            assert main(["simulate", "--config", str(cfg), "--seed", seed]) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] != outputs[1]
        assert outputs[0] == outputs[2]

    def test_sweep_writes_csv_and_figure(self, tmp_path):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text("sim.frames = 40\n")
        out = tmp_path / "rows.csv"
        assert main(["sweep", "--config", str(cfg), "--ratios", "0.0,0.2",
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 2 * 2  # header + ratios x frameworks
        assert (tmp_path / "rows.png").exists()

    def test_no_plot_skips_the_figure(self, tmp_path):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text("sim.frames = 40\n")
        out = tmp_path / "rows.csv"
        assert main(["sweep", "--config", str(cfg), "--ratios", "0.1",
                     "--out", str(out), "--no-plot"]) == 0
        assert out.exists()
        assert not (tmp_path / "rows.png").exists()

    def test_evaluate_writes_csv_and_figure(self, small_corpus_dir, tmp_path):
        out = tmp_path / "acc.csv"
        figure = tmp_path / "acc_figure.png"
        assert main(["evaluate", "--corpus", str(small_corpus_dir),
                     "--ratios", "0.0", "--out", str(out),
                     "--figure", str(figure)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "ratio,class,ap"
        assert len(lines) == 1 + 5  # four classes + the mAP aggregate
        assert figure.exists()

    def test_dump_config_prints_resolved_settings(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("sim.frames = 123\n")
        assert main(["simulate", "--config", str(cfg), "--dump-config"]) == 0
        out = capsys.readouterr().out
        assert "sim.frames = 123" in out
        assert "link.bandwidth_hz = 20e6" in out
        assert len(out.splitlines()) == 29

    def test_make_corpus_is_reproducible(self, tmp_path):
        args = ["--frames", "2", "--width", "400", "--height", "200"]
        for d in ("a", "b"):
            assert main(["make-corpus", "--out", str(tmp_path / d), *args]) == 0
        a_files = sorted((tmp_path / "a").iterdir())
        b_files = sorted((tmp_path / "b").iterdir())
        assert [p.name for p in a_files] == [p.name for p in b_files]
        assert a_files  # something was generated
        for pa, pb in zip(a_files, b_files):
            assert pa.read_bytes() == pb.read_bytes()

    def test_offload_round_trip_prints_detections(self, small_corpus_dir,
                                                  sample_image, capsys):
        from eodf.detector import load_kitti_labels
        from eodf.protocol import build_server, make_oracle_detector

        server = build_server("127.0.0.1", 0, make_oracle_detector(small_corpus_dir))
        port = server.server_address[1]
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            code = main(["offload", str(sample_image), "--port", str(port),
                         "--ratio", "0"])
            assert code == 0
            lines = capsys.readouterr().out.splitlines()
            truths = load_kitti_labels(sample_image.with_suffix(".txt"))
            assert lines[0] == "class,confidence,left,top,right,bottom"
            assert len(lines) == 1 + len(truths)
            for line, truth in zip(lines[1:], truths):
                fields = line.split(",")
                assert fields[0] == truth.class_name
                assert float(fields[1]) == 1.0
                assert [float(f) for f in fields[2:]] == [
                    truth.box.left, truth.box.top, truth.box.right, truth.box.bottom,
                ]
        finally:
            server.shutdown()
            server.server_close()
