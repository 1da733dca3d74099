"""Command-line entry point.

Subcommands: ``saliency``, ``compress``, ``simulate``, ``sweep``,
``evaluate``, ``serve``, ``offload``, ``make-corpus``.  Logs go to
standard error; data goes to files or standard output.  Exit codes:
0 success, 1 usage error, 2 data/parse error, 3 network error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from .config import (
    Config,
    ConfigError,
    build_oracle_params,
    build_sim_config,
    dump_config,
    load_config,
)
from .corpus import make_corpus
from .detector import LabelParseError
from .imageio import Image, ImageFormatError, read_image, resize_bilinear, to_grayscale, write_image
from .protocol import (
    OffloadConnectionError,
    OffloadTimeoutError,
    ProtocolError,
    build_server,
    make_oracle_detector,
    make_replay_detector,
    offload,
    request_from_image,
    request_from_masked,
)
from .saliency import compute_saliency, srvs_compress
from .sim import (
    evaluate_accuracy,
    run_sim,
    sweep,
    write_accuracy_csv,
    write_outcomes_csv,
    write_sweep_csv,
)

log = logging.getLogger(__name__)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ratio_list(raw: str) -> list[float]:
    tokens = [t.strip() for t in raw.split(",") if t.strip()]
    if not tokens:
        raise argparse.ArgumentTypeError("empty ratio list")
    try:
        ratios = [float(t) for t in tokens]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {raw!r}")
    for r in ratios:
        if not 0.0 <= r < 1.0:
            raise argparse.ArgumentTypeError(f"ratios must be in [0, 1), got {r}")
    return ratios


def _framework_list(raw: str) -> list[str]:
    frameworks = [t.strip() for t in raw.split(",") if t.strip()]
    if not frameworks:
        raise argparse.ArgumentTypeError("empty framework list")
    for fw in frameworks:
        if fw not in ("EODF", "CONV"):
            raise argparse.ArgumentTypeError(f"unknown framework {fw!r}")
    return frameworks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eodf", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log-level", default="info",
                        choices=("debug", "info", "warning", "error"),
                        help="verbosity of standard-error logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config_options(p, with_seed=True):
        p.add_argument("--config", type=Path, default=None,
                       help="configuration file (section.key = value lines)")
        if with_seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override sim.master_seed from the config")
        p.add_argument("--dump-config", action="store_true",
                       help="print the fully-resolved configuration and exit")

    p = sub.add_parser("saliency", help="write the saliency map of an image as PGM")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--analysis-size", type=int, default=64,
                   help="square analysis resolution (default 64)")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("compress", help="mask the least-salient fraction of an image")
    p.add_argument("image", type=Path)
    p.add_argument("--ratio", type=float, required=True,
                   help="target discard ratio in [0, 1)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mask-out", type=Path, default=None,
                   help="also write the binary mask as PGM (0/255)")
    p.add_argument("--analysis-size", type=int, default=64)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("simulate", help="per-frame latency simulation -> CSV")
    add_config_options(p)
    p.add_argument("--out", type=Path, default=None,
                   help="output CSV (default: standard output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="ratio x framework outage sweep -> CSV + figure")
    add_config_options(p)
    p.add_argument("--ratios", type=_ratio_list, required=True,
                   help="comma-separated ascending discard ratios")
    p.add_argument("--frameworks", type=_framework_list, default=["EODF", "CONV"],
                   help="comma-separated subset of EODF,CONV")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--figure", type=Path, default=None,
                   help="figure path (default: --out with .png suffix)")
    p.add_argument("--no-plot", action="store_true", help="skip the figure")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="oracle AP/mAP versus ratio -> CSV + figure")
    add_config_options(p)
    p.add_argument("--corpus", type=Path, required=True,
                   help="directory of PGM/PPM frames with KITTI label files")
    p.add_argument("--ratios", type=_ratio_list, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--figure", type=Path, default=None)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the detection server")
    add_config_options(p, with_seed=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9090)
    p.add_argument("--mode", choices=("oracle", "replay"), default="oracle")
    p.add_argument("--labels", type=Path, required=True,
                   help="directory of KITTI label files (oracle) or replay files")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("offload", help="send one frame to a server, print detections")
    p.add_argument("image", type=Path)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9090)
    p.add_argument("--frame-id", type=int, default=None,
                   help="frame id (default: leading digits of the file name, else 0)")
    p.add_argument("--ratio", type=float, default=0.0,
                   help="discard ratio; 0 sends the original frame")
    p.add_argument("--analysis-size", type=int, default=64)
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_offload)

    p = sub.add_parser("make-corpus", help="generate a synthetic labeled corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--width", type=int, default=1242)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--channels", type=int, default=3, choices=(1, 3))
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=cmd_make_corpus)

    return parser


# --------------------------------------------------------------------------
# Shared plumbing
# --------------------------------------------------------------------------


def _load(args) -> Config:
    config = load_config(args.config) if args.config else Config()
    seed = getattr(args, "seed", None)
    if seed is not None:
        config.set("sim.master_seed", str(seed))
    return config


def _maybe_dump(args, config: Config) -> bool:
    if getattr(args, "dump_config", False):
        sys.stdout.write(dump_config(config))
        return True
    return False


@contextlib.contextmanager
def _csv_out(path: Path | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle


def _figure_path(args) -> Path | None:
    if args.no_plot:
        return None
    if args.figure is not None:
        return args.figure
    if args.out is not None:
        return args.out.with_suffix(".png")
    log.debug("no --out path; skipping figure (pass --figure to force one)")
    return None


def _scores_to_pgm(scores: np.ndarray) -> Image:
    return Image(np.floor(scores * 255.0 + 0.5).astype(np.uint8)[:, :, None])


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_saliency(args) -> int:
    image = read_image(args.image)
    small = resize_bilinear(to_grayscale(image), args.analysis_size, args.analysis_size)
    saliency = compute_saliency(small)
    write_image(_scores_to_pgm(saliency.scores), args.out)
    log.info("wrote %dx%d saliency map to %s",
             saliency.width, saliency.height, args.out)
    return 0


def cmd_compress(args) -> int:
    image = read_image(args.image)
    masked = srvs_compress(image, args.ratio, args.analysis_size)
    write_image(masked.image, args.out)
    if args.mask_out is not None:
        write_image(Image((masked.mask.bits * 255)[:, :, None]), args.mask_out)
    log.info("target discard %g, achieved %.4f; wrote %s",
             args.ratio, masked.discard_ratio, args.out)
    return 0


def cmd_simulate(args) -> int:
    config = _load(args)
    if _maybe_dump(args, config):
        return 0
    cfg = build_sim_config(config)
    probability, outcomes = run_sim(cfg)
    with _csv_out(args.out) as out:
        write_outcomes_csv(outcomes, out)
    log.info("outage probability %.6f over %d frames", probability, cfg.frames)
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    if _maybe_dump(args, config):
        return 0
    cfg = build_sim_config(config)
    rows = sweep(cfg, args.ratios, args.frameworks)
    with _csv_out(args.out) as out:
        write_sweep_csv(rows, out)
    if args.out is not None:
        log.info("wrote %d sweep rows to %s", len(rows), args.out)
    figure = _figure_path(args)
    if figure is not None:
        from .plotting import plot_sweep

        plot_sweep(rows, figure)
    return 0


def cmd_evaluate(args) -> int:
    config = _load(args)
    if _maybe_dump(args, config):
        return 0
    cells = evaluate_accuracy(
        args.corpus,
        args.ratios,
        build_oracle_params(config),
        analysis_size=config.get("saliency.analysis_size"),
        iou_threshold=config.get("eval.iou_threshold"),
    )
    with _csv_out(args.out) as out:
        write_accuracy_csv(cells, out)
    if args.out is not None:
        log.info("wrote %d evaluation rows to %s", len(cells), args.out)
    figure = _figure_path(args)
    if figure is not None:
        from .plotting import plot_accuracy

        plot_accuracy(cells, figure)
    return 0


def cmd_serve(args) -> int:
    config = _load(args)
    if _maybe_dump(args, config):
        return 0
    if args.mode == "oracle":
        detector = make_oracle_detector(args.labels, build_oracle_params(config))
    else:
        detector = make_replay_detector(args.labels)
    try:
        server = build_server(args.host, args.port, detector)
    except OSError as exc:
        log.error("cannot bind %s:%d: %s", args.host, args.port, exc)
        return 3
    with server:
        bound = server.server_address
        log.info("%s detector listening on %s:%d", args.mode, bound[0], bound[1])
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            log.info("interrupted; shutting down")
    return 0


def _default_frame_id(path: Path) -> int:
    digits = ""
    for ch in path.stem:
        if ch.isdigit():
            digits += ch
        elif digits:
            break
    return int(digits) if digits else 0


def cmd_offload(args) -> int:
    image = read_image(args.image)
    frame_id = args.frame_id if args.frame_id is not None else _default_frame_id(args.image)
    if args.ratio > 0.0:
        masked = srvs_compress(image, args.ratio, args.analysis_size)
        request = request_from_masked(frame_id, masked)
        log.info("frame %d: MASKED request, %d payload bytes (discard %.4f)",
                 frame_id, len(request.payload), masked.discard_ratio)
    else:
        request = request_from_image(frame_id, image)
        log.info("frame %d: RAW request, %d payload bytes", frame_id, len(request.payload))
    response, rtt = offload(args.host, args.port, request, timeout=args.timeout)
    log.info("round trip %.4f s, %d detections", rtt, len(response.detections))
    sys.stdout.write("class,confidence,left,top,right,bottom\n")
    for det in response.detections:
        box = det.box
        sys.stdout.write(
            f"{det.class_name},{det.confidence!r},"
            f"{box.left!r},{box.top!r},{box.right!r},{box.bottom!r}\n"
        )
    return 0


def cmd_make_corpus(args) -> int:
    paths = make_corpus(args.out, args.frames, args.width, args.height,
                        args.channels, args.seed)
    log.info("corpus of %d frames ready under %s", len(paths), args.out)
    return 0


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OffloadConnectionError, OffloadTimeoutError) as exc:
        log.error("%s", exc)
        return 3
    except ProtocolError as exc:
        log.error("protocol error: %s", exc)
        return 3
    except (ConfigError, ImageFormatError, LabelParseError) as exc:
        log.error("%s", exc)
        return 2
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
