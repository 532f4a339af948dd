"""Command line entry point: ``strokepaint {paint,stylize,replay,metrics}``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error
(missing/unreadable files, malformed logs), 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .core import resize_bilinear
from .imageio import read_image, write_image
from .metrics import l2_distance, psnr
from .optim import NumericError
from .pipeline import ConfigError, LogFormatError, PaintConfig, StrokeLog, paint, prepare_target, replay

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="strokepaint", description="Stroke-based painting and stylization.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pp = sub.add_parser("paint", help="paint an image with brushstrokes")
    pp.add_argument("--input", required=True, help="target image (PNG or PPM)")
    pp.add_argument("--strokes", type=int, help="stroke budget")
    pp.add_argument("--config", help="TOML config file (flat or sectioned keys)")
    pp.add_argument("--seed", type=int)
    pp.add_argument("--frames-every", type=int, help="dump a frame every k accepted steps")
    pp.add_argument("--frames-dir", help="frame directory (default: <output>_frames)")
    pp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key, e.g. painter.iters=80 (repeatable)")
    pp.add_argument("--output", required=True)
    pp.add_argument("--log", required=True, help="stroke log to write (JSONL)")

    ps = sub.add_parser("stylize", help="restyle the strokes of a log")
    ps.add_argument("--log", required=True)
    ps.add_argument("--content", required=True)
    ps.add_argument("--style", required=True)
    ps.add_argument("--style-weight", type=float)
    ps.add_argument("--content-weight", type=float)
    ps.add_argument("--dt-weight", type=float)
    ps.add_argument("--iters", type=int)
    ps.add_argument("--step-size", type=float)
    ps.add_argument("--kernel", type=int, help="DT window size (odd)")
    ps.add_argument("--temp", type=float, help="softmin temperature")
    ps.add_argument("--output", required=True)
    ps.add_argument("--log-out", required=True)

    pr = sub.add_parser("replay", help="re-render a stroke log")
    pr.add_argument("--log", required=True)
    pr.add_argument("--width", type=int)
    pr.add_argument("--height", type=int)
    pr.add_argument("--output", required=True)

    pm = sub.add_parser("metrics", help="compare two images")
    pm.add_argument("--a", required=True)
    pm.add_argument("--b", required=True)
    return p


def _cmd_paint(args) -> int:
    cfg = PaintConfig.from_toml(args.config) if args.config else PaintConfig()
    flags = {}
    if args.strokes is not None:
        flags["budget"] = args.strokes
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.frames_every is not None:
        flags["frames_every"] = args.frames_every
    flags.update(_parse_set(args.set))
    cfg = PaintConfig.from_flat(flags, cfg)
    I = prepare_target(read_image(args.input), cfg)
    frames = None
    if cfg.frames_every > 0:
        out = Path(args.output)
        frames = args.frames_dir or out.with_name(out.stem + "_frames")
    res = paint(I, cfg, frames)
    write_image(args.output, res.canvas)
    res.log.save(args.log)
    d = res.log.steps[-1].distance if res.log.steps else 1.0
    print(f"steps={len(res.log.steps)} strokes={res.log.n_strokes} attempts={res.attempts} "
          f"stop={res.stop_reason} distance={d:.6g}", file=sys.stderr)
    return EXIT_OK


def _cmd_stylize(args) -> int:
    from .stylize import StyleWeights, stylize_strokes

    log = StrokeLog.load(args.log)
    content = read_image(args.content)
    style = read_image(args.style)
    h = log.header
    if content.shape[:2] != (h.height, h.width):
        content = resize_bilinear(content, h.width, h.height)
    overrides = {
        "style": args.style_weight, "content": args.content_weight, "dt": args.dt_weight,
        "iters": args.iters, "step_size": args.step_size, "kernel": args.kernel,
        "temp": args.temp,
    }
    weights = dataclasses.replace(StyleWeights(),
                                  **{k: v for k, v in overrides.items() if v is not None})
    out = stylize_strokes(log, content, style, weights)
    out.save(args.log_out)
    write_image(args.output, replay(out))
    return EXIT_OK


def _cmd_replay(args) -> int:
    log = StrokeLog.load(args.log)
    write_image(args.output, replay(log, args.width, args.height))
    return EXIT_OK


def _cmd_metrics(args) -> int:
    a = read_image(args.a)
    b = read_image(args.b)
    if a.shape != b.shape:
        raise ValueError(f"images differ in size: {a.shape[:2]} vs {b.shape[:2]}")
    print(f"l2={l2_distance(a, b):g} psnr={psnr(a, b):g}")
    return EXIT_OK


_COMMANDS = {"paint": _cmd_paint, "stylize": _cmd_stylize, "replay": _cmd_replay,
             "metrics": _cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, LogFormatError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
