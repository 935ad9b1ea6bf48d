"""Command-line front end: train, encode, decode, eval, info.

Option precedence is CLI flag, then ``--config`` file (``key = value``
lines, ``#`` comments), then built-in default.  Every command is
deterministic for a fixed ``--seed``; all failures print one line to
stderr with a stable ``error[<class>]:`` prefix and exit nonzero.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, AugmentingSampler
from .codec_io import encoded_size_bytes, read_checkpoint, read_encoded, write_checkpoint, write_encoded
from .errors import ConfigError, DatasetError, LfcError
from .lightfield import (
    DEFAULT_VIEW_PATTERN,
    DatasetLayout,
    LightField,
    list_light_fields,
    load_light_field,
    save_light_field,
)
from .metrics import evaluate, identity_report
from .model import (
    Model,
    ModelConfig,
    build_model,
    compression_ratio,
    decode,
    encode,
    layer_summary,
    parameter_count,
)
from .train import TrainConfig, train


def _parse_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_schedule(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _parse_lr_schedule(text: str) -> tuple[tuple[int, float], ...]:
    out = []
    for part in text.split(","):
        epoch, _, lr = part.partition(":")
        if not lr:
            raise argparse.ArgumentTypeError(f"expected EPOCH:LR pairs, got {part!r}")
        out.append((int(epoch), float(lr)))
    return tuple(out)


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class Options:
    """Resolves option values with CLI > config file > default precedence."""

    _CONVERTERS = {
        "brightness": _parse_range,
        "saturation": _parse_range,
        "schedule": _parse_schedule,
        "lr_schedule": _parse_lr_schedule,
    }

    def __init__(self, args: argparse.Namespace, allowed: set[str]):
        self._args = vars(args)
        self._file: dict[str, str] = {}
        if args.config:
            self._file = _load_config_file(args.config)
            unknown = set(self._file) - allowed
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def get(self, name: str, default, conv=None):
        value = self._args.get(name)
        if value is not None:
            return value
        if name in self._file:
            conv = conv or self._CONVERTERS.get(name, str)
            return conv(self._file[name])
        return default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfcodec",
        description="Two-lane convolutional autoencoder codec for light fields.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--pattern", default=None,
                       help=f"view filename pattern (default {DEFAULT_VIEW_PATTERN})")

    def add_model_flags(p):
        p.add_argument("--grid", type=int, default=None, help="views per grid side")
        p.add_argument("--spatial", type=int, default=None, help="view size in pixels")
        p.add_argument("--schedule", type=_parse_schedule, default=None,
                       help="encoder channel schedule, e.g. 128,256,512,1024,2048")
        p.add_argument("--decoder-out", type=int, default=None,
                       help="decoder output channels before the highway concat")
        p.add_argument("--init-seed", type=int, default=None, help="weight init seed")

    p = sub.add_parser("train", help="train a model on a directory of light fields")
    add_common(p)
    add_model_flags(p)
    p.add_argument("--data", required=True, help="root directory of light-field subdirectories")
    p.add_argument("--test-data", default=None, help="held-out light fields for per-epoch MSE")
    p.add_argument("--out", default=None, help="output directory (default train_out)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--iters-per-epoch", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--lr-schedule", type=_parse_lr_schedule, default=None,
                   help="EPOCH:LR pairs, e.g. 0:0.001,30:0.0005")
    p.add_argument("--min-crop", type=int, default=None)
    p.add_argument("--flip-prob", type=float, default=None)
    p.add_argument("--brightness", type=_parse_range, default=None, help="LO:HI")
    p.add_argument("--saturation", type=_parse_range, default=None, help="LO:HI")

    p = sub.add_parser("encode", help="compress one light-field directory to .lfae")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="light-field directory")
    p.add_argument("--out", default=None, help="output .lfae path")

    p = sub.add_parser("decode", help="decompress an .lfae file to a PNG directory")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help=".lfae file")
    p.add_argument("--out", default=None, help="output view directory")

    p = sub.add_parser("eval", help="score reconstructions of named test fields")
    add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--fields", default=None, help="comma-separated names (default: all)")
    p.add_argument("--identity", action="store_true",
                   help="sanity mode: compare each field with itself, no model")
    p.add_argument("--out", default=None, help="write the report as CSV here")

    p = sub.add_parser("info", help="report ratio, parameter count, and layer shapes")
    add_common(p)
    add_model_flags(p)
    p.add_argument("--checkpoint", default=None)
    return parser


def _allowed_keys(parser: argparse.ArgumentParser, command: str) -> set[str]:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        sub = action.choices[command]
        return {a.dest for a in sub._actions if a.dest != "help"}  # noqa: SLF001
    return set()


def _model_config_from_options(opts: Options, *, grid: int | None = None,
                               spatial: int | None = None) -> ModelConfig:
    grid = opts.get("grid", grid if grid is not None else 9, int)
    spatial = opts.get("spatial", spatial if spatial is not None else 512, int)
    schedule = opts.get("schedule", (128, 256, 512, 1024, 2048))
    decoder_out = opts.get("decoder_out", grid * grid * 3 - 3, int)
    init_seed = opts.get("init_seed", 0, int)
    return ModelConfig(grid=(grid, grid), spatial=spatial,
                       channel_schedule=tuple(schedule),
                       decoder_out_channels=decoder_out, init_seed=init_seed)


def _load_fields(root: str, names: list[str] | None, pattern: str,
                 grid: int | None) -> tuple[list[str], list[LightField], int]:
    all_names = list_light_fields(root)
    if not all_names:
        raise DatasetError(f"no light-field subdirectories under {root}")
    names = names if names else all_names
    missing = set(names) - set(all_names)
    if missing:
        raise DatasetError(f"fields not found under {root}: {sorted(missing)}")
    if grid is None:
        grid = _infer_grid(Path(root) / names[0], pattern)
    layout = DatasetLayout(root=Path(root), pattern=pattern, grid=grid)
    return names, [load_light_field(layout, n) for n in names], grid


def _infer_grid(directory: Path, pattern: str) -> int:
    count = 0
    while (directory / pattern.format(index=count)).is_file():
        count += 1
    side = math.isqrt(count)
    if count == 0 or side * side != count:
        raise DatasetError(
            f"{directory}: found {count} views matching {pattern!r}; expected a square count")
    return side


def cmd_train(args: argparse.Namespace, opts: Options) -> int:
    pattern = opts.get("pattern", DEFAULT_VIEW_PATTERN)
    seed = opts.get("seed", 0, int)
    out_dir = Path(opts.get("out", "train_out"))
    grid_flag = opts.get("grid", None, int)
    names, fields, grid = _load_fields(args.data, None, pattern, grid_flag)
    spatial = fields[0].view_size
    cfg = _model_config_from_options(opts, grid=grid, spatial=spatial)

    test_fields = None
    if opts.get("test_data", None):
        _, test_fields, _ = _load_fields(opts.get("test_data", None), None, pattern, cfg.grid[0])

    aug = AugmentConfig(
        brightness_range=opts.get("brightness", (-0.2, 0.2)),
        saturation_range=opts.get("saturation", (0.6, 1.6)),
        min_crop=opts.get("min_crop", min(256, spatial), int),
        flip_probability=opts.get("flip_prob", 0.5, float),
        seed=seed)
    tcfg = TrainConfig(
        batch_size=opts.get("batch", 4, int),
        iterations_per_epoch=opts.get("iters_per_epoch", 30, int),
        lr_schedule=opts.get("lr_schedule", ((0, 0.001), (30, 0.0005), (60, 0.0002), (90, 0.0001))),
        total_epochs=opts.get("epochs", 200, int),
        seed=seed,
        checkpoint_every=opts.get("checkpoint_every", 10, int))

    print(f"training on {len(names)} light fields ({grid}x{grid} views of "
          f"{spatial}px), {tcfg.total_epochs} epochs x {tcfg.iterations_per_epoch} iterations, "
          f"batch {tcfg.batch_size}")
    model = build_model(cfg)
    sampler = AugmentingSampler(fields, aug)
    out_dir.mkdir(parents=True, exist_ok=True)

    def log(rec):
        test = f" test_mse {rec.test_mse:.6g}" if rec.test_mse is not None else ""
        print(f"epoch {rec.epoch:4d}  lr {rec.lr:.6g}  train_mse {rec.train_mse:.6g}{test}")

    history = train(model, sampler, tcfg, test_fields=test_fields,
                    checkpoint_dir=out_dir, log=log)
    history.save_csv(out_dir / "history.csv")
    write_checkpoint(model, None, out_dir / "model.lfck")
    print(f"wrote {out_dir / 'history.csv'} and {out_dir / 'model.lfck'}")
    return 0


def _load_model(path: str) -> Model:
    model, _ = read_checkpoint(path)
    return model


def cmd_encode(args: argparse.Namespace, opts: Options) -> int:
    pattern = opts.get("pattern", DEFAULT_VIEW_PATTERN)
    model = _load_model(args.checkpoint)
    field_dir = Path(args.input)
    layout = DatasetLayout(root=field_dir.parent, pattern=pattern, grid=model.config.grid[0])
    lf = load_light_field(layout, field_dir.name)
    out = Path(opts.get("out", str(field_dir) + ".lfae"))

    t0 = time.perf_counter()
    enc = encode(model, lf)
    elapsed = time.perf_counter() - t0
    nbytes = write_encoded(enc, out)
    raw = lf.views.size * 4
    print(f"encoder pass: {elapsed:.3f} s")
    print(f"wrote {out}: {nbytes} bytes ({raw} raw, ratio {raw / nbytes:.2f})")
    return 0


def cmd_decode(args: argparse.Namespace, opts: Options) -> int:
    pattern = opts.get("pattern", DEFAULT_VIEW_PATTERN)
    model = _load_model(args.checkpoint)
    enc = read_encoded(args.input)
    out = Path(opts.get("out", str(Path(args.input).with_suffix("")) + "_decoded"))

    t0 = time.perf_counter()
    lf = decode(model, enc)
    elapsed = time.perf_counter() - t0
    save_light_field(lf, out, pattern)
    print(f"decoder pass: {elapsed:.3f} s")
    print(f"wrote {lf.rows * lf.cols} views to {out}")
    return 0


def cmd_eval(args: argparse.Namespace, opts: Options) -> int:
    pattern = opts.get("pattern", DEFAULT_VIEW_PATTERN)
    wanted = None
    if opts.get("fields", None):
        wanted = [n.strip() for n in opts.get("fields", None).split(",") if n.strip()]
    if args.identity:
        names, fields, _ = _load_fields(args.data, wanted, pattern, None)
        report = identity_report(list(zip(names, fields)))
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint (or --identity)")
        model = _load_model(args.checkpoint)
        names, fields, _ = _load_fields(args.data, wanted, pattern, model.config.grid[0])
        report = evaluate(model, list(zip(names, fields)))
    print(report.to_table_text(), end="")
    if opts.get("out", None):
        report.save_csv(opts.get("out", None))
        print(f"wrote {opts.get('out', None)}")
    return 0


def cmd_info(args: argparse.Namespace, opts: Options) -> int:
    if args.checkpoint:
        model = _load_model(args.checkpoint)
    else:
        model = build_model(_model_config_from_options(opts))
    cfg = model.config
    count = parameter_count(model)
    print(f"grid {cfg.grid[0]}x{cfg.grid[1]}, views {cfg.spatial}px, "
          f"latent {cfg.latent_channels}x{cfg.latent_spatial}x{cfg.latent_spatial}")
    print(f"compression ratio: {compression_ratio(cfg):.4f}")
    print(f"parameters: {count} ({4 * count} bytes as float32)")
    print(f"encoded field size: {encoded_size_bytes(cfg)} bytes")
    print(f"{'layer':<12} {'kind':<26} {'weights':<22} output")
    for row in layer_summary(model):
        w = "x".join(str(d) for d in row["weights"])
        o = "x".join(str(d) for d in row["output"])
        print(f"{row['name']:<12} {row['kind']:<26} {w:<22} {o}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "info": cmd_info,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args, _allowed_keys(parser, args.command))
        return _COMMANDS[args.command](args, opts)
    except LfcError as e:
        print(f"error[{e.cli_tag}]: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error[io]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
