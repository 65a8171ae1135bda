#
# Copyright (c) 2020, NVIDIA CORPORATION.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""Command line interface: ``mcdenoise <command> ...`` (or ``python -m mcdenoise``).

Exit codes are 0 on success, 1 on a failed check or internal error and 2 on a
usage error.
"""
import argparse
import csv
import logging
import math
import sys

import fsspec
import yaml
from fsspec.core import get_fs_token_paths

from .io import (
    VOLUME_SUFFIXES,
    denormalize,
    load_model,
    normalize,
    read_volume,
    save_model,
    to_intensity_units,
    write_volume,
)
from .loader import (
    PatchConfig,
    Regime,
    build_training_set,
    load_patch_cache,
    patch_cache_matches,
    save_patch_cache,
)
from .metrics import SSIM_C1, SSIM_C2, evaluate, noise_sweep, psnr_pivot
from .network import build_model, denoise, denoise_volume
from .noise import NoiseLevel, add_rician, noise_sweep_levels
from .optim import TrainConfig
from .phantom import make_phantom
from .selfcheck import PRIMITIVES, run_selfcheck
from .trainer import LossLogger, train
from .utils import derive_seed

LOG = logging.getLogger("mcdenoise")

EVALUATE_COLUMNS = ["name", "psnr_db", "ssim_global"]
SWEEP_COLUMNS = ["volume", "level_percent", "method", "psnr_db", "ssim_global"]


class UsageError(Exception):
    """Bad arguments or inputs that the user has to fix; exit code 2."""


def _percent(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid noise level {text!r}")
    if not 0 < value <= 100:
        raise argparse.ArgumentTypeError(f"noise level must lie in (0, 100], got {text}")
    return value


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _float_list(text):
    try:
        return [_percent(v) for v in text.split(",")]
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"expected comma separated noise levels, got {text!r}")


def list_volumes(paths):
    """Expand directories to the volume files they hold, sorted by name."""
    found = []
    for path in paths:
        fs, _, expanded = get_fs_token_paths(path)
        if len(expanded) == 1 and fs.isdir(expanded[0]):
            for suffix in VOLUME_SUFFIXES:
                found.extend(sorted(fs.glob(fs.sep.join([expanded[0], "*" + suffix]))))
        else:
            found.extend(p for p in expanded if p.endswith(VOLUME_SUFFIXES))
    return found


def _load(path, no_normalize=False, scale=None):
    volume = read_volume(path)
    if no_normalize:
        return volume
    return normalize(volume, scale=scale)


def _write_csv(path, columns, rows):
    with fsspec.open(str(path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


def _format_value(value):
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return value


def cmd_add_noise(args):
    clean = _load(args.input, args.no_normalize)
    level = NoiseLevel.from_volume(args.level, clean, args.reference_intensity)
    noisy = add_rician(clean, level, args.seed)
    if not args.no_normalize:
        noisy = denormalize(noisy)
    write_volume(noisy, args.out)
    if args.no_normalize:
        print(f"sigma (input units) {level.sigma!r}")
    else:
        native = float(to_intensity_units([level.sigma], clean.intensity_scale)[0])
        print(f"sigma (0-255 scale) {level.sigma!r}")
        print(f"sigma (input units) {native!r}")
    return 0


def _load_configs(args):
    sections = {}
    if args.config:
        with fsspec.open(args.config, "r") as f:
            sections = yaml.safe_load(f) or {}
    train_config = TrainConfig.from_dict(sections.get("train")).replace(
        batch_size=args.batch,
        epochs=args.epochs,
        lr_start=args.lr_start,
        lr_end=args.lr_end,
        seed=args.seed,
    )
    patch_config = PatchConfig.from_dict(sections.get("patches")).replace(
        patch_size=args.patch_size,
        stride=args.stride,
        target_count=args.patches,
        stack_depth=args.stack_depth,
    )
    requested = dict(sections.get("model") or {})
    requested.update({k: v for k, v in (("width", args.width), ("depth", args.depth)) if v})
    return train_config, patch_config, requested


def _check_init_model(model, requested):
    """Reject explicit width/depth requests that an ``--init-model`` does not match."""
    clashes = [
        f"{key} {requested[key]} (model has {getattr(model, key)})"
        for key in ("width", "depth")
        if key in requested and int(requested[key]) != getattr(model, key)
    ]
    if clashes:
        raise UsageError("--init-model layout differs from the requested " + ", ".join(clashes))


def cmd_train(args):
    paths = list_volumes(args.data)
    if not paths:
        raise UsageError(f"no volumes ({', '.join(VOLUME_SUFFIXES)}) found in {args.data}")
    train_config, patch_config, requested = _load_configs(args)
    try:
        regime = Regime.parse(args.regime)
    except ValueError as e:
        raise UsageError(str(e)) from e
    model = None
    if args.init_model:
        model = load_model(args.init_model)
        _check_init_model(model, requested)
        LOG.info("fine-tuning %s", args.init_model)

    provenance = {
        "regime": str(regime),
        "patches": patch_config.to_dict(),
        "seed": train_config.seed,
        "volumes": paths,
    }
    if args.patch_cache and patch_cache_matches(args.patch_cache, provenance):
        patches = load_patch_cache(args.patch_cache)
        LOG.info("loaded %d cached patches from %s", len(patches), args.patch_cache)
    else:
        volumes = [_load(p) for p in paths]
        LOG.info("read %d training volumes", len(volumes))
        patches = build_training_set(volumes, regime, patch_config, seed=train_config.seed)
        if args.patch_cache:
            save_patch_cache(patches, args.patch_cache, provenance)

    if model is None:
        model = build_model(
            in_channels=patches.stack_depth,
            width=int(requested.get("width", 64)),
            depth=int(requested.get("depth", 10)),
            seed=train_config.seed,
        )
    LOG.info("%s", model.describe())

    loss_log = args.loss_log or args.out + ".loss.csv"
    _, history = train(model, patches, train_config, callbacks=[LossLogger(loss_log)])
    save_model(model, args.out)
    resolved = {
        "regime": str(regime),
        "model": {"width": model.width, "depth": model.depth, "in_channels": model.in_channels},
        "train": train_config.to_dict(),
        "patches": patch_config.to_dict(),
    }
    with fsspec.open(args.out + ".config.yaml", "w") as f:
        yaml.safe_dump(resolved, f, default_flow_style=False)
    print(f"wrote {args.out} (final mean loss {history[-1]:.6g}), loss log {loss_log}")
    return 0


def cmd_denoise(args):
    model = load_model(args.model)
    original = read_volume(args.input)
    volume = original if args.no_normalize else normalize(original)
    residual = denoise_volume(model, volume, batch_slices=args.batch_slices)
    scale = None if args.no_normalize else volume.intensity_scale
    restored = original.data - to_intensity_units(residual, scale)
    write_volume(original.with_data(restored), args.out)
    print(f"wrote {args.out} {original.dims}")
    return 0


def cmd_evaluate(args):
    clean = _load(args.clean, args.no_normalize)
    scale = None if args.no_normalize else clean.intensity_scale
    rows = []
    for path in args.test:
        test = read_volume(path)
        if test.dims != clean.dims:
            raise UsageError(f"{path} has dims {test.dims}, the clean volume {clean.dims}")
        if scale is not None:
            test = normalize(test, scale=scale)
        report = evaluate(clean, test, args.c1, args.c2)
        rows.append((path, report.psnr_db, report.ssim_global))
    if args.csv:
        _write_csv(args.csv, EVALUATE_COLUMNS, rows)
    width = max(len(r[0]) for r in rows)
    print(f"{'name':<{width}}  {'psnr_db':>10}  {'ssim_global':>11}")
    for name, value, ssim in rows:
        print(f"{name:<{width}}  {value:>10.4f}  {ssim:>11.6f}")
    return 0


def cmd_selfcheck(args):
    results = run_selfcheck(seed=args.seed, cases=args.cases, corrupt=args.corrupt)
    failed = [r for r in results if not r.passed]
    for result in results:
        print(f"{'ok' if result.passed else 'FAIL':<4}  {result.name}: {result.detail}")
    if failed:
        print("failing: " + ", ".join(r.name for r in failed))
        return 1
    return 0


def cmd_phantom(args):
    if len(args.shape) != 3 or min(args.shape) < 1:
        raise UsageError(f"--shape needs three positive extents, got {args.shape}")
    fs = get_fs_token_paths(args.out)[0]
    fs.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        volume = make_phantom(tuple(args.shape), seed=derive_seed(args.seed, i))
        path = fs.sep.join([args.out, f"phantom_{i:03d}.{args.format}"])
        write_volume(volume, path)
        print(path)
    return 0


def _model_denoiser(model, batch_slices):
    return lambda noisy: denoise(model, noisy, batch_slices=batch_slices)


def cmd_sweep(args):
    clean = [_load(p, args.no_normalize) for p in list_volumes(args.clean)]
    if not clean:
        raise UsageError(f"no clean volumes found in {args.clean}")
    denoisers = {}
    for entry in args.model:
        name, sep, path = entry.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--model expects name=path, got {entry!r}")
        denoisers[name] = _model_denoiser(load_model(path), args.batch_slices)
    rows = noise_sweep(clean, denoisers, levels=args.levels, seed=args.seed)
    if args.csv:
        _write_csv(args.csv, SWEEP_COLUMNS, rows)
    table = psnr_pivot(rows)
    print("method".ljust(10) + "".join(f"{p:>9g}%" for p in args.levels))
    for method, by_level in table.items():
        print(method.ljust(10) + "".join(f"{by_level[p]:>10.2f}" for p in args.levels))
    return 0


def _add_train_arguments(p):
    p.add_argument("--data", nargs="+", required=True, help="volume files or directories")
    p.add_argument("--regime", default="general", help="specific:<p>, general or general:p,...")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config", help="YAML file with train/patches/model sections")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr-start", type=float)
    p.add_argument("--lr-end", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--patches", type=int, help="number of training patches")
    p.add_argument("--stack-depth", type=int, help="slices per input stack (odd)")
    p.add_argument("--patch-cache", help="patch cache file, read if present, else written")
    p.add_argument("--loss-log", help="loss CSV (default <out>.loss.csv)")
    p.add_argument("--init-model", help="model file to fine-tune instead of a fresh one")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="mcdenoise", description="Multi-channel residual CNN denoising of 3D MR volumes"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add-noise", help="corrupt a volume with Rician noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=_percent, required=True, help="noise level in percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference-intensity", type=float)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("train", help="train a denoising model")
    _add_train_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a volume with a trained model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-slices", type=int, default=8)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="PSNR and SSIM of test volumes against a clean one")
    p.add_argument("--clean", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--csv")
    p.add_argument("--c1", type=float, default=SSIM_C1)
    p.add_argument("--c2", type=float, default=SSIM_C2)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selfcheck", help="verify gradients and metrics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--corrupt", choices=PRIMITIVES, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("phantom", help="write synthetic phantom volumes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--shape", type=_int_list, default=[64, 64, 16])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["nii", "raw"], default="nii")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sweep", help="score models over a range of noise levels")
    p.add_argument("--clean", nargs="+", required=True)
    p.add_argument("--model", action="append", default=[], help="name=path, repeatable")
    p.add_argument("--levels", type=_float_list, default=noise_sweep_levels())
    p.add_argument("--csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-slices", type=int, default=8)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mcdenoise {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        LOG.debug("command failed", exc_info=True)
        print(f"mcdenoise {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
