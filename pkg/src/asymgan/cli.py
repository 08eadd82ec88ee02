"""Command line entry point: ``asymgan {train,translate,uncertainty,fid,miou}``.

Exit codes: 0 success, 1 usage, 2 configuration, 3 training divergence,
4 I/O or data errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import (
    ConfigError,
    TrainConfig,
    config_from_mapping,
    config_keys,
    field_type,
    load_config,
)
from .data import IMAGE_EXTENSIONS, list_images, split_dirs, to_uint8
from .engine import CheckpointError, load_bundle, train
from .evaluation import (
    LabelMap,
    confusion_matrix,
    export_uncertainty,
    frechet_distance,
    heat_image,
    load_embeddings,
    miou_from_confusion,
)
from .graph import translate_a_to_b, translate_b_to_a
from .losses import DivergenceError

logger = logging.getLogger("asymgan")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# named shortcuts for the two ablation variants; explicit overrides still win
ABLATIONS = {
    "full": {},
    "no-tnet": {"use_tnet": False, "use_uncertainty_loss": False},
    "no-uncertainty": {"use_uncertainty_loss": False},
}

_METAVARS = {"bool": "BOOL", "int": "INT", "float": "FLOAT", "str": "PATH", "tuple[int, int]": "H,W"}


def _add_overrides(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("config overrides (take precedence over --config)")
    for key in config_keys():
        flags = {f"--{key}", f"--{key.replace('_', '-')}"}
        metavar = _METAVARS.get(field_type(key), "VALUE")
        group.add_argument(*sorted(flags), dest=f"override_{key}", metavar=metavar, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asymgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", metavar="{train,translate,uncertainty,fid,miou}",
                                parser_class=_Parser)

    p = sub.add_parser("train", help="train a translator")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--dataroot", help="directory holding trainA/ (adverse) and trainB/ (normal)")
    p.add_argument("--no-resume", action="store_true", help="ignore latest.ckpt in output_dir")
    p.add_argument("--ablation", choices=sorted(ABLATIONS), default="full",
                   help="no-tnet drops the transfer network (and with it the uncertainty loss); "
                        "no-uncertainty keeps it but uses a plain L1 cycle loss")
    _add_overrides(p)

    p = sub.add_parser("translate", help="translate a directory of images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--direction", choices=["A2B", "B2A"], default="A2B")
    p.add_argument("--with-uncertainty", action="store_true",
                   help="also write uncertainty heat maps (A2B only)")

    p = sub.add_parser("uncertainty", help="export uncertainty maps for adverse images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("fid", help="Fréchet distance between two .npy embedding files")
    p.add_argument("features_a")
    p.add_argument("features_b")

    p = sub.add_parser("miou", help="mean IoU between predicted and ground-truth label maps")
    p.add_argument("--pred", required=True, help=".npy/.png file or directory")
    p.add_argument("--gt", required=True, help=".npy/.png file or directory")
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--ignore-index", type=int, default=255)
    return parser


def _train_config(args) -> TrainConfig:
    overrides = dict(ABLATIONS[args.ablation])
    overrides.update(
        (key, getattr(args, f"override_{key}"))
        for key in config_keys()
        if getattr(args, f"override_{key}") is not None
    )
    if args.dataroot:
        adverse, normal = split_dirs(args.dataroot, "train")
        overrides.setdefault("data_root_adverse", str(adverse))
        overrides.setdefault("data_root_normal", str(normal))
    if args.config:
        return load_config(args.config, overrides)
    return config_from_mapping(overrides)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    state = train(cfg, resume=not args.no_resume)
    print(f"finished at iteration {state.iteration}; checkpoints in {cfg.output_dir}")
    return EXIT_OK


def _read_input(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"))
    h, w = arr.shape[0] // 4 * 4, arr.shape[1] // 4 * 4
    if (h, w) != arr.shape[:2]:
        logger.warning("%s: cropping %dx%d to %dx%d", path.name, *arr.shape[:2], h, w)
        arr = arr[:h, :w]
    return arr.astype(np.float32) / 127.5 - 1.0


def _to_tensor(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def cmd_translate(args) -> int:
    if args.with_uncertainty and args.direction == "B2A":
        raise UsageError("--with-uncertainty is only available for A2B (no uncertainty on B->A)")
    bundle, _ = load_bundle(args.checkpoint)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in list_images(args.input_dir):
        try:
            x = _to_tensor(_read_input(path))
        except OSError as exc:
            logger.error("could not decode %s: %s", path, exc)
            failures += 1
            continue
        with torch.no_grad():
            if args.direction == "A2B":
                image, sigma = translate_a_to_b(bundle, x)
            else:
                image, sigma = translate_b_to_a(bundle, x), None
        Image.fromarray(to_uint8(image[0].numpy().transpose(1, 2, 0))).save(out / path.name)
        if args.with_uncertainty:
            Image.fromarray(heat_image(sigma[0].numpy())).save(out / f"{path.stem}_sigma.png")
    return EXIT_IO if failures else EXIT_OK


def cmd_uncertainty(args) -> int:
    bundle, _ = load_bundle(args.checkpoint)
    failures = 0
    for path in list_images(args.input_dir):
        try:
            x = _read_input(path)
        except OSError as exc:
            logger.error("could not decode %s: %s", path, exc)
            failures += 1
            continue
        stats = export_uncertainty(x[None], bundle, args.output_dir, names=[path.stem])
        print(f"{path.name}: sigma min {stats['min']:.4f} mean {stats['mean']:.4f} max {stats['max']:.4f}")
    return EXIT_IO if failures else EXIT_OK


def cmd_fid(args) -> int:
    a, b = load_embeddings(args.features_a), load_embeddings(args.features_b)
    if a.dim != b.dim:
        logger.error("embedding dimensions differ: %d vs %d", a.dim, b.dim)
        return EXIT_IO
    print(f"{frechet_distance(a, b):.4f}")
    return EXIT_OK


def _label_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {p.stem: p for p in sorted(path.iterdir())
                if p.suffix.lower() == ".npy" or p.suffix.lower() in IMAGE_EXTENSIONS}
    return {path.stem: path}


def _read_labels(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".npy":
        return np.load(path, allow_pickle=False)
    with Image.open(path) as img:
        return np.asarray(img)


def cmd_miou(args) -> int:
    pred_files, gt_files = _label_files(Path(args.pred)), _label_files(Path(args.gt))
    if len(pred_files) == 1 and len(gt_files) == 1:
        pairs = [(next(iter(pred_files.values())), next(iter(gt_files.values())))]
    else:
        missing = sorted(set(gt_files) - set(pred_files))
        if missing:
            logger.error("no prediction for: %s", ", ".join(missing))
            return EXIT_IO
        pairs = [(pred_files[k], gt_files[k]) for k in sorted(gt_files)]
    k = args.num_classes
    conf = np.zeros((k, k), dtype=np.int64)
    for p, g in pairs:
        pred = LabelMap(_read_labels(p).astype(np.int64), k, args.ignore_index)
        gt = LabelMap(_read_labels(g).astype(np.int64), k, args.ignore_index)
        conf += confusion_matrix(pred, gt)
    print(f"{miou_from_confusion(conf):.4f}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "translate": cmd_translate,
    "uncertainty": cmd_uncertainty,
    "fid": cmd_fid,
    "miou": cmd_miou,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"asymgan {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"asymgan {args.verb}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"asymgan {args.verb}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        code = EXIT_CONFIG if args.verb == "train" and args.config and exc.filename == args.config else EXIT_IO
        print(f"asymgan {args.verb}: {exc}", file=sys.stderr)
        return code
    except (OSError, CheckpointError, ValueError) as exc:
        print(f"asymgan {args.verb}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
