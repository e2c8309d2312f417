"""Batch command-line driver.

Commands: score, sweep, stats, eval, spanet-train, spanet-predict. Every
command takes flags plus an optional key=value --config file (flags win),
writes all outputs under --out, and echoes the resolved configuration to
<out>/run_config.txt so a run can be reproduced from its artifacts.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Outputs are deterministic: rows are ordered by image_id and worker-pool
parallelism never changes any written byte.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .augment import DEFAULT_LEVELS, ArtifactKind, sweep
from .detections import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    DetectionSet,
    filter_detections,
    load_detections,
)
from .errors import DataError, NumericalError, PqiError
from .images import RgbImage, load_image, to_grayscale
from .metrics import PairedScores, plcc, r_squared, srcc
from .plots import histogram_chart, loss_chart, sweep_chart
from .saliency import (
    SaliencyParams,
    fine_grained_saliency,
    save_map_binary,
    save_map_png,
)
from .scoring import PqiScore, compute_pqi, pqi_distribution
from .spanet import (
    SpaNetConfig,
    TrainConfig,
    build_sample,
    forward_sample,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for the scoring pipeline commands."""

    images_dir: Path
    detections_path: Path | None
    out_dir: Path
    threshold: float
    sigma: int
    scales: tuple[int, ...]
    jobs: int
    save_maps: bool

    def __post_init__(self) -> None:
        if not self.images_dir.is_dir():
            raise DataError(f"image directory not found: {self.images_dir}")
        if self.detections_path is not None and not self.detections_path.is_file():
            raise DataError(f"detections file not found: {self.detections_path}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def saliency_params(self) -> SaliencyParams:
        return SaliencyParams(sigma=self.sigma, scales=self.scales)


# -- option plumbing ----------------------------------------------------------


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno} is not key=value: {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


@dataclass(frozen=True)
class _Option:
    name: str  # config-file key and dest name (underscores in dest)
    cast: Callable[[str], object]
    default: object


def _resolve_options(
    args: argparse.Namespace, options: Sequence[_Option]
) -> dict[str, object]:
    """Merge precedence: explicit flag > config file entry > default."""
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = _parse_config_file(args.config)
    known = {opt.name for opt in options}
    for key in file_values:
        if key not in known:
            raise UsageError(f"unknown config file key: {key!r}")
    resolved: dict[str, object] = {}
    for opt in options:
        flag_value = getattr(args, opt.name.replace("-", "_"), None)
        if flag_value is not None:
            resolved[opt.name] = flag_value
        elif opt.name in file_values:
            try:
                resolved[opt.name] = opt.cast(file_values[opt.name])
            except ValueError as exc:
                raise UsageError(f"bad config value for {opt.name}: {exc}") from exc
        else:
            resolved[opt.name] = opt.default
    return resolved


def _format_value(value: object) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _write_run_config(out_dir: Path, resolved: dict[str, object]) -> None:
    lines = [f"{key}={_format_value(resolved[key])}" for key in sorted(resolved)]
    (out_dir / "run_config.txt").write_text("\n".join(lines) + "\n")


def _ensure_out(path_text: str) -> Path:
    out = Path(path_text)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _list_images(images_dir: Path) -> list[Path]:
    files = sorted(
        (p for p in images_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES),
        key=lambda p: (p.stem, p.suffix),
    )
    seen: set[str] = set()
    for path in files:
        if path.stem in seen:
            raise DataError(f"duplicate image id: {path.stem}")
        seen.add(path.stem)
    return files


def _read_score_column(path: Path) -> dict[str, float]:
    """Read image_id -> value from a CSV with a recognized score column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "image_id" not in reader.fieldnames:
                raise DataError(f"{path}: missing image_id column")
            column = next(
                (
                    name
                    for name in ("pqi", "pqi_pred", "target", "score")
                    if name in reader.fieldnames
                ),
                None,
            )
            if column is None:
                raise DataError(f"{path}: no score column found")
            values: dict[str, float] = {}
            for row in reader:
                values[row["image_id"]] = float(row[column])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: bad numeric value: {exc}") from exc
    return values


# -- score --------------------------------------------------------------------

_SCORE_OPTIONS = (
    _Option("images", str, None),
    _Option("detections", str, None),
    _Option("out", str, None),
    _Option("threshold", float, DEFAULT_CONFIDENCE_THRESHOLD),
    _Option("sigma", int, 1),
    _Option("scales", _parse_int_list, (0, 1, 2, 3, 4, 5)),
    _Option("jobs", int, 1),
    _Option("save-maps", _parse_bool, False),
)


def _require(resolved: dict[str, object], key: str) -> object:
    if resolved[key] is None:
        raise UsageError(f"--{key} is required")
    return resolved[key]


def cmd_score(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _SCORE_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    cfg = RunConfig(
        images_dir=Path(str(_require(resolved, "images"))),
        detections_path=(
            Path(str(resolved["detections"])) if resolved["detections"] else None
        ),
        out_dir=out_dir,
        threshold=float(resolved["threshold"]),  # type: ignore[arg-type]
        sigma=int(resolved["sigma"]),  # type: ignore[arg-type]
        scales=tuple(resolved["scales"]),  # type: ignore[arg-type]
        jobs=int(resolved["jobs"]),  # type: ignore[arg-type]
        save_maps=bool(resolved["save-maps"]),
    )
    _write_run_config(out_dir, resolved)

    warnings_total = 0
    by_image: dict[str, DetectionSet] = {}
    if cfg.detections_path is not None:
        loaded = load_detections(cfg.detections_path)
        by_image = loaded.by_image
        if loaded.warnings:
            warnings_total += loaded.warnings
            print(
                f"warning: {loaded.warnings} malformed detection line(s) skipped",
                file=sys.stderr,
            )

    images = _list_images(cfg.images_dir)
    if not images:
        warnings_total += 1
        print(f"warning: no images found in {cfg.images_dir}", file=sys.stderr)

    maps_dir = out_dir / "maps"
    if cfg.save_maps and images:
        maps_dir.mkdir(exist_ok=True)

    def score_one(path: Path) -> tuple[str, float, int, str]:
        image_id = path.stem
        img = load_image(path)
        sm = fine_grained_saliency(to_grayscale(img), cfg.saliency_params)
        if cfg.save_maps:
            save_map_png(sm, maps_dir / f"{image_id}.png")
            save_map_binary(sm, maps_dir / f"{image_id}.sm")
        warn = ""
        if image_id in by_image:
            ds = filter_detections(by_image[image_id], cfg.threshold)
        else:
            ds = DetectionSet(image_id=image_id, detections=())
            warn = "no_detections"
        score = compute_pqi(sm, ds)
        return image_id, score.value, score.k_used, warn

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(score_one, images))
    else:
        rows = [score_one(p) for p in images]

    warnings_total += sum(1 for row in rows if row[3])
    _write_csv(
        out_dir / "scores.csv",
        ("image_id", "pqi", "k_used", "warnings"),
        [(rid, f"{value:.6f}", k, warn) for rid, value, k, warn in rows],
    )
    if warnings_total:
        print(f"warnings: {warnings_total}", file=sys.stderr)
    return 0


# -- sweep --------------------------------------------------------------------

_SWEEP_OPTIONS = (
    _Option("images", str, None),
    _Option("detections", str, None),
    _Option("out", str, None),
    _Option("kind", str, None),
    _Option("levels", _parse_float_list, DEFAULT_LEVELS),
    _Option("threshold", float, DEFAULT_CONFIDENCE_THRESHOLD),
    _Option("sigma", int, 1),
    _Option("scales", _parse_int_list, (0, 1, 2, 3, 4, 5)),
    _Option("jobs", int, 1),
)


def cmd_sweep(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _SWEEP_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    kind_text = str(_require(resolved, "kind"))
    try:
        kind = ArtifactKind(kind_text)
    except ValueError:
        raise UsageError(
            f"unknown artifact kind {kind_text!r}; choose from "
            + ",".join(k.value for k in ArtifactKind)
        ) from None
    cfg = RunConfig(
        images_dir=Path(str(_require(resolved, "images"))),
        detections_path=(
            Path(str(resolved["detections"])) if resolved["detections"] else None
        ),
        out_dir=out_dir,
        threshold=float(resolved["threshold"]),  # type: ignore[arg-type]
        sigma=int(resolved["sigma"]),  # type: ignore[arg-type]
        scales=tuple(resolved["scales"]),  # type: ignore[arg-type]
        jobs=int(resolved["jobs"]),  # type: ignore[arg-type]
        save_maps=False,
    )
    _write_run_config(out_dir, resolved)

    image_paths = _list_images(cfg.images_dir)
    if not image_paths:
        raise DataError(f"no images found in {cfg.images_dir}")
    images = [load_image(p) for p in image_paths]

    detections: list[DetectionSet | None] | None = None
    if cfg.detections_path is not None:
        loaded = load_detections(cfg.detections_path)
        detections = [
            (
                filter_detections(loaded.by_image[p.stem], cfg.threshold)
                if p.stem in loaded.by_image
                else None
            )
            for p in image_paths
        ]

    result = sweep(
        images,
        kind,
        levels=tuple(resolved["levels"]),  # type: ignore[arg-type]
        params=cfg.saliency_params,
        detections=detections,
        jobs=cfg.jobs,
    )
    _write_csv(
        out_dir / "sweep.csv",
        ("kind", "level", "mean_pqi", "n_images"),
        [
            (kind.value, f"{level:.6f}", f"{mean:.6f}", n)
            for level, mean, n in zip(result.levels, result.mean_pqi, result.n_images)
        ],
    )
    sweep_chart(result, out_dir / "sweep.svg")
    if result.excluded:
        print(f"warning: {result.excluded} image/level samples excluded", file=sys.stderr)
    return 0


# -- stats --------------------------------------------------------------------

_STATS_OPTIONS = (
    _Option("scores", str, None),
    _Option("out", str, None),
    _Option("bucket-width", float, 1.0),
)


def cmd_stats(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _STATS_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    _write_run_config(out_dir, resolved)
    values_by_id = _read_score_column(Path(str(_require(resolved, "scores"))))
    if not values_by_id:
        raise DataError("scores file has no rows")
    scores = [
        PqiScore(value=values_by_id[key], image_id=key, k_used=0)
        for key in sorted(values_by_id)
    ]
    dist = pqi_distribution(scores, bucket_width=float(resolved["bucket-width"]))
    _write_csv(
        out_dir / "stats.csv",
        ("mean", "std", "n"),
        [(f"{dist.mean:.6f}", f"{dist.std:.6f}", dist.n)],
    )
    _write_csv(
        out_dir / "histogram.csv",
        ("bucket_start", "count"),
        [(f"{start:.6f}", count) for start, count in dist.histogram],
    )
    histogram_chart(dist, out_dir / "histogram.svg")
    return 0


# -- eval ---------------------------------------------------------------------

_EVAL_OPTIONS = (
    _Option("predictions", str, None),
    _Option("targets", str, None),
    _Option("out", str, None),
)


def cmd_eval(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _EVAL_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    _write_run_config(out_dir, resolved)
    predictions = _read_score_column(Path(str(_require(resolved, "predictions"))))
    targets = _read_score_column(Path(str(_require(resolved, "targets"))))
    missing_t = sorted(set(predictions) - set(targets))
    missing_p = sorted(set(targets) - set(predictions))
    if missing_t or missing_p:
        parts = []
        if missing_t:
            parts.append(f"ids without targets: {','.join(missing_t[:10])}")
        if missing_p:
            parts.append(f"ids without predictions: {','.join(missing_p[:10])}")
        raise DataError("prediction/target id mismatch; " + "; ".join(parts))

    ids = sorted(predictions)
    paired = PairedScores(
        np.array([predictions[i] for i in ids]), np.array([targets[i] for i in ids])
    )
    _write_csv(
        out_dir / "eval.csv",
        ("plcc", "srcc", "r2", "n"),
        [
            (
                f"{plcc(paired):.6f}",
                f"{srcc(paired):.6f}",
                f"{r_squared(paired):.6f}",
                len(ids),
            )
        ],
    )
    return 0


# -- spanet -------------------------------------------------------------------

_SPANET_TRAIN_OPTIONS = (
    _Option("images", str, None),
    _Option("targets", str, None),
    _Option("out", str, None),
    _Option("epochs", int, 50),
    _Option("lr-max", float, 2e-5),
    _Option("lr-min", float, 1e-6),
    _Option("batch-size", int, 4),
    _Option("seed", int, 0),
    _Option("image-side", int, 512),
    _Option("patch-side", int, 32),
    _Option("heads", int, 8),
    _Option("layers", int, 2),
    _Option("token-dim", int, 256),
    _Option("superpixel-k", int, 500),
)


def _spanet_config(resolved: dict[str, object]) -> SpaNetConfig:
    return SpaNetConfig(
        image_side=int(resolved["image-side"]),  # type: ignore[arg-type]
        patch_side=int(resolved["patch-side"]),  # type: ignore[arg-type]
        heads=int(resolved["heads"]),  # type: ignore[arg-type]
        layers=int(resolved["layers"]),  # type: ignore[arg-type]
        token_dim=int(resolved["token-dim"]),  # type: ignore[arg-type]
        superpixel_k=int(resolved["superpixel-k"]),  # type: ignore[arg-type]
    )


def cmd_spanet_train(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _SPANET_TRAIN_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    _write_run_config(out_dir, resolved)
    images_dir = Path(str(_require(resolved, "images")))
    if not images_dir.is_dir():
        raise DataError(f"image directory not found: {images_dir}")
    targets = _read_score_column(Path(str(_require(resolved, "targets"))))

    net_cfg = _spanet_config(resolved)
    train_cfg = TrainConfig(
        epochs=int(resolved["epochs"]),  # type: ignore[arg-type]
        lr_max=float(resolved["lr-max"]),  # type: ignore[arg-type]
        lr_min=float(resolved["lr-min"]),  # type: ignore[arg-type]
        batch_size=int(resolved["batch-size"]),  # type: ignore[arg-type]
        seed=int(resolved["seed"]),  # type: ignore[arg-type]
    )

    samples = []
    skipped = 0
    for path in _list_images(images_dir):
        if path.stem not in targets:
            skipped += 1
            print(f"warning: no target for {path.stem}; skipped", file=sys.stderr)
            continue
        samples.append(build_sample(load_image(path), net_cfg, targets[path.stem]))
    if not samples:
        raise DataError("no images with targets to train on")

    model = init_model(net_cfg, seed=train_cfg.seed)
    result = train(model, samples, train_cfg)
    save_checkpoint(result.model, out_dir / "model.spanet")
    _write_csv(
        out_dir / "loss.csv",
        ("epoch", "lr", "train_loss", "val_loss"),
        [
            (epoch, f"{lr:.10g}", f"{tr:.10g}", "" if val != val else f"{val:.10g}")
            for epoch, lr, tr, val in result.history
        ],
    )
    loss_chart(result.history, out_dir / "loss.svg")
    return 0


_SPANET_PREDICT_OPTIONS = (
    _Option("images", str, None),
    _Option("checkpoint", str, None),
    _Option("out", str, None),
    _Option("jobs", int, 1),
)


def cmd_spanet_predict(args: argparse.Namespace) -> int:
    resolved = _resolve_options(args, _SPANET_PREDICT_OPTIONS)
    out_dir = _ensure_out(str(_require(resolved, "out")))
    _write_run_config(out_dir, resolved)
    images_dir = Path(str(_require(resolved, "images")))
    if not images_dir.is_dir():
        raise DataError(f"image directory not found: {images_dir}")
    model = load_checkpoint(Path(str(_require(resolved, "checkpoint"))))
    paths = _list_images(images_dir)
    if not paths:
        raise DataError(f"no images found in {images_dir}")

    def predict_one(path: Path) -> tuple[str, float]:
        sample = build_sample(load_image(path), model.cfg)
        pred, _ = forward_sample(model, sample)
        return path.stem, pred

    jobs = int(resolved["jobs"])  # type: ignore[arg-type]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(predict_one, paths))
    else:
        rows = [predict_one(p) for p in paths]
    _write_csv(
        out_dir / "predictions.csv",
        ("image_id", "pqi_pred"),
        [(rid, f"{value:.6f}") for rid, value in rows],
    )
    return 0


# -- parser / entry point -----------------------------------------------------


def _add_common_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pqi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="PQI per image")
    p_score.add_argument("--images")
    p_score.add_argument("--detections")
    p_score.add_argument("--out")
    p_score.add_argument("--threshold", type=float)
    p_score.add_argument("--sigma", type=int)
    p_score.add_argument("--scales", type=_parse_int_list)
    p_score.add_argument("--jobs", type=int)
    p_score.add_argument("--save-maps", action="store_true", default=None)
    _add_common_flag(p_score)
    p_score.set_defaults(func=cmd_score)

    p_sweep = sub.add_parser("sweep", help="artifact level sweep")
    p_sweep.add_argument("--images")
    p_sweep.add_argument("--detections")
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--kind")
    p_sweep.add_argument("--levels", type=_parse_float_list)
    p_sweep.add_argument("--threshold", type=float)
    p_sweep.add_argument("--sigma", type=int)
    p_sweep.add_argument("--scales", type=_parse_int_list)
    p_sweep.add_argument("--jobs", type=int)
    _add_common_flag(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_stats = sub.add_parser("stats", help="distribution of a scores CSV")
    p_stats.add_argument("--scores")
    p_stats.add_argument("--out")
    p_stats.add_argument("--bucket-width", type=float)
    _add_common_flag(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    p_eval = sub.add_parser("eval", help="PLCC/SRCC/R2 of predictions vs targets")
    p_eval.add_argument("--predictions")
    p_eval.add_argument("--targets")
    p_eval.add_argument("--out")
    _add_common_flag(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_train = sub.add_parser("spanet-train", help="train the two-branch regressor")
    p_train.add_argument("--images")
    p_train.add_argument("--targets")
    p_train.add_argument("--out")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr-max", type=float)
    p_train.add_argument("--lr-min", type=float)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--image-side", type=int)
    p_train.add_argument("--patch-side", type=int)
    p_train.add_argument("--heads", type=int)
    p_train.add_argument("--layers", type=int)
    p_train.add_argument("--token-dim", type=int)
    p_train.add_argument("--superpixel-k", type=int)
    _add_common_flag(p_train)
    p_train.set_defaults(func=cmd_spanet_train)

    p_pred = sub.add_parser("spanet-predict", help="predict with a checkpoint")
    p_pred.add_argument("--images")
    p_pred.add_argument("--checkpoint")
    p_pred.add_argument("--out")
    p_pred.add_argument("--jobs", type=int)
    _add_common_flag(p_pred)
    p_pred.set_defaults(func=cmd_spanet_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except PqiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
