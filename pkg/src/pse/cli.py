"""Command-line front end for metric runs, the anomaly pipeline, and
autoencoder pre-training experiments.

Every subcommand accepts `--config FILE` holding plain `key = value`
lines; file keys are spelled exactly like the long flags and flags win
on conflict. Unknown keys are rejected with the list of valid ones.
All outputs are deterministic functions of config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from pse import anomaly, autoenc, datasets, images, metrics, pca

_REQUIRED = object()


@dataclass(frozen=True)
class Opt:
    key: str
    typ: object
    default: object
    help: str
    flag: bool = False


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*allowed):
    def parse(text: str) -> str:
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return text

    return parse


def _float_list(text: str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(t) for t in items)


def _int_list(text: str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(t) for t in items)


def _add_opts(parser: argparse.ArgumentParser, opts) -> None:
    parser.add_argument(
        "--config", metavar="FILE", default=None,
        help="plain `key = value` config file; explicit flags override it",
    )
    for o in opts:
        if o.flag:
            parser.add_argument(
                "--" + o.key, dest=o.key.replace("-", "_"),
                action="store_const", const=True, default=None, help=o.help,
            )
        else:
            parser.add_argument(
                "--" + o.key, dest=o.key.replace("-", "_"),
                type=str, default=None, metavar="V", help=o.help,
            )


def _read_config_file(path: str, opts) -> dict:
    known = {o.key: o for o in opts}
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"file missing: {cfg_path}")
    values = {}
    for lineno, raw in enumerate(cfg_path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ValueError(
                f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                + ", ".join(sorted(known))
            )
        o = known[key]
        values[key] = _parse_bool(val) if o.flag else o.typ(val)
    return values


def _resolve(args: argparse.Namespace, opts) -> SimpleNamespace:
    file_values = _read_config_file(args.config, opts) if args.config else {}
    resolved = {}
    for o in opts:
        given = getattr(args, o.key.replace("-", "_"))
        if given is not None:
            resolved[o.key] = True if o.flag else o.typ(given)
        elif o.key in file_values:
            resolved[o.key] = file_values[o.key]
        elif o.default is _REQUIRED:
            raise ValueError(f"missing required option --{o.key}")
        else:
            resolved[o.key] = o.default
    return SimpleNamespace(**{k.replace("-", "_"): v for k, v in resolved.items()})


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_for_metric(path, resize):
    img = images.load_image(path)
    if resize is not None:
        img = images.resize_bilinear(img, resize, resize)
    return img


def _manifest_images(manifest_path, resize, labels=None):
    manifest = datasets.load_manifest(manifest_path)
    entries = [e for e in manifest.entries if labels is None or e[1] in labels]
    imgs = [_load_for_metric(p, resize) for p, _ in entries]
    return manifest, entries, imgs


def _split_seed(seed: int, n: int):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


# ---------------------------------------------------------------- metric

_METRIC_OPTS = (
    Opt("sigma", float, 1.0, "smoothing strength; 0 reduces the metric to plain MSE"),
    Opt("resize", int, None, "resize both images to this square side before comparing"),
)


def cmd_metric(args, ns) -> int:
    a = _load_for_metric(args.image_a, ns.resize)
    b = _load_for_metric(args.image_b, ns.resize)
    print(f"MSE {metrics.mse(a, b):.12g}")
    print(f"PSE {metrics.pse(a, b, ns.sigma):.12g}")
    return 0


_HEATMAP_OPTS = (
    Opt("sigma", float, 1.0, "smoothing strength for the residual heatmap"),
    Opt("resize", int, None, "resize both images to this square side before comparing"),
    Opt("out", str, _REQUIRED, "output PNG path for the normalized heatmap"),
)


def cmd_heatmap(args, ns) -> int:
    a = _load_for_metric(args.image_a, ns.resize)
    b = _load_for_metric(args.image_b, ns.resize)
    heat = metrics.pse_heatmap(a, b, ns.sigma)
    scale = images.save_heatmap_png(ns.out, heat)
    print(f"PSE {float(np.mean(heat)):.12g}")
    print(f"scale {scale:.12g}")
    return 0


# --------------------------------------------------------------- anomaly

_ANOMALY_TRAIN_OPTS = (
    Opt("train-manifest", str, _REQUIRED, "manifest of training images; label-0 rows are used"),
    Opt("components", int, 8, "maximum number of principal components to keep"),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("out-model", str, _REQUIRED, "output path for the trained model file"),
)


def cmd_anomaly_train(args, ns) -> int:
    _, entries, imgs = _manifest_images(ns.train_manifest, ns.resize, labels={0})
    if not imgs:
        raise ValueError(f"no label-0 rows in {ns.train_manifest}")
    model = pca.pca_fit(imgs, ns.components)
    pca.save_model(ns.out_model, model)
    print(f"model {ns.out_model} rank {model.n_components}")
    return 0


_ANOMALY_SCORE_OPTS = (
    Opt("model", str, _REQUIRED, "trained model file"),
    Opt("image", str, _REQUIRED, "image to score"),
    Opt("sigma", float, 1.0, "smoothing strength"),
    Opt("components", int, None, "components used for reconstruction (default: all kept)"),
    Opt("score-kind", _choice(*anomaly.SCORE_KINDS), "max", "heatmap reduction: max or mean"),
    Opt("resize", int, None, "resize the image to this square side"),
    Opt("heatmap", str, None, "optional output PNG for the score heatmap"),
)


def cmd_anomaly_score(args, ns) -> int:
    model = pca.load_model(ns.model)
    img = _load_for_metric(ns.image, ns.resize)
    c = model.n_components if ns.components is None else ns.components
    hp = anomaly.HyperParams(sigma=ns.sigma, n_components=c)
    score, heat = anomaly.anomaly_score(model, img, hp, ns.score_kind)
    print(f"score {score:.12g}")
    if ns.heatmap is not None:
        scale = images.save_heatmap_png(ns.heatmap, heat)
        print(f"scale {scale:.12g}")
    return 0


_ANOMALY_GRID_OPTS = (
    Opt("train-manifest", str, _REQUIRED, "manifest of normal training images (label 0)"),
    Opt("fewshot-manifest", str, _REQUIRED, "small labeled manifest used to pick sigma and components"),
    Opt("sigma-grid", _float_list, anomaly.DEFAULT_SIGMA_GRID, "comma-separated sigma candidates"),
    Opt("comp-grid", _int_list, anomaly.DEFAULT_COMP_GRID, "comma-separated component-count candidates"),
    Opt("score-kind", _choice(*anomaly.SCORE_KINDS), "max", "heatmap reduction: max or mean"),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("out-model", str, _REQUIRED, "output path for the fitted model file"),
    Opt("out-json", str, None, "optional JSON summary of the chosen cell"),
)


def cmd_anomaly_grid(args, ns) -> int:
    _, _, train_imgs = _manifest_images(ns.train_manifest, ns.resize, labels={0})
    if not train_imgs:
        raise ValueError(f"no label-0 rows in {ns.train_manifest}")
    _, few_entries, few_imgs = _manifest_images(ns.fewshot_manifest, ns.resize)
    few = list(zip(few_imgs, (lab for _, lab in few_entries)))
    hp, ap, model = anomaly.grid_search(
        train_imgs, few, ns.sigma_grid, ns.comp_grid, ns.score_kind
    )
    pca.save_model(ns.out_model, model)
    print(f"best sigma {hp.sigma:g} components {hp.n_components} ap {ap:.12g}")
    if ns.out_json is not None:
        _write_json(ns.out_json, {
            "ap": ap,
            "sigma": hp.sigma,
            "n_components": hp.n_components,
            "score_kind": ns.score_kind,
            "sigma_grid": list(ns.sigma_grid),
            "comp_grid": list(ns.comp_grid),
            "model_rank": model.n_components,
        })
    return 0


_ANOMALY_EVAL_OPTS = (
    Opt("model", str, _REQUIRED, "trained model file"),
    Opt("manifest", str, _REQUIRED, "labeled manifest to evaluate"),
    Opt("sigma", float, 1.0, "smoothing strength"),
    Opt("components", int, None, "components used for reconstruction (default: all kept)"),
    Opt("score-kind", _choice(*anomaly.SCORE_KINDS), "max", "heatmap reduction: max or mean"),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("scores-csv", str, _REQUIRED, "output CSV of per-image scores"),
    Opt("summary-json", str, None, "optional JSON summary with the AP"),
    Opt("heatmap-dir", str, None, "optional directory for per-image heatmap PNGs"),
)


def cmd_anomaly_eval(args, ns) -> int:
    model = pca.load_model(ns.model)
    _, entries, imgs = _manifest_images(ns.manifest, ns.resize)
    ids = [p.name for p, _ in entries]
    test = list(zip(imgs, (lab for _, lab in entries)))
    c = model.n_components if ns.components is None else ns.components
    hp = anomaly.HyperParams(sigma=ns.sigma, n_components=c)
    keep = ns.heatmap_dir is not None
    ap, samples = anomaly.evaluate(
        model, hp, test, ids=ids, score_kind=ns.score_kind, keep_heatmaps=keep
    )
    with open(ns.scores_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score", "label"])
        for s in samples:
            writer.writerow([s.id, f"{s.score:.17g}", s.label])
    scales = None
    if keep:
        heat_dir = Path(ns.heatmap_dir)
        heat_dir.mkdir(parents=True, exist_ok=True)
        scales = {}
        for s in samples:
            scales[s.id] = images.save_heatmap_png(
                heat_dir / (Path(s.id).stem + ".png"), s.heatmap
            )
    print(f"ap {ap:.12g}")
    if ns.summary_json is not None:
        payload = {
            "ap": ap,
            "sigma": ns.sigma,
            "n_components": c,
            "score_kind": ns.score_kind,
            "n_samples": len(samples),
        }
        if scales is not None:
            payload["heatmap_scale"] = scales
        _write_json(ns.summary_json, payload)
    return 0


# -------------------------------------------------------------- training

_PRETRAIN_OPTS = (
    Opt("manifest", str, _REQUIRED, "manifest of training images; labels are ignored"),
    Opt("bottleneck", int, 16, "hidden-layer width"),
    Opt("loss", _choice(*autoenc.LOSS_KINDS), "pse", "reconstruction loss kind"),
    Opt("sigma", float, 0.5, "smoothing strength of the pse loss"),
    Opt("epochs", int, 50, "training epochs"),
    Opt("batch-size", int, 32, "minibatch size"),
    Opt("lr", float, 0.1, "learning rate"),
    Opt("seed", int, 0, "master seed; init and shuffling derive from it"),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("out", str, _REQUIRED, "output checkpoint path"),
    Opt("log", str, None, "per-epoch loss CSV (default: <out>.log.csv)"),
)


def cmd_pretrain(args, ns) -> int:
    _, _, imgs = _manifest_images(ns.manifest, ns.resize)
    if not imgs:
        raise ValueError(f"no rows in {ns.manifest}")
    stack = np.stack(imgs)
    init_seed, shuffle_seed = _split_seed(ns.seed, 2)
    model = autoenc.ae_init(stack[0].size, ns.bottleneck, init_seed)
    cfg = autoenc.TrainConfig(
        loss_kind=ns.loss, sigma=ns.sigma, epochs=ns.epochs,
        batch_size=ns.batch_size, learning_rate=ns.lr, seed=shuffle_seed,
    )
    trained, history = autoenc.ae_train(model, stack, cfg)
    autoenc.save_autoencoder(ns.out, trained)
    log_path = ns.log if ns.log is not None else ns.out + ".log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(history, 1):
            writer.writerow([epoch, f"{loss:.17g}"])
    final = history[-1] if history else float("nan")
    print(f"checkpoint {ns.out} final loss {final:.12g}")
    return 0


_FINETUNE_OPTS = (
    Opt("checkpoint", str, _REQUIRED, "pre-trained autoencoder checkpoint"),
    Opt("manifest", str, _REQUIRED, "labeled manifest for supervised training"),
    Opt("classes", int, 10, "number of classes"),
    Opt("epochs", int, 30, "training epochs"),
    Opt("batch-size", int, 32, "minibatch size"),
    Opt("lr", float, 0.1, "learning rate"),
    Opt("seed", int, 0, "master seed; head init and shuffling derive from it"),
    Opt("freeze-encoder", None, False, "train only the classifier head", flag=True),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("out", str, _REQUIRED, "output classifier checkpoint path"),
    Opt("log", str, None, "per-epoch CSV of loss and train accuracy (default: <out>.log.csv)"),
)


def cmd_finetune(args, ns) -> int:
    model = autoenc.load_autoencoder(ns.checkpoint)
    _, entries, imgs = _manifest_images(ns.manifest, ns.resize)
    if not imgs:
        raise ValueError(f"no rows in {ns.manifest}")
    if imgs[0].size != model.d:
        raise ValueError(
            f"checkpoint expects {model.d} pixels per image, manifest provides {imgs[0].size}"
        )
    labeled = list(zip(imgs, (lab for _, lab in entries)))
    head_seed, shuffle_seed = _split_seed(ns.seed, 2)
    head = autoenc.head_init(model.h, ns.classes, head_seed)
    trained, trained_head, history = autoenc.finetune_classify(
        model, head, labeled, epochs=ns.epochs, lr=ns.lr, seed=shuffle_seed,
        batch_size=ns.batch_size, freeze_encoder=ns.freeze_encoder,
    )
    autoenc.save_classifier(ns.out, trained, trained_head)
    log_path = ns.log if ns.log is not None else ns.out + ".log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss", "train_acc"])
        for epoch, (loss, acc) in enumerate(history, 1):
            writer.writerow([epoch, f"{loss:.17g}", f"{acc:.17g}"])
    final_acc = history[-1][1] if history else float("nan")
    print(f"checkpoint {ns.out} train accuracy {final_acc:.6f}")
    return 0


_EVAL_OPTS = (
    Opt("checkpoint", str, _REQUIRED, "classifier checkpoint"),
    Opt("manifest", str, _REQUIRED, "labeled manifest to evaluate"),
    Opt("resize", int, None, "resize images to this square side"),
    Opt("out-json", str, None, "optional JSON with the accuracy"),
)


def cmd_eval(args, ns) -> int:
    kind = autoenc.checkpoint_kind(ns.checkpoint)
    if kind != "classifier":
        raise ValueError(f"eval needs a classifier checkpoint, got {kind}: {ns.checkpoint}")
    encoder, head = autoenc.load_classifier(ns.checkpoint)
    _, entries, imgs = _manifest_images(ns.manifest, ns.resize)
    test = list(zip(imgs, (lab for _, lab in entries)))
    acc = autoenc.eval_accuracy(encoder, head, test)
    print(f"accuracy {acc:.6f}")
    if ns.out_json is not None:
        _write_json(ns.out_json, {"accuracy": acc, "n_samples": len(test)})
    return 0


# ------------------------------------------------------------ generators

_GEN_PAIR_OPTS = (
    Opt("out", str, _REQUIRED, "output directory"),
    Opt("size", int, 64, "image side length"),
    Opt("patch", int, 8, "patch side length; the scatter variant moves patch^2 pixels"),
    Opt("magnitude", float, 0.3, "intensity added to each perturbed pixel"),
    Opt("seed", int, 0, "placement seed"),
    Opt("sigma-max", float, 2.0, "largest sigma the scatter spacing must defeat"),
)


def cmd_gen_pair(args, ns) -> int:
    base, block, scatter = datasets.gen_equal_mse_pair(
        ns.size, ns.patch, ns.magnitude, ns.seed, sigma_max=ns.sigma_max
    )
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in (("base", base), ("block", block), ("scatter", scatter)):
        images.save_image(out / f"{name}.pgm", img)
        print(out / f"{name}.pgm")
    return 0


_GEN_BENCH_OPTS = (
    Opt("out", str, _REQUIRED, "output directory"),
    Opt("n-normal", int, 20, "number of normal images"),
    Opt("n-anomalous", int, 10, "number of anomalous images"),
    Opt("size", int, 64, "image side length"),
    Opt("seed", int, 0, "generation seed"),
    Opt("noise-amplitude", float, 0.02, "uniform per-pixel noise amplitude"),
    Opt("patch-min", int, 8, "smallest anomaly patch side"),
    Opt("patch-max", int, 16, "largest anomaly patch side"),
    Opt("shift-min", float, 0.3, "smallest anomaly intensity shift"),
    Opt("shift-max", float, 0.4, "largest anomaly intensity shift"),
    Opt("sp-noise", float, 0.0, "salt-and-pepper fraction applied to every image"),
)


def cmd_gen_bench(args, ns) -> int:
    manifest = datasets.gen_anomaly_benchmark(
        ns.n_normal, ns.n_anomalous, ns.size, ns.seed, ns.out,
        noise_amplitude=ns.noise_amplitude,
        patch_min=ns.patch_min, patch_max=ns.patch_max,
        shift_min=ns.shift_min, shift_max=ns.shift_max,
        sp_noise=ns.sp_noise,
    )
    print(manifest.root / "manifest.csv")
    return 0


_GEN_CLASS_OPTS = (
    Opt("out", str, _REQUIRED, "output directory"),
    Opt("n", int, 500, "number of images"),
    Opt("size", int, 16, "image side length"),
    Opt("classes", int, 10, "number of classes"),
    Opt("noise-p", float, 0.08, "salt-and-pepper fraction"),
    Opt("seed", int, 0, "generation seed"),
)


def cmd_gen_class(args, ns) -> int:
    imgs, labels = datasets.gen_class_dataset(
        ns.n, ns.seed, size=ns.size, n_classes=ns.classes, noise_p=ns.noise_p
    )
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for i in range(len(imgs)):
            name = f"sample_{i:04d}.pgm"
            images.save_image(out / name, imgs[i])
            writer.writerow([name, int(labels[i])])
    print(out / "manifest.csv")
    return 0


# ----------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pse",
        description="Smoothed-residual image metric, anomaly pipeline, and "
        "autoencoder pre-training experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", help="print MSE and PSE between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _add_opts(p, _METRIC_OPTS)
    p.set_defaults(func=cmd_metric, opts=_METRIC_OPTS)

    p = sub.add_parser("heatmap", help="write the squared smoothed-residual heatmap")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _add_opts(p, _HEATMAP_OPTS)
    p.set_defaults(func=cmd_heatmap, opts=_HEATMAP_OPTS)

    an = sub.add_parser("anomaly", help="reconstruction-based anomaly pipeline")
    an_sub = an.add_subparsers(dest="subcommand", required=True)
    for name, func, opts in (
        ("train", cmd_anomaly_train, _ANOMALY_TRAIN_OPTS),
        ("score", cmd_anomaly_score, _ANOMALY_SCORE_OPTS),
        ("grid-search", cmd_anomaly_grid, _ANOMALY_GRID_OPTS),
        ("eval", cmd_anomaly_eval, _ANOMALY_EVAL_OPTS),
    ):
        p = an_sub.add_parser(name)
        _add_opts(p, opts)
        p.set_defaults(func=func, opts=opts)

    p = sub.add_parser("pretrain", help="train an autoencoder on unlabeled images")
    _add_opts(p, _PRETRAIN_OPTS)
    p.set_defaults(func=cmd_pretrain, opts=_PRETRAIN_OPTS)

    p = sub.add_parser("finetune", help="fine-tune a classifier on a pre-trained encoder")
    _add_opts(p, _FINETUNE_OPTS)
    p.set_defaults(func=cmd_finetune, opts=_FINETUNE_OPTS)

    p = sub.add_parser("eval", help="print classifier accuracy on a labeled manifest")
    _add_opts(p, _EVAL_OPTS)
    p.set_defaults(func=cmd_eval, opts=_EVAL_OPTS)

    gen = sub.add_parser("gen", help="write synthetic datasets")
    gen_sub = gen.add_subparsers(
        dest="generator", required=True,
        metavar="{equal-mse-pair,anomaly-benchmark,class-set}",
    )
    for name, func, opts in (
        ("equal-mse-pair", cmd_gen_pair, _GEN_PAIR_OPTS),
        ("anomaly-benchmark", cmd_gen_bench, _GEN_BENCH_OPTS),
        ("class-set", cmd_gen_class, _GEN_CLASS_OPTS),
    ):
        p = gen_sub.add_parser(name)
        _add_opts(p, opts)
        p.set_defaults(func=func, opts=opts)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        ns = _resolve(args, args.opts)
        return args.func(args, ns)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
