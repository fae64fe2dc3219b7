"""Command-line entry point: ``dualview-diff <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from dualview_diff.checkpoint import load_checkpoint
from dualview_diff.codec import decode, encode
from dualview_diff.denoiser import DenoiserConfig, build_denoiser
from dualview_diff.diffusion import dump_schedule_csv, linear_schedule, sample, scaled_linear_schedule
from dualview_diff.errors import DataError
from dualview_diff.imagecore import save_gray16, save_mask8, save_preview_rgb, save_triple16
from dualview_diff.manifest import Manifest, load_manifest
from dualview_diff.metrics import evaluate_dataset, read_metrics_csv, write_metrics_csv
from dualview_diff.phantom import PhantomConfig, generate
from dualview_diff.postprocess import ClipConfig, percentile_clip
from dualview_diff.preprocess import FIRST_IMAGE, PreprocessConfig, load_reference_cdf, preprocess_dataset
from dualview_diff.segmentation import otsu_pair
from dualview_diff.stats import build_report
from dualview_diff.training import TrainConfig, train, write_loss_csv

log = logging.getLogger("dualview_diff")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _stem_entry(sid: str, laterality: str = "right-oriented") -> dict:
    return {
        "subject_id": sid,
        "laterality": laterality,
        "cc_path": f"{sid}_cc.png",
        "mlo_path": f"{sid}_mlo.png",
        "triple_stem": sid,
    }


def _write_triples(out: Path, items, metadata: dict) -> Manifest:
    """Write (subject_id, laterality, triple) items as triple containers plus a manifest."""
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, laterality, triple in items:
        save_triple16(triple, out / sid)
        entries.append(_stem_entry(sid, laterality))
    m = Manifest(entries, metadata, out)
    m.save()
    return m


def cmd_phantom(args) -> None:
    cfg = PhantomConfig(size=args.size, n_pairs=args.n, seed=args.seed, shape_correlation=args.correlation,
                        texture_scale=args.texture_scale, texture_strength=args.texture_strength,
                        pectoral_wedge=not args.no_wedge)
    pairs = generate(cfg)
    _write_triples(Path(args.out), ((p.subject_id, p.laterality, encode(p)) for p in pairs),
                   {"source": "phantom", "phantom_config": asdict(cfg)})
    log.info("wrote %d phantom pairs to %s", len(pairs), args.out)


def cmd_preprocess(args) -> None:
    m = load_manifest(args.manifest)
    ref = load_reference_cdf(args.reference) if args.reference else FIRST_IMAGE
    cfg = PreprocessConfig(target_size=args.size, reference_histogram=ref)
    pairs = preprocess_dataset(m.pairs(raw=True), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in pairs:
        e = _stem_entry(p.subject_id, p.laterality)
        del e["triple_stem"]
        save_gray16(p.cc, out / e["cc_path"])
        save_gray16(p.mlo, out / e["mlo_path"])
        entries.append(e)
    meta = dict(m.metadata, preprocessing={"size": args.size, "reference": args.reference or FIRST_IMAGE,
                                           "stages": ["normalize", "orient", "match", "resize"]})
    Manifest(entries, meta, out).save()


def cmd_encode(args) -> None:
    m = load_manifest(args.manifest)
    _write_triples(Path(args.out), ((p.subject_id, p.laterality, encode(p)) for p in m.pairs()),
                   dict(m.metadata, encoded=True))


def _train_setup(config: dict):
    tcfg = TrainConfig.from_dict(config.get("train", {}))
    dcfg = DenoiserConfig(**config.get("denoiser", {}))
    sc = config.get("schedule", {"T": 1000})
    if sc.get("scaled"):
        sched = scaled_linear_schedule(int(sc["T"]))
    else:
        sched = linear_schedule(int(sc.get("T", 1000)), float(sc.get("beta_start", 1e-4)), float(sc.get("beta_end", 0.02)))
    return tcfg, dcfg, sched


def cmd_train(args) -> None:
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    tcfg, dcfg, sched = _train_setup(config)
    if args.seed is not None:
        tcfg.seed = args.seed
    data = np.stack(load_manifest(args.data).triples())
    model = build_denoiser(dcfg, seed=tcfg.seed, sched=sched)
    ckpt = Path(args.out)
    report = train(data, tcfg, model, sched, checkpoint_path=ckpt, log=log.info)
    stem = ckpt.with_suffix("")
    Path(f"{stem}_report.json").write_text(report.to_json())
    write_loss_csv(report, f"{stem}_losses.csv")


def cmd_sample(args) -> None:
    model, sched, _ = load_checkpoint(args.ckpt)
    size = args.size or _infer_size(args.ckpt)
    raw = sample(model, (args.n, 3, size, size), sched, seed=args.seed, batch_size=args.batch_size,
                 clip_denoised=args.clip_denoised)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ClipConfig()
    items = []
    for i, triple in enumerate(raw):
        sid = f"sample_{i:05d}"
        clipped = percentile_clip(triple, cfg)
        dec = decode(clipped, subject_id=sid)
        final = np.stack([dec.pair.cc, dec.pair.mlo, np.clip(dec.diff, 0.0, 1.0)])
        save_triple16(final, out / sid)
        save_preview_rgb(final, out / f"{sid}_preview.png")
        items.append(_stem_entry(sid))
    Manifest(items, {"source": "synthetic", "checkpoint": str(args.ckpt), "seed": args.seed}, out).save()


def _infer_size(ckpt) -> int:
    _, _, header = load_checkpoint(ckpt)
    size = header.get("extra", {}).get("image_size")
    if size is None:
        raise DataError("checkpoint does not record the image size; pass --size")
    return int(size)


def cmd_postprocess(args) -> None:
    m = load_manifest(args.input)
    cfg = ClipConfig(args.lo, args.hi, rescale=not args.no_rescale)
    _write_triples(Path(args.out), ((e["subject_id"], e.get("laterality", "right-oriented"), percentile_clip(t, cfg))
                                    for e, t in zip(m.entries, m.triples())),
                   dict(m.metadata, postprocess=asdict(cfg)))


def cmd_segment(args) -> None:
    m = load_manifest(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for pair in m.pairs():
        r_cc, r_mlo = otsu_pair(pair)
        sid = pair.subject_id
        save_mask8(r_cc.mask, out / f"{sid}_cc_mask.png")
        save_mask8(r_mlo.mask, out / f"{sid}_mlo_mask.png")
        entries.append({"subject_id": sid, "cc_mask": f"{sid}_cc_mask.png", "mlo_mask": f"{sid}_mlo_mask.png",
                        "cc_threshold": r_cc.threshold, "mlo_threshold": r_mlo.threshold,
                        "degenerate": r_cc.degenerate or r_mlo.degenerate})
    (out / "masks.json").write_text(json.dumps({"entries": entries}, indent=2))


def cmd_evaluate(args) -> None:
    samples = evaluate_dataset(load_manifest(args.input).pairs(), args.source)
    write_metrics_csv(samples, args.out)


def cmd_stats(args) -> None:
    def grouped(path):
        rows = read_metrics_csv(path)
        if not rows:
            raise DataError(f"{path}: no metric rows")
        return {"iou": [r.iou for r in rows], "dsc": [r.dsc for r in rows]}

    report = build_report(grouped(args.real), grouped(args.synthetic))
    Path(args.out).write_text(json.dumps(report, indent=2))


def cmd_schedule_dump(args) -> None:
    if args.ckpt:
        _, sched, _ = load_checkpoint(args.ckpt)
    else:
        sched = linear_schedule(args.T, args.beta_start, args.beta_end)
    dump_schedule_csv(sched, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dualview-diff", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", help="generate dual-view phantom pairs")
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--correlation", type=float, default=0.8)
    s.add_argument("--texture-scale", type=float, default=4.0)
    s.add_argument("--texture-strength", type=float, default=0.25)
    s.add_argument("--no-wedge", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("preprocess", help="normalize, orient, histogram-match and resize a pair dataset")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--reference", help="reference CDF file (65536 lines)")
    s.add_argument("--size", type=int, default=256)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("encode", help="pack view pairs into three-plane triples")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", help="train the denoiser on encoded triples")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw triples from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--size", type=int)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--clip-denoised", action="store_true", help="clamp the x0 estimate to [-1, 1] at every step")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("postprocess", help="percentile-clip triples per channel")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lo", type=float, default=0.5)
    s.add_argument("--hi", type=float, default=99.5)
    s.add_argument("--no-rescale", action="store_true")
    s.set_defaults(func=cmd_postprocess)

    s = sub.add_parser("segment", help="Otsu masks for each view")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("evaluate", help="per-pair IoU/DSC between view masks")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--source", choices=["real", "synthetic"], required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", help="descriptive stats, KS and EMD report")
    s.add_argument("--real", required=True)
    s.add_argument("--synthetic", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("schedule-dump", help="write the noise schedule as CSV")
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--beta-start", type=float, default=1e-4)
    s.add_argument("--beta-end", type=float, default=0.02)
    s.add_argument("--ckpt")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_schedule_dump)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads:
        torch.set_num_threads(args.threads)
    try:
        args.func(args)
    except (DataError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
