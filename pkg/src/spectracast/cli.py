"""Single entry point exposing every pipeline stage.

Every command is deterministic under --seed; flags override values from the
optional JSON config file. Exit codes: 0 success, 2 validation error,
1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import InputValidationError, SpectracastError

log = logging.getLogger("spectracast")


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with Path(path).open("r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise InputValidationError("config file must hold a JSON object")
    return config


def _cfg(config: dict, section: str, key: str, fallback):
    return config.get(section, {}).get(key, fallback)


def _pick(flag_value, config: dict, section: str, key: str, default):
    if flag_value is not None:
        return flag_value
    return _cfg(config, section, key, default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectracast",
        description="Text-guided weather time-series generation toolkit",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="print perception analytics for a record")
    p.add_argument("--input", required=True)
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("caption", help="run the captioning pipeline over a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backends", default=None, help="e.g. mock:3 or comma-separated ids")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("categorize", help="calibrate thresholds and re-categorize")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None, help="defaults to rewriting --input")

    p = sub.add_parser("train-codec", help="pretrain the series codec")
    p.add_argument("--input", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the text-conditioned diffusion generator")
    p.add_argument("--input", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="sample a series from a caption")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default=None, help="write a JSONL series record here")

    p = sub.add_parser("evaluate", help="run an experiment suite")
    p.add_argument("--suite", required=True, choices=["gen", "retrieval", "aaa", "augment"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("retrieve", help="bi-directional retrieval over a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--input", required=True)

    p = sub.add_parser("serve-review", help="serve the human review API and UI")
    p.add_argument("--dataset", required=True)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None)

    return parser


# ---------------------------------------------------------------------------
# command implementations


def _cmd_synth(args, config, seed):
    from .corpus import generate_corpus, save_dataset

    n = _pick(args.n, config, "synth", "n", 1000)
    length = _pick(args.length, config, "synth", "length", 240)
    records = generate_corpus(n, seed=seed, length=length)
    save_dataset(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_analyze(args, config, seed):
    from .corpus import load_dataset
    from .macc.prompts import series_facts
    from .spectral import perceive

    records = load_dataset(args.input)
    if not 0 <= args.index < len(records):
        raise InputValidationError(f"--index {args.index} out of range [0, {len(records)})")
    record = records[args.index]
    v = perceive(record.series)
    print(json.dumps(series_facts(v, record.series), indent=2, sort_keys=True))
    return 0


def _parse_backends(spec_text: str, gateway):
    from .gateway import BackendConfig

    if spec_text.startswith("mock:"):
        return gateway.register_mocks(int(spec_text.split(":", 1)[1]))
    ids = []
    for backend_id in spec_text.split(","):
        backend_id = backend_id.strip()
        if backend_id == "mock":
            ids += gateway.register_mocks(1)
        else:
            ids.append(gateway.register_backend(BackendConfig(backend_id=backend_id, mock=True)))
    return ids


def _cmd_caption(args, config, seed):
    from .corpus import load_dataset, save_dataset
    from .gateway import ChatGateway
    from .macc import caption_record, default_rules

    records = load_dataset(args.input)
    backends_spec = _pick(args.backends, config, "caption", "backends", "mock:3")
    rounds = _pick(args.rounds, config, "caption", "rounds", 2)
    gateway = ChatGateway()
    backend_ids = _parse_backends(backends_spec, gateway)
    kb = default_rules()
    limit = args.limit or len(records)
    out = []
    for i, record in enumerate(records):
        if i < limit:
            record = caption_record(record, gateway, backend_ids, kb=kb, max_rounds=rounds)
        out.append(record)
    save_dataset(args.out, out)
    captioned = sum(1 for r in out if r.captions)
    print(f"captioned {captioned}/{len(out)} records -> {args.out}")
    return 0


def _cmd_categorize(args, config, seed):
    from .core import Category
    from .corpus import load_dataset, recalibrate_corpus, save_dataset

    records = load_dataset(args.input)
    records, thresholds = recalibrate_corpus(records)
    save_dataset(args.out or args.input, records)
    counts = {c.value: 0 for c in Category}
    for r in records:
        counts[r.category.value] += 1
    total = len(records)
    print(f"thresholds: delta1={thresholds.delta1:.4f} delta2={thresholds.delta2:.4f}")
    for name, count in counts.items():
        print(f"{name:<13} {count:>6}  ({100 * count / total:.1f}%)")
    return 0


def _cmd_train_codec(args, config, seed):
    from .codec import CodecConfig, train_codec
    from .corpus import load_dataset

    records = load_dataset(args.input)
    steps = _pick(args.steps, config, "codec", "steps", 2000)
    codec_config = CodecConfig(**config.get("codec", {}).get("model", {}))
    codec, trace = train_codec(
        [r.series for r in records], codec_config, steps=steps, seed=seed
    )
    codec.save(args.out)
    tail = sum(trace[-50:]) / max(1, len(trace[-50:])) if trace else float("nan")
    print(f"codec trained {steps} steps (tail loss {tail:.4f}) -> {args.out}")
    return 0


def _cmd_train(args, config, seed):
    from .codec import SeriesCodec
    from .diffusion import NoiseSchedule, SpectralDiffusionGenerator
    from .experiments import desk_model_config
    from .corpus import load_dataset

    records = load_dataset(args.input)
    pairs = []
    for r in records:
        accepted = r.accepted_caption
        if accepted is not None:
            pairs.append((r.series, accepted.text))
    if not pairs:
        raise InputValidationError(
            "no accepted captions in the dataset; run `spectracast caption` first"
        )
    codec = SeriesCodec.load(args.codec)
    steps = _pick(args.steps, config, "training", "steps", 10_000)
    k_steps = _cfg(config, "training", "k_steps", 200)
    generator = SpectralDiffusionGenerator(
        codec, desk_model_config(), NoiseSchedule.linear(k_steps), seed=seed
    )
    trace = generator.train(pairs, steps=steps)
    generator.save(args.out)
    tail = sum(trace[-100:]) / max(1, len(trace[-100:]))
    print(f"trained {steps} steps on {len(pairs)} pairs (tail loss {tail:.4f}) -> {args.out}")
    return 0


def _cmd_generate(args, config, seed):
    from .corpus import record_to_json, _series_to_json
    from .diffusion import SpectralDiffusionGenerator

    generator = SpectralDiffusionGenerator.load(args.checkpoint)
    steps = _pick(args.steps, config, "sampling", "steps", 200)
    series = generator.sample(args.caption, n_steps=steps, seed=seed)
    payload = {"caption": args.caption, "seed": seed, "series": _series_to_json(series)}
    line = json.dumps(payload)
    if args.out:
        with Path(args.out).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        print(f"wrote 1 generated series to {args.out}")
    else:
        print(line)
    return 0


def _cmd_evaluate(args, config, seed):
    from .corpus import load_dataset

    samples = args.samples
    if args.suite == "aaa":
        from .diffusion import SpectralDiffusionGenerator
        from .experiments import build_overfit_suite, gated_aaa

        if not args.checkpoint:
            raise InputValidationError("--suite aaa needs --checkpoint")
        generator = SpectralDiffusionGenerator.load(args.checkpoint)
        if not generator.trained:
            raise InputValidationError("checkpoint is untrained; run train first")
        suite = build_overfit_suite(seed=seed)
        scores = gated_aaa(generator, suite, n_samples=samples or 10, seed=seed)
        for key, value in scores.items():
            print(f"AAA {key:<9} {value:.3f}")
        return 0
    if args.suite == "retrieval":
        from .evaluation import retrieval_eval_records

        if not args.input:
            raise InputValidationError("--suite retrieval needs --input")
        records = load_dataset(args.input)
        print(retrieval_eval_records(records).as_table())
        return 0
    if args.suite == "augment":
        from .diffusion import SpectralDiffusionGenerator
        from .evaluation import augmentation_study

        if not (args.checkpoint and args.input):
            raise InputValidationError("--suite augment needs --checkpoint and --input")
        generator = SpectralDiffusionGenerator.load(args.checkpoint)
        if not generator.trained:
            raise InputValidationError("checkpoint is untrained; run train first")
        records = load_dataset(args.input)

        def sampler(caption, sample_seed):
            return generator.sample(caption or "typical conditions", n_steps=50, seed=sample_seed)

        report = augmentation_study(records, sampler, seed=seed)
        print(report.as_table())
        return 0
    # gen: paired generation quality on the test split
    from .diffusion import SpectralDiffusionGenerator
    from .evaluation import mse, psd_compare, wape
    from .core import Split

    if not (args.checkpoint and args.input):
        raise InputValidationError("--suite gen needs --checkpoint and --input")
    generator = SpectralDiffusionGenerator.load(args.checkpoint)
    if not generator.trained:
        raise InputValidationError("checkpoint is untrained; run train first")
    records = [r for r in load_dataset(args.input) if r.split is Split.TEST]
    records = [r for r in records if r.accepted_caption is not None]
    if not records:
        raise InputValidationError("no captioned test records to evaluate")
    if samples:
        records = records[:samples]
    wapes, mses, real, fake = [], [], [], []
    for i, r in enumerate(records):
        gen_series = generator.sample(r.accepted_caption.text, n_steps=50, seed=seed + i)
        y = r.series.channel("temperature")
        y_hat = gen_series.channel("temperature")[: y.shape[0]]
        wapes.append(wape(y, y_hat))
        mses.append(mse(y, y_hat))
        real.append(r.series)
        fake.append(gen_series)
    psd = psd_compare(real, fake)
    print(f"records        {len(records)}")
    print(f"mean WAPE      {sum(wapes) / len(wapes):.4f}")
    print(f"mean MSE       {sum(mses) / len(mses):.4f}")
    print(f"PSD distance   {psd.distance:.4f}")
    return 0


def _cmd_retrieve(args, config, seed):
    from .corpus import load_dataset
    from .evaluation import retrieval_eval_records

    records = load_dataset(args.input)
    if args.limit:
        records = records[: args.limit]
    if args.checkpoint:
        import numpy as np

        from .diffusion import SpectralDiffusionGenerator

        generator = SpectralDiffusionGenerator.load(args.checkpoint)
        if not generator.trained:
            raise InputValidationError("checkpoint is untrained; run train first")

        def series_embedder(series):
            return generator.codec.encode(series).values.mean(axis=0)

        def text_embedder(caption):
            sample = generator.sample(caption, n_steps=50, seed=seed)
            return generator.codec.encode(sample).values.mean(axis=0)

        report = retrieval_eval_records(
            records, series_embedder=series_embedder, text_embedder=text_embedder
        )
    else:
        report = retrieval_eval_records(records)
    print(report.as_table())
    return 0


def _cmd_stats(args, config, seed):
    from .corpus import corpus_stats, load_dataset

    print(corpus_stats(load_dataset(args.input)).as_table())
    return 0


def _cmd_serve_review(args, config, seed):
    from .review import serve

    ui_dir = args.ui_dir or _cfg(config, "review", "ui_dir", None)
    if ui_dir is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        ui_dir = bundled if bundled.exists() else None
    print(f"serving review API on http://{args.host}:{args.port} (dataset {args.dataset})")
    serve(args.dataset, port=args.port, host=args.host, ui_dir=ui_dir)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "analyze": _cmd_analyze,
    "caption": _cmd_caption,
    "categorize": _cmd_categorize,
    "train-codec": _cmd_train_codec,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "retrieve": _cmd_retrieve,
    "stats": _cmd_stats,
    "serve-review": _cmd_serve_review,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        return _COMMANDS[args.command](args, config, seed)
    except InputValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpectracastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
