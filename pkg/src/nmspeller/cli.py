"""Command-line entry point.

Subcommands: gen-data, train, eval, predict, inspect-mask, grad-check.
Settings come from built-in defaults, then the NMSP_SEED environment
variable (seed only), then an optional ``key = value`` config file, then
command-line flags; later sources win. Every produced artifact echoes the
effective configuration. Exit codes: 0 success, 1 validation error,
2 runtime failure, 3 gradient-check failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from .config import TrainConfig
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .data import (build_confusion_set, generate_corpus, load_pairs,
                   save_pairs, synth_vocab)
from .errors import CheckpointError, ConfigError, InputError, SpellerError
from .evaluate import evaluate
from .fusion import ModalityResources
from .gradcheck import finite_difference_check
from .masking import NGramMode, build_mask_indices
from .model import SpellChecker, toggle_inference_masking
from .train import batch_loss, train
from .vocab import Vocab

VOCAB_FILE = "vocab.txt"
CONFUSION_FILE = "confusion.tsv"
PRON_FILE = "pronunciation.tsv"
GLYPH_FILE = "glyphs.tsv"
TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"
MANIFEST_FILE = "manifest.txt"
CHECKPOINT_FILE = "checkpoint.nmsp"
LOSS_FILE = "loss.csv"

GRAD_CHECK_TOLERANCE = 1e-4
GRAD_CHECK_MAX_HIDDEN = 16
GRAD_CHECK_VOCAB = 24
GRAD_CHECK_CHARS = 4  # layout length 6 with the boundary tokens


def _parse_bool(value):
    text = str(value).strip().lower()
    if text in ("on", "true", "1", "yes"):
        return True
    if text in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {value!r}")


_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}
_GEN_KEYS = {
    "vocab_size": int,
    "n_sentences": int,
    "min_sentence_len": int,
    "max_sentence_len": int,
    "error_rate": float,
    "adjacent_error_rate": float,
    "test_fraction": float,
    "group_size": int,
}
_PATH_KEYS = {"data_dir": str, "out_dir": str}
_EXTRA_KEYS = {"filter_chars": str}

_GEN_DEFAULTS = {
    "vocab_size": 50,
    "n_sentences": 200,
    "min_sentence_len": 4,
    "max_sentence_len": 12,
    "error_rate": 0.15,
    "adjacent_error_rate": 0.0,
    "test_fraction": 0.2,
    "group_size": 4,
}


def _coerce(key, raw):
    table = {}
    table.update(_TRAIN_KEYS)
    table.update(_GEN_KEYS)
    table.update(_PATH_KEYS)
    table.update(_EXTRA_KEYS)
    if key not in table:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = table[key]
    if kind in (bool, "bool"):
        return _parse_bool(raw)
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return str(raw)


def parse_config_file(path):
    """``key = value`` lines with ``#`` comments; unknown keys are rejected."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in text.split("=", 1))
            try:
                values[key] = _coerce(key, raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


def effective_settings(defaults, args):
    """defaults < NMSP_SEED < config file < explicit flags."""
    merged = dict(defaults)
    env_seed = os.environ.get("NMSP_SEED")
    if env_seed is not None and "seed" in merged:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"NMSP_SEED must be an integer, got {env_seed!r}") from exc
    config_path = getattr(args, "config", None)
    if config_path:
        for key, value in parse_config_file(config_path).items():
            if key in merged:
                merged[key] = value
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = _coerce(key, flag) if isinstance(flag, str) else flag
    return merged


def _config_lines(settings, command):
    lines = [f"# command = {command}"]
    for key in sorted(settings):
        value = settings[key]
        if isinstance(value, bool):
            value = "on" if value else "off"
        lines.append(f"# {key} = {value}")
    return lines


def _train_config(settings):
    return TrainConfig(**{k: settings[k] for k in _TRAIN_KEYS}).validate()


def _load_assets(data_dir, need_resources):
    vocab = Vocab.load(os.path.join(data_dir, VOCAB_FILE))
    resources = None
    if need_resources:
        resources = ModalityResources.load(os.path.join(data_dir, PRON_FILE),
                                           os.path.join(data_dir, GLYPH_FILE))
    return vocab, resources


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    settings = effective_settings({**_GEN_DEFAULTS, "seed": 0}, args)
    if settings["n_sentences"] < 0:
        raise ConfigError(f"n_sentences must be non-negative, got {settings['n_sentences']}")
    if not 0.0 <= settings["test_fraction"] <= 1.0:
        raise ConfigError(f"test_fraction must lie in [0, 1], got {settings['test_fraction']}")
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)

    rng = np.random.default_rng(settings["seed"])
    vocab = synth_vocab(settings["vocab_size"])
    confusion = build_confusion_set(vocab, rng, group_size=settings["group_size"])
    pairs, resources = generate_corpus(
        settings["vocab_size"], settings["n_sentences"],
        (settings["min_sentence_len"], settings["max_sentence_len"]),
        settings["error_rate"], settings["adjacent_error_rate"], confusion, rng,
    )
    n_test = int(round(len(pairs) * settings["test_fraction"]))
    train_pairs = pairs[:len(pairs) - n_test]
    test_pairs = pairs[len(pairs) - n_test:]

    vocab.save(os.path.join(out_dir, VOCAB_FILE))
    confusion.save(os.path.join(out_dir, CONFUSION_FILE))
    resources.save(os.path.join(out_dir, PRON_FILE), os.path.join(out_dir, GLYPH_FILE))
    save_pairs(train_pairs, vocab, os.path.join(out_dir, TRAIN_FILE))
    save_pairs(test_pairs, vocab, os.path.join(out_dir, TEST_FILE))

    manifest = _config_lines(settings, "gen-data")
    manifest.append(f"# train_sentences = {len(train_pairs)}")
    manifest.append(f"# test_sentences = {len(test_pairs)}")
    for name in (VOCAB_FILE, CONFUSION_FILE, PRON_FILE, GLYPH_FILE, TRAIN_FILE, TEST_FILE):
        manifest.append(f"file = {name}")
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote {len(train_pairs)} train / {len(test_pairs)} test sentence pairs to {out_dir}")
    return 0


def cmd_train(args):
    settings = effective_settings({f.name: f.default for f in fields(TrainConfig)}, args)
    config = _train_config(settings)
    vocab, resources = _load_assets(args.data_dir, config.fusion)
    pairs = load_pairs(os.path.join(args.data_dir, TRAIN_FILE), vocab)
    if not pairs:
        raise ConfigError(f"no training sentences in {args.data_dir}/{TRAIN_FILE}")

    os.makedirs(args.out_dir, exist_ok=True)
    model = SpellChecker(config, vocab, resources=resources)
    losses = []

    def log(epoch, mean_loss):
        losses.append((epoch, mean_loss))
        print(f"epoch {epoch}: mean loss {mean_loss:.6f}")

    train(config, pairs, model, log=log)

    header = _config_lines(settings, "train")
    with open(os.path.join(args.out_dir, LOSS_FILE), "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        fh.write("epoch,mean_loss\n")
        for epoch, mean_loss in losses:
            fh.write(f"{epoch},{mean_loss!r}\n")
    ckpt_path = os.path.join(args.out_dir, CHECKPOINT_FILE)
    save_checkpoint(ckpt_path, model)
    print(f"variant {config.variant}; checkpoint written to {ckpt_path}")
    return 0


def cmd_eval(args):
    vocab = Vocab.load(os.path.join(args.data_dir, VOCAB_FILE))
    config_peek, _ = read_checkpoint(args.checkpoint)
    resources = None
    if config_peek.get("fusion"):
        _, resources = _load_assets(args.data_dir, True)
    model, config = load_checkpoint(args.checkpoint, vocab, resources=resources)
    if args.mask_at_inference is not None:
        toggle_inference_masking(model, _parse_bool(args.mask_at_inference))

    corpus = args.corpus or os.path.join(args.data_dir, TEST_FILE)
    pairs = load_pairs(corpus, vocab)
    if not pairs:
        raise InputError(f"no sentences to evaluate in {corpus}")
    filter_ids = None
    if args.filter_chars:
        filter_ids = {vocab.encode_char(c) for c in args.filter_chars}

    predictions = model.predict_corpus([p.source for p in pairs])
    report = evaluate(predictions, pairs, filter_chars=filter_ids)

    settings = dict(config.to_dict())
    settings["mask_at_inference"] = model.mask_at_inference
    settings["corpus"] = corpus
    settings["filter_chars"] = args.filter_chars or ""
    lines = _config_lines(settings, "eval") + [report.table()] + report.key_value_lines()
    text = "\n".join(lines)
    print(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_predict(args):
    vocab = Vocab.load(os.path.join(args.data_dir, VOCAB_FILE))
    config_peek, _ = read_checkpoint(args.checkpoint)
    resources = None
    if config_peek.get("fusion"):
        _, resources = _load_assets(args.data_dir, True)
    model, _ = load_checkpoint(args.checkpoint, vocab, resources=resources)
    if args.mask_at_inference is not None:
        toggle_inference_masking(model, _parse_bool(args.mask_at_inference))

    with open(args.input, encoding="utf-8") as fh:
        sentences = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    corrected = []
    for sentence in sentences:
        ids = vocab.encode(sentence)
        corrected.append(vocab.decode(model.predict_ids(ids)))
    output = "\n".join(corrected)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(output + ("\n" if corrected else ""))
    else:
        print(output)
    return 0


def cmd_inspect_mask(args):
    mode = NGramMode.parse(args.ngram)
    sentence = args.sentence
    tokens = ["[cls]"] + list(sentence) + ["[sep]"]
    print("# command = inspect-mask")
    print(f"# ngram = {mode.value}")
    print(f"# length = {len(tokens)}")
    if mode is NGramMode.NONE:
        print("bypass")
        return 0
    rows = build_mask_indices(mode, len(tokens))
    print(f"{'pos':>4}  {'token':<8}  masked")
    for i, (token, cols) in enumerate(zip(tokens, rows)):
        print(f"{i:>4}  {token:<8}  {','.join(str(c) for c in sorted(cols))}")
    return 0


def cmd_grad_check(args):
    settings = effective_settings({"ngram": "trigram", "fusion": True, "seed": 0,
                                   "hidden_size": 8, "num_heads": 2}, args)
    if settings["hidden_size"] > GRAD_CHECK_MAX_HIDDEN:
        raise ConfigError(
            f"grad-check enforces hidden_size <= {GRAD_CHECK_MAX_HIDDEN}, "
            f"got {settings['hidden_size']}"
        )
    config = TrainConfig(
        ngram=settings["ngram"], fusion=settings["fusion"], seed=settings["seed"],
        hidden_size=settings["hidden_size"], num_heads=settings["num_heads"],
        dropout=0.0, max_len=GRAD_CHECK_MAX_HIDDEN,
    ).validate()

    rng = np.random.default_rng(config.seed)
    vocab = synth_vocab(GRAD_CHECK_VOCAB)
    confusion = build_confusion_set(vocab, rng)
    pairs, resources = generate_corpus(GRAD_CHECK_VOCAB, 1,
                                       (GRAD_CHECK_CHARS, GRAD_CHECK_CHARS),
                                       0.3, 0.0, confusion, rng)
    model = SpellChecker(config, vocab, resources=resources if config.fusion else None)

    def loss():
        value, _ = batch_loss(model, pairs, training=True, rng=None)
        return value

    for line in _config_lines(settings, "grad-check"):
        print(line)
    report = finite_difference_check(loss, model.parameters().items(), eps=1e-5)
    failures = 0
    width = max(len(name) for name in report)
    for name, err in report.items():
        ok = err < GRAD_CHECK_TOLERANCE
        failures += not ok
        print(f"{name:<{width}}  {err:12.3e}  {'pass' if ok else 'FAIL'}")
    if failures:
        print(f"{failures} parameter group(s) above tolerance {GRAD_CHECK_TOLERANCE}")
        return 3
    print(f"all {len(report)} parameter groups within tolerance {GRAD_CHECK_TOLERANCE}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_train_flags(sub):
    sub.add_argument("--ngram", help="none, unigram, left-bigram, right-bigram or trigram")
    sub.add_argument("--fusion", choices=["on", "off"], help="gated multi-modal fusion")
    sub.add_argument("--mask-at-inference", dest="mask_at_inference", choices=["on", "off"])
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--weight-decay", dest="weight_decay", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--hidden-size", dest="hidden_size", type=int)
    sub.add_argument("--num-heads", dest="num_heads", type=int)
    sub.add_argument("--semantic-layers", dest="semantic_layers", type=int)
    sub.add_argument("--fusion-layers", dest="fusion_layers", type=int)
    sub.add_argument("--ffn-size", dest="ffn_size", type=int)
    sub.add_argument("--dropout", type=float)
    sub.add_argument("--max-len", dest="max_len", type=int)


def build_parser():
    parser = _Parser(prog="nmspeller", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-data", help="generate a synthetic corpus and resources")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--config")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--vocab-size", dest="vocab_size", type=int)
    gen.add_argument("--n-sentences", dest="n_sentences", type=int)
    gen.add_argument("--min-sentence-len", dest="min_sentence_len", type=int)
    gen.add_argument("--max-sentence-len", dest="max_sentence_len", type=int)
    gen.add_argument("--error-rate", dest="error_rate", type=float)
    gen.add_argument("--adjacent-error-rate", dest="adjacent_error_rate", type=float)
    gen.add_argument("--test-fraction", dest="test_fraction", type=float)
    gen.add_argument("--group-size", dest="group_size", type=int)
    gen.set_defaults(func=cmd_gen_data)

    tr = subs.add_parser("train", help="train a model on a generated corpus")
    tr.add_argument("--data-dir", required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--config")
    _add_train_flags(tr)
    tr.set_defaults(func=cmd_train)

    ev = subs.add_parser("eval", help="evaluate a checkpoint on a corpus")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data-dir", required=True)
    ev.add_argument("--corpus", help="corpus file; defaults to DATA_DIR/test.tsv")
    ev.add_argument("--mask-at-inference", dest="mask_at_inference", choices=["on", "off"])
    ev.add_argument("--filter-chars", dest="filter_chars",
                    help="gold characters whose corrections are ignored")
    ev.add_argument("--report", help="also write the report to this file")
    ev.set_defaults(func=cmd_eval)

    pr = subs.add_parser("predict", help="correct plain sentences with a checkpoint")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data-dir", required=True)
    pr.add_argument("--input", required=True, help="one sentence per line")
    pr.add_argument("--output")
    pr.add_argument("--mask-at-inference", dest="mask_at_inference", choices=["on", "off"])
    pr.set_defaults(func=cmd_predict)

    im = subs.add_parser("inspect-mask", help="print per-position masked indices")
    im.add_argument("--sentence", required=True)
    im.add_argument("--ngram", required=True)
    im.set_defaults(func=cmd_inspect_mask)

    gc = subs.add_parser("grad-check", help="finite-difference check of all gradients")
    gc.add_argument("--config")
    gc.add_argument("--ngram")
    gc.add_argument("--fusion", choices=["on", "off"])
    gc.add_argument("--seed", type=int)
    gc.add_argument("--hidden-size", dest="hidden_size", type=int)
    gc.add_argument("--num-heads", dest="num_heads", type=int)
    gc.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, InputError, CheckpointError, FileNotFoundError,
            IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SpellerError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
