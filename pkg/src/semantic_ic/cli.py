"""Command-line harness: ``train``, ``simulate``, ``sweep``, ``render-h`` and ``make-data``.

Every option can also come from a flat ``key = value`` file passed with
``--config`` (``#`` starts a comment, dashes and underscores in keys are
interchangeable). Command-line flags win over the file.

Exit status is 0 only when every requested output was written.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import bitcodec, dataio, ldpc, metrics, turbo
from .errors import ConfigurationError, DimensionError, FormatError, NumericError
from .phy import SnrConfig

log = logging.getLogger("semantic_ic")

ROUND_COLUMNS = (
    "snr_db", "image_idx", "round", "ber_ic", "ber_noic", "ed_ic", "ed_noic",
    "psnr_ic", "psnr_noic", "ed_sem", "psnr_sem",
)
SUMMARY_COLUMNS = (
    "snr_db", "images", "round", "ber_ic", "ber_noic", "ed_ic", "ed_noic",
    "psnr_ic", "psnr_noic", "ed_sem", "psnr_sem", "mi_s", "mi_c", "mi_gain",
)
THREADS_ENV = "SEMANTIC_TURBO_THREADS"
HANDLED = (ConfigurationError, DimensionError, FormatError, NumericError, OSError)


def snr_range(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic range, robust to float round-off at the end point."""
    if step <= 0:
        raise ConfigurationError("--snr-step must be positive")
    if stop < start:
        raise ConfigurationError("--snr-to must not be below --snr-from")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


def worker_count(jobs: int) -> int:
    limit = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1")
        limit = min(limit, cap)
    return max(1, min(limit, jobs))


# ---------------------------------------------------------------- config file

def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, path):
    actions = {a.dest: a for a in parser._actions}
    values = {}
    for key, raw in read_config(path).items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise ConfigurationError(f"unknown config key {key!r} in {path}")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigurationError(f"config key {key!r} expects a boolean, got {raw!r}")
            values[key] = raw.lower() in ("true", "1", "yes")
        else:
            # argparse converts string defaults with the action's type
            values[key] = raw
    parser.set_defaults(**values)


# ---------------------------------------------------------------- simulation

@dataclass
class SimJob:
    snr_db: float
    image_idx: int
    image: np.ndarray


@dataclass
class SimOutcome:
    rows: list
    source_bits: np.ndarray
    ic_bits: np.ndarray | None
    noic_bits: np.ndarray
    dumps: dict


_WORKER = {}


def _init_worker(code, codec, cfg, seed, noiseless, baseline_only, keep_images):
    _WORKER.update(code=code, codec=codec, cfg=cfg, seed=seed, noiseless=noiseless,
                   baseline_only=baseline_only, keep_images=keep_images)


def _simulate_one(job: SimJob) -> SimOutcome:
    w = _WORKER
    code, cfg = w["code"], w["cfg"]
    tx = turbo.transmit_image(job.image, code, SnrConfig(job.snr_db), w["seed"], job.image_idx,
                              noiseless=w["noiseless"])
    base_cfg = turbo.TurboConfig(cfg.outer_rounds, cfg.inner_bp_iters, 0.0, cfg.apply_apriori_to, cfg.early_stop)
    base = turbo.decode_transmission(tx, code, None, base_cfg, keep_images=w["keep_images"])
    ic = None
    if not w["baseline_only"]:
        ic = turbo.decode_transmission(tx, code, w["codec"], cfg, keep_images=w["keep_images"])

    rows = []
    nan = math.nan
    for r in range(cfg.outer_rounds):
        b = base.trace[min(r, len(base.trace) - 1)]
        s = ic.trace[min(r, len(ic.trace) - 1)] if ic is not None else None
        rows.append((
            job.snr_db, job.image_idx, r + 1,
            s.ber if s else nan, b.ber, s.ed if s else nan, b.ed,
            s.psnr if s else nan, b.psnr, s.ed_sem if s else nan, s.psnr_sem if s else nan,
        ))
    dumps = {}
    if w["keep_images"]:
        dumps["source"] = job.image
        for r, img in enumerate(base.round_images, start=1):
            dumps[f"r{r}_noIC"] = img
        if ic is not None:
            for r, (img, sem) in enumerate(zip(ic.round_images, ic.round_semantic), start=1):
                dumps[f"r{r}_IC"] = img
                dumps[f"r{r}_Sem"] = sem
    return SimOutcome(
        rows,
        bitcodec.quantize_image(job.image),
        bitcodec.quantize_image(ic.image) if ic is not None else None,
        bitcodec.quantize_image(base.image),
        dumps,
    )


def run_simulation(jobs, code, codec, cfg, seed, noiseless=False, baseline_only=False, keep_images=False):
    """Run every job, in parallel when allowed, returning outcomes in job order."""
    init = (code, codec, cfg, seed, noiseless, baseline_only, keep_images)
    workers = worker_count(len(jobs))
    if workers == 1:
        _init_worker(*init)
        return [_simulate_one(j) for j in jobs]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init) as pool:
        return list(pool.map(_simulate_one, jobs))


def summarize(snr_db, outcomes, rounds) -> tuple:
    """Means over images at the last round plus the mutual-information gain."""
    last = np.array([o.rows[rounds - 1][3:] for o in outcomes], dtype=np.float64)
    with np.errstate(invalid="ignore"):
        means = last.mean(axis=0)
    sent = np.concatenate([o.source_bits for o in outcomes])
    noic = np.concatenate([o.noic_bits for o in outcomes])
    if outcomes[0].ic_bits is None:
        mi_c, _ = metrics.mutual_information(sent, noic)
        mi = (math.nan, mi_c, math.nan)
    else:
        gain = metrics.mi_gain_empirical(sent, np.concatenate([o.ic_bits for o in outcomes]), noic)
        mi = (gain.i_semantic, gain.i_channel, gain.gain)
    return (snr_db, len(outcomes), rounds, *means, *mi)


def write_csv(path, header, rows):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def summary_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(f"{p.stem}_summary{p.suffix or '.csv'}")


# ---------------------------------------------------------------- commands

def _code_from_args(args) -> ldpc.SystematicCode:
    spec = ldpc.CodeSpec(args.code_n, args.code_dv, args.code_dc, args.code_seed)
    return ldpc.systematize(ldpc.construct_regular_code(spec))


def _test_images(args) -> np.ndarray:
    if args.images < 1:
        raise ConfigurationError("--images must be >= 1")
    if args.dataset:
        imgs = dataio.load_images(args.dataset, "test", args.images)
        if len(imgs) < args.images:
            raise ConfigurationError(f"dataset holds {len(imgs)} test images, {args.images} requested")
        return imgs
    log.info("no --dataset given; using %d synthetic test images", args.images)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x5E11]))
    return np.stack([dataio.resize_nn(dataio.synthetic_image(rng), 3) for _ in range(args.images)])


def _load_codec(args):
    if args.baseline_only:
        return None
    if not args.weights:
        raise ConfigurationError("--weights is required unless --baseline-only is set")
    return ae.SemanticCodec.load(args.weights)


def _turbo_config(args) -> turbo.TurboConfig:
    return turbo.TurboConfig(args.rounds, args.inner_iters, args.alpha, args.apriori_mode, args.early_stop)


def _simulate_points(args, snrs):
    code = _code_from_args(args)
    codec = _load_codec(args)
    cfg = _turbo_config(args)
    images = _test_images(args)
    jobs = [SimJob(s, i, img) for s in snrs for i, img in enumerate(images)]
    keep = bool(getattr(args, "dump_images", None))
    outcomes = run_simulation(jobs, code, codec, cfg, args.seed, args.noiseless, args.baseline_only, keep)
    per_snr = [outcomes[i * len(images) : (i + 1) * len(images)] for i in range(len(snrs))]
    return per_snr


def _write_dumps(directory, per_snr, snrs):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for snr, outs in zip(snrs, per_snr):
        for idx, out in enumerate(outs):
            for tag, img in out.dumps.items():
                dataio.write_image(img, directory / f"snr{format_value(float(snr))}_img{idx:03d}_{tag}.png")


def cmd_simulate(args) -> int:
    snrs = [args.snr_db]
    per_snr = _simulate_points(args, snrs)
    rows = [row for out in per_snr[0] for row in out.rows]
    write_csv(args.csv, ROUND_COLUMNS, rows)
    write_csv(summary_path(args.csv), SUMMARY_COLUMNS, [summarize(args.snr_db, per_snr[0], args.rounds)])
    if args.dump_images:
        _write_dumps(args.dump_images, per_snr, snrs)
    log.info("wrote %d rows to %s", len(rows), args.csv)
    return 0


def cmd_sweep(args) -> int:
    snrs = snr_range(args.snr_from, args.snr_to, args.snr_step)
    per_snr = _simulate_points(args, snrs)
    rows = [row for outs in per_snr for out in outs for row in out.rows]
    write_csv(args.csv, ROUND_COLUMNS, rows)
    summary = [summarize(s, outs, args.rounds) for s, outs in zip(snrs, per_snr)]
    write_csv(summary_path(args.csv), SUMMARY_COLUMNS, summary)
    log.info("wrote %d SNR points to %s", len(snrs), summary_path(args.csv))
    return 0


def cmd_train(args) -> int:
    if not Path(args.dataset).is_dir():
        raise ConfigurationError(f"dataset directory {args.dataset} does not exist")
    profile = ae.PROFILES[args.profile]
    limit = args.train_images or profile["images"]
    images = dataio.load_images(args.dataset, "train", limit)
    cfg = ae.TrainingConfig.for_profile(
        args.profile, learning_rate=args.learning_rate, batch_size=args.batch_size, seed=args.seed
    )
    if args.epochs:
        cfg.epochs = args.epochs
        cfg.__post_init__()
    codec = ae.build_default_codec(seed=args.seed)
    log.info("training on %d images for %d epochs", len(images), cfg.epochs)
    log_path = args.log or Path(args.weights).with_suffix(".log.csv")
    ae.train(codec, images, cfg, log_path=log_path,
             progress=lambda e, loss: log.info("epoch %d loss %.6f", e, loss))
    codec.save(args.weights)
    log.info("wrote %s and %s", args.weights, log_path)
    return 0


def cmd_render_h(args) -> int:
    H = ldpc.construct_regular_code(ldpc.CodeSpec(args.code_n, args.code_dv, args.code_dc, args.code_seed))
    ldpc.write_alist(H, args.output)
    code = ldpc.systematize(H)
    log.info("n=%d m=%d rank=%d k=%d -> %s", H.n, H.m, code.rank, code.k, args.output)
    return 0


def cmd_make_data(args) -> int:
    dataio.write_synthetic_cifar10(args.output, args.train_images, args.test_images, args.seed)
    return 0


# ---------------------------------------------------------------- parser

def _add_code_options(p):
    p.add_argument("--code-n", type=int, default=900)
    p.add_argument("--code-dv", type=int, default=2)
    p.add_argument("--code-dc", type=int, default=3)
    p.add_argument("--code-seed", type=int, default=0)


def _add_sim_options(p):
    p.add_argument("--weights", help="trained auto-encoder weights file")
    p.add_argument("--dataset", help="CIFAR-10 binary directory; synthetic images if omitted")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--rounds", type=int, default=7)
    p.add_argument("--inner-iters", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--apriori-mode", choices=turbo.APRIORI_MODES, default="systematic-only")
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--baseline-only", action="store_true", help="skip the semantic stage")
    p.add_argument("--noiseless", action="store_true", help="bypass the channel noise")
    p.add_argument("--csv", help="per-round CSV; a _summary CSV is written next to it")
    _add_code_options(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semantic-turbo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value file; flags take precedence")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = command("train", cmd_train, "train the semantic auto-encoder")
    p.add_argument("--dataset")
    p.add_argument("--weights", help="output weights path")
    p.add_argument("--log", help="training log CSV (default: <weights>.log.csv)")
    p.add_argument("--profile", choices=sorted(ae.PROFILES), default="desk")
    p.add_argument("--epochs", type=int, help="override the profile's epoch count")
    p.add_argument("--train-images", type=int, help="override the profile's image count")
    p.add_argument("--learning-rate", type=float, default=0.003)
    p.add_argument("--batch-size", type=int, default=64)

    p = command("simulate", cmd_simulate, "paired turbo/baseline run at one SNR")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--dump-images", help="directory for per-round PNG dumps")
    _add_sim_options(p)

    p = command("sweep", cmd_sweep, "paired runs over an SNR range")
    p.add_argument("--snr-from", type=float, default=-5.0)
    p.add_argument("--snr-to", type=float, default=8.0)
    p.add_argument("--snr-step", type=float, default=1.0)
    _add_sim_options(p)

    p = command("render-h", cmd_render_h, "write the parity-check matrix as alist")
    p.add_argument("--output")
    _add_code_options(p)

    p = command("make-data", cmd_make_data, "write a synthetic CIFAR-10-format dataset")
    p.add_argument("--output")
    p.add_argument("--train-images", type=int, default=2000)
    p.add_argument("--test-images", type=int, default=200)
    return parser


REQUIRED = {
    "train": ("dataset", "weights"),
    "simulate": ("csv",),
    "sweep": ("csv",),
    "render-h": ("output",),
    "make-data": ("output",),
}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, args.config)
        args = parser.parse_args(argv)
    missing = [f"--{k.replace('_', '-')}" for k in REQUIRED[args.command] if not getattr(args, k)]
    if missing:
        raise ConfigurationError(f"{args.command} needs {', '.join(missing)} (flag or config key)")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(message)s",
        )
        return args.func(args)
    except HANDLED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
