"""Command-line entry point: ``llrcomp <subcommand> [--config FILE] [flags]``.

Every run writes its outputs plus ``manifest.json`` into ``--out-dir``. The
manifest holds the fully resolved configuration, so passing it back through
``--config`` repeats the run and reproduces the CSV outputs byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import __version__
from .autonet import TrainConfig, generate_dataset, load_params, save_params, train
from .channel import NoiseModel, apply_channel, make_rng
from .errors import ConfigurationError, LlrCompError
from .ldpc import default_code, load_alist_file
from .modem import build_constellation, compute_llr
from .pipeline import (
    ExperimentConfig,
    LatentCodec,
    emit_latent_histograms,
    rows_to_csv,
    run_harq,
    run_single,
)
from .quantizers import (
    UniformQuantizerSpec,
    build_lut,
    fit_max_mi_per_bit,
    fit_rayleigh_quantizer,
    lut_memory_bytes,
)

logger = logging.getLogger("llrcomp")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULTS = {
    "seed": 1,
    "k_bits": 4,
    "code": None,
    "model": None,
    "threads": 1,
    "train": {
        "snr_db": [7.0, 8.0, 9.0, 10.0],
        "codewords_per_snr": 500,
        "epochs": 300,
        "batch_size": 8192,
        "learning_rate": 1e-3,
        "noise_std": 1e-3,
        "eps_loss": 1e-4,
    },
    "eval": {
        "snr_db": [7.0, 7.5, 8.0, 8.5, 9.0, 9.5],
        "codewords_per_point": 1000,
        "max_iter": 50,
        "decoder": "sum_product",
        "runs": [{"method": "full_precision", "n_bits": None}, {"method": "scalar_llr", "n_bits": 5}],
        "delta_latent": 0.8,
        "delta_llr": 4.0,
        "stats_delta": None,
        "amp_distribution": "rayleigh",
        "fold_saturation": True,
        "use_lut": True,
        "maxmi_samples": 200000,
        "frames_per_chunk": 100,
    },
    "fit": {
        "kind": "max_mi",
        "n_levels": 4,
        "snr_db": 0.0,
        "samples": 1000000,
        "distribution": "rayleigh",
    },
    "lut": {"n_bits": 5, "delta": 0.8, "fold_saturation": True},
    "hist": {"snr_db": [9.0], "codewords_per_snr": 200, "bins": 50, "component": 3},
}

_RUN_KEYS = {"method", "n_bits"}
# keys whose default is None, with the type accepted otherwise
_NULLABLE = {"code": str, "model": str, "stats_delta": float}


class UsageError(LlrCompError):
    """Bad command line or configuration file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _merge(base, user, path=""):
    """Overlay ``user`` on ``base``, rejecting keys absent from ``base``."""
    if not isinstance(user, dict):
        raise UsageError(f"{path or 'config'}: expected a mapping")
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise UsageError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], val, where)
        elif key == "runs":
            out[key] = _runs(val, where)
        else:
            out[key] = _check_type(base[key], val, where)
    return out


def _check_type(default, val, where):
    want = _NULLABLE.get(where.rsplit(".", 1)[-1]) if default is None else type(default)
    if val is None and default is None:
        return val
    if want is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if want is list and isinstance(val, (int, float)) and not isinstance(val, bool):
        return [float(val)]
    if not isinstance(val, want) or (want is int and isinstance(val, bool)):
        raise UsageError(f"config key '{where}' expects {want.__name__}, got {val!r}")
    return val


def _runs(val, where):
    if not isinstance(val, list) or not val:
        raise UsageError(f"{where}: expected a nonempty list of {{method, n_bits}} entries")
    runs = []
    for i, r in enumerate(val):
        if not isinstance(r, dict):
            raise UsageError(f"{where}[{i}]: expected a mapping")
        bad = sorted(set(r) - _RUN_KEYS)
        if bad:
            raise UsageError(f"unknown config key '{where}[{i}].{bad[0]}'")
        if "method" not in r:
            raise UsageError(f"{where}[{i}]: missing 'method'")
        runs.append({"method": r["method"], "n_bits": r.get("n_bits")})
    return runs


def load_config(path: str | None) -> dict:
    """Read a YAML config (or a previous run's manifest) over the defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if isinstance(data, dict) and "config" in data and "tool" in data:
        data = data["config"]
    return _merge(DEFAULTS, data)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _code(cfg):
    if cfg["code"] is None:
        return default_code()
    if not os.path.exists(cfg["code"]):
        raise LlrCompError(f"code asset not found: {cfg['code']}")
    return load_alist_file(cfg["code"])


def _model(cfg):
    path = cfg["model"]
    if path is None:
        raise UsageError("this command needs 'model' (path to trained weights) in the config")
    if not os.path.exists(path):
        raise LlrCompError(f"model file not found: {path}")
    with open(path, "rb") as f:
        return load_params(f.read(), expected_k=cfg["k_bits"])


def _write(out_dir, name, text, mode="w"):
    path = os.path.join(out_dir, name)
    with open(path, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""})) as f:
        f.write(text)
    return path


def cmd_train(cfg, out_dir):
    t = cfg["train"]
    pm = _code(cfg)
    c = build_constellation(cfg["k_bits"])
    data = generate_dataset(t["snr_db"], t["codewords_per_snr"], pm, c, cfg["seed"], cfg["threads"])
    tc = TrainConfig(learning_rate=t["learning_rate"], batch_size=t["batch_size"], epochs=t["epochs"],
                     noise_std=t["noise_std"], eps_loss=t["eps_loss"], seed=cfg["seed"])
    logger.info("training on %d samples for %d epochs", len(data), tc.epochs)
    res = train(tc, data, k_bits=cfg["k_bits"],
                callback=lambda e, l: logger.debug("epoch %d loss %.6g", e, l))
    lines = ["epoch,loss"] + [f"{i},{float(l)!r}" for i, l in enumerate(res.loss_history)]
    return [
        _write(out_dir, "model.llrcae", save_params(res.params), "wb"),
        _write(out_dir, "loss.csv", "\n".join(lines) + "\n"),
    ]


def _experiment(cfg, run):
    e = cfg["eval"]
    return ExperimentConfig(
        k_bits=cfg["k_bits"], code_path=cfg["code"], snr_db=tuple(e["snr_db"]),
        codewords_per_point=e["codewords_per_point"], method=run["method"], n_bits=run["n_bits"],
        seed=cfg["seed"], max_iter=e["max_iter"], decoder=e["decoder"], model_path=cfg["model"],
        delta_latent=e["delta_latent"], delta_llr=e["delta_llr"], stats_delta=e["stats_delta"],
        amp_distribution=e["amp_distribution"], fold_saturation=e["fold_saturation"],
        use_lut=e["use_lut"], maxmi_samples=e["maxmi_samples"],
        frames_per_chunk=e["frames_per_chunk"], threads=cfg["threads"],
    )


def _eval(cfg, out_dir, runner, prefix):
    if cfg["code"] is not None and not os.path.exists(cfg["code"]):
        raise LlrCompError(f"code asset not found: {cfg['code']}")
    experiments = [_experiment(cfg, r) for r in cfg["eval"]["runs"]]
    model = _model(cfg) if any(x.method == "deep" for x in experiments) else None
    written, merged = [], []
    for x in experiments:
        res = runner(x, model if x.method == "deep" else None)
        tag = "full" if x.n_bits is None else f"{x.n_bits}b"
        written.append(_write(out_dir, f"{prefix}_{x.method}_{tag}.csv", res.to_csv()))
        merged.extend(res.rows())
    written.append(_write(out_dir, f"{prefix}_merged.csv", rows_to_csv(merged)))
    return written


def cmd_eval_single(cfg, out_dir):
    return _eval(cfg, out_dir, run_single, "bler")


def cmd_eval_harq(cfg, out_dir):
    return _eval(cfg, out_dir, run_harq, "harq")


def cmd_fit_quantizer(cfg, out_dir):
    f = cfg["fit"]
    if f["kind"] == "max_mi":
        c = build_constellation(cfg["k_bits"])
        rng = make_rng(cfg["seed"], "fit", 0)
        bits = rng.integers(0, 2, size=(f["samples"], c.bits_per_symbol), dtype=np.uint8)
        obs = apply_channel(c.points[c.label_index(bits)], NoiseModel(f["snr_db"]), rng)
        book = fit_max_mi_per_bit(compute_llr(obs, c), bits, f["n_levels"])
        text = book.to_json()
    elif f["kind"] == "lloyd":
        text = fit_rayleigh_quantizer(f["n_levels"], f["samples"], cfg["seed"], f["distribution"]).to_json()
    else:
        raise UsageError(f"fit.kind must be 'max_mi' or 'lloyd', got {f['kind']!r}")
    return [_write(out_dir, "codebook.json", text + "\n")]


def cmd_export_lut(cfg, out_dir):
    lc = cfg["lut"]
    nb = lc["n_bits"]
    if nb > 8:
        mib = lut_memory_bytes(nb, cfg["k_bits"]) / 2**20
        raise UsageError(f"lut.n_bits={nb} exceeds 8; the table would need about {mib:.0f} MiB")
    p = _model(cfg)
    lut = build_lut(LatentCodec.from_params(p).decode,
                    UniformQuantizerSpec(lc["delta"], nb, lc["fold_saturation"]), p.latent_dim)
    return [_write(out_dir, "lut.csv", lut.to_csv())]


def cmd_hist(cfg, out_dir):
    h = cfg["hist"]
    p = _model(cfg)
    if not 1 <= h["component"] <= p.latent_dim:
        raise UsageError(f"hist.component must lie in 1..{p.latent_dim}")
    data = generate_dataset(h["snr_db"], h["codewords_per_snr"], _code(cfg),
                            build_constellation(cfg["k_bits"]), cfg["seed"], cfg["threads"])
    hist = emit_latent_histograms(p, data, h["bins"], component=h["component"] - 1)
    return [
        _write(out_dir, "hist_marginal.csv", hist.marginal_csv()),
        _write(out_dir, "hist_joint.csv", hist.joint_csv()),
    ]


COMMANDS = {
    "train": (cmd_train, "train the autoencoder; writes weights and a per-epoch loss CSV"),
    "eval-single": (cmd_eval_single, "BLER curves for single transmissions"),
    "eval-harq": (cmd_eval_harq, "BLER curves for two-transmission HARQ"),
    "fit-quantizer": (cmd_fit_quantizer, "fit a max-MI or Lloyd-Max scalar codebook"),
    "export-lut": (cmd_export_lut, "tabulate decoder outputs for every quantized latent cell"),
    "hist": (cmd_hist, "latent marginal and (log10 G, z) joint histograms"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="llrcomp", description="Compression of bit LLRs for fading channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="YAML config or a previous manifest.json")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("--out-dir", default=".", help="output directory (default: current)")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            cfg["seed"] = overrides["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be at least 1")
            cfg["threads"] = overrides["threads"] = args.threads
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    started = _now()
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        outputs = fn(cfg, args.out_dir)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LlrCompError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    assets = {}
    for key in ("code", "model"):
        if cfg[key] is not None and os.path.exists(cfg[key]):
            assets[cfg[key]] = _sha256(cfg[key])
    manifest = {
        "tool": "llrcomp",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "overrides": overrides,
        "assets": assets,
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
        "started": started,
        "finished": _now(),
    }
    _write(args.out_dir, "manifest.json", json.dumps(manifest, indent=2) + "\n")
    for p in outputs:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
