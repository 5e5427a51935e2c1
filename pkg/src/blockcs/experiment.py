"""End-to-end experiment driver shared by the CLI and the test harness.

A run is described by an ExperimentConfig, loadable from a flat
``key = value`` text file with CLI overrides on top. Results are exchanged
through a single CSV format (one row per reconstructed measurement file)
documented in the README. Trial t of a sweep uses seed base_seed + t for
both the pattern matrix and the noise stream, and every output file embeds
the metadata needed to re-derive it exactly.
"""

import glob
import json
import os
import re
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BlockcsError,
    FormatError,
    InvalidParameterError,
    VerificationError,
)
from .gmm import KMEANS, PatchGmm, load_model, save_model
from .image import BlockGrid, extract_blocks, load_image, psnr, save_pgm, clamp, stitch_blocks
from .inversion import NoisePrecision, build_cache, reconstruct_image
from .sensing import (
    CORPUS_STREAM,
    MATRIX_KINDS,
    NoiseModel,
    RANDOM_BINARY,
    make_permuted_hadamard,
    make_random_binary,
    matrix_from_descriptor,
    measure_image,
    measurement_bytes,
    load_measurements,
    save_measurements,
)
from .sparse import IstaConfig, make_dictionary, reconstruct_blocks_sparse
from .validation import check_seed

OUTPUT_DIR_ENV = "BLOCKCS_OUT"
CSV_COLUMNS = (
    "image", "method", "m", "trial", "seed", "psnr_db", "recon_seconds", "cache_seconds",
)
CSV_HEADER = ",".join(CSV_COLUMNS)
MEASUREMENT_SUFFIX = ".bwm"


@dataclass
class ExperimentConfig:
    """All knobs of the simulation study; mirrors the CLI flags."""

    test_images: list = field(default_factory=list)
    train_images: list = field(default_factory=list)
    block_side: int = 8
    overlap: int = 0
    measurements: list = field(default_factory=lambda: list(range(1, 11)))
    trials: int = 10
    base_seed: int = 0
    matrix_kind: str = RANDOM_BINARY
    sigma: float = 0.0
    method: str = "gmm"
    model_path: str | None = None
    output_dir: str | None = None
    # prior training
    components: int = 20
    max_iters: int = 200
    tol: float = 1e-6
    eps_reg: float | None = None
    init: str = KMEANS
    train_stride: int | None = None
    max_patches: int = 50000
    # sparse baseline
    dictionary: str = "dct2d"
    lam: float = 0.01
    ista_max_iters: int = 2000
    ista_tol: float = 1e-8
    accelerated: bool = True
    # execution
    workers: int = 1
    clamped_psnr: bool = False

    def resolved_output_dir(self):
        out = self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "blockcs-out"
        return Path(out)

    def resolved_model_path(self):
        if self.model_path:
            return Path(self.model_path)
        return self.resolved_output_dir() / "model.bgmm"

    def validate(self):
        if not self.measurements:
            raise InvalidParameterError("measurement list must not be empty")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")
        if self.matrix_kind not in MATRIX_KINDS:
            raise InvalidParameterError(f"unknown matrix kind {self.matrix_kind!r}")
        if self.method not in ("gmm", "ista"):
            raise InvalidParameterError(f"unknown method {self.method!r}")
        check_seed(self.base_seed, "base_seed")
        return self


def parse_int_list(text):
    """Parse a measurement-count list: '1..10', '4', or '1,2,5..7'."""
    values = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise InvalidParameterError(f"empty measurement list: {text!r}")
    return values


def _parse_paths(text):
    paths = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        matched = sorted(glob.glob(part))
        paths.extend(matched if matched else [part])
    return paths


_BOOL_VALUES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_FIELD_PARSERS = {
    "test_images": _parse_paths,
    "train_images": _parse_paths,
    "measurements": parse_int_list,
    "block_side": int,
    "overlap": int,
    "trials": int,
    "base_seed": int,
    "sigma": float,
    "components": int,
    "max_iters": int,
    "tol": float,
    "eps_reg": lambda v: None if str(v).lower() in ("", "none", "auto") else float(v),
    "train_stride": lambda v: None if str(v).lower() in ("", "none", "auto") else int(v),
    "max_patches": int,
    "lam": float,
    "ista_max_iters": int,
    "ista_tol": float,
    "accelerated": lambda v: _BOOL_VALUES[str(v).strip().lower()],
    "workers": int,
    "clamped_psnr": lambda v: _BOOL_VALUES[str(v).strip().lower()],
}


_INLINE_COMMENT = re.compile(r"\s#.*$")


def read_config_file(path):
    """Parse the flat `key = value` config document into raw strings.

    Blank lines and `#` comments (whole-line, or inline when preceded by
    whitespace) are ignored.
    """
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            stripped = _INLINE_COMMENT.sub("", stripped).strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


def build_config(file_path=None, overrides=None):
    """Assemble an ExperimentConfig from an optional file plus overrides.

    Overrides hold already-typed values (from argparse) keyed by field name;
    file values are strings and go through the per-field parsers.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    cfg = ExperimentConfig()
    if file_path:
        for key, value in read_config_file(file_path).items():
            if key not in known:
                raise InvalidParameterError(f"unknown config key {key!r}")
            parser = _FIELD_PARSERS.get(key, str)
            try:
                parsed = parser(value)
            except (ValueError, KeyError) as exc:
                raise InvalidParameterError(
                    f"bad value for config key {key!r}: {value!r}"
                ) from exc
            cfg = replace(cfg, **{key: parsed})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise InvalidParameterError(f"unknown config key {key!r}")
        cfg = replace(cfg, **{key: value})
    return cfg.validate()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def expand_image_paths(entries):
    """Resolve files and directories into a sorted list of image files."""
    out = []
    for entry in entries:
        p = Path(entry)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in (".pgm", ".png")))
        else:
            out.append(p)
    return out


def extract_training_patches(image, block_side, stride):
    """All full patches of an image at the given stride, as columns."""
    windows = sliding_window_view(image, (block_side, block_side))[::stride, ::stride]
    n = windows.shape[0] * windows.shape[1]
    return windows.reshape(n, block_side * block_side).T


def assemble_corpus(paths, block_side, stride, max_patches, seed):
    """Stack training patches from all images, subsampled to max_patches."""
    columns = []
    for path in paths:
        img = load_image(path)
        if img.shape[0] < block_side or img.shape[1] < block_side:
            continue
        columns.append(extract_training_patches(img, block_side, stride))
    if not columns:
        raise InvalidParameterError("training corpus is empty")
    corpus = np.concatenate(columns, axis=1)
    if corpus.shape[1] > max_patches:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([seed, CORPUS_STREAM]))
        )
        keep = np.sort(rng.choice(corpus.shape[1], size=max_patches, replace=False))
        corpus = corpus[:, keep]
    return corpus


def run_train(cfg):
    """Train the patch prior and write the model file plus a JSON report."""
    train_paths = expand_image_paths(cfg.train_images)
    if not train_paths:
        raise InvalidParameterError("no training images configured")
    test_resolved = {Path(p).resolve() for p in expand_image_paths(cfg.test_images)}
    overlap = [str(p) for p in train_paths if p.resolve() in test_resolved]
    if overlap:
        print(
            f"warning: training images also appear in the test set: {', '.join(overlap)}",
            file=sys.stderr,
        )

    stride = cfg.train_stride or max(1, cfg.block_side // 2)
    corpus = assemble_corpus(
        train_paths, cfg.block_side, stride, cfg.max_patches, cfg.base_seed
    )
    est = PatchGmm(
        n_components=cfg.components,
        max_iter=cfg.max_iters,
        tol=cfg.tol,
        reg_covar=cfg.eps_reg,
        seed=cfg.base_seed,
        init=cfg.init,
    ).fit(corpus.T)

    out_dir = cfg.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = cfg.resolved_model_path()
    model_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        "seed": cfg.base_seed,
        "init": cfg.init,
        "n_patches": corpus.shape[1],
        "block_side": cfg.block_side,
    }
    save_model(est.model_, model_path, metadata=metadata)

    report = {
        "iterations": est.n_iter_,
        "converged": est.converged_,
        "final_log_likelihood_per_patch": est.log_likelihood_trace_[-1],
        "log_likelihood_trace": est.log_likelihood_trace_.tolist(),
        "reg_covar": est.reg_covar_,
        "n_patches": corpus.shape[1],
        "seed": cfg.base_seed,
        "components": cfg.components,
        "train_images": [str(p) for p in train_paths],
    }
    report_path = Path(str(model_path) + ".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    return model_path, report_path


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def make_matrix(kind, m, p, seed):
    if kind == RANDOM_BINARY:
        return make_random_binary(m, p, seed)
    return make_permuted_hadamard(m, p, seed)


def measurement_filename(image_path, m, trial):
    stem = Path(image_path).stem.replace(",", "_")
    return f"{stem}_m{m:03d}_t{trial:03d}{MEASUREMENT_SUFFIX}"


def run_simulate(cfg):
    """Write one measurement file per (test image, M, trial)."""
    if not cfg.test_images:
        raise InvalidParameterError("no test images configured")
    out_dir = cfg.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for image_path in expand_image_paths(cfg.test_images):
        image = load_image(image_path)
        grid = BlockGrid.for_image(
            image.shape[0], image.shape[1], cfg.block_side, cfg.overlap
        )
        blocks = extract_blocks(image, grid)
        for m in cfg.measurements:
            if m > grid.block_dim:
                raise InvalidParameterError(
                    f"{m} measurements per block exceed the block dimension "
                    f"{grid.block_dim}"
                )
            for trial in range(cfg.trials):
                seed = cfg.base_seed + trial
                a = make_matrix(cfg.matrix_kind, m, grid.block_dim, seed)
                noise = NoiseModel(sigma=cfg.sigma, seed=seed)
                ms = measure_image(
                    blocks, a, noise, grid,
                    source_image=str(image_path), trial=trial,
                )
                path = out_dir / measurement_filename(image_path, m, trial)
                save_measurements(ms, path)
                written.append(path)
    return written


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    image: str
    method: str
    m: int
    trial: int
    seed: int
    psnr_db: float
    recon_seconds: float
    cache_seconds: float

    def to_csv(self):
        return ",".join(
            str(v)
            for v in (
                self.image, self.method, self.m, self.trial, self.seed,
                self.psnr_db, self.recon_seconds, self.cache_seconds,
            )
        )


def discover_measurements(directory):
    return sorted(Path(directory).glob(f"*{MEASUREMENT_SUFFIX}"))


def run_reconstruct(cfg, measurement_paths=None, csv_path=None, recon_prefix="recon_"):
    """Reconstruct every measurement file, writing PGMs and the results CSV."""
    out_dir = cfg.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = measurement_paths or discover_measurements(out_dir)
    if not paths:
        raise InvalidParameterError(f"no measurement files found in {out_dir}")
    csv_path = Path(csv_path) if csv_path else out_dir / "results.csv"

    model = None
    if cfg.method == "gmm":
        model = load_model(cfg.resolved_model_path())

    caches = {}
    rows = []
    for path in paths:
        ms = load_measurements(path)
        if ms.source_image is None:
            raise InvalidParameterError(
                f"{path}: header names no source image; PSNR needs the reference"
            )
        reference = load_image(ms.source_image)
        a = matrix_from_descriptor(ms.matrix)

        cache_seconds = 0.0
        if cfg.method == "gmm":
            key = (ms.matrix, ms.noise.sigma)
            if key not in caches:
                start = time.perf_counter()
                precision = NoisePrecision.from_sigma(
                    ms.noise.sigma, ms.matrix.n_measurements
                )
                caches[key] = build_cache(a, precision, model)
                cache_seconds = time.perf_counter() - start
            cache = caches[key]
            start = time.perf_counter()
            recon = reconstruct_image(ms, cache, model, ms.grid, workers=cfg.workers)
            recon_seconds = time.perf_counter() - start
        else:
            dictionary = make_dictionary(cfg.dictionary, ms.matrix.block_dim)
            ista_cfg = IstaConfig(
                lam=cfg.lam, max_iters=cfg.ista_max_iters,
                tol=cfg.ista_tol, accelerated=cfg.accelerated,
            )
            start = time.perf_counter()
            blocks, _ = reconstruct_blocks_sparse(ms, a, dictionary, ista_cfg)
            recon = stitch_blocks(blocks, ms.grid)
            recon_seconds = time.perf_counter() - start

        candidate = clamp(recon) if cfg.clamped_psnr else recon
        value = psnr(reference, candidate)
        save_pgm(recon, out_dir / f"{recon_prefix}{path.stem}.pgm")
        rows.append(
            ResultRow(
                image=Path(ms.source_image).stem.replace(",", "_"),
                method=cfg.method,
                m=ms.matrix.n_measurements,
                trial=ms.trial if ms.trial is not None else 0,
                seed=ms.matrix.seed,
                psnr_db=value,
                recon_seconds=recon_seconds,
                cache_seconds=cache_seconds,
            )
        )

    new_file = not csv_path.exists()
    with open(csv_path, "a", encoding="utf-8") as fh:
        if new_file:
            fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")
    return csv_path, rows


def run_lambda_sweep(cfg, lam_values, csv_path=None):
    """Run the sparse baseline once per l1 weight.

    Each weight writes its own results CSV (name suffixed with the weight)
    and its own reconstruction prefix, so sweep outputs never collide.
    """
    base = Path(csv_path) if csv_path else cfg.resolved_output_dir() / "results.csv"
    outputs = []
    for lam in lam_values:
        swept = replace(cfg, method="ista", lam=lam)
        target = base.with_name(f"{base.stem}_lam{lam:g}{base.suffix}")
        path, rows = run_reconstruct(
            swept, csv_path=target, recon_prefix=f"recon_lam{lam:g}_"
        )
        outputs.append((lam, path, rows))
    return outputs


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def read_results(csv_path):
    """Parse a results CSV, raising FormatError with the offending line."""
    rows = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise FormatError(f"{csv_path}:1: expected header '{CSV_HEADER}'")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise FormatError(
                f"{csv_path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(parts)}"
            )
        try:
            rows.append(
                ResultRow(
                    image=parts[0],
                    method=parts[1],
                    m=int(parts[2]),
                    trial=int(parts[3]),
                    seed=int(parts[4]),
                    psnr_db=float(parts[5]),
                    recon_seconds=float(parts[6]),
                    cache_seconds=float(parts[7]),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{csv_path}:{lineno}: {exc}") from exc
    return rows


def summarize_by_m(rows):
    """Per-M mean and population standard deviation of PSNR."""
    grouped = {}
    for row in rows:
        grouped.setdefault(row.m, []).append(row.psnr_db)
    summary = []
    for m in sorted(grouped):
        values = np.asarray(grouped[m], dtype=np.float64)
        summary.append((m, float(values.mean()), float(values.std()), len(values)))
    return summary


def run_report(csv_path, plot_path=None):
    rows = read_results(csv_path)
    if not rows:
        raise FormatError(f"{csv_path}: no data rows")
    summary = summarize_by_m(rows)
    plot_path = Path(plot_path) if plot_path else Path(csv_path).with_name("psnr_vs_m.dat")
    with open(plot_path, "w", encoding="utf-8") as fh:
        fh.write("# m mean_psnr_db std_psnr_db\n")
        for m, mean, std, _ in summary:
            fh.write(f"{m} {mean} {std}\n")
    return summary, plot_path


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def verify_measurement_file(path):
    """Re-derive a measurement file from its header and byte-compare."""
    ms = load_measurements(path)
    if ms.source_image is None:
        raise VerificationError(f"{path}: header does not name a source image")
    image = load_image(ms.source_image)
    blocks = extract_blocks(image, ms.grid)
    a = matrix_from_descriptor(ms.matrix)
    rebuilt = measure_image(
        blocks, a, ms.noise, ms.grid, source_image=ms.source_image, trial=ms.trial
    )
    with open(path, "rb") as fh:
        stored = fh.read()
    if measurement_bytes(rebuilt) != stored:
        raise VerificationError(f"{path}: re-derived bytes differ from the stored file")


def run_verify(paths):
    """Verify each artifact; returns (path, error-or-None) pairs."""
    results = []
    for path in paths:
        path = Path(path)
        try:
            if path.suffix == MEASUREMENT_SUFFIX:
                verify_measurement_file(path)
            elif path.suffix == ".bgmm":
                load_model(path)  # validates checksum and invariants
            else:
                raise FormatError(f"{path}: no verifier for this file type")
        except (BlockcsError, OSError) as exc:
            results.append((path, exc))
        else:
            results.append((path, None))
    return results
