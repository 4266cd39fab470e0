"""Experiment orchestration behind the command-line front end.

Each ``run_*`` function takes an :class:`~desmat.config.ExperimentConfig`,
writes its CSV/PGM/config outputs under ``config.out_dir`` and returns an
in-memory result. Every CSV starts with a ``#`` comment line carrying the
config hash and seed, followed by a header row.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, ExperimentConfig, prior_from_section
from .datasets import load_idx_images, load_idx_labels, load_pgm, save_pgm
from .decoder import DecodeResult, decode, decode_two_part, error_ratios
from .density_evolution import (DETrace, DEStateRegular, de_run, de_step_preferential,
                                de_step_regular, initial_state_preferential)
from .design import (DesignResult, InfeasibleDesignError, PreferentialDesignProblem,
                     design_preferential, init_preferential, optimize_regular,
                     preferential_spec)
from .ensembles import (GeneratingPolynomial, PreferentialEnsembleSpec, RegularEnsembleSpec,
                        mean_degree, spec_from_section, write_spec)
from .graph import HIGH, check_realization, make_rng, read_triplets, sample_matrix
from .haar import haar2d_forward, haar2d_inverse, partition_coefficients, unpartition_coefficients
from .priors import Laplacian, SparseGaussian

log = logging.getLogger(__name__)

VARIANTS = ("preferential-final", "preferential-init", "regular")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def comment_line(cfg: ExperimentConfig) -> str:
    return f"config_sha256={cfg.config_hash} seed={cfg.seed}"


def write_table(path, columns, rows, comment: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by :func:`write_table` (comment skipped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _out(cfg: ExperimentConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def derived_seed(*counter: int) -> int:
    """32-bit seed derived from a master seed and counters."""
    return int(np.random.SeedSequence([int(c) for c in counter]).generate_state(1)[0])


def _ensemble(cfg: ExperimentConfig):
    sec = cfg.section("ensemble")
    if not sec:
        raise ConfigError("an [ensemble] section is required")
    try:
        return spec_from_section(sec)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[ensemble] {exc}") from None


def _prior(cfg: ExperimentConfig, name: str = "prior"):
    sec = cfg.section(name)
    if not sec:
        raise ConfigError(f"a [{name}] section is required")
    return prior_from_section(sec)


def _regularizer(cfg: ExperimentConfig, name: str):
    beta = cfg.get(name, "beta", None, float)
    return None if beta is None else Laplacian(beta)


# ---- design ----------------------------------------------------------------

def run_design(cfg: ExperimentConfig) -> tuple[DesignResult, int]:
    """Optimize a design, write ``ensemble.ini`` and ``constraints.csv``.

    Returns the result and the exit code (0 iff the design is valid).
    """
    out = _out(cfg)
    kind = cfg.get("design", "kind", "preferential").strip().lower()
    validate = cfg.get("design", "validate", True, bool)
    A = cfg.get("design", "sensing_scale_A", None, float)
    try:
        if kind == "preferential":
            problem = cfg.preferential_problem()
            res = design_preferential(problem, validate=validate, config=None)
            spec = preferential_spec(res.distributions["lambda_H"], res.distributions["lambda_L"], problem)
            if A is not None:
                spec = dataclasses.replace(spec, sensing_scale_A=A)
        elif kind == "regular":
            problem = cfg.regular_problem()
            res = optimize_regular(problem, include_irregular=cfg.get("design", "irregular", False, bool),
                                   max_validations=cfg.get("design", "max_validations", 25, int))
            spec = RegularEnsembleSpec(res.distributions["lambda"], res.distributions["rho"],
                                       problem.n, res.m, A)
        else:
            raise ConfigError(f"unknown design kind {kind!r}")
    except InfeasibleDesignError as exc:
        write_table(out / "constraints.csv", ["constraint", "value", "bound", "satisfied"],
                    [], f"{comment_line(cfg)} infeasible binding={exc.binding}")
        log.error("design infeasible: %s (binding: %s)", exc, exc.binding)
        return None, 1
    write_spec(spec, out / "ensemble.ini")
    rows = [(k, float(v), float(b), bool(ok)) for k, (v, b, ok) in res.constraint_report.items()]
    rows.append(("rate", float(res.achieved_rate), float("nan"), True))
    rows.append(("m", int(spec.m), float("nan"), True))
    write_table(out / "constraints.csv", ["constraint", "value", "bound", "satisfied"], rows,
                comment_line(cfg))
    if res.de_validation is not None:
        res.de_validation.write_csv(out / "design_de.csv", comment_line(cfg))
    if not res.valid:
        log.warning("design not valid: %s", res.message or "constraint violated")
    return res, 0 if res.valid else 1


# ---- density evolution -----------------------------------------------------

@dataclass
class DERunResult:
    trace: DETrace
    empirical_E: Optional[np.ndarray] = None
    empirical_se: Optional[np.ndarray] = None


def empirical_mp_error(spec: RegularEnsembleSpec, prior, decoder_cfg, trials: int, seed: int,
                       regularizer=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of the per-edge MP error ``E^(t)`` over seeded decodes."""
    runs = []
    for t in range(trials):
        s = derived_seed(seed, t)
        _, M = sample_matrix(spec, s)
        x = prior.sample(make_rng(s, 5), spec.n)
        y = M.to_csr() @ x
        if decoder_cfg.noise_variance > 0:
            y = y + make_rng(s, 6).normal(0.0, math.sqrt(decoder_cfg.noise_variance), M.m)
        res = decode(y, M, prior, decoder_cfg, regularizer, truth=x)
        E = np.full(decoder_cfg.max_iterations + 1, np.nan)
        E[:len(res.E)] = res.E
        runs.append(E)
    runs = np.array(runs)  # NaN past an early stop
    count = np.sum(np.isfinite(runs), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(runs, axis=0)
        se = np.nanstd(runs, axis=0, ddof=1) / np.sqrt(count) if trials > 1 else np.zeros(runs.shape[1])
    return mean, se


def run_de(cfg: ExperimentConfig) -> DERunResult:
    """DE trace to ``de_trace.csv``; with ``[empirics] trials`` also ``de_vs_mp.csv``."""
    out = _out(cfg)
    spec = _ensemble(cfg)
    dec = cfg.de_config()
    if isinstance(spec, PreferentialEnsembleSpec):
        priors = (_prior(cfg, "prior_H"), _prior(cfg, "prior_L"))
        regs = (_regularizer(cfg, "prior_H"), _regularizer(cfg, "prior_L"))
        if regs == (None, None):
            regs = None
        trace = de_run(initial_state_preferential(*priors),
                       lambda st: de_step_preferential(st, spec, priors, dec, regs), dec)
        trace.write_csv(out / "de_trace.csv", comment_line(cfg))
        if cfg.section("empirics"):
            raise ConfigError("[empirics] comparison supports regular ensembles only")
        return DERunResult(trace)
    prior = _prior(cfg)
    reg = _regularizer(cfg, "prior")
    m0 = prior.centered_variance()  # MP starts from the prior mean
    trace = de_run(DEStateRegular(m0, m0),
                   lambda st: de_step_regular(st, spec.lam, spec.rho, spec.sensing_scale_A,
                                              prior, dec, reg), dec)
    trace.write_csv(out / "de_trace.csv", comment_line(cfg))
    result = DERunResult(trace)
    trials = cfg.get("empirics", "trials", 0, int)
    if trials > 0:
        iters = cfg.get("empirics", "iterations", 10, int)
        dcfg = dataclasses.replace(cfg.decoder_config(dec.noise_variance),
                                   max_iterations=iters, tolerance=1e-300, mode=dec.decoder_mode)
        mean, se = empirical_mp_error(spec, prior, dcfg, trials, cfg.seed, reg)
        de_E = trace.array()[:, 0]
        rows = []
        for t in range(iters + 1):
            d = de_E[t] if t < de_E.size else de_E[-1]
            rel = abs(mean[t] - d) / d if d > 0 else float("inf")
            rows.append((t, d, mean[t], se[t], rel))
        write_table(out / "de_vs_mp.csv", ["iteration", "de_E", "mp_E", "mp_E_stderr", "rel_error"],
                    rows, comment_line(cfg))
        result.empirical_E, result.empirical_se = mean, se
    return result


# ---- matrices and single decodes ------------------------------------------

def run_sample_matrix(cfg: ExperimentConfig) -> dict:
    out = _out(cfg)
    spec = _ensemble(cfg)
    g, M = sample_matrix(spec, cfg.seed)
    M.write_triplets(out / "matrix.txt")
    g.write_adjacency(out / "adjacency.txt")
    rep = check_realization(g, spec)
    write_table(out / "realization.csv", ["check", "value"],
                sorted((k, v) for k, v in rep.items()), comment_line(cfg))
    return rep


def _load_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=float))


def run_decode(cfg: ExperimentConfig) -> DecodeResult:
    """Decode one measurement vector; the signal is drawn from the prior unless given."""
    out = _out(cfg)
    sec = cfg.section("decode")
    if "matrix" in sec:
        M = read_triplets(sec["matrix"])
        spec = None
    else:
        spec = _ensemble(cfg)
        _, M = sample_matrix(spec, cfg.seed)
    rng = make_rng(cfg.seed, 5)
    if isinstance(spec, PreferentialEnsembleSpec):
        priors = (_prior(cfg, "prior_H"), _prior(cfg, "prior_L"))
        regs = (_regularizer(cfg, "prior_H"), _regularizer(cfg, "prior_L"))
        part = np.r_[np.full(spec.n_H, HIGH), np.full(spec.n_L, 2)]
        x = np.concatenate([priors[0].sample(rng, spec.n_H), priors[1].sample(rng, spec.n_L)])
    else:
        priors = (_prior(cfg),)
        regs = (_regularizer(cfg, "prior"),)
        part = None
        x = priors[0].sample(rng, M.n)
    if "signal" in sec:
        x = _load_vector(sec["signal"])
        if x.size != M.n:
            raise ConfigError(f"signal length {x.size} does not match n={M.n}")
    snr = cfg.snr_grid[0]
    s2 = float(x @ x) / snr if math.isfinite(snr) else 0.0
    if "measurements" in sec:
        y = _load_vector(sec["measurements"])
        if y.size != M.m:
            raise ConfigError(f"measurement length {y.size} does not match m={M.m}")
    else:
        y = M.to_csr() @ x + (make_rng(cfg.seed, 6).normal(0.0, math.sqrt(s2), M.m) if s2 > 0 else 0.0)
    dcfg = cfg.decoder_config(s2)
    if part is None:
        res = decode(y, M, priors[0], dcfg, regs[0], truth=x)
    else:
        rr = None if regs == (None, None) else regs
        res = decode_two_part(y, M, part, priors, dcfg, rr, truth=x)
    res.write_csv(out / "decode.csv", comment_line(cfg))
    np.savetxt(out / "estimate.txt", res.estimate, fmt="%.17g")
    np.savetxt(out / "truth.txt", x, fmt="%.17g")
    return res


# ---- SNR sweep ---------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list  # (snr, variant, mean_rH, se_rH, mean_rW, se_rW, trials, diverged)
    trials: int
    runtime: float
    edges: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)  # (snr, variant) -> array (trials, 2)

    COLUMNS = ("snr", "variant", "mean_rH", "stderr_rH", "mean_rW", "stderr_rW", "trials", "diverged")

    def mean(self, snr: float, variant: str) -> tuple[float, float]:
        for r in self.rows:
            if r[0] == snr and r[1] == variant:
                return r[2], r[4]
        raise KeyError((snr, variant))

    def write_csv(self, path, comment: str) -> None:
        write_table(path, self.COLUMNS, self.rows, comment)


def matched_regular_spec(pref: PreferentialEnsembleSpec, check_degree: Optional[int] = None,
                         sensing_scale_A: Optional[float] = None) -> RegularEnsembleSpec:
    """Regular baseline with the same ``n``, ``m`` and (nearly) the same edge count.

    Variable degrees are the floor/ceiling of the matched mean degree; the
    check degree defaults to the sum of the two parts' mean check degrees.
    """
    dc = check_degree or int(round(mean_degree(pref.rho_H) + mean_degree(pref.rho_L)))
    edges = pref.m * dc
    dv = edges / pref.n
    lo = int(math.floor(dv))
    frac = dv - lo
    if lo < 1:
        raise ValueError("matched variable degree below 1")
    if frac < 1e-9:
        lam = GeneratingPolynomial.single(lo)
    else:
        lam = GeneratingPolynomial.from_pairs({lo: 1.0 - frac, lo + 1: frac}, normalize=True)
    return RegularEnsembleSpec(lam, GeneratingPolynomial.single(dc), pref.n, pref.m, sensing_scale_A)


def sweep_specs(problem: PreferentialDesignProblem, sensing_scale_A: Optional[float] = None) -> dict:
    final = design_preferential(problem, validate=False)
    final_spec = preferential_spec(final.distributions["lambda_H"], final.distributions["lambda_L"], problem)
    lam_H, lam_L = init_preferential(problem)
    init_spec = preferential_spec(lam_H, lam_L, problem)
    if sensing_scale_A is not None:
        final_spec = dataclasses.replace(final_spec, sensing_scale_A=sensing_scale_A)
        init_spec = dataclasses.replace(init_spec, sensing_scale_A=sensing_scale_A)
    reg = matched_regular_spec(final_spec, sensing_scale_A=sensing_scale_A)
    return {"preferential-final": final_spec, "preferential-init": init_spec, "regular": reg}


def _sweep_trial(args) -> list:
    specs, problem, dcfg, snr, seed = args
    n_H, n_L = problem.n_H, problem.n_L
    rng = make_rng(seed, 7)
    x = np.zeros(n_H + n_L)
    x[rng.choice(n_H, problem.k_H, replace=False)] = rng.choice([-1.0, 1.0], problem.k_H)
    x[n_H + rng.choice(n_L, problem.k_L, replace=False)] = rng.choice([-1.0, 1.0], problem.k_L)
    s2 = float(x @ x) / snr if math.isfinite(snr) else 0.0
    part = np.r_[np.full(n_H, HIGH), np.full(n_L, 2)]
    priors, regs = problem.priors(), problem.regularizers()
    out = []
    for j, name in enumerate(VARIANTS):
        _, M = sample_matrix(specs[name], seed)
        y = M.to_csr() @ x
        if s2 > 0:
            y = y + make_rng(seed, 8 + j).normal(0.0, math.sqrt(s2), M.m)
        res = decode_two_part(y, M, part, priors, dataclasses.replace(dcfg, noise_variance=s2), regs)
        r_H, r_W = error_ratios(res.estimate, x, part)
        out.append((name, r_H, r_W, res.diverged or not np.all(np.isfinite(res.estimate)), M.rows.size))
    return out


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Mean and standard error of ``(r_H, r_W)`` per SNR and matrix variant."""
    out = _out(cfg)
    t0 = time.perf_counter()
    problem = cfg.preferential_problem()
    A = cfg.get("experiment", "sensing_scale_A", None, float)
    specs = sweep_specs(problem, A)
    for name, spec in specs.items():
        write_spec(spec, out / f"ensemble_{name}.ini")
    dcfg = cfg.decoder_config()
    jobs = [(specs, problem, dcfg, snr, derived_seed(cfg.seed, i, t))
            for i, snr in enumerate(cfg.snr_grid) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sweep_trial, jobs))  # map keeps submission order
    else:
        results = [_sweep_trial(j) for j in jobs]
    rows, ratios, edges = [], {}, {}
    for i, snr in enumerate(cfg.snr_grid):
        chunk = results[i * cfg.trials:(i + 1) * cfg.trials]
        for j, name in enumerate(VARIANTS):
            vals = np.array([[c[j][1], c[j][2]] for c in chunk])
            div = int(sum(c[j][3] for c in chunk))
            edges.setdefault(name, []).extend(c[j][4] for c in chunk)
            ratios[(snr, name)] = vals
            mean = vals.mean(axis=0)
            se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else np.zeros(2)
            rows.append((snr, name, mean[0], se[0], mean[1], se[1], len(vals), div))
    result = SweepResult(rows, cfg.trials, time.perf_counter() - t0,
                         {k: float(np.mean(v)) for k, v in edges.items()}, ratios)
    result.write_csv(out / "sweep.csv", comment_line(cfg))
    write_table(out / "variants.csv", ["variant", "n", "m", "mean_edges"],
                [(k, specs[k].n, specs[k].m, result.edges[k]) for k in VARIANTS], comment_line(cfg))
    if cfg.plots:
        plot_sweep(result, out / "sweep.png")
    return result


def plot_sweep(result: SweepResult, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for name in VARIANTS:
        pts = [(r[0], r[2], r[4]) for r in result.rows if r[1] == name and math.isfinite(r[0])]
        if not pts:
            continue
        snr, rh, rw = zip(*pts)
        db = 10 * np.log10(snr)
        axes[0].plot(db, rh, marker="o", label=name)
        axes[1].plot(db, rw, marker="o", label=name)
    for ax, lab in zip(axes, ("r_H", "r_W")):
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(lab)
        ax.grid(alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---- image experiments -----------------------------------------------------

@dataclass
class ImageResult:
    per_image: list  # (index, rH_p, rW_p, rH_r, rW_r)
    skipped: list
    design: DesignResult
    k: tuple
    m: int
    runtime: float

    def means(self) -> dict:
        arr = np.array([r[1:] for r in self.per_image])
        return {"preferential": (arr[:, 0].mean(), arr[:, 1].mean()),
                "regular": (arr[:, 2].mean(), arr[:, 3].mean())}


def estimate_support(coeffs: np.ndarray, labels: np.ndarray, threshold: float = 0.05,
                     percentile: float = 95.0) -> tuple[int, int, float, float]:
    """Per-part support size and nonzero RMS amplitude from training coefficients."""
    H = labels == HIGH
    scale = np.abs(coeffs).max(axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    sup = np.abs(coeffs) > threshold * scale
    k_H = int(np.ceil(np.percentile(sup[:, H].sum(axis=1), percentile)))
    k_L = int(np.ceil(np.percentile(sup[:, ~H].sum(axis=1), percentile)))
    n_H, n_L = int(H.sum()), int((~H).sum())
    k_H = min(max(k_H, 1), n_H - 1)
    k_L = min(max(k_L, 1), n_L - 1)
    cH = float(np.sqrt(np.mean(coeffs[:, H][sup[:, H]] ** 2))) if sup[:, H].any() else 1.0
    cL = float(np.sqrt(np.mean(coeffs[:, ~H][sup[:, ~H]] ** 2))) if sup[:, ~H].any() else 1.0
    return k_H, k_L, cH, cL


def _blocks(img: np.ndarray, b: int) -> np.ndarray:
    r, c = img.shape
    if r % b or c % b:
        raise ConfigError(f"image {img.shape} is not divisible into {b}x{b} blocks")
    return img.reshape(r // b, b, c // b, b).swapaxes(1, 2).reshape(-1, b, b)


def _unblocks(blocks: np.ndarray, shape) -> np.ndarray:
    r, c = shape
    b = blocks.shape[1]
    return blocks.reshape(r // b, c // b, b, b).swapaxes(1, 2).reshape(r, c)


def run_image_experiment(cfg: ExperimentConfig) -> ImageResult:
    """Haar-domain sensing of images with preferential and regular matrices.

    IDX mode: images of one digit; the first ``train_count`` estimate the
    sparsity model and design, the next ``test_count`` are evaluated. PGM
    mode: the image is cut into ``block`` x ``block`` tiles; all tiles are
    used for estimation and evaluation.
    """
    t0 = time.perf_counter()
    out = _out(cfg)
    sec = cfg.section("image")
    kind = sec.get("kind", "idx").strip().lower()
    g = lambda k, d=None, c=str: cfg.get("image", k, d, c)
    if "images" not in sec:
        raise ConfigError("[image] images path is required")
    if kind == "idx":
        X = load_idx_images(sec["images"])
        if "labels" in sec:
            Y = load_idx_labels(sec["labels"])
            X = X[Y == g("digit", 0, int)]
        n_train, n_test = g("train_count", 250, int), g("test_count", 100, int)
        if X.shape[0] < n_train + 1:
            raise ConfigError(f"only {X.shape[0]} images available")
        train, test = X[:n_train], X[n_train:n_train + n_test]
        full_shape = None
    elif kind == "pgm":
        img = load_pgm(sec["images"])
        tiles = _blocks(img, g("block", 32, int))
        train, test = tiles, tiles
        full_shape = img.shape
    else:
        raise ConfigError(f"unknown image kind {kind!r}")

    like = haar2d_forward(train[0])
    _, labels = partition_coefficients(like)
    vec = lambda im: partition_coefficients(haar2d_forward(im))[0]
    tr = np.array([vec(im) for im in train])
    k_H, k_L, cH, cL = estimate_support(tr, labels, g("support_threshold", 0.05, float),
                                        g("support_percentile", 95.0, float))
    n_H, n_L = int((labels == HIGH).sum()), int((labels != HIGH).sum())
    beta_H, beta_L = math.log(n_H / k_H) / cH, math.log(n_L / k_L) / cL
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # low density ratios are expected for images
        problem = PreferentialDesignProblem(n_H, n_L, k_H, k_L, g("dv_max", 50, int),
                                            g("dc_H", 5, int), g("dc_L", 5, int), beta_H, beta_L)
    design = design_preferential(problem, validate=False)
    A = cfg.get("experiment", "sensing_scale_A", None, float)
    pspec = preferential_spec(design.distributions["lambda_H"], design.distributions["lambda_L"], problem)
    if A is not None:
        pspec = dataclasses.replace(pspec, sensing_scale_A=A)
    rspec = matched_regular_spec(pspec, sensing_scale_A=A)
    write_spec(pspec, out / "ensemble_preferential.ini")
    write_spec(rspec, out / "ensemble_regular.ini")
    design.write_report_csv(out / "constraints.csv", comment_line(cfg))
    _, Mp = sample_matrix(pspec, cfg.seed)
    _, Mr = sample_matrix(rspec, cfg.seed)
    priors = (SparseGaussian(k_H / n_H, 0.0, cH**2), SparseGaussian(k_L / n_L, 0.0, cL**2))
    regs = (Laplacian(beta_H), Laplacian(beta_L))
    snr = g("snr", 100.0, float)
    dcfg = cfg.decoder_config()
    rows, skipped = [], []
    recon = {"p": [], "r": []}
    for i, im in enumerate(test):
        x = vec(im)
        if not np.any(x):
            warnings.warn(f"image {i} is all zero; ratios undefined, skipped", RuntimeWarning)
            skipped.append(i)
            recon["p"].append(np.zeros_like(im))
            recon["r"].append(np.zeros_like(im))
            continue
        s2 = float(x @ x) / snr if math.isfinite(snr) else 0.0
        ratios = []
        for j, (tag, M) in enumerate((("p", Mp), ("r", Mr))):
            y = M.to_csr() @ x
            if s2 > 0:
                y = y + make_rng(derived_seed(cfg.seed, i), j).normal(0.0, math.sqrt(s2), M.m)
            res = decode_two_part(y, M, labels, priors, dataclasses.replace(dcfg, noise_variance=s2), regs)
            ratios.extend(error_ratios(res.estimate, x, labels))
            recon[tag].append(haar2d_inverse(unpartition_coefficients(res.estimate, like)))
        rows.append((i, *ratios))
    write_table(out / "image_ratios.csv", ["image", "rH_preferential", "rW_preferential",
                                           "rH_regular", "rW_regular"], rows, comment_line(cfg))
    result = ImageResult(rows, skipped, design, (k_H, k_L), pspec.m, time.perf_counter() - t0)
    if rows:
        mu = result.means()
        write_table(out / "image_summary.csv",
                    ["variant", "mean_rH", "mean_rW", "images", "skipped", "k_H", "k_L", "m"],
                    [(k, v[0], v[1], len(rows), len(skipped), k_H, k_L, pspec.m) for k, v in mu.items()],
                    comment_line(cfg))
    if full_shape is not None:
        for tag in ("p", "r"):
            save_pgm(out / f"recon_{tag}.pgm", _unblocks(np.array(recon[tag]), full_shape))
    else:
        for i in range(min(g("save_images", 10, int), len(test))):
            save_pgm(out / f"recon_{i:03d}_p.pgm", recon["p"][i])
            save_pgm(out / f"recon_{i:03d}_r.pgm", recon["r"][i])
    return result
