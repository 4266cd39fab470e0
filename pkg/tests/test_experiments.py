import numpy as np
import pytest

from desmat.config import parse_config
from desmat.datasets import save_pgm
from desmat.design import PreferentialDesignProblem
from desmat.ensembles import mean_degree
from desmat.experiments import (estimate_support, matched_regular_spec, read_table,
                                run_image_experiment, run_sweep, sweep_specs)
from desmat.graph import HIGH, LOW

SWEEP = """[experiment]
kind = sweep
seed = {seed}
trials = {trials}
snr_grid = {snr}
sensing_scale_A = 1.0
workers = {workers}

[design]
n_H = 100
n_L = 400
k_H = 10
k_L = 10
dv_max = 50
dc_H = 5
dc_L = 5

[decoder]
mode = {mode}
max_iterations = 100
damping = 0.5
"""


def _sweep_cfg(tmp_path, name, seed=1, trials=1, snr="100", mode="MAP", workers=1):
    cfg = parse_config(SWEEP.format(seed=seed, trials=trials, snr=snr, mode=mode, workers=workers))
    cfg.out_dir = tmp_path / name
    return cfg


def test_sweep_rerun_byte_identical(tmp_path):
    run_sweep(_sweep_cfg(tmp_path, "a"))
    run_sweep(_sweep_cfg(tmp_path, "b"))
    for f in ("sweep.csv", "variants.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    cols, rows = read_table(tmp_path / "a" / "sweep.csv")
    assert cols == ["snr", "variant", "mean_rH", "stderr_rH", "mean_rW", "stderr_rW", "trials", "diverged"]
    assert [r[1] for r in rows] == ["preferential-final", "preferential-init", "regular"]


def test_sweep_workers_match_serial(tmp_path):
    a = run_sweep(_sweep_cfg(tmp_path, "s", trials=2))
    b = run_sweep(_sweep_cfg(tmp_path, "p", trials=2, workers=2))
    assert a.rows == b.rows


def test_regular_baseline_edge_count_matches():
    specs = sweep_specs(PreferentialDesignProblem(100, 400, 10, 10, 50, 5, 5), 1.0)
    pref, reg = specs["preferential-final"], specs["regular"]
    assert (reg.n, reg.m) == (pref.n, pref.m)
    e_pref = pref.n_H * mean_degree(pref.lambda_H) + pref.n_L * mean_degree(pref.lambda_L)
    e_reg = reg.n * mean_degree(reg.lam)
    assert abs(e_reg - e_pref) <= 0.01 * e_pref


def test_matched_regular_fractional_degree():
    specs = sweep_specs(PreferentialDesignProblem(100, 400, 10, 10, 50, 5, 5))
    reg = matched_regular_spec(specs["preferential-final"], check_degree=7)
    assert reg.rho.max_degree == 7
    assert reg.n * mean_degree(reg.lam) == pytest.approx(reg.m * 7, rel=1e-12)


@pytest.fixture(scope="module")
def noiseless_sweep(tmp_path_factory):
    cfg = _sweep_cfg(tmp_path_factory.mktemp("inf"), "inf", seed=2024, trials=50, snr="inf",
                     mode="MMSE")
    cfg.sections["decoder"]["max_iterations"] = "400"
    return run_sweep(cfg)


def test_noiseless_preferential_final_mean_rH(noiseless_sweep):
    r_H, _ = noiseless_sweep.mean(float("inf"), "preferential-final")
    print(f"noiseless preferential-final mean r_H = {r_H:.4f} (target < 0.05)")
    assert r_H < 0.05


def test_noiseless_most_trials_recover_exactly(noiseless_sweep):
    r_H = noiseless_sweep.ratios[(float("inf"), "preferential-final")][:, 0]
    assert np.mean(r_H < 1e-6) >= 0.8


def test_estimate_support_example():
    labels = np.array([HIGH, HIGH, LOW, LOW, LOW])
    coeffs = np.array([[1.0, 0.0, 0.5, 0.0, 0.01],
                       [2.0, 1.0, 0.0, 0.0, 0.0]])
    k_H, k_L, cH, cL = estimate_support(coeffs, labels, threshold=0.05, percentile=100)
    assert (k_H, k_L) == (1, 1)  # clipped to n_H - 1 and at least 1
    assert cH == pytest.approx(np.sqrt((1 + 4 + 1) / 3))
    assert cL == pytest.approx(0.5)


def _tile_image(tmp_path):
    rng = np.random.default_rng(0)
    img = np.zeros((64, 64))
    yy, xx = np.mgrid[:32, :32]
    for (r, c) in ((0, 0), (0, 32), (32, 0)):
        blob = np.exp(-((yy - rng.uniform(8, 24)) ** 2 + (xx - rng.uniform(8, 24)) ** 2) / 60.0)
        img[r:r + 32, c:c + 32] = blob
    path = tmp_path / "img.pgm"
    save_pgm(path, img)
    return path


IMAGE = """[experiment]
kind = image
seed = 5
sensing_scale_A = 1.0

[image]
kind = pgm
images = {path}
block = 32
snr = 100

[decoder]
mode = MAP
max_iterations = 60
damping = 0.5
"""


def test_block_mode_zero_tile_warns_and_is_deterministic(tmp_path):
    path = _tile_image(tmp_path)
    outs = []
    for name in ("a", "b"):
        cfg = parse_config(IMAGE.format(path=path))
        cfg.out_dir = tmp_path / name
        with pytest.warns(RuntimeWarning, match="all zero"):
            res = run_image_experiment(cfg)
        outs.append(cfg.out_dir)
    assert res.skipped == [3] and len(res.per_image) == 3
    for f in ("image_ratios.csv", "image_summary.csv", "recon_p.pgm", "recon_r.pgm"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    comment = (outs[0] / "image_ratios.csv").read_text().splitlines()[0]
    assert comment.startswith("# config_sha256=") and comment.endswith("seed=5")
