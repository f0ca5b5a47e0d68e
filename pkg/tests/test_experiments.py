import json

import numpy as np

from diffimpute.config import DEFAULTS, resolve_config
from diffimpute.experiments import run_experiment

TINY = dict(
    n_windows=30,
    window_length=8,
    channels=2,
    steps=3,
    unet_channels="4,8",
    step_embed_dim=8,
    state_dim=4,
    ar_dim=8,
    ar_heads=2,
    ar_blocks=1,
    ar_ffn=8,
    lr=1e-3,
    ar_lr=1e-3,
    batch_size=8,
    max_epochs=1,
    patience=1,
)


def tiny_cfg(tmp_path, **kw):
    overrides = dict(TINY)
    overrides["out"] = str(tmp_path / "run")
    overrides.update(kw)
    return resolve_config(overrides=overrides)


class TestSingleRun:
    def test_artifacts_written(self, tmp_path):
        rep = run_experiment(tiny_cfg(tmp_path))
        out = tmp_path / "run"
        assert (out / "report.csv").exists()
        assert (out / "summary.json").exists()
        assert (out / "metrics.png").exists()
        assert (out / "imputed.csv").exists()
        assert rep.rows[0]["method"] == "model"
        methods = [r["method"] for r in rep.rows]
        assert methods == ["model", "mean", "locf", "linear"]

    def test_config_echo_complete(self, tmp_path):
        run_experiment(tiny_cfg(tmp_path))
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert set(summary["config"]) == set(DEFAULTS)
        assert summary["seed"] == 0

    def test_figures_can_be_disabled(self, tmp_path):
        rep = run_experiment(tiny_cfg(tmp_path, figures=False))
        assert "figure" not in rep.paths
        assert not (tmp_path / "run" / "metrics.png").exists()

    def test_seed_determinism(self, tmp_path):
        import torch

        torch.set_num_threads(1)
        a = run_experiment(tiny_cfg(tmp_path, seed=5, out=str(tmp_path / "a")))
        b = run_experiment(tiny_cfg(tmp_path, seed=5, out=str(tmp_path / "b")))
        for ra, rb in zip(a.rows, b.rows):
            assert ra["mae"] == rb["mae"]
            assert ra["rmse"] == rb["rmse"]

    def test_bundle_round_trip_through_config(self, tmp_path):
        bundle_path = tmp_path / "m.dib"
        run_experiment(tiny_cfg(tmp_path, bundle_out=str(bundle_path)))
        assert bundle_path.exists()
        rep = run_experiment(
            tiny_cfg(tmp_path, bundle=str(bundle_path), out=str(tmp_path / "again"))
        )
        assert rep.rows[0]["method"] == "model"


class TestSweeps:
    def test_missing_rate_sweep(self, tmp_path):
        rep = run_experiment(
            tiny_cfg(tmp_path, sweep="missing-rate", sweep_rates="0.2,0.5")
        )
        model_rows = [r for r in rep.rows if r["method"] == "model"]
        assert [r["missing_rate"] for r in model_rows] == [0.2, 0.5]
        assert len(rep.rows) == 8  # model + 3 baselines per rate
        assert (tmp_path / "run" / "sweep_missing_rate.png").exists()

    def test_lambda_sweep(self, tmp_path):
        rep = run_experiment(
            tiny_cfg(tmp_path, sweep="lambda", sweep_lambdas="0.01,0.05,0.1,0.5")
        )
        assert [r["lam"] for r in rep.rows] == [0.01, 0.05, 0.1, 0.5]
        assert (tmp_path / "run" / "sweep_lambda.png").exists()

    def test_steps_sweep_retrains(self, tmp_path):
        rep = run_experiment(tiny_cfg(tmp_path, sweep="steps", sweep_steps="2,3"))
        assert [r["steps"] for r in rep.rows] == [2, 3]
        assert (tmp_path / "run" / "sweep_steps.png").exists()


class TestAblation:
    def test_five_variants(self, tmp_path):
        rep = run_experiment(tiny_cfg(tmp_path, ablation=True))
        labels = [r["variant"] for r in rep.rows]
        assert labels == ["base", "condition", "weight", "s4", "full"]
        flags = {r["variant"]: (r["use_condition"], r["use_injection"],
                                r["use_s4_unet"]) for r in rep.rows}
        assert flags["base"] == (False, False, False)
        assert flags["full"] == (True, True, True)
        assert (tmp_path / "run" / "ablation.png").exists()

    def test_rows_have_metrics(self, tmp_path):
        rep = run_experiment(tiny_cfg(tmp_path, ablation=True))
        for row in rep.rows:
            assert np.isfinite(row["mae"]) and np.isfinite(row["rmse"])


class TestNativeMissingInterplay:
    def test_eval_masks_never_treat_native_missing_as_truth(self, tmp_path):
        import numpy as np

        from diffimpute.data import Dataset
        from diffimpute.experiments import make_eval_masks

        w = np.random.default_rng(0).standard_normal((5, 8, 2))
        native = np.ones_like(w)
        native[:, 3, 1] = 0.0  # one column natively missing everywhere
        ds = Dataset(windows=w * native, native_mask=native,
                     channel_names=("a", "b"))
        cfg = tiny_cfg(tmp_path)
        masks = make_eval_masks(cfg, ds, np.random.default_rng(1))
        assert (masks[:, 3, 1] == 0.0).all()
        eval_mask = ds.native_mask * (1.0 - masks)
        assert (eval_mask[:, 3, 1] == 0.0).all()
