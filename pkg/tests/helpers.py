"""Shared helpers for the CLI tests."""


def tiny_config(**extra) -> dict:
    """Config values for a CLI run that finishes in seconds."""
    cfg = {
        "data.synthetic": True,
        "synthetic.n_classes": 3, "synthetic.n_features": 16, "synthetic.n_groups": 4,
        "synthetic.samples_per_class": 40,
        "split.pretrain": 0.5, "split.finetune": 0.3, "split.test": 0.2,
        "pretext.epochs": 2, "pretext.hidden_dims": [16, 16], "pretext.batch_size": 16,
        "scarf.proj_hidden": 16, "scarf.proj_dim": 4, "byol.hidden_dim": 16, "byol.out_dim": 4,
        "finetune.max_epochs": 4, "finetune.patience": 2,
        "sweep.grid": "0.2:0.6:0.2", "sweep.seeds": 2, "sweep.gain_lo": 0.2, "sweep.gain_hi": 0.6,
        "sweep.q_grid": "0.5,1.0", "sweep.depths": [1, 2], "sweep.widths": [16],
    }
    cfg.update(extra)
    return cfg
