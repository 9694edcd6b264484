"""Entropy-localized adversarial attacks, strength maps and study statistics."""

from ._core import (
    Model,
    adjust_to_kappa,
    aggregate_responses,
    bim,
    cohens_d,
    dilate,
    distances,
    ebim,
    entropy_strength_map,
    erode,
    fgsm,
    kappa,
    load_image,
    local_entropy,
    localized_bim,
    one_sample_t,
    paired_t,
    perlin_map,
    save_image,
    shapiro_wilk,
    synthetic_dataset,
    t_power,
    train_synthetic,
    wilcoxon,
)

__version__ = "0.1.0"
