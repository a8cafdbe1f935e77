"""Heterogeneous-attention architecture search (C++ core bindings)."""

from ._core import (
    ConfigError,
    EncoderSurrogate,
    ablation,
    check_iha,
    chip_grid_search,
    count_configs,
    count_params,
    encoder_param_count,
    group_map,
    hypervolume_2d,
    iha_forward,
    k_at_x,
    kendall_tau,
    mae_at_top,
    pareto_front,
    random_genome,
    repair,
    run_search,
    search_preset,
    spearman_rho,
    substrate_cost,
    substrate_names,
    synth_oracle,
    synthetic_corpus,
    validate,
)

__all__ = [n for n in dir() if not n.startswith("_")]
