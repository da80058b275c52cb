"""Climate regionalization: EM/k-means clustering and per-region SVR/OLS models."""

from ._climreg import (
    VARIABLES,
    ClimregError,
    Dataset,
    KMeansModel,
    LinearModel,
    MixtureModel,
    SvrModel,
    adjusted_rand_index,
    compare,
    em_fit,
    generate,
    generate_from_spec,
    ingest_csv,
    ingest_csv_text,
    kmeans_fit,
    long_term_means,
    make_folds,
    ols_fit,
    run_pipeline,
    select_k_cv,
    split_years,
    svr_grid_search,
    svr_train,
)

__all__ = [
    "VARIABLES",
    "ClimregError",
    "Dataset",
    "KMeansModel",
    "LinearModel",
    "MixtureModel",
    "SvrModel",
    "adjusted_rand_index",
    "compare",
    "em_fit",
    "generate",
    "generate_from_spec",
    "ingest_csv",
    "ingest_csv_text",
    "kmeans_fit",
    "long_term_means",
    "make_folds",
    "ols_fit",
    "run_pipeline",
    "select_k_cv",
    "split_years",
    "svr_grid_search",
    "svr_train",
]
