from .descriptors import (
    CovariateDescriptor,
    CovariateKind,
    ModelSpec,
    Constant,
    Imb,
    ImbCum,
    LastSign,
    SignSpreadProduct,
    LagImb,
    LagImbCum,
    describe_descriptor,
    dump_model_spec,
    load_model_spec,
    max_lag,
    required_history,
)
from .catalog import catalog_names, get_model, model_catalog, resolve_models
from .covariates import (
    FeatureStream,
    LagBuffer,
    compute_features,
    cumulative_imbalance,
    imbalance,
    sign_spread_product,
)
from .dataset import (
    Dataset,
    MarketOrderSample,
    build_dataset,
    export_dataset,
    feature_matrix,
    session_positions,
)
