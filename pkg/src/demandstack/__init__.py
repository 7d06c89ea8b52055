"""Weekly demand forecasting with from-scratch regressors and stacking.

The package implements elastic-net linear regression, variance-reduction
decision trees, bootstrap forests, gradient boosting, and two-stage
stacked generalization, together with the dataset plumbing and the
repeated-subset evaluation protocol (RMSE, one-way ANOVA, t-tests) used to
compare them.  See the ``demandstack`` command-line tool for the full
pipeline.
"""

__version__ = "0.1.0"

from .dataset import (
    Column, ColumnKind, ColumnRole, Dataset, FoldPlan, GroundTruth, SplitIndices,
    SyntheticSpec, aggregate_weekly, derive_popularity, drop_sparse, fill_missing,
    generate_synthetic, generate_synthetic_sales, ingest_csv, kfold, load_schema,
    remove_outliers, split, subsample_subsets, write_csv,
)
from .ensemble import (
    ForestConfig, ForestModel, GbtConfig, GbtModel, bootstrap_sample,
    fit_forest, fit_gbt, predict_forest, predict_gbt,
)
from .errors import (
    DataError, DegenerateVarianceError, DemandStackError, ParseError,
    ProtocolError, SchemaError,
)
from .evalstat import (
    AnovaResult, ProtocolResult, RunMatrix, SingleEntry, StackEntry, TTestResult,
    anova, betainc_reg, f_cdf, f_sf, rmse, run_protocol, t_cdf, t_test,
)
from .linear import (
    ElasticNetConfig, FeatureEncoding, LinearModel, TrainReport,
    elastic_net_objective, encode_features, fit_elastic_net, fit_linear,
    predict_linear,
)
from .serialize import load_model, save_model
from .stacking import (
    LearnerKind, LearnerSpec, StackedModel, TrainedLearner, build_meta_features,
    default_grid, train_first_level, train_stacked, with_default_grid,
)
from .tree import (
    CategoricalNode, Leaf, NumericNode, TreeConfig, fit_tree, node_variance,
    predict_tree, split_variance, tree_depth, tree_from_dict, tree_to_dict,
    variance_reduction,
)
