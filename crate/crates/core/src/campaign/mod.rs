//! Parameter sweeps, dataset assembly, preprocessing, simulation-level
//! splitting and hyperparameter search.

mod dataset;
mod grid;
mod preprocess;
mod run;
mod search;
mod split;

pub use dataset::{assemble, read_dataset_csv, series_features, Dataset, Target, FEATURE_NAMES};
pub use grid::{enumerate_grid, GridSpec};
pub use preprocess::{quadratic, Preprocessor, ScaleKind};
pub use run::{expected_frames, load_campaign, run_campaign, series_rows, CampaignResult, SimRecord, SimStatus, CSV_HEADER};
pub use search::{expand_grid, grid_search, CvRow, GridSearchResult};
pub use split::{kfold, partition, Partition, PartitionSpec};
