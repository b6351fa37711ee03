//! The six forecasters.

pub mod linear;
pub mod neural;
pub mod trees;

pub use linear::{fit_ols, fit_var, predict_ols, predict_var, OlsModel, VarModel};
pub use neural::{gradient_check, lstm_forward, lstm_predict, lstm_train, GradCheckReport, LstmConfig, LstmModel};
pub use trees::{
    fit_boost, fit_forest, fit_tree, predict_ensemble, BoostModel, BoostParams, ForestModel, ForestParams,
    RegressionTree, Regressor, TreeParams,
};
