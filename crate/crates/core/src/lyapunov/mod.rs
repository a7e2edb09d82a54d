//! Lyapunov exponent: closed-form value by quadrature, ensemble estimators
//! and the fluctuation diagnostic.

mod estimate;
mod quadrature;
mod stats;

pub use estimate::{
    clt_diagnostic, compare_sup_inf, estimate_lambda, estimate_lambda_subadditive, estimate_slope,
    subadditive_profile, CltReport, Series, SlopeComparison, SlopeEstimate, SubadditiveEstimate, MIN_CLT_PATHS,
    MIN_SLOPE_PATHS,
};
pub use quadrature::{
    gauss_legendre, gk_lambda, gk_lambda_fixed, gk_lambda_real_line, gk_lambda_with, QuadratureConfig,
    QuadratureResult, GK_Q_RANGE,
};
pub use stats::{kolmogorov_survival, ks_normal, ks_two_sample, mean_std, ols_slope, KsResult};
