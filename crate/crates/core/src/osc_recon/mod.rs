//! Oscillator reconstruction: phase coverage, characteristic functions from
//! records, Fock-basis fits, backprojection and moment recovery.

pub mod char_1d;
pub mod char_nd;
pub mod coverage;
pub mod fit;
pub mod moments;

pub use char_1d::{char_from_record_1d, wigner_backprojection_1d};
pub use char_nd::{char_from_record_nd, CharAccumulator, CharNdOptions};
pub use coverage::{
    classify_pair, coverage_scatter, theta_coverage, PairCoverage, RatioClass, ScatterPoint,
    ThetaCoverageReport,
};
pub use fit::{rho_from_char, CharFitter, FitReport};
pub use moments::{
    gaussian_from_moments, measure_position_moments, recurrence_lists, second_moment_oracle,
    solve_moments, weyl_moment_oracle, GaussianEstimate, MomentStatus, MomentTable, RecurrenceList,
    UnderdeterminedReport,
};
