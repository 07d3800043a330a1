//! File names and column layouts consumed by downstream reporting.
//!
//! CSV files are RFC 4180, UTF-8, `.` decimal separator, with a mandatory
//! header row. The first column of every table is `config_hash`. Floats are
//! written in shortest round-trip form; absent values are empty fields.

pub const META_FILE: &str = "meta.json";
pub const CONFIG_ARCHIVE: &str = "config.toml";

/// Keys of the `<command>.json` envelope, in order.
pub const ENVELOPE_KEYS: [&str; 6] = ["command", "config_hash", "version", "resample_count", "verdict", "result"];

/// Keys of `meta.json`. Only this file carries wall-clock data.
pub const META_KEYS: [&str; 5] = ["config_hash", "version", "timestamp_unix", "wall_seconds", "threads"];

pub const VERDICTS: [&str; 3] = ["pass", "fail", "not-asserted"];

pub struct TableSpec {
    pub file: &'static str,
    pub columns: &'static [&'static str],
}

pub const DECAY: TableSpec = TableSpec {
    file: "decay.csv",
    columns: &[
        "config_hash",
        "distance",
        "exponent",
        "n_samples",
        "mean",
        "std_error",
        "bound",
        "theorem_bound",
        "margin_sigmas",
        "mass",
        "unit",
        "estimator",
        "resample_count",
    ],
};

pub const WEGNER: TableSpec = TableSpec {
    file: "wegner.csv",
    columns: &["config_hash", "half_width", "a", "b", "width", "lhs", "std_error", "rhs", "c_prime", "violated"],
};

pub const WEGNER_CALIBRATION: TableSpec = TableSpec {
    file: "wegner_calibration.csv",
    columns: &["config_hash", "half_width", "energy", "epsilon", "site", "mean", "std_error"],
};

pub const APRIORI: TableSpec = TableSpec {
    file: "apriori.csv",
    columns: &["config_hash", "x", "y", "energy", "epsilon", "mean", "std_error", "max_sample", "far_from_spectrum"],
};

pub const DET_AVERAGE: TableSpec = TableSpec {
    file: "det_average.csv",
    columns: &[
        "config_hash",
        "index",
        "n",
        "s",
        "density",
        "radius",
        "integral",
        "quad_error",
        "bound1",
        "bound2_min",
        "ratio",
        "violated",
    ],
};

pub const IDENTITIES: TableSpec = TableSpec {
    file: "identities.csv",
    columns: &[
        "config_hash",
        "index",
        "sites",
        "energy",
        "epsilon",
        "corner",
        "schur",
        "resolvent1",
        "resolvent2",
        "factorization",
    ],
};

pub const REGULARITY: TableSpec = TableSpec {
    file: "regularity.csv",
    columns: &[
        "config_hash",
        "half_width",
        "x",
        "y",
        "a",
        "b",
        "mass",
        "grid_step",
        "n_samples",
        "successes",
        "p_hat",
        "std_error",
        "wilson_lo",
        "wilson_hi",
        "undecided",
        "lower_bound",
    ],
};

pub const EIGEN_DECAY: TableSpec =
    TableSpec { file: "eigen_decay.csv", columns: &["config_hash", "realization", "median_rate"] };

pub const ALL_TABLES: [&TableSpec; 8] =
    [&DECAY, &WEGNER, &WEGNER_CALIBRATION, &APRIORI, &DET_AVERAGE, &IDENTITIES, &REGULARITY, &EIGEN_DECAY];
