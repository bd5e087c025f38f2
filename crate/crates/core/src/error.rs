use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input must be non-empty")]
    EmptyInput,

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("batch size m={m} does not divide n={n}")]
    NotDivisible { n: usize, m: usize },

    #[error(
        "complete enumeration needs C({n},{m}) = {} sets, above the cap of {}; \
         use the permuted-block estimator instead (l permutations recover a 1 - 1/l \
         fraction of the variance reduction)",
        group_count(*.count),
        group_digits(*.cap as u128)
    )]
    CapExceeded {
        n: usize,
        m: usize,
        /// `None` when the count does not fit in 128 bits.
        count: Option<u128>,
        cap: u64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn group_count(count: Option<u128>) -> String {
    match count {
        Some(c) => group_digits(c),
        None => "more than 2^128".to_string(),
    }
}

/// `2704156` -> `2,704,156`.
pub(crate) fn group_digits(value: u128) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
