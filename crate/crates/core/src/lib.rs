pub mod constants;
pub mod error;
pub mod field;
pub mod harness;
pub mod kac_rice;
pub mod output;
pub mod rmt;
pub mod scenarios;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
pub use field::Field;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/constants.md")]
    mod constants {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/random_matrices.md")]
    mod random_matrices {}
    #[doc = include_str!("../../../book/src/kac_rice.md")]
    mod kac_rice {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
