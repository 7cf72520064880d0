//! Linear-algebra kernels: dense SVD and Hermitian eigensolvers, Lanczos
//! extremal eigenpairs and Krylov application of `exp(-itA)`.

mod dense;
mod expm;
mod lanczos;
mod operator;
mod vecops;

pub use dense::{dense_eig_hermitian, expm_hermitian, qr_positive, svd, DenseMatrix, Svd};
pub use expm::{krylov_expmv, KrylovOptions};
pub use lanczos::{lanczos_extremal, Eigenpair, LanczosOptions};
pub use operator::{DenseOperator, HermitianOperator, Pauli, PauliString, PauliSum, PauliTerm};
