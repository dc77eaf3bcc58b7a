//! Task-discriminative adversarial domain adaptation.
//!
//! A stochastic Gaussian encoder maps inputs from a labeled source domain
//! and an unlabeled target domain into a shared latent space. A K-way
//! classifier is trained on source labels, a (K+1)-way discriminator aligns
//! target latents with the source class clusters, a binary discriminator
//! pulls the source aggregate posterior toward N(0, I), and entropy plus
//! two-draw smoothness penalties keep the classifier's decision boundaries
//! away from dense target regions. Everything runs on the small
//! reverse-mode engine in [`grad`].

pub mod bench;
pub mod datasets;
pub mod error;
pub mod grad;
pub mod networks;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
