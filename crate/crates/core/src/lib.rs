pub mod bounds;
pub mod density;
pub mod ell1fact;
pub mod error;
pub mod extraction;
pub mod families;
pub mod kashin;
pub mod lp;
pub mod measure;
pub mod op;
pub mod polytope;
pub mod rankreduce;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
pub use measure::{conjugate, AtomSet, Fun, MeasureSpace};
pub use op::{Codomain, LinOp, NormCertificate};
pub use rng::SplitRng;
pub use space::{Ball, NormedSpace};
