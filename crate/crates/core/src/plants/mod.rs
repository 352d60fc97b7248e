//! Physical plant models.

pub mod furuta;
pub mod maglev;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use furuta::{FurutaParams, FurutaState};
pub use maglev::{MaglevParams, MaglevState};

/// Named scalar parameters that can be scaled for robustness studies.
pub trait Perturbable: Clone {
    fn field_mut(&mut self, name: &str) -> Option<&mut f64>;
    fn validate(&self) -> Result<()>;
}

/// Returns a copy of `params` with each named field multiplied by its scale.
pub fn perturb<P: Perturbable>(params: &P, scales: &BTreeMap<String, f64>) -> Result<P> {
    let mut out = params.clone();
    for (name, scale) in scales {
        if !(*scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(
                format!("perturbation.{name}"),
                format!("scale {scale} must be positive"),
            ));
        }
        let field = out
            .field_mut(name)
            .ok_or_else(|| Error::UnknownField(name.clone()))?;
        *field *= scale;
    }
    out.validate()?;
    Ok(out)
}
