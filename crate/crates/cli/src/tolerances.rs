//! Named tolerances; `RISLAB_TOL_SCALE` multiplies every default.

use serde_json::{Map, Value};

pub const SCALE_ENV: &str = "RISLAB_TOL_SCALE";

macro_rules! tolerances {
    ($($name:ident = $val:expr, $doc:literal;)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct Tolerances {
            $(#[doc = $doc] pub $name: f64,)*
        }

        impl Tolerances {
            /// Unscaled defaults.
            pub fn base() -> Self {
                Tolerances { $($name: $val,)* }
            }

            pub fn scaled(s: f64) -> Self {
                Tolerances { $($name: $val * s,)* }
            }

            pub fn set(&mut self, key: &str, v: f64) -> bool {
                match key {
                    $(stringify!($name) => { self.$name = v; true })*
                    _ => false,
                }
            }

            pub fn to_value(&self) -> Value {
                let mut m = Map::new();
                $(m.insert(stringify!($name).to_string(), Value::from(self.$name));)*
                Value::Object(m)
            }
        }
    };
}

tolerances! {
    hermitian = 1e-12, "Hermiticity of input matrices.";
    ne = 1e-9, "Non-entanglement residual.";
    tri = 1e-12, "Time-reversal conjugation residual.";
    state = 1e-10, "Invariant state against a closed form.";
    flux = 1e-10, "Vanishing steady fluxes at equilibrium.";
    first_law = 1e-9, "Sum of steady fluxes.";
    second_law = 1e-10, "Allowed negative entropy production.";
    balance = 1e-8, "Transient entropy balance residual.";
    agree_abs = 1e-6, "Absolute floor for route agreement.";
    agree_rel = 1e-3, "Relative tolerance for route agreement.";
    onsager = 1e-7, "Reciprocity residuals.";
    symmetry = 1e-9, "Relative residual of generating-function symmetries.";
    cgf_spread = 0.25, "Relative spread of the fitted convergence constant.";
    rate_zero = 1e-8, "Rate function at the mean.";
    fluctuation = 1e-7, "Fluctuation relation residual.";
    mc_sigmas = 3.0, "Monte Carlo acceptance in standard errors.";
}

impl Tolerances {
    /// Defaults scaled by `RISLAB_TOL_SCALE` (1 when unset or unparsable).
    pub fn defaults() -> Self {
        Self::scaled(env_scale())
    }
}

pub fn env_scale() -> f64 {
    std::env::var(SCALE_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(1.0)
}
