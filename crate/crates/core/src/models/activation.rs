use crate::autodiff::Var;

/// A smooth increasing bijection of ℝ used by the constrained autoencoder,
/// `σ⁺(x) = x + c(√(x²+1) − 1)` with `0 < c < 1`, and its closed-form
/// inverse. `Identity` gives linear layers.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvertibleActivation {
    Identity,
    SoftLeaky { c: f64 },
}

impl Default for InvertibleActivation {
    fn default() -> Self {
        InvertibleActivation::SoftLeaky { c: 0.5 }
    }
}

impl InvertibleActivation {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            InvertibleActivation::Identity => x,
            InvertibleActivation::SoftLeaky { c } => x + c * (libm::sqrt(x * x + 1.0) - 1.0),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            InvertibleActivation::Identity => y,
            InvertibleActivation::SoftLeaky { c } => {
                let u = y + c;
                (u - c * libm::sqrt(u * u + 1.0 - c * c)) / (1.0 - c * c)
            }
        }
    }

    pub fn forward_var(self, x: &Var) -> Var {
        match self {
            InvertibleActivation::Identity => x.clone(),
            InvertibleActivation::SoftLeaky { c } => {
                let r = x.square().add_scalar(1.0).sqrt().add_scalar(-1.0).scale(c);
                x.add(&r).expect("same shape")
            }
        }
    }

    pub fn inverse_var(self, y: &Var) -> Var {
        match self {
            InvertibleActivation::Identity => y.clone(),
            InvertibleActivation::SoftLeaky { c } => {
                let u = y.add_scalar(c);
                let r = u.square().add_scalar(1.0 - c * c).sqrt().scale(c);
                u.sub(&r).expect("same shape").scale(1.0 / (1.0 - c * c))
            }
        }
    }
}
