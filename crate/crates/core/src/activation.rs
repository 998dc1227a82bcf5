use serde::{Deserialize, Serialize};

/// Elementwise nonlinearity with derivative values in `[0, r]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Tanh,
    Relu,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// Upper end `r` of the derivative range.
    pub fn derivative_bound(self) -> f64 {
        1.0
    }

    /// Fills `value` and `deriv` from the preactivations in one pass.
    pub fn eval_into(self, pre: &[f64], value: &mut [f64], deriv: &mut [f64]) {
        for ((y, v), d) in pre.iter().zip(value.iter_mut()).zip(deriv.iter_mut()) {
            match self {
                ActivationKind::Tanh => {
                    let t = y.tanh();
                    *v = t;
                    *d = 1.0 - t * t;
                }
                ActivationKind::Relu => {
                    if *y > 0.0 {
                        *v = *y;
                        *d = 1.0;
                    } else {
                        *v = 0.0;
                        *d = 0.0;
                    }
                }
                ActivationKind::Identity => {
                    *v = *y;
                    *d = 1.0;
                }
            }
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}
