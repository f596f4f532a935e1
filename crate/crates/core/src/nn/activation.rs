use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Matrix) -> Matrix {
        let mut out = z.clone();
        match self {
            Activation::Relu => out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Identity => {}
        }
        out
    }

    /// Multiplies `grad` in place by σ'(z), given the pre-activation `z` and
    /// the activation output `out`.
    pub fn backprop(self, z: &Matrix, out: &Matrix, grad: &mut Matrix) {
        let g = grad.as_mut_slice();
        match self {
            Activation::Relu => {
                for (gi, zi) in g.iter_mut().zip(z.as_slice()) {
                    if *zi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (gi, oi) in g.iter_mut().zip(out.as_slice()) {
                    *gi *= 1.0 - oi * oi;
                }
            }
            Activation::Identity => {}
        }
    }

    pub fn scalar(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(crate::Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}
