use super::{Real, Tensor};

/// Negative-side slope used when none is configured.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Elementwise transfer functions for states (`phi`) and predictions (`g`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Activation {
    #[default]
    Identity,
    LeakyRelu {
        slope: f64,
    },
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    #[inline]
    pub fn apply_scalar<S: Real>(self, x: S) -> S {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x >= S::zero() {
                    x
                } else {
                    x * S::from_f64_lossy(slope)
                }
            }
        }
    }

    pub fn apply_in_place<S: Real>(self, xs: &mut [S]) {
        match self {
            Activation::Identity => {}
            Activation::LeakyRelu { slope } => {
                let slope = S::from_f64_lossy(slope);
                for x in xs {
                    if *x < S::zero() {
                        *x *= slope;
                    }
                }
            }
        }
    }

    pub fn apply<S: Real>(self, t: &Tensor<S>) -> Tensor<S> {
        t.map(|x| self.apply_scalar(x))
    }

    /// Stable numeric id used by the checkpoint format.
    pub fn id(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::LeakyRelu { .. } => 1,
        }
    }

    pub fn slope(self) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => slope,
        }
    }

    pub fn from_id(id: u8, slope: f64) -> Option<Self> {
        match id {
            0 => Some(Activation::Identity),
            1 => Some(Activation::LeakyRelu { slope }),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::LeakyRelu { .. } => "leaky_relu",
        }
    }
}

pub fn leaky_relu<S: Real>(t: &Tensor<S>, slope: f64) -> Tensor<S> {
    Activation::LeakyRelu { slope }.apply(t)
}

pub fn identity<S: Real>(t: &Tensor<S>) -> Tensor<S> {
    t.clone()
}
